#pragma once

// Strategy training and the offline evaluation protocol: budget sweeps over
// fractions of the test-log cost and dynamic re-training rounds.

#include <optional>
#include <string>
#include <vector>

#include "samkit/data_io.hpp"
#include "samkit/replay.hpp"
#include "samkit/sam_engine.hpp"

namespace samkit {

enum class StrategyKind { Const, Rand, Truth, Lin, Ortb, Sam1, Sam2 };

const char* to_string(StrategyKind kind);
StrategyKind strategy_from_string(const std::string& name);

enum class SelectionKind { Uniform, Greedy, Portfolio, Single };

struct SelectionScheme {
  SelectionKind kind = SelectionKind::Uniform;
  double alpha = 0.0;        // Portfolio only
  std::size_t campaign = 0;  // Single only
  std::string name() const;
};

SelectionScheme selection_from_string(const std::string& name, double alpha);

struct TrainingConfig {
  EmConfig em;  // budget, volume, alpha and fixed_selection are filled per call
  std::size_t tuning_grid = 20;
  // Refine SAM lambda by training replay around the EM solution.
  bool tune_sam_lambda = true;
  MarketFamily market = MarketFamily::LongTail;
  MarketFit market_fit = MarketFit::PerCampaign;
  std::size_t cvr_bins = 100;
  std::uint64_t seed = 0;
};

struct TrainedStrategy {
  StrategyKind kind = StrategyKind::Truth;
  SelectionScheme selection;
  std::vector<BidFunction> bids;
  SelectionVector v = SelectionVector::uniform(1);
  std::optional<SamSolution> em;
  double parameter = 0.0;  // tuned scalar (price, base bid, lambda_o or lambda)
  double training_profit = 0.0;
};

/// Trains one strategy on the training streams for a budget B over T expected requests.
/// Baselines sweep their parameter on a log grid and keep the best training net profit;
/// SAM strategies run the EM engine.
TrainedStrategy train_strategy(StrategyKind kind, const SelectionScheme& selection, const StreamSet& training,
                               std::span<const double> payoffs, double budget, double volume,
                               const TrainingConfig& cfg);

struct SweepSpec {
  std::vector<StrategyKind> strategies;
  std::vector<SelectionScheme> selections;
  std::vector<int> divisors{2, 4, 8, 16, 32, 64, 128, 256};
};

struct SweepRow {
  StrategyKind strategy;
  SelectionScheme selection;
  int divisor;
  double budget;
  TrainedStrategy trained;
  ReplayReport report;
};

void validate_divisors(const std::vector<int>& divisors);

/// One replay per (strategy, selection, divisor) with budget = test cost / divisor.
/// Rows are ordered strategy-major, then selection, then divisor as given.
std::vector<SweepRow> budget_sweep(const TrainTest& data, std::span<const double> payoffs, const SweepSpec& spec,
                                   const TrainingConfig& cfg, const ReplayConfig& replay_cfg);

struct RoundSchedule {
  double horizon_hours = 72.0;
  double period_hours = 72.0;
  std::size_t rounds() const;
};

struct RoundResult {
  std::size_t index = 0;
  double start_hour = 0.0;
  double end_hour = 0.0;
  double budget = 0.0;
  double volume = 0.0;
  bool skipped = false;
  std::optional<TrainedStrategy> trained;
  ReplayReport report;
};

/// Re-trains at the start of each round on the previous round's records (the first round
/// uses the training split), replays the round's records and carries unspent budget forward.
std::vector<RoundResult> run_dynamic(const RoundSchedule& schedule, const TrainTest& data,
                                     std::span<const double> payoffs, StrategyKind strategy,
                                     const SelectionScheme& selection, double total_budget,
                                     const TrainingConfig& cfg, const ReplayConfig& replay_cfg);

/// Worker count for parallel sweeps: SAMKIT_THREADS if set, else hardware concurrency.
unsigned worker_threads();

}  // namespace samkit
