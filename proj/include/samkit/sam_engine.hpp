#pragma once

// Joint optimization of the campaign-selection vector and the SAM bidding function.
//
// Starting from truth-telling bids b = r theta and uniform selection, each
// iteration runs
//   E-step: estimate every campaign's margin (mu_i, sigma_i) under the current
//           bids, correlate hourly realized margins, and solve the risk-averse
//           selection problem for v;
//   M-step: solve lambda for the fixed v so the expected spend meets B / T and
//           rebuild the closed-form bid function.
// Iteration stops when both v (L1) and lambda (relative) settle.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "samkit/bidding.hpp"
#include "samkit/campaign.hpp"
#include "samkit/portfolio.hpp"

namespace samkit {

struct EmConfig {
  int max_iterations = 20;
  double tol_v = 1e-3;
  double tol_lambda = 1e-4;
  double alpha = 0.0;  // risk aversion; 0 is greedy selection
  // When set, v is held fixed (uniform or single-campaign selection) and only lambda is solved.
  std::optional<SelectionVector> fixed_selection;
  double budget = 0.0;
  double volume = 0.0;  // T, expected number of bid requests
  // Fraction of the T requests carried by each campaign's log stream. When set, a selection v
  // can only draw T * min_i(share_i / v_i) requests before some stream runs out.
  std::vector<double> stream_shares;
  std::size_t mc_repetitions = 50;
  std::size_t mc_volume = 0;  // requests per MC repetition; 0 uses `volume`
  std::uint64_t seed = 0;
  // KKT floor on lambda: a budget that is not binding leaves lambda at this value.
  double lambda_floor = 0.0;
  std::int64_t bucket_ms = kHourMs;
  LambdaSolveConfig lambda;
  std::optional<WinningFunction> market;  // overrides the per-campaign fitted markets
};

void validate(const EmConfig& cfg);

/// Expected number of requests served under selection v (cfg.volume without stream shares).
double effective_volume(const EmConfig& cfg, const SelectionVector& v);

struct EmIteration {
  int iteration = 0;
  double objective = 0.0;      // plug-in E[R]
  double objective_se = 0.0;   // standard error of the plug-in objective
  double expected_cost = 0.0;  // plug-in E[C]
  double volume = 0.0;         // effective request volume of the iteration
  double lambda = 0.0;
  bool lambda_under_spend = false;
  std::vector<double> v;
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<std::vector<double>> beta;
};

struct SamSolution {
  SamFamily family = SamFamily::Sam2;
  SelectionVector v = SelectionVector::uniform(1);
  double lambda = 0.0;
  std::vector<BidFunction> bids;  // one per campaign
  double objective = 0.0;
  double expected_cost = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<std::size_t> frozen;  // campaigns with undefined margin, held at v_i = 0
  std::vector<EmIteration> trace;

  /// Allowed objective drop between iterations: 1e-6 |obj| + 10 standard errors.
  double monotonicity_tolerance(std::size_t iteration_index) const;
};

SamSolution run_em(std::span<const CampaignSpec> campaigns, SamFamily family, const EmConfig& cfg);

/// T sum_i v_i mean_k[(theta_k r_i - b) w_i(b)] over each campaign's training samples.
double expected_net_profit(const SelectionVector& v, std::span<const BidFunction> bids,
                           std::span<const CampaignSpec> campaigns, double volume);
/// T sum_i v_i mean_k[b w_i(b)].
double expected_cost(const SelectionVector& v, std::span<const BidFunction> bids,
                     std::span<const CampaignSpec> campaigns, double volume);

/// Realized margin per time bucket of each campaign under its bid, replaying the training log.
/// Buckets with no spend are NaN.
std::vector<std::vector<double>> bucket_margins(std::span<const CampaignSpec> campaigns,
                                                std::span<const BidFunction> bids, std::int64_t bucket_ms);

/// Pairwise margin correlations over buckets where both series are defined.
std::vector<std::vector<double>> correlation_matrix(const std::vector<std::vector<double>>& series);

/// Margin estimates and portfolio model for a fixed bid function (one E-step).
struct PortfolioEstimate {
  std::vector<MarginEstimate> margins;
  std::vector<std::size_t> undefined;  // campaigns whose margin could not be estimated
  std::vector<std::vector<double>> beta;
};
PortfolioEstimate estimate_portfolio(std::span<const CampaignSpec> campaigns, std::span<const BidFunction> bids,
                                     std::size_t mc_volume, std::size_t repetitions, std::uint64_t seed,
                                     std::int64_t bucket_ms);

/// Optimizes v over the campaigns with defined margins; undefined campaigns get v_i = 0.
SelectionVector select_campaigns(const PortfolioEstimate& est, double alpha);

}  // namespace samkit
