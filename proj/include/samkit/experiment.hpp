#pragma once

// Experiment configuration and the end-to-end commands behind the CLI.
//
// Config files are flat `key = value` text. `[section]` lines prefix the keys
// that follow with `section.`; `#` and `;` start comments.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "samkit/data_io.hpp"
#include "samkit/evaluation.hpp"

namespace samkit {

class ConfigFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static ConfigFile parse(const std::string& text, const std::string& origin = "<config>");
  static ConfigFile load(const std::string& path);

  const std::string& origin() const noexcept { return origin_; }
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const Entry* find(const std::string& key) const;
  /// Sets or replaces a key (line 0 marks an override).
  void set(const std::string& key, const std::string& value);
  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

 private:
  std::string origin_;
  std::map<std::string, Entry> entries_;
};

enum class DataSource { Synthetic, Log };

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "samkit_out";

  DataSource source = DataSource::Synthetic;
  std::string log_path;
  ParseOptions parse;
  bool clicks_as_conversions = false;
  SplitSpec split;
  SyntheticMarketSpec synthetic;
  std::string gen_path;  // output file of `gen`, relative to output_dir

  std::vector<StrategyKind> strategies;
  std::vector<SelectionScheme> selections;
  std::vector<int> divisors{2, 4, 8, 16, 32, 64, 128, 256};
  PayoffMode payoff_mode = PayoffMode::Easy;
  std::vector<double> explicit_payoffs;
  TrainingConfig training;

  InflationSchedule inflation;
  bool trace = false;

  bool dynamic_enabled = false;
  RoundSchedule rounds;
  int rounds_divisor = 4;
  StrategyKind rounds_strategy = StrategyKind::Sam2;
  SelectionScheme rounds_selection;

  std::vector<double> frontier_alphas{0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
  StrategyKind frontier_strategy = StrategyKind::Sam2;
  int frontier_divisor = 4;
};

/// Builds and validates an experiment. Errors name the field and its config line.
ExperimentConfig load_experiment(const ConfigFile& file);
void validate(const ExperimentConfig& cfg);

/// Loaded data of an experiment: train/test split and per-campaign payoffs.
struct ExperimentData {
  TrainTest split;
  std::vector<double> payoffs;
  ParseStats parse_stats;
};

ExperimentData prepare_data(const ExperimentConfig& cfg);

enum class Command { Run, Sweep, Dynamic, Frontier, Gen, Validate };

Command command_from_string(const std::string& verb);
const char* to_string(Command cmd);

struct CommandResult {
  int exit_code = 0;
  bool partial = false;
  std::vector<std::string> written;  // artifact paths
  std::string message;
};

/// Runs a command and writes its artifacts to cfg.output_dir. Module errors after
/// some artifacts were produced leave them in place with status.json marking partial=true.
CommandResult execute(Command cmd, const ExperimentConfig& cfg);

// Report writers, exposed for tests.
extern const char* const kReportHeader;
std::string format_report(const std::vector<SweepRow>& rows, PayoffMode mode);
std::string format_rounds(const std::vector<RoundResult>& dynamic_rounds, const std::vector<RoundResult>& static_rounds,
                          StrategyKind strategy, const SelectionScheme& selection);

struct FrontierPoint {
  std::string kind;  // "frontier" or "single"
  double alpha = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  std::vector<double> v;
};
std::vector<FrontierPoint> efficient_frontier(const PortfolioEstimate& est, std::vector<double> alphas);
std::string format_frontier(const std::vector<FrontierPoint>& points, const std::vector<std::string>& ids);

}  // namespace samkit
