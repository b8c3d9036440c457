#include "samkit/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "samkit/error.hpp"
#include "samkit/rng.hpp"

namespace samkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile cf;
  cf.origin_ = origin;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '#' || line[i] == ';') {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorCode::Config, where + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) fail(ErrorCode::Config, where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::Config, where + "expected 'key = value'");
    std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) fail(ErrorCode::Config, where + "missing key before '='");
    if (key.find_first_of(" \t") != std::string::npos) fail(ErrorCode::Config, where + "key '" + key + "' contains spaces");
    if (!section.empty()) key = section + "." + key;
    if (cf.entries_.count(key))
      fail(ErrorCode::Config, where + "field '" + key + "' repeats line " + std::to_string(cf.entries_[key].line));
    cf.entries_[key] = {value, line_no};
  }
  return cf;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

const ConfigFile::Entry* ConfigFile::find(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void ConfigFile::set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }

namespace {

// Typed access to config fields; every read marks the key consumed so leftovers can be rejected.
class Reader {
 public:
  explicit Reader(const ConfigFile& f) : f_(f) {}

  [[noreturn]] void bad(const std::string& key, const std::string& msg) const {
    const auto* e = f_.find(key);
    std::string where = f_.origin();
    if (e && e->line > 0) where += ":" + std::to_string(e->line);
    fail(ErrorCode::Config, where + ": field '" + key + "': " + msg);
  }

  const ConfigFile::Entry* get(const std::string& key) {
    used_.insert(key);
    return f_.find(key);
  }
  bool has(const std::string& key) const { return f_.has(key); }

  std::string str(const std::string& key, const std::string& def) {
    const auto* e = get(key);
    return e ? e->value : def;
  }
  std::string required(const std::string& key) {
    const auto* e = get(key);
    if (!e || e->value.empty()) fail(ErrorCode::Config, f_.origin() + ": missing required field '" + key + "'");
    return e->value;
  }
  double number(const std::string& key, double def) {
    const auto* e = get(key);
    return e ? parse_number(key, e->value) : def;
  }
  std::int64_t integer(const std::string& key, std::int64_t def) {
    const auto* e = get(key);
    return e ? parse_integer(key, e->value) : def;
  }
  bool flag(const std::string& key, bool def) {
    const auto* e = get(key);
    if (!e) return def;
    if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
    if (e->value == "false" || e->value == "0" || e->value == "no") return false;
    bad(key, "expected true or false, got '" + e->value + "'");
  }
  std::vector<double> numbers(const std::string& key) {
    std::vector<double> out;
    if (const auto* e = get(key))
      for (const auto& item : split_list(e->value)) out.push_back(parse_number(key, item));
    return out;
  }
  std::vector<std::string> strings(const std::string& key) {
    const auto* e = get(key);
    return e ? split_list(e->value) : std::vector<std::string>{};
  }

  double parse_number(const std::string& key, const std::string& text) const {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &pos);
    } catch (...) {
      bad(key, "expected a number, got '" + text + "'");
    }
    if (pos != text.size() || !std::isfinite(v)) bad(key, "expected a number, got '" + text + "'");
    return v;
  }
  std::int64_t parse_integer(const std::string& key, const std::string& text) const {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(text, &pos);
    } catch (...) {
      bad(key, "expected an integer, got '" + text + "'");
    }
    if (pos != text.size()) bad(key, "expected an integer, got '" + text + "'");
    return v;
  }

  void reject_unused() const {
    for (const auto& [key, entry] : f_.entries())
      if (!used_.count(key)) bad(key, "unknown field");
  }

 private:
  const ConfigFile& f_;
  std::set<std::string> used_;
};

template <class Fn>
auto guarded(Reader& rd, const std::string& key, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    rd.bad(key, e.what());
  }
}

std::vector<DriftSegment> parse_drift(Reader& rd, const std::string& key) {
  // hour:a:b[:scale] segments separated by commas
  std::vector<DriftSegment> out;
  for (const auto& seg : rd.strings(key)) {
    const auto parts = split_list(seg, ':');
    if (parts.size() != 3 && parts.size() != 4) rd.bad(key, "drift segment '" + seg + "' is not hour:a:b[:scale]");
    DriftSegment d;
    d.start_hour = rd.parse_number(key, parts[0]);
    d.cvr = BetaCvr{rd.parse_number(key, parts[1]), rd.parse_number(key, parts[2])};
    if (parts.size() == 4) d.scale = rd.parse_number(key, parts[3]);
    out.push_back(d);
  }
  return out;
}

InflationSchedule parse_inflation(Reader& rd, const std::string& key) {
  InflationSchedule out;
  for (const auto& seg : rd.strings(key)) {
    const auto parts = split_list(seg, ':');
    if (parts.size() != 2) rd.bad(key, "inflation step '" + seg + "' is not hour:factor");
    InflationStep s{rd.parse_number(key, parts[0]), rd.parse_number(key, parts[1])};
    if (!(s.factor > 0.0)) rd.bad(key, "inflation factors must be positive");
    if (!out.empty() && s.start_hour < out.back().start_hour) rd.bad(key, "inflation steps must be sorted by hour");
    out.push_back(s);
  }
  return out;
}

}  // namespace

ExperimentConfig load_experiment(const ConfigFile& file) {
  Reader rd(file);
  ExperimentConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(rd.integer("seed", 1));
  cfg.output_dir = rd.str("output.dir", cfg.output_dir);

  if (!rd.has("data.source")) rd.required("data.source");
  const std::string source = rd.str("data.source", "");
  if (source == "synthetic") {
    cfg.source = DataSource::Synthetic;
  } else if (source == "log") {
    cfg.source = DataSource::Log;
    cfg.log_path = rd.required("data.path");
  } else {
    rd.bad("data.source", "expected 'synthetic' or 'log', got '" + source + "'");
  }
  cfg.parse.cpm = rd.flag("data.cpm", false);
  cfg.clicks_as_conversions = rd.flag("data.clicks_as_conversions", false);
  const std::string split = rd.str("data.split", "last_days");
  if (split == "last_days") {
    cfg.split.rule = SplitRule::LastDays;
    cfg.split.last_days = static_cast<int>(rd.integer("data.last_days", 3));
  } else if (split == "cut") {
    cfg.split.rule = SplitRule::TimestampCut;
    if (!rd.has("data.cut_ms")) rd.required("data.cut_ms");
    cfg.split.cut_ms = rd.integer("data.cut_ms", 0);
  } else {
    rd.bad("data.split", "expected 'last_days' or 'cut'");
  }

  std::vector<double> synthetic_payoffs;
  if (cfg.source == DataSource::Synthetic) {
    auto& sm = cfg.synthetic;
    sm.horizon_hours = rd.number("synthetic.horizon_hours", sm.horizon_hours);
    sm.start_ms = rd.integer("synthetic.start_ms", sm.start_ms);
    sm.seed = static_cast<std::uint64_t>(rd.integer("synthetic.seed", static_cast<std::int64_t>(cfg.seed)));
    const auto ids = rd.strings("synthetic.campaigns");
    if (ids.empty()) rd.required("synthetic.campaigns");
    for (const auto& id : ids) {
      const std::string p = "synthetic.campaign." + id + ".";
      SyntheticCampaign c;
      c.id = id;
      const auto beta = rd.numbers(p + "cvr");
      if (!beta.empty()) {
        if (beta.size() != 2) rd.bad(p + "cvr", "expected 'a, b' Beta parameters");
        c.cvr = {beta[0], beta[1]};
      }
      c.market = guarded(rd, p + "market",
                         [&] { return market_family_from_string(rd.str(p + "market", to_string(c.market))); });
      c.scale = rd.number(p + "scale", c.scale);
      if (rd.has(p + "price_cap")) c.price_cap = rd.number(p + "price_cap", 0.0);
      c.records_per_hour = rd.number(p + "rate", c.records_per_hour);
      c.drift = parse_drift(rd, p + "drift");
      if (rd.has(p + "payoff")) synthetic_payoffs.push_back(rd.number(p + "payoff", 0.0));
      sm.campaigns.push_back(std::move(c));
    }
    if (!synthetic_payoffs.empty() && synthetic_payoffs.size() != ids.size())
      rd.bad("synthetic.campaigns", "either every campaign or none sets a payoff");
    guarded(rd, "synthetic.campaigns", [&] { validate(sm); });
  }
  cfg.gen_path = rd.str("gen.path", "synthetic.tsv");

  for (const auto& s : rd.strings("experiment.strategies"))
    cfg.strategies.push_back(guarded(rd, "experiment.strategies", [&] { return strategy_from_string(s); }));
  if (cfg.strategies.empty()) rd.required("experiment.strategies");
  const double alpha = rd.number("experiment.alpha", 1.0);
  for (const auto& s : rd.strings("experiment.selections"))
    cfg.selections.push_back(guarded(rd, "experiment.selections", [&] { return selection_from_string(s, alpha); }));
  if (cfg.selections.empty()) cfg.selections.push_back({});
  if (rd.has("experiment.divisors")) {
    cfg.divisors.clear();
    for (double d : rd.numbers("experiment.divisors")) {
      if (d != std::floor(d) || d < 1 || d > 1e9) rd.bad("experiment.divisors", "divisors must be positive integers");
      cfg.divisors.push_back(static_cast<int>(d));
    }
    if (cfg.divisors.empty()) rd.bad("experiment.divisors", "must list at least one divisor");
  }
  const std::string payoff = rd.str("experiment.payoff", synthetic_payoffs.empty() ? "easy" : "explicit");
  if (payoff == "easy") {
    cfg.payoff_mode = PayoffMode::Easy;
  } else if (payoff == "hard") {
    cfg.payoff_mode = PayoffMode::Hard;
  } else if (payoff == "explicit") {
    cfg.payoff_mode = PayoffMode::Explicit;
    cfg.explicit_payoffs = rd.numbers("experiment.payoffs");
    if (cfg.explicit_payoffs.empty()) cfg.explicit_payoffs = synthetic_payoffs;
    if (cfg.explicit_payoffs.empty()) rd.required("experiment.payoffs");
  } else {
    rd.bad("experiment.payoff", "expected easy, hard or explicit");
  }

  auto& tc = cfg.training;
  tc.market = guarded(rd, "experiment.market",
                      [&] { return market_family_from_string(rd.str("experiment.market", "long_tail")); });
  const std::string fit = rd.str("experiment.market_fit", "per_campaign");
  if (fit == "per_campaign") {
    tc.market_fit = MarketFit::PerCampaign;
  } else if (fit == "global") {
    tc.market_fit = MarketFit::Global;
  } else {
    rd.bad("experiment.market_fit", "expected per_campaign or global");
  }
  tc.cvr_bins = static_cast<std::size_t>(rd.integer("experiment.cvr_bins", 100));
  if (tc.cvr_bins < 1) rd.bad("experiment.cvr_bins", "must be at least 1");
  tc.tuning_grid = static_cast<std::size_t>(rd.integer("experiment.tuning_grid", 20));
  if (tc.tuning_grid < 1) rd.bad("experiment.tuning_grid", "must be at least 1");
  tc.tune_sam_lambda = rd.flag("experiment.tune_sam_lambda", true);
  tc.seed = derive_seed(cfg.seed, 2);

  auto& em = tc.em;
  em.max_iterations = static_cast<int>(rd.integer("em.max_iterations", em.max_iterations));
  em.tol_v = rd.number("em.tol_v", em.tol_v);
  em.tol_lambda = rd.number("em.tol_lambda", em.tol_lambda);
  em.mc_repetitions = static_cast<std::size_t>(rd.integer("em.mc_repetitions", 50));
  em.mc_volume = static_cast<std::size_t>(rd.integer("em.mc_volume", 0));
  em.lambda_floor = rd.number("em.lambda_floor", em.lambda_floor);
  em.bucket_ms = static_cast<std::int64_t>(std::llround(rd.number("em.bucket_hours", 1.0) * kHourMs));
  em.seed = derive_seed(cfg.seed, 1);
  em.budget = 1.0;
  em.volume = 1.0;
  guarded(rd, "em", [&] { validate(em); });

  auto& ls = em.lambda;
  const std::string method = rd.str("em.lambda.method", "auto");
  if (method == "auto") {
    ls.method = SolveMethod::Auto;
  } else if (method == "bisection") {
    ls.method = SolveMethod::Bisection;
  } else if (method == "gd") {
    ls.method = SolveMethod::GradientDescent;
  } else {
    rd.bad("em.lambda.method", "expected auto, bisection or gd");
  }
  const std::string batch = rd.str("em.lambda.batch", "full");
  if (batch == "full") {
    ls.batch = BatchMode::Full;
  } else if (batch == "minibatch") {
    ls.batch = BatchMode::MiniBatch;
  } else if (batch == "stochastic") {
    ls.batch = BatchMode::Stochastic;
  } else {
    rd.bad("em.lambda.batch", "expected full, minibatch or stochastic");
  }
  ls.batch_size = static_cast<std::size_t>(rd.integer("em.lambda.batch_size", 256));
  ls.learning_rate = rd.number("em.lambda.learning_rate", ls.learning_rate);
  ls.max_iterations = static_cast<int>(rd.integer("em.lambda.max_iterations", ls.max_iterations));
  ls.tolerance = rd.number("em.lambda.tolerance", ls.tolerance);
  ls.seed = derive_seed(cfg.seed, 5);
  if (!(ls.learning_rate > 0.0)) rd.bad("em.lambda.learning_rate", "must be positive");
  if (ls.max_iterations < 1) rd.bad("em.lambda.max_iterations", "must be at least 1");
  if (ls.batch_size < 1) rd.bad("em.lambda.batch_size", "must be at least 1");

  cfg.inflation = parse_inflation(rd, "replay.inflation");
  cfg.trace = rd.flag("replay.trace", false);

  cfg.dynamic_enabled = rd.has("rounds.period_hours") || rd.has("rounds.horizon_hours");
  cfg.rounds.horizon_hours = rd.number("rounds.horizon_hours", 72.0);
  cfg.rounds.period_hours = rd.number("rounds.period_hours", cfg.rounds.horizon_hours);
  if (!(cfg.rounds.horizon_hours > 0.0)) rd.bad("rounds.horizon_hours", "must be positive");
  if (!(cfg.rounds.period_hours > 0.0)) rd.bad("rounds.period_hours", "must be positive");
  cfg.rounds_divisor = static_cast<int>(rd.integer("rounds.divisor", 4));
  if (cfg.rounds_divisor < 1) rd.bad("rounds.divisor", "must be a positive integer");
  cfg.rounds_strategy = guarded(rd, "rounds.strategy", [&] { return strategy_from_string(rd.str("rounds.strategy", "sam2")); });
  cfg.rounds_selection = guarded(rd, "rounds.selection", [&] {
    return selection_from_string(rd.str("rounds.selection", "uniform"), rd.number("rounds.alpha", alpha));
  });

  if (rd.has("frontier.alphas")) {
    cfg.frontier_alphas = rd.numbers("frontier.alphas");
    if (cfg.frontier_alphas.empty()) rd.bad("frontier.alphas", "must list at least one alpha");
    for (double a : cfg.frontier_alphas)
      if (a < 0.0) rd.bad("frontier.alphas", "alphas must be nonnegative");
  }
  cfg.frontier_strategy =
      guarded(rd, "frontier.strategy", [&] { return strategy_from_string(rd.str("frontier.strategy", "sam2")); });
  cfg.frontier_divisor = static_cast<int>(rd.integer("frontier.divisor", 4));
  if (cfg.frontier_divisor < 1) rd.bad("frontier.divisor", "must be a positive integer");

  rd.reject_unused();
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.strategies.empty()) fail(ErrorCode::Config, "field 'experiment.strategies': at least one strategy is required");
  if (cfg.output_dir.empty()) fail(ErrorCode::Config, "field 'output.dir': must not be empty");
  if (cfg.source == DataSource::Log && cfg.log_path.empty()) fail(ErrorCode::Config, "missing required field 'data.path'");
  if (cfg.source == DataSource::Synthetic) validate(cfg.synthetic);
  validate_divisors(cfg.divisors);
}

ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData d;
  StreamSet streams;
  if (cfg.source == DataSource::Log) {
    ParsedLog log = parse_log_file(cfg.log_path, cfg.parse);
    streams = std::move(log.streams);
    d.parse_stats = log.stats;
  } else {
    streams = generate_synthetic(cfg.synthetic);
    d.parse_stats.valid = total_records(streams);
    d.parse_stats.lines = d.parse_stats.valid;
  }
  d.split = split_train_test(streams, cfg.split);
  for (std::size_t i = 0; i < d.split.train.size(); ++i) {
    if (d.split.train[i].records.empty())
      fail(ErrorCode::InvalidArgument, "campaign " + d.split.train[i].campaign_id + " has no training records");
  }
  d.payoffs = derive_payoffs(d.split.train, cfg.payoff_mode, cfg.explicit_payoffs);
  return d;
}

Command command_from_string(const std::string& verb) {
  for (auto c : {Command::Run, Command::Sweep, Command::Dynamic, Command::Frontier, Command::Gen, Command::Validate})
    if (verb == to_string(c)) return c;
  fail(ErrorCode::InvalidArgument, "unknown command '" + verb + "'");
}

const char* to_string(Command cmd) {
  switch (cmd) {
    case Command::Run:
      return "run";
    case Command::Sweep:
      return "sweep";
    case Command::Dynamic:
      return "dynamic";
    case Command::Frontier:
      return "frontier";
    case Command::Gen:
      return "gen";
    case Command::Validate:
      return "validate";
  }
  return "?";
}

const char* const kReportHeader = "strategy,selection,payoff,divisor,profit,margin,bids,imps,convs,cost";

namespace {

std::string fixed(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

std::string exact(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string margin_cell(const ReplayTotals& t) {
  const auto m = t.margin();
  return m ? fixed(*m) : std::string();
}

std::string totals_cells(const ReplayTotals& t) {
  return fixed(t.profit()) + "," + margin_cell(t) + "," + std::to_string(t.bids) + "," + std::to_string(t.imps) + "," +
         std::to_string(t.convs) + "," + fixed(t.cost);
}

json vec_json(const std::vector<double>& v) { return json(v); }

json em_json(const SamSolution& sol) {
  json j;
  j["family"] = to_string(sol.family);
  j["converged"] = sol.converged;
  j["iterations"] = sol.iterations;
  j["lambda"] = sol.lambda;
  j["objective"] = sol.objective;
  j["expected_cost"] = sol.expected_cost;
  j["v"] = sol.v.values();
  j["frozen"] = sol.frozen;
  json its = json::array();
  for (std::size_t k = 0; k < sol.trace.size(); ++k) {
    const auto& it = sol.trace[k];
    its.push_back({{"iteration", it.iteration},
                   {"objective", it.objective},
                   {"objective_se", it.objective_se},
                   {"tolerance", sol.monotonicity_tolerance(k)},
                   {"expected_cost", it.expected_cost},
                   {"volume", it.volume},
                   {"lambda", it.lambda},
                   {"lambda_under_spend", it.lambda_under_spend},
                   {"v", vec_json(it.v)},
                   {"mu", vec_json(it.mu)},
                   {"sigma", vec_json(it.sigma)},
                   {"beta", it.beta}});
  }
  j["trace"] = its;
  return j;
}

void write_text(const fs::path& p, const std::string& text, CommandResult& res) {
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write '" + p.string() + "'");
  out << text;
  if (!out) fail(ErrorCode::Io, "failed writing '" + p.string() + "'");
  res.written.push_back(p.string());
}

void write_status(const fs::path& dir, Command cmd, const ExperimentConfig& cfg, CommandResult& res) {
  json j;
  j["command"] = to_string(cmd);
  j["seed"] = cfg.seed;
  j["partial"] = res.partial;
  j["clicks_as_conversions"] = cfg.clicks_as_conversions;
  j["artifacts"] = res.written;
  if (!res.message.empty()) j["message"] = res.message;
  std::ofstream out(dir / "status.json", std::ios::binary);
  if (out) out << j.dump(2) << "\n";
}

std::string trace_header() { return "strategy,selection,divisor,seq,campaign,timestamp,pcvr,bid,price,won,converted,revenue,cost\n"; }

void append_trace(std::string& out, const std::string& strategy, const std::string& selection, const std::string& divisor,
                  const ReplayReport& rep, const StreamSet& streams) {
  for (const auto& t : rep.trace) {
    out += strategy + "," + selection + "," + divisor + "," + std::to_string(t.seq) + "," + streams[t.campaign].campaign_id +
           "," + std::to_string(t.timestamp_ms) + "," + format_decimal(t.pcvr) + "," + exact(t.bid) + "," +
           exact(t.price) + "," + (t.won ? "1" : "0") + "," + (t.converted ? "1" : "0") + "," + exact(t.revenue) + "," +
           exact(t.cost) + "\n";
  }
}

ReplayConfig replay_config(const ExperimentConfig& cfg) {
  ReplayConfig rc;
  rc.seed = derive_seed(cfg.seed, 3);
  rc.market_inflation = cfg.inflation;
  rc.record_trace = cfg.trace;
  return rc;
}

PortfolioModel full_model(const PortfolioEstimate& est) {
  const std::size_t m = est.margins.size();
  std::vector<double> mu(m);
  std::vector<double> sigma(m);
  Eigen::MatrixXd beta(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    mu[i] = est.margins[i].mean;
    sigma[i] = est.margins[i].stddev;
    for (std::size_t j = 0; j < m; ++j) beta(i, j) = est.beta[i][j];
  }
  return PortfolioModel(std::move(mu), std::move(sigma), beta);
}

}  // namespace

std::string format_report(const std::vector<SweepRow>& rows, PayoffMode mode) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.strategy)) + "," + r.selection.name() + "," + to_string(mode) + "," +
           std::to_string(r.divisor) + "," + totals_cells(r.report.total) + "\n";
  }
  return out;
}

std::string format_rounds(const std::vector<RoundResult>& dynamic_rounds, const std::vector<RoundResult>& static_rounds,
                          StrategyKind strategy, const SelectionScheme& selection) {
  std::string out = "schedule,strategy,selection,round,start_hour,end_hour,budget,volume,skipped,lambda,profit,margin,bids,imps,convs,cost\n";
  auto emit = [&](const char* schedule, const std::vector<RoundResult>& rounds) {
    for (const auto& r : rounds) {
      const std::string lambda = r.trained && r.trained->em ? fixed(r.trained->parameter) : std::string();
      out += std::string(schedule) + "," + to_string(strategy) + "," + selection.name() + "," + std::to_string(r.index) +
             "," + fixed(r.start_hour) + "," + fixed(r.end_hour) + "," + fixed(r.budget) + "," + fixed(r.volume) + "," +
             (r.skipped ? "1" : "0") + "," + lambda + "," + totals_cells(r.report.total) + "\n";
    }
  };
  emit("dynamic", dynamic_rounds);
  emit("static", static_rounds);
  return out;
}

std::vector<FrontierPoint> efficient_frontier(const PortfolioEstimate& est, std::vector<double> alphas) {
  const std::size_t m = est.margins.size();
  if (m < 2) fail(ErrorCode::InvalidArgument, "the efficient frontier needs at least 2 campaigns");
  if (alphas.empty()) fail(ErrorCode::InvalidArgument, "the efficient frontier needs at least one alpha");
  std::sort(alphas.begin(), alphas.end(), std::greater<>());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
  const PortfolioModel model = full_model(est);
  std::vector<FrontierPoint> out;
  for (double a : alphas) {
    const SelectionVector v = select_campaigns(est, a);
    const PortfolioStats st = portfolio_stats(model, v);
    out.push_back({"frontier", a, st.mean, std::sqrt(std::max(st.variance, 0.0)), v.values()});
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (std::find(est.undefined.begin(), est.undefined.end(), i) != est.undefined.end()) continue;
    const SelectionVector v = SelectionVector::one_hot(m, i);
    out.push_back({"single", 0.0, est.margins[i].mean, est.margins[i].stddev, v.values()});
  }
  return out;
}

std::string format_frontier(const std::vector<FrontierPoint>& points, const std::vector<std::string>& ids) {
  std::string out = "kind,alpha,mu_p,sigma_p";
  for (const auto& id : ids) out += ",v_" + id;
  out += "\n";
  for (const auto& p : points) {
    out += p.kind + "," + (p.kind == "single" ? std::string() : fixed(p.alpha)) + "," + fixed(p.mu) + "," + fixed(p.sigma);
    for (double x : p.v) out += "," + fixed(x);
    out += "\n";
  }
  return out;
}

CommandResult execute(Command cmd, const ExperimentConfig& cfg) {
  validate(cfg);
  CommandResult res;

  if (cmd == Command::Validate) {
    const ExperimentData d = prepare_data(cfg);
    std::ostringstream msg;
    msg << "config ok; records " << d.parse_stats.valid << " valid, " << d.parse_stats.rejected() << " rejected";
    for (const auto& [reason, n] : d.parse_stats.rejects) msg << "; " << reason << ": " << n;
    msg << "; campaigns " << d.split.train.size() << "; train " << total_records(d.split.train) << ", test "
        << total_records(d.split.test);
    res.message = msg.str();
    return res;
  }

  const fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorCode::Io, "cannot create output directory '" + cfg.output_dir + "'");

  if (cmd == Command::Gen) {
    if (cfg.source != DataSource::Synthetic) fail(ErrorCode::Config, "field 'data.source': gen needs a synthetic source");
    const fs::path p = dir / cfg.gen_path;
    write_log_file(p.string(), generate_synthetic(cfg.synthetic));
    res.written.push_back(p.string());
    write_status(dir, cmd, cfg, res);
    return res;
  }

  const ExperimentData data = prepare_data(cfg);
  const ReplayConfig rc = replay_config(cfg);

  try {
    if (cmd == Command::Run || cmd == Command::Sweep) {
      std::vector<SweepRow> rows;
      std::string error;
      for (auto s : cfg.strategies) {
        SweepSpec spec{{s}, cfg.selections, cfg.divisors};
        try {
          auto part = budget_sweep(data.split, data.payoffs, spec, cfg.training, rc);
          for (auto& r : part) rows.push_back(std::move(r));
        } catch (const Error& e) {
          error = std::string(to_string(s)) + ": " + e.what();
          break;
        }
      }
      write_text(dir / "report.csv", format_report(rows, cfg.payoff_mode), res);
      json trace = json::array();
      for (const auto& r : rows) {
        if (!r.trained.em) continue;
        json j = em_json(*r.trained.em);
        j["strategy"] = to_string(r.strategy);
        j["selection"] = r.selection.name();
        j["divisor"] = r.divisor;
        j["budget"] = r.budget;
        j["replay_lambda"] = r.trained.parameter;
        trace.push_back(std::move(j));
      }
      write_text(dir / "em_trace.json", trace.dump(2) + "\n", res);
      if (cfg.trace) {
        std::string t = trace_header();
        for (const auto& r : rows)
          append_trace(t, to_string(r.strategy), r.selection.name(), std::to_string(r.divisor), r.report, data.split.test);
        write_text(dir / "trace.csv", t, res);
      }
      if (!error.empty()) fail(ErrorCode::Numeric, error);
    }

    if (cmd == Command::Run || cmd == Command::Dynamic) {
      std::vector<RoundResult> dyn;
      std::vector<RoundResult> stat;
      if (cfg.dynamic_enabled || cmd == Command::Dynamic) {
        const auto horizon_ms = static_cast<std::int64_t>(std::llround(cfg.rounds.horizon_hours * kHourMs));
        double horizon_cost = 0.0;
        for (const auto& s : data.split.test)
          for (const auto& r : s.records)
            if (r.timestamp_ms < data.split.cut_ms + horizon_ms) horizon_cost += r.winning_price;
        if (!(horizon_cost > 0.0)) fail(ErrorCode::InvalidArgument, "test data has no cost inside the round horizon");
        const double budget = horizon_cost / cfg.rounds_divisor;
        dyn = run_dynamic(cfg.rounds, data.split, data.payoffs, cfg.rounds_strategy, cfg.rounds_selection, budget,
                          cfg.training, rc);
        RoundSchedule single{cfg.rounds.horizon_hours, cfg.rounds.horizon_hours};
        stat = run_dynamic(single, data.split, data.payoffs, cfg.rounds_strategy, cfg.rounds_selection, budget,
                           cfg.training, rc);
      }
      write_text(dir / "rounds.csv", format_rounds(dyn, stat, cfg.rounds_strategy, cfg.rounds_selection), res);
      if (cmd == Command::Dynamic) {
        json trace = json::array();
        for (const auto* set : {&dyn, &stat}) {
          for (const auto& r : *set) {
            if (!r.trained || !r.trained->em) continue;
            json j = em_json(*r.trained->em);
            j["schedule"] = set == &dyn ? "dynamic" : "static";
            j["round"] = r.index;
            j["replay_lambda"] = r.trained->parameter;
            trace.push_back(std::move(j));
          }
        }
        write_text(dir / "em_trace.json", trace.dump(2) + "\n", res);
      }
    }

    if (cmd == Command::Frontier) {
      const double budget = total_cost(data.split.test) / cfg.frontier_divisor;
      const double volume = static_cast<double>(total_records(data.split.test));
      const TrainedStrategy trained =
          train_strategy(cfg.frontier_strategy, {}, data.split.train, data.payoffs, budget, volume, cfg.training);
      const MarketFamily family = cfg.frontier_strategy == StrategyKind::Sam1 ? MarketFamily::UniformMarket : cfg.training.market;
      const auto campaigns =
          build_campaigns(data.split.train, data.payoffs, family, cfg.training.market_fit, cfg.training.cvr_bins);
      const auto& em = cfg.training.em;
      const std::size_t mc_volume = em.mc_volume > 0 ? em.mc_volume : static_cast<std::size_t>(volume);
      const PortfolioEstimate est = estimate_portfolio(campaigns, trained.bids, mc_volume, em.mc_repetitions, em.seed, em.bucket_ms);
      std::vector<std::string> ids;
      for (const auto& c : campaigns) ids.push_back(c.id);
      write_text(dir / "frontier.csv", format_frontier(efficient_frontier(est, cfg.frontier_alphas), ids), res);
    }
  } catch (const Error& e) {
    res.partial = !res.written.empty();
    res.message = e.what();
    write_status(dir, cmd, cfg, res);
    if (!res.partial) throw;
    res.exit_code = 1;
    return res;
  }
  write_status(dir, cmd, cfg, res);
  return res;
}

}  // namespace samkit
