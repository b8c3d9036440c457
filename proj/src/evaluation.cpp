#include "samkit/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "samkit/error.hpp"
#include "samkit/rng.hpp"

namespace samkit {

const char* to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Const:
      return "const";
    case StrategyKind::Rand:
      return "rand";
    case StrategyKind::Truth:
      return "truth";
    case StrategyKind::Lin:
      return "lin";
    case StrategyKind::Ortb:
      return "ortb";
    case StrategyKind::Sam1:
      return "sam1";
    case StrategyKind::Sam2:
      return "sam2";
  }
  return "?";
}

StrategyKind strategy_from_string(const std::string& name) {
  for (auto k : {StrategyKind::Const, StrategyKind::Rand, StrategyKind::Truth, StrategyKind::Lin, StrategyKind::Ortb,
                 StrategyKind::Sam1, StrategyKind::Sam2})
    if (name == to_string(k)) return k;
  fail(ErrorCode::InvalidArgument, "unknown strategy '" + name + "'");
}

std::string SelectionScheme::name() const {
  switch (kind) {
    case SelectionKind::Uniform:
      return "uniform";
    case SelectionKind::Greedy:
      return "greedy";
    case SelectionKind::Portfolio:
      return "portfolio";
    case SelectionKind::Single:
      return "single:" + std::to_string(campaign);
  }
  return "?";
}

SelectionScheme selection_from_string(const std::string& name, double alpha) {
  if (name == "uniform") return {SelectionKind::Uniform, 0.0, 0};
  if (name == "greedy") return {SelectionKind::Greedy, 0.0, 0};
  if (name == "portfolio") {
    if (!(alpha >= 0.0)) fail(ErrorCode::InvalidArgument, "risk aversion must be nonnegative");
    return {SelectionKind::Portfolio, alpha, 0};
  }
  if (name.rfind("single:", 0) == 0) {
    const std::string idx = name.substr(7);
    if (idx.empty() || idx.find_first_not_of("0123456789") != std::string::npos)
      fail(ErrorCode::InvalidArgument, "bad single-campaign selection '" + name + "'");
    return {SelectionKind::Single, 0.0, static_cast<std::size_t>(std::stoull(idx))};
  }
  fail(ErrorCode::InvalidArgument, "unknown selection '" + name + "'");
}

unsigned worker_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SAMKIT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) n = static_cast<unsigned>(v);
  }
  return n;
}

namespace {

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  std::vector<double> g;
  if (n < 2) return {std::sqrt(lo * hi)};
  for (std::size_t k = 0; k < n; ++k)
    g.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / static_cast<double>(n - 1)));
  return g;
}

double training_profit(const StreamSet& training, const std::vector<BidFunction>& bids,
                       std::span<const double> payoffs, const SelectionVector& v, double budget, std::uint64_t seed) {
  ReplayConfig rc;
  rc.budget = budget;
  rc.seed = seed;
  return replay(training, bids, payoffs, v, rc).total.profit();
}

double mean_cvr(const std::vector<CampaignSpec>& campaigns) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& c : campaigns) {
    for (double t : c.cvr_samples) s += t;
    n += c.cvr_samples.size();
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

double mean_price(const StreamSet& training) {
  const std::size_t n = total_records(training);
  return n ? total_cost(training) / static_cast<double>(n) : 0.0;
}

double long_tail_scale(const CampaignSpec& c) {
  std::vector<double> prices;
  prices.reserve(c.training.size());
  for (const auto& r : c.training) prices.push_back(r.winning_price);
  return fit_long_tail_l(prices);
}

SelectionVector non_sam_selection(const SelectionScheme& sel, const std::vector<CampaignSpec>& campaigns,
                                  const std::vector<BidFunction>& bids, const TrainingConfig& cfg) {
  const std::size_t m = campaigns.size();
  switch (sel.kind) {
    case SelectionKind::Uniform:
      return SelectionVector::uniform(m);
    case SelectionKind::Single:
      return SelectionVector::one_hot(m, sel.campaign);
    case SelectionKind::Greedy:
    case SelectionKind::Portfolio: {
      const std::size_t mc_volume = cfg.em.mc_volume > 0 ? cfg.em.mc_volume : static_cast<std::size_t>(cfg.em.volume);
      const PortfolioEstimate est =
          estimate_portfolio(campaigns, bids, mc_volume, cfg.em.mc_repetitions, cfg.em.seed, cfg.em.bucket_ms);
      return select_campaigns(est, sel.kind == SelectionKind::Greedy ? 0.0 : sel.alpha);
    }
  }
  return SelectionVector::uniform(m);
}

}  // namespace

TrainedStrategy train_strategy(StrategyKind kind, const SelectionScheme& selection, const StreamSet& training,
                               std::span<const double> payoffs, double budget, double volume,
                               const TrainingConfig& cfg) {
  const std::size_t m = training.size();
  if (m == 0) fail(ErrorCode::InvalidArgument, "no campaigns to train on");
  if (payoffs.size() != m) fail(ErrorCode::InvalidArgument, "payoffs must list one value per campaign");
  if (!(budget > 0.0)) fail(ErrorCode::InvalidArgument, "budget must be positive");
  if (!(volume >= 1.0)) fail(ErrorCode::InvalidArgument, "volume must be at least 1");
  if (selection.kind == SelectionKind::Single && selection.campaign >= m)
    fail(ErrorCode::InvalidArgument, "single-campaign selection index out of range");

  const std::vector<double> r(payoffs.begin(), payoffs.end());
  const MarketFamily family = kind == StrategyKind::Sam1 ? MarketFamily::UniformMarket : cfg.market;
  const std::vector<CampaignSpec> campaigns = build_campaigns(training, r, family, cfg.market_fit, cfg.cvr_bins);

  const double train_records = static_cast<double>(total_records(training));
  const double train_budget = budget * train_records / volume;
  const std::uint64_t replay_seed = derive_seed(cfg.seed, 0x7e57);

  TrainingConfig local = cfg;
  local.em.budget = budget;
  local.em.volume = volume;
  local.em.stream_shares.clear();
  for (const auto& st : training)
    local.em.stream_shares.push_back(train_records > 0.0 ? static_cast<double>(st.records.size()) / train_records : 0.0);

  TrainedStrategy out;
  out.kind = kind;
  out.selection = selection;

  if (kind == StrategyKind::Sam1 || kind == StrategyKind::Sam2) {
    EmConfig em = local.em;
    switch (selection.kind) {
      case SelectionKind::Uniform:
        em.fixed_selection = SelectionVector::uniform(m);
        break;
      case SelectionKind::Single:
        em.fixed_selection = SelectionVector::one_hot(m, selection.campaign);
        break;
      case SelectionKind::Greedy:
        em.alpha = 0.0;
        break;
      case SelectionKind::Portfolio:
        em.alpha = selection.alpha;
        break;
    }
    const SamFamily fam = kind == StrategyKind::Sam1 ? SamFamily::Sam1 : SamFamily::Sam2;
    SamSolution sol = run_em(campaigns, fam, em);
    out.v = sol.v;
    out.bids = sol.bids;
    out.parameter = sol.lambda;
    out.training_profit = training_profit(training, out.bids, payoffs, out.v, train_budget, replay_seed);
    if (cfg.tune_sam_lambda) {
      for (double mult : log_grid(1.0 / 64.0, 8.0, cfg.tuning_grid)) {
        const double lambda = std::max(kLambdaMin, (1.0 + sol.lambda) * mult - 1.0);
        std::vector<BidFunction> bids;
        for (const auto& c : campaigns) bids.push_back(make_sam_bid(fam, lambda, c.market));
        const double p = training_profit(training, bids, payoffs, out.v, train_budget, replay_seed);
        if (p > out.training_profit) {
          out.training_profit = p;
          out.bids = std::move(bids);
          out.parameter = lambda;
        }
      }
    }
    out.em = std::move(sol);
    return out;
  }

  const double price = mean_price(training);
  const double theta_bar = mean_cvr(campaigns);
  auto build = [&](double param) {
    std::vector<BidFunction> bids;
    for (std::size_t i = 0; i < m; ++i) {
      switch (kind) {
        case StrategyKind::Const:
          bids.push_back(BidFunction::constant(param));
          break;
        case StrategyKind::Rand:
          bids.push_back(BidFunction::random(0.0, param, derive_seed(cfg.seed, 0x5a4d + i)));
          break;
        case StrategyKind::Truth:
          bids.push_back(BidFunction::truth());
          break;
        case StrategyKind::Lin:
          bids.push_back(BidFunction::lin(param, theta_bar > 0.0 ? theta_bar : 1.0));
          break;
        case StrategyKind::Ortb: {
          const double c = cfg.market == MarketFamily::LongTail ? campaigns[i].market.scale()
                                                                : long_tail_scale(campaigns[i]);
          bids.push_back(BidFunction::ortb(c, param));
          break;
        }
        default:
          fail(ErrorCode::InvalidArgument, "not a baseline strategy");
      }
    }
    return bids;
  };

  std::vector<double> grid;
  const double base = price > 0.0 ? price : 1.0;
  switch (kind) {
    case StrategyKind::Const:
    case StrategyKind::Rand:
      for (double g : log_grid(1e-2, 1e1, cfg.tuning_grid)) grid.push_back(base * g);
      break;
    case StrategyKind::Lin:
      for (double g : log_grid(1e-2, 1e2, cfg.tuning_grid)) grid.push_back(base * g);
      break;
    case StrategyKind::Ortb:
      // lambda_o chosen so the bid at theta_bar spans the same price range as lin.
      for (double g : log_grid(1e-2, 1e2, cfg.tuning_grid))
        grid.push_back((theta_bar > 0.0 ? theta_bar : 1.0) / (2.0 * base * g));
      break;
    default:
      grid.push_back(0.0);
      break;
  }

  const SelectionVector uni = SelectionVector::uniform(m);
  bool first = true;
  for (double param : grid) {
    std::vector<BidFunction> bids = build(param);
    const SelectionVector v = selection.kind == SelectionKind::Single ? SelectionVector::one_hot(m, selection.campaign) : uni;
    const double p = training_profit(training, bids, payoffs, v, train_budget, replay_seed);
    if (first || p > out.training_profit) {
      first = false;
      out.training_profit = p;
      out.bids = std::move(bids);
      out.parameter = param;
    }
  }
  local.em.seed = cfg.em.seed;
  out.v = non_sam_selection(selection, campaigns, out.bids, local);
  if (selection.kind == SelectionKind::Greedy || selection.kind == SelectionKind::Portfolio)
    out.training_profit = training_profit(training, out.bids, payoffs, out.v, train_budget, replay_seed);
  return out;
}

void validate_divisors(const std::vector<int>& divisors) {
  if (divisors.empty()) fail(ErrorCode::InvalidArgument, "budget divisors must not be empty");
  for (int d : divisors)
    if (d < 1) fail(ErrorCode::InvalidArgument, "budget divisors must be positive integers");
}

namespace {

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned workers = std::min<unsigned>(worker_threads(), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<SweepRow> budget_sweep(const TrainTest& data, std::span<const double> payoffs, const SweepSpec& spec,
                                   const TrainingConfig& cfg, const ReplayConfig& replay_cfg) {
  validate_divisors(spec.divisors);
  if (spec.strategies.empty()) fail(ErrorCode::InvalidArgument, "sweep needs at least one strategy");
  if (spec.selections.empty()) fail(ErrorCode::InvalidArgument, "sweep needs at least one selection");
  const double test_cost = total_cost(data.test);
  const double volume = static_cast<double>(total_records(data.test));
  if (!(test_cost > 0.0) || volume < 1.0) fail(ErrorCode::InvalidArgument, "test split has no cost");

  struct Job {
    StrategyKind strategy;
    SelectionScheme selection;
    int divisor;
  };
  std::vector<Job> jobs;
  for (auto s : spec.strategies)
    for (const auto& sel : spec.selections)
      for (int d : spec.divisors) jobs.push_back({s, sel, d});

  std::vector<std::optional<SweepRow>> rows(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t j) {
    const Job& job = jobs[j];
    const double budget = test_cost / job.divisor;
    TrainedStrategy trained = train_strategy(job.strategy, job.selection, data.train, payoffs, budget, volume, cfg);
    ReplayConfig rc = replay_cfg;
    rc.budget = budget;
    ReplayReport rep = replay(data.test, trained.bids, payoffs, trained.v, rc);
    rows[j] = SweepRow{job.strategy, job.selection, job.divisor, budget, std::move(trained), std::move(rep)};
  });
  std::vector<SweepRow> out;
  out.reserve(rows.size());
  for (auto& r : rows) out.push_back(std::move(*r));
  return out;
}

std::size_t RoundSchedule::rounds() const {
  if (!(horizon_hours > 0.0) || !(period_hours > 0.0))
    fail(ErrorCode::InvalidArgument, "round horizon and period must be positive");
  return static_cast<std::size_t>(std::ceil(horizon_hours / period_hours - 1e-9));
}

namespace {

StreamSet window(const StreamSet& streams, std::int64_t lo, std::int64_t hi) {
  StreamSet out;
  for (const auto& s : streams) {
    CampaignStream w{s.campaign_id, {}};
    for (const auto& r : s.records)
      if (r.timestamp_ms >= lo && r.timestamp_ms < hi) w.records.push_back(r);
    out.push_back(std::move(w));
  }
  return out;
}

double span_hours(const StreamSet& streams, std::int64_t end_ms) {
  std::int64_t first = std::numeric_limits<std::int64_t>::max();
  for (const auto& s : streams)
    if (!s.records.empty()) first = std::min(first, s.records.front().timestamp_ms);
  if (first == std::numeric_limits<std::int64_t>::max() || end_ms <= first) return 0.0;
  return static_cast<double>(end_ms - first) / static_cast<double>(kHourMs);
}

}  // namespace

std::vector<RoundResult> run_dynamic(const RoundSchedule& schedule, const TrainTest& data,
                                     std::span<const double> payoffs, StrategyKind strategy,
                                     const SelectionScheme& selection, double total_budget,
                                     const TrainingConfig& cfg, const ReplayConfig& replay_cfg) {
  const std::size_t n_rounds = schedule.rounds();
  if (!(total_budget > 0.0)) fail(ErrorCode::InvalidArgument, "budget must be positive");
  if (data.train.size() != data.test.size()) fail(ErrorCode::InvalidArgument, "train and test disagree in campaigns");

  const std::int64_t t0 = data.cut_ms;
  const auto period_ms = static_cast<std::int64_t>(std::llround(schedule.period_hours * kHourMs));
  const auto horizon_ms = static_cast<std::int64_t>(std::llround(schedule.horizon_hours * kHourMs));

  StreamSet training = data.train;
  double training_hours = span_hours(training, t0);
  double carry = 0.0;
  std::vector<RoundResult> out;

  for (std::size_t k = 0; k < n_rounds; ++k) {
    RoundResult rr;
    rr.index = k;
    const std::int64_t lo = t0 + static_cast<std::int64_t>(k) * period_ms;
    const std::int64_t hi = std::min(lo + period_ms, t0 + horizon_ms);
    rr.start_hour = static_cast<double>(lo - t0) / kHourMs;
    rr.end_hour = static_cast<double>(hi - t0) / kHourMs;
    const double len_hours = rr.end_hour - rr.start_hour;
    rr.budget = total_budget * len_hours / schedule.horizon_hours + carry;

    const StreamSet round_streams = window(data.test, lo, hi);
    const double train_n = static_cast<double>(total_records(training));
    rr.volume = training_hours > 0.0 ? std::max(1.0, train_n / training_hours * len_hours) : std::max(1.0, train_n);

    if (total_records(round_streams) == 0) {
      rr.skipped = true;
      carry = rr.budget;
      rr.report.budget = rr.budget;
      rr.report.budget_remaining = rr.budget;
      out.push_back(std::move(rr));
      continue;
    }

    TrainingConfig tc = cfg;
    tc.seed = derive_seed(cfg.seed, k);
    TrainedStrategy trained = train_strategy(strategy, selection, training, payoffs, rr.budget, rr.volume, tc);
    ReplayConfig rc = replay_cfg;
    rc.budget = rr.budget;
    rc.seed = derive_seed(replay_cfg.seed, k);
    rr.report = replay(round_streams, trained.bids, payoffs, trained.v, rc);
    rr.trained = std::move(trained);
    carry = rr.report.budget_remaining;

    // Campaigns without records in this round keep their previous training data.
    StreamSet next = round_streams;
    for (std::size_t i = 0; i < next.size(); ++i)
      if (next[i].records.empty()) next[i] = training[i];
    training = std::move(next);
    training_hours = len_hours;
    out.push_back(std::move(rr));
  }
  return out;
}

}  // namespace samkit
