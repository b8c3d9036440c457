#include "samkit/sam_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "samkit/error.hpp"
#include "samkit/rng.hpp"

namespace samkit {

void validate(const EmConfig& cfg) {
  if (cfg.max_iterations < 1) fail(ErrorCode::InvalidArgument, "EM needs at least one iteration");
  if (!(cfg.tol_v > 0.0) || !(cfg.tol_lambda > 0.0)) fail(ErrorCode::InvalidArgument, "EM tolerances must be positive");
  if (!(cfg.alpha >= 0.0)) fail(ErrorCode::InvalidArgument, "risk aversion must be nonnegative");
  if (!(cfg.budget > 0.0)) fail(ErrorCode::InvalidArgument, "EM budget must be positive");
  if (!(cfg.volume >= 1.0)) fail(ErrorCode::InvalidArgument, "EM volume must be at least 1");
  if (cfg.mc_repetitions < 2) fail(ErrorCode::InvalidArgument, "EM needs at least 2 MC repetitions");
  if (cfg.bucket_ms <= 0) fail(ErrorCode::InvalidArgument, "margin bucket width must be positive");
  if (!(cfg.lambda_floor >= kLambdaMin)) fail(ErrorCode::InvalidArgument, "lambda floor must be > -1");
  for (double s : cfg.stream_shares)
    if (!(s >= 0.0 && s <= 1.0)) fail(ErrorCode::InvalidArgument, "stream shares must lie in [0, 1]");
}

double effective_volume(const EmConfig& cfg, const SelectionVector& v) {
  if (cfg.stream_shares.empty()) return cfg.volume;
  if (cfg.stream_shares.size() != v.size()) fail(ErrorCode::InvalidArgument, "stream shares have the wrong dimension");
  double ratio = 1.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] > 0.0) ratio = std::min(ratio, cfg.stream_shares[i] / v[i]);
  return std::max(1.0, cfg.volume * ratio);
}

double SamSolution::monotonicity_tolerance(std::size_t i) const {
  const auto& it = trace.at(i);
  return 1e-6 * std::abs(it.objective) + 10.0 * it.objective_se;
}

namespace {

struct Plugin {
  double profit = 0.0;
  double cost = 0.0;
  double se = 0.0;
};

Plugin plugin_values(const SelectionVector& v, std::span<const BidFunction> bids,
                     std::span<const CampaignSpec> campaigns, double volume) {
  if (v.size() != campaigns.size() || bids.size() != campaigns.size())
    fail(ErrorCode::InvalidArgument, "selection, bids and campaigns disagree in size");
  Plugin out;
  double var_sum = 0.0;
  for (std::size_t i = 0; i < campaigns.size(); ++i) {
    if (v[i] <= 0.0) continue;
    const auto& c = campaigns[i];
    const auto n = static_cast<double>(c.cvr_samples.size());
    if (c.cvr_samples.empty()) fail(ErrorCode::InvalidArgument, "campaign " + c.id + " has no samples");
    double sp = 0.0;
    double sp2 = 0.0;
    double sc = 0.0;
    for (std::size_t k = 0; k < c.cvr_samples.size(); ++k) {
      const double theta = c.cvr_samples[k];
      const double b = bids[i](theta, c.payoff, k);
      const double w = c.market(b);
      const double p = (theta * c.payoff - b) * w;
      sp += p;
      sp2 += p * p;
      sc += b * w;
    }
    const double mean = sp / n;
    const double var = n > 1 ? std::max(sp2 / n - mean * mean, 0.0) * n / (n - 1) : 0.0;
    out.profit += v[i] * mean;
    out.cost += v[i] * sc / n;
    var_sum += v[i] * v[i] * var / n;
  }
  out.profit *= volume;
  out.cost *= volume;
  out.se = volume * std::sqrt(var_sum);
  return out;
}

std::vector<CampaignSpec> with_market(std::span<const CampaignSpec> campaigns, const std::optional<WinningFunction>& m) {
  std::vector<CampaignSpec> out(campaigns.begin(), campaigns.end());
  if (m)
    for (auto& c : out) c.market = *m;
  return out;
}

double sam1_lambda(std::span<const CampaignSpec> campaigns, const SelectionVector& v, double budget, double volume) {
  // (1 + lambda)^2 = T sum_i v_i r_i^2 phi_i / (4 l_i B); reduces to the single-campaign closed form.
  double acc = 0.0;
  for (std::size_t i = 0; i < campaigns.size(); ++i) {
    if (v[i] <= 0.0) continue;
    const auto& c = campaigns[i];
    double phi = 0.0;
    for (double t : c.cvr_samples) phi += t * t;
    phi /= static_cast<double>(c.cvr_samples.size());
    acc += v[i] * c.payoff * c.payoff * phi / c.market.scale();
  }
  if (acc <= 0.0) return kLambdaMin;
  return std::sqrt(volume * acc / (4.0 * budget)) - 1.0;
}

}  // namespace

double expected_net_profit(const SelectionVector& v, std::span<const BidFunction> bids,
                           std::span<const CampaignSpec> campaigns, double volume) {
  return plugin_values(v, bids, campaigns, volume).profit;
}

double expected_cost(const SelectionVector& v, std::span<const BidFunction> bids,
                     std::span<const CampaignSpec> campaigns, double volume) {
  return plugin_values(v, bids, campaigns, volume).cost;
}

std::vector<std::vector<double>> bucket_margins(std::span<const CampaignSpec> campaigns,
                                                std::span<const BidFunction> bids, std::int64_t bucket_ms) {
  if (bucket_ms <= 0) fail(ErrorCode::InvalidArgument, "bucket width must be positive");
  std::int64_t origin = std::numeric_limits<std::int64_t>::max();
  std::int64_t last = std::numeric_limits<std::int64_t>::min();
  for (const auto& c : campaigns)
    for (const auto& r : c.training) {
      origin = std::min(origin, r.timestamp_ms);
      last = std::max(last, r.timestamp_ms);
    }
  std::vector<std::vector<double>> out(campaigns.size());
  if (origin > last) return out;
  const auto buckets = static_cast<std::size_t>((last - origin) / bucket_ms + 1);
  for (std::size_t i = 0; i < campaigns.size(); ++i) {
    const auto& c = campaigns[i];
    std::vector<double> profit(buckets, 0.0);
    std::vector<double> cost(buckets, 0.0);
    for (std::size_t k = 0; k < c.training.size(); ++k) {
      const auto& r = c.training[k];
      const double b = bids[i](r.pcvr, c.payoff, k);
      if (b < r.winning_price) continue;
      const auto slot = static_cast<std::size_t>((r.timestamp_ms - origin) / bucket_ms);
      cost[slot] += r.winning_price;
      profit[slot] += (r.converted ? c.payoff : 0.0) - r.winning_price;
    }
    out[i].resize(buckets);
    for (std::size_t s = 0; s < buckets; ++s)
      out[i][s] = cost[s] > 0.0 ? profit[s] / cost[s] : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::vector<std::vector<double>> correlation_matrix(const std::vector<std::vector<double>>& series) {
  const std::size_t m = series.size();
  std::vector<std::vector<double>> beta(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    beta[i][i] = 1.0;
    for (std::size_t j = i + 1; j < m; ++j) {
      std::vector<double> a;
      std::vector<double> b;
      const std::size_t len = std::min(series[i].size(), series[j].size());
      for (std::size_t s = 0; s < len; ++s) {
        if (std::isnan(series[i][s]) || std::isnan(series[j][s])) continue;
        a.push_back(series[i][s]);
        b.push_back(series[j][s]);
      }
      const double r = a.size() >= 3 ? margin_correlation(a, b) : 0.0;
      beta[i][j] = beta[j][i] = r;
    }
  }
  return beta;
}

PortfolioEstimate estimate_portfolio(std::span<const CampaignSpec> campaigns, std::span<const BidFunction> bids,
                                     std::size_t mc_volume, std::size_t repetitions, std::uint64_t seed,
                                     std::int64_t bucket_ms) {
  PortfolioEstimate est;
  est.margins.resize(campaigns.size());
  // Every campaign draws from the same sample stream (common random numbers).
  for (std::size_t i = 0; i < campaigns.size(); ++i) {
    try {
      est.margins[i] = estimate_margin_mc(campaigns[i], bids[i], campaigns[i].market, mc_volume, repetitions, seed);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Numeric) throw;
      est.undefined.push_back(i);
    }
  }
  est.beta = correlation_matrix(bucket_margins(campaigns, bids, bucket_ms));
  return est;
}

SelectionVector select_campaigns(const PortfolioEstimate& est, double alpha) {
  const std::size_t m = est.margins.size();
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < m; ++i)
    if (std::find(est.undefined.begin(), est.undefined.end(), i) == est.undefined.end()) active.push_back(i);
  if (active.empty()) fail(ErrorCode::Numeric, "no campaign has a defined margin");

  std::vector<double> mu;
  std::vector<double> sigma;
  const auto k = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd beta(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    mu.push_back(est.margins[active[a]].mean);
    sigma.push_back(est.margins[active[a]].stddev);
    for (Eigen::Index b = 0; b < k; ++b) beta(a, b) = est.beta[active[a]][active[b]];
  }
  const PortfolioModel model(std::move(mu), std::move(sigma), beta);
  const SelectionVector sub = optimize_selection(model, alpha);
  std::vector<double> v(m, 0.0);
  for (std::size_t a = 0; a < active.size(); ++a) v[active[a]] = sub[a];
  return SelectionVector(std::move(v));
}

SamSolution run_em(std::span<const CampaignSpec> input, SamFamily family, const EmConfig& cfg) {
  validate(cfg);
  if (input.empty()) fail(ErrorCode::InvalidArgument, "EM needs at least one campaign");
  for (const auto& c : input)
    if (c.cvr_samples.empty()) fail(ErrorCode::InvalidArgument, "campaign " + c.id + " has no training data");
  if (cfg.fixed_selection && cfg.fixed_selection->size() != input.size())
    fail(ErrorCode::InvalidArgument, "fixed selection has the wrong dimension");
  if (!cfg.stream_shares.empty() && cfg.stream_shares.size() != input.size())
    fail(ErrorCode::InvalidArgument, "stream shares have the wrong dimension");

  const std::vector<CampaignSpec> campaigns = with_market(input, cfg.market);
  const std::size_t m = campaigns.size();
  const std::size_t mc_volume = cfg.mc_volume > 0 ? cfg.mc_volume : static_cast<std::size_t>(cfg.volume);

  SamSolution sol;
  sol.family = family;
  sol.bids.assign(m, BidFunction::truth());
  SelectionVector v = cfg.fixed_selection.value_or(SelectionVector::uniform(m));
  std::optional<double> prev_lambda;
  std::vector<bool> frozen(m, false);

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    EmIteration rec;
    rec.iteration = it;

    // E-step. The MC seed is shared by all iterations (common random numbers).
    PortfolioEstimate est = estimate_portfolio(campaigns, sol.bids, mc_volume, cfg.mc_repetitions, cfg.seed, cfg.bucket_ms);
    for (std::size_t i = 0; i < m; ++i) {
      if (frozen[i] && std::find(est.undefined.begin(), est.undefined.end(), i) == est.undefined.end())
        est.undefined.push_back(i);
    }
    std::sort(est.undefined.begin(), est.undefined.end());
    for (std::size_t i : est.undefined) frozen[i] = true;
    if (est.undefined.size() == m) fail(ErrorCode::Numeric, "EM failed: every campaign has an undefined margin");

    const SelectionVector prev_v = v;
    for (std::size_t i = 0; i < m; ++i) {
      rec.mu.push_back(est.margins[i].mean);
      rec.sigma.push_back(est.margins[i].stddev);
    }
    rec.beta = est.beta;

    // M-step for a candidate selection. The resulting plug-in objective depends on v only.
    struct MStep {
      double lambda = 0.0;
      bool under_spend = false;
      double volume = 0.0;
      std::vector<BidFunction> bids;
      Plugin pv;
    };
    auto m_step = [&](const SelectionVector& cand) {
      MStep out;
      out.volume = effective_volume(cfg, cand);
      if (family == SamFamily::Sam2) {
        std::vector<LambdaCampaign> lc;
        lc.reserve(m);
        for (std::size_t i = 0; i < m; ++i)
          lc.push_back({campaigns[i].payoff, campaigns[i].cvr_samples, cand[i], campaigns[i].market});
        const LambdaSolveResult res = solve_lambda_numeric(family, lc, cfg.budget, out.volume, cfg.lambda);
        out.lambda = res.lambda;
        out.under_spend = res.under_spend;
      } else {
        out.lambda = sam1_lambda(campaigns, cand, cfg.budget, out.volume);
      }
      if (out.lambda < cfg.lambda_floor) {
        out.lambda = cfg.lambda_floor;
        out.under_spend = true;
      }
      for (std::size_t i = 0; i < m; ++i) out.bids.push_back(make_sam_bid(family, out.lambda, campaigns[i].market));
      out.pv = plugin_values(cand, out.bids, campaigns, out.volume);
      return out;
    };

    MStep step;
    bool backtracked = false;
    if (cfg.fixed_selection || sol.trace.empty()) {
      if (!cfg.fixed_selection) v = select_campaigns(est, cfg.alpha);
      step = m_step(v);
    } else {
      // Move toward the E-step selection only as far as the expected net profit does not drop.
      const SelectionVector target = select_campaigns(est, cfg.alpha);
      const double prev_obj = sol.trace.back().objective;
      bool accepted = false;
      for (std::size_t i : est.undefined)
        if (prev_v[i] > 0.0) {
          // A campaign lost its margin estimate; its mass has to move.
          v = target;
          step = m_step(v);
          accepted = true;
        }
      for (double t = 1.0; t >= 1.0 / 16.0 && !accepted; t *= 0.5) {
        std::vector<double> mix(m);
        for (std::size_t i = 0; i < m; ++i) mix[i] = t * target[i] + (1.0 - t) * prev_v[i];
        const SelectionVector cand(std::move(mix));
        MStep trial = m_step(cand);
        const double tol = 1e-6 * std::abs(trial.pv.profit) + 10.0 * trial.pv.se;
        if (trial.pv.profit >= prev_obj - tol) {
          v = cand;
          step = std::move(trial);
          accepted = true;
          backtracked = t < 1.0;
        }
      }
      if (!accepted) {
        step = m_step(v);
        backtracked = true;
      }
    }
    sol.bids = step.bids;
    const double lambda = step.lambda;
    rec.lambda_under_spend = step.under_spend;
    rec.objective = step.pv.profit;
    rec.objective_se = step.pv.se;
    rec.expected_cost = step.pv.cost;
    rec.volume = step.volume;
    rec.lambda = lambda;
    rec.v = v.values();
    sol.trace.push_back(std::move(rec));
    sol.iterations = it;

    double dv = 0.0;
    for (std::size_t i = 0; i < m; ++i) dv += std::abs(v[i] - prev_v[i]);
    // A shortened E-step move means the proposal no longer pays off in full; stop there.
    const bool settled = backtracked || (prev_lambda && dv < cfg.tol_v &&
                         std::abs(lambda - *prev_lambda) / (1.0 + std::abs(*prev_lambda)) < cfg.tol_lambda);
    prev_lambda = lambda;
    if (settled) {
      sol.converged = true;
      break;
    }
  }

  sol.v = v;
  sol.lambda = *prev_lambda;
  sol.objective = sol.trace.back().objective;
  sol.expected_cost = sol.trace.back().expected_cost;
  for (std::size_t i = 0; i < m; ++i)
    if (frozen[i]) sol.frozen.push_back(i);
  return sol;
}

}  // namespace samkit
