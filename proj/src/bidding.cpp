#include "samkit/bidding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "samkit/error.hpp"
#include "samkit/rng.hpp"

namespace samkit {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// sqrt(a + c^2) - c without cancellation for small a.
double sqrt_shift(double a, double c) {
  if (a <= 0.0) return 0.0;
  return a / (std::sqrt(a + c * c) + c);
}

void check_lambda(double lambda) {
  if (!(lambda > -1.0) || !std::isfinite(lambda)) fail(ErrorCode::Domain, "SAM lambda must be finite and > -1");
}

}  // namespace

BidFunction BidFunction::constant(double price) {
  if (!(price >= 0.0)) fail(ErrorCode::Domain, "constant bid must be nonnegative");
  return BidFunction(ConstBid{price});
}

BidFunction BidFunction::random(double lo, double hi, std::uint64_t seed) {
  if (!(lo >= 0.0) || !(hi >= lo)) fail(ErrorCode::Domain, "random bid range must satisfy 0 <= lo <= hi");
  return BidFunction(RandBid{lo, hi, seed});
}

BidFunction BidFunction::truth() { return BidFunction(TruthBid{}); }

BidFunction BidFunction::lin(double base_bid, double avg_cvr) {
  if (!(base_bid >= 0.0)) fail(ErrorCode::Domain, "lin base bid must be nonnegative");
  if (!(avg_cvr > 0.0)) fail(ErrorCode::Domain, "lin average CVR must be positive");
  return BidFunction(LinBid{base_bid, avg_cvr});
}

BidFunction BidFunction::ortb(double c, double lambda) {
  if (!(c > 0.0) || !(lambda > 0.0)) fail(ErrorCode::Domain, "ortb parameters must be positive");
  return BidFunction(OrtbBid{c, lambda});
}

BidFunction BidFunction::sam1(double lambda) {
  check_lambda(lambda);
  return BidFunction(Sam1Bid{lambda});
}

BidFunction BidFunction::sam2(double lambda, double scale) {
  check_lambda(lambda);
  if (!(scale > 0.0)) fail(ErrorCode::Domain, "sam2 scale must be positive");
  return BidFunction(Sam2Bid{lambda, scale});
}

std::string BidFunction::name() const {
  return std::visit(Overloaded{[](const ConstBid&) { return "const"; }, [](const RandBid&) { return "rand"; },
                               [](const TruthBid&) { return "truth"; }, [](const LinBid&) { return "lin"; },
                               [](const OrtbBid&) { return "ortb"; }, [](const Sam1Bid&) { return "sam1"; },
                               [](const Sam2Bid&) { return "sam2"; }},
                    family_);
}

double BidFunction::lambda() const {
  if (const auto* s1 = std::get_if<Sam1Bid>(&family_)) return s1->lambda;
  if (const auto* s2 = std::get_if<Sam2Bid>(&family_)) return s2->lambda;
  fail(ErrorCode::InvalidArgument, "lambda is only defined for SAM bid functions");
}

double BidFunction::operator()(double theta, double payoff, std::uint64_t call_index) const {
  if (!(theta >= 0.0 && theta <= 1.0)) fail(ErrorCode::Domain, "theta must lie in [0, 1]");
  if (!(payoff >= 0.0)) fail(ErrorCode::Domain, "payoff must be nonnegative");
  return std::visit(
      Overloaded{
          [](const ConstBid& f) { return f.price; },
          [&](const RandBid& f) {
            return f.lo + (f.hi - f.lo) * uniform01(mix64(f.seed ^ mix64(call_index)));
          },
          [&](const TruthBid&) { return payoff * theta; },
          [&](const LinBid& f) { return f.base_bid * theta / f.avg_cvr; },
          [&](const OrtbBid& f) { return sqrt_shift(f.c * theta / f.lambda, f.c); },
          [&](const Sam1Bid& f) { return payoff * theta / (2.0 * (1.0 + f.lambda)); },
          [&](const Sam2Bid& f) { return sqrt_shift(payoff * f.scale * theta / (1.0 + f.lambda), f.scale); },
      },
      family_);
}

double BidFunction::dlambda(double theta, double payoff) const {
  if (const auto* s1 = std::get_if<Sam1Bid>(&family_)) {
    return -payoff * theta / (2.0 * (1.0 + s1->lambda) * (1.0 + s1->lambda));
  }
  if (const auto* s2 = std::get_if<Sam2Bid>(&family_)) {
    const double a = payoff * s2->scale * theta / (1.0 + s2->lambda);
    if (a <= 0.0) return 0.0;
    return -a / (2.0 * std::sqrt(a + s2->scale * s2->scale) * (1.0 + s2->lambda));
  }
  fail(ErrorCode::InvalidArgument, "dlambda is only defined for SAM bid functions");
}

double bid(const BidFunction& f, double theta, double payoff, std::uint64_t call_index) {
  return f(theta, payoff, call_index);
}

double sam1_lambda_closed_form(double payoff, double volume, double budget, double scale, double phi) {
  if (!(payoff > 0.0 && volume > 0.0 && budget > 0.0 && scale > 0.0 && phi > 0.0))
    fail(ErrorCode::Domain, "sam1 closed form needs positive r, T, B, l and phi");
  return 0.5 * payoff * std::sqrt(volume * phi / (budget * scale)) - 1.0;
}

double sam1_bid_slope(double volume, double budget, double scale, double phi) {
  if (!(volume > 0.0 && budget > 0.0 && scale > 0.0 && phi > 0.0))
    fail(ErrorCode::Domain, "sam1 slope needs positive T, B, l and phi");
  return std::sqrt(budget * scale / (volume * phi));
}

const char* to_string(SamFamily family) { return family == SamFamily::Sam1 ? "sam1" : "sam2"; }

BidFunction make_sam_bid(SamFamily family, double lambda, const WinningFunction& market) {
  return family == SamFamily::Sam1 ? BidFunction::sam1(lambda) : BidFunction::sam2(lambda, market.scale());
}

namespace {

struct SpendEval {
  double spend = 0.0;  // sum_i v_i mean_k s_k
  double slope = 0.0;  // d spend / d lambda
};

// Evaluates the aggregate spend map over either all samples or a strided subset.
SpendEval eval_spend(SamFamily family, double lambda, std::span<const LambdaCampaign> campaigns,
                     const std::vector<std::vector<std::size_t>>* subset = nullptr, bool with_slope = true) {
  SpendEval out;
  for (std::size_t i = 0; i < campaigns.size(); ++i) {
    const auto& c = campaigns[i];
    if (c.weight <= 0.0) continue;
    const BidFunction f = make_sam_bid(family, lambda, c.market);
    double s = 0.0;
    double ds = 0.0;
    auto accumulate = [&](double theta) {
      const double b = f(theta, c.payoff);
      const double w = c.market(b);
      s += b * w;
      if (with_slope) ds += (w + b * c.market.derivative(b)) * f.dlambda(theta, c.payoff);
    };
    std::size_t n = 0;
    if (subset) {
      for (std::size_t k : (*subset)[i]) accumulate(c.cvr_samples[k]);
      n = (*subset)[i].size();
    } else {
      for (double theta : c.cvr_samples) accumulate(theta);
      n = c.cvr_samples.size();
    }
    out.spend += c.weight * s / static_cast<double>(n);
    out.slope += c.weight * ds / static_cast<double>(n);
  }
  return out;
}

// Spend only, with the bid and win-rate formulas inlined for the solver's inner loop.
double spend_at(SamFamily family, double lambda, std::span<const LambdaCampaign> campaigns) {
  double total = 0.0;
  for (const auto& c : campaigns) {
    if (c.weight <= 0.0) continue;
    const double l = c.market.scale();
    const bool long_tail = c.market.family() == MarketFamily::LongTail;
    const double k = family == SamFamily::Sam2 ? c.payoff * l / (1.0 + lambda) : c.payoff / (2.0 * (1.0 + lambda));
    double s = 0.0;
    for (double theta : c.cvr_samples) {
      const double b = family == SamFamily::Sam2 ? std::sqrt(k * theta + l * l) - l : k * theta;
      s += b * (long_tail ? b / (b + l) : std::min(b / l, 1.0));
    }
    total += c.weight * s / static_cast<double>(c.cvr_samples.size());
  }
  return total;
}

bool spend_is_monotone(SamFamily family, std::span<const LambdaCampaign> campaigns) {
  double prev = std::numeric_limits<double>::infinity();
  for (int k = -20; k <= 20; k += 3) {
    const double lambda = std::exp(0.7 * k) - 1.0;
    if (lambda <= kLambdaMin) continue;
    const double s = spend_at(family, lambda, campaigns);
    if (s > prev * (1.0 + 1e-12)) return false;
    prev = s;
  }
  return true;
}

LambdaSolveResult bisect(SamFamily family, std::span<const LambdaCampaign> campaigns, double target, double tol) {
  // Spend is non-increasing in lambda; bisect in log(1 + lambda).
  double lo = std::log1p(kLambdaMin);
  double hi = std::log(2.0);
  int guard = 0;
  while (spend_at(family, std::expm1(hi), campaigns) > target && guard++ < 60) hi += std::log(4.0);

  LambdaSolveResult res;
  res.method = SolveMethod::Bisection;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = spend_at(family, std::expm1(mid), campaigns);
    res.iterations = it + 1;
    if (s > target)
      lo = mid;
    else
      hi = mid;
    if (std::abs(s - target) <= 1e-13 * target) {
      lo = hi = mid;
      break;
    }
  }
  const double r_lo = spend_at(family, std::expm1(lo), campaigns) - target;
  const double r_hi = lo == hi ? r_lo : spend_at(family, std::expm1(hi), campaigns) - target;
  const bool take_lo = std::abs(r_lo) < std::abs(r_hi);
  res.lambda = std::expm1(take_lo ? lo : hi);
  res.residual = take_lo ? r_lo : r_hi;
  res.converged = std::abs(res.residual) <= tol;
  return res;
}

LambdaSolveResult gradient_descent(SamFamily family, std::span<const LambdaCampaign> campaigns, double target,
                                   double tol, const LambdaSolveConfig& cfg) {
  LambdaSolveResult res;
  res.method = SolveMethod::GradientDescent;
  double lambda = std::max(cfg.initial_lambda, kLambdaMin);
  SpendEval cur = eval_spend(family, lambda, campaigns);
  const double slope0 = cur.slope != 0.0 ? cur.slope : -target;
  double eta = cfg.learning_rate / (slope0 * slope0);

  double best_lambda = lambda;
  double best_residual = cur.spend - target;

  if (cfg.batch == BatchMode::Full) {
    for (int it = 0; it < cfg.max_iterations; ++it) {
      res.iterations = it + 1;
      const double residual = cur.spend - target;
      if (std::abs(residual) <= tol) break;
      const double candidate = std::max(lambda - eta * residual * cur.slope, kLambdaMin);
      const SpendEval next = eval_spend(family, candidate, campaigns);
      if (std::abs(next.spend - target) < std::abs(residual)) {
        lambda = candidate;
        cur = next;
        eta *= 1.2;
      } else {
        eta *= 0.5;
      }
    }
    best_lambda = lambda;
    best_residual = cur.spend - target;
  } else {
    Rng rng(cfg.seed);
    const std::size_t batch = cfg.batch == BatchMode::Stochastic ? 1 : std::max<std::size_t>(cfg.batch_size, 1);
    std::vector<std::vector<std::size_t>> subset(campaigns.size());
    double avg = 0.0;
    std::size_t averaged = 0;
    for (int it = 0; it < cfg.max_iterations; ++it) {
      res.iterations = it + 1;
      for (std::size_t i = 0; i < campaigns.size(); ++i) {
        subset[i].resize(batch);
        const auto n = campaigns[i].cvr_samples.size();
        for (auto& k : subset[i]) k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
      }
      const SpendEval g = eval_spend(family, lambda, campaigns, &subset);
      lambda = std::max(lambda - eta * (g.spend - target) * g.slope, kLambdaMin);
      ++averaged;
      avg += (lambda - avg) / static_cast<double>(averaged);
      if ((it + 1) % 50 == 0) {
        // Full-batch check of the window average adapts the step size.
        const double r = eval_spend(family, avg, campaigns).spend - target;
        if (std::abs(r) < std::abs(best_residual)) {
          best_residual = r;
          best_lambda = avg;
          eta *= 1.5;
        } else {
          eta *= 0.5;
        }
        if (std::abs(best_residual) <= tol) break;
        lambda = best_lambda;
        avg = 0.0;
        averaged = 0;
      }
    }
  }
  res.lambda = best_lambda;
  res.residual = best_residual;
  res.converged = std::abs(best_residual) <= tol;
  return res;
}

}  // namespace

double expected_spend_per_request(SamFamily family, double lambda, std::span<const LambdaCampaign> campaigns) {
  return eval_spend(family, lambda, campaigns).spend;
}

LambdaSolveResult solve_lambda_numeric(SamFamily family, std::span<const LambdaCampaign> campaigns, double budget,
                                       double volume, const LambdaSolveConfig& cfg) {
  if (!(budget > 0.0) || !(volume > 0.0)) fail(ErrorCode::Domain, "budget and volume must be positive");
  if (campaigns.empty()) fail(ErrorCode::InvalidArgument, "lambda solve needs at least one campaign");
  if (cfg.max_iterations < 1 || !(cfg.learning_rate > 0.0))
    fail(ErrorCode::InvalidArgument, "invalid lambda solver configuration");
  double weight_sum = 0.0;
  for (const auto& c : campaigns) {
    if (c.weight < 0.0) fail(ErrorCode::Domain, "selection weights must be nonnegative");
    if (c.weight > 0.0 && c.cvr_samples.empty())
      fail(ErrorCode::InvalidArgument, "campaign with positive weight has no CVR samples");
    weight_sum += c.weight;
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) fail(ErrorCode::Domain, "selection weights must sum to 1");

  const double target = budget / volume;
  const double tol = cfg.tolerance > 0.0 ? cfg.tolerance : 1e-4 * target;

  const double max_spend = spend_at(family, kLambdaMin, campaigns);
  if (max_spend < target) {
    LambdaSolveResult res;
    res.lambda = kLambdaMin;
    res.under_spend = true;
    res.residual = max_spend - target;
    res.converged = std::abs(res.residual) <= tol;
    res.method = cfg.method == SolveMethod::GradientDescent ? SolveMethod::GradientDescent : SolveMethod::Bisection;
    return res;
  }

  switch (cfg.method) {
    case SolveMethod::Bisection:
      return bisect(family, campaigns, target, tol);
    case SolveMethod::GradientDescent:
      return gradient_descent(family, campaigns, target, tol, cfg);
    case SolveMethod::Auto:
      break;
  }
  if (spend_is_monotone(family, campaigns)) return bisect(family, campaigns, target, tol);
  return gradient_descent(family, campaigns, target, tol, cfg);
}

}  // namespace samkit
