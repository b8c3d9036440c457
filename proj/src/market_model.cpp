#include "samkit/market_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "samkit/error.hpp"

namespace samkit {

const char* to_string(MarketFamily family) {
  return family == MarketFamily::LongTail ? "long_tail" : "uniform";
}

MarketFamily market_family_from_string(const std::string& name) {
  if (name == "long_tail" || name == "longtail") return MarketFamily::LongTail;
  if (name == "uniform") return MarketFamily::UniformMarket;
  fail(ErrorCode::InvalidArgument, "unknown market family '" + name + "'");
}

WinningFunction::WinningFunction(MarketFamily family, double scale) : family_(family), scale_(scale) {
  if (!(scale > 0.0) || !std::isfinite(scale))
    fail(ErrorCode::Domain, "market scale l must be positive and finite");
}

double WinningFunction::operator()(double bid) const {
  if (!(bid >= 0.0)) fail(ErrorCode::Domain, "bid must be nonnegative");
  if (family_ == MarketFamily::UniformMarket) return std::min(bid / scale_, 1.0);
  if (std::isinf(bid)) return 1.0;
  return bid / (bid + scale_);
}

double WinningFunction::derivative(double bid) const {
  if (!(bid >= 0.0)) fail(ErrorCode::Domain, "bid must be nonnegative");
  if (family_ == MarketFamily::UniformMarket) return bid < scale_ ? 1.0 / scale_ : 0.0;
  const double d = bid + scale_;
  return scale_ / (d * d);
}

double win_prob(const WinningFunction& w, double bid) { return w(bid); }

double MarketPricePdf::density(double price) const {
  if (price < 0.0) return 0.0;
  if (family_ == MarketFamily::UniformMarket) return price <= scale_ ? 1.0 / scale_ : 0.0;
  const double d = price + scale_;
  return scale_ / (d * d);
}

double MarketPricePdf::cdf(double price) const {
  if (price <= 0.0) return 0.0;
  return WinningFunction(family_, scale_)(price);
}

double MarketPricePdf::quantile(double u) const {
  if (!(u >= 0.0 && u < 1.0)) fail(ErrorCode::Domain, "quantile argument must be in [0, 1)");
  if (family_ == MarketFamily::UniformMarket) return scale_ * u;
  return scale_ * u / (1.0 - u);
}

CvrDistribution CvrDistribution::beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) fail(ErrorCode::Domain, "Beta parameters must be positive");
  return CvrDistribution(BetaCvr{a, b});
}

CvrDistribution CvrDistribution::histogram(std::vector<double> edges, std::vector<double> masses) {
  if (masses.empty() || edges.size() != masses.size() + 1)
    fail(ErrorCode::InvalidArgument, "histogram needs bins+1 edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!(edges[i] >= 0.0 && edges[i] <= 1.0)) fail(ErrorCode::Domain, "histogram support must lie in [0, 1]");
    if (i > 0 && edges[i] < edges[i - 1]) fail(ErrorCode::InvalidArgument, "histogram edges must be sorted");
  }
  double total = 0.0;
  for (double m : masses) {
    if (!(m >= 0.0)) fail(ErrorCode::Domain, "histogram masses must be nonnegative");
    total += m;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::Domain, "histogram masses must sum to 1");
  return CvrDistribution(CvrHistogram{std::move(edges), std::move(masses)});
}

CvrDistribution CvrDistribution::point_mass(double theta) { return histogram({theta, theta}, {1.0}); }

double CvrDistribution::mean() const {
  if (const auto* beta = std::get_if<BetaCvr>(&kind_)) return beta->a / (beta->a + beta->b);
  const auto& h = std::get<CvrHistogram>(kind_);
  double m = 0.0;
  for (std::size_t i = 0; i < h.masses.size(); ++i) m += h.masses[i] * 0.5 * (h.edges[i] + h.edges[i + 1]);
  return m;
}

double CvrDistribution::sample(Rng& rng) const {
  if (const auto* beta = std::get_if<BetaCvr>(&kind_)) {
    std::gamma_distribution<double> ga(beta->a, 1.0);
    std::gamma_distribution<double> gb(beta->b, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    return x + y > 0.0 ? x / (x + y) : 0.0;
  }
  const auto& h = std::get<CvrHistogram>(kind_);
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t bin = h.masses.size() - 1;
  for (std::size_t i = 0; i < h.masses.size(); ++i) {
    acc += h.masses[i];
    if (u < acc) {
      bin = i;
      break;
    }
  }
  return h.edges[bin] + uniform01(rng) * (h.edges[bin + 1] - h.edges[bin]);
}

double second_moment_phi(const CvrDistribution& p) {
  if (p.is_beta()) {
    const auto [a, b] = p.as_beta();
    const double s = a + b;
    const double m = a / s;
    return a * b / (s * s * (s + 1.0)) + m * m;
  }
  const auto& h = p.as_histogram();
  double phi = 0.0;
  for (std::size_t i = 0; i < h.masses.size(); ++i) {
    const double mid = 0.5 * (h.edges[i] + h.edges[i + 1]);
    phi += h.masses[i] * mid * mid;
  }
  return phi;
}

namespace {

double long_tail_log_likelihood(std::span<const double> prices, double l) {
  double ll = 0.0;
  const double log_l = std::log(l);
  for (double z : prices) ll += log_l - 2.0 * std::log(z + l);
  return ll;
}

}  // namespace

double fit_long_tail_l(std::span<const double> prices) {
  if (prices.empty()) fail(ErrorCode::InvalidArgument, "cannot fit market scale from an empty price list");
  double min_pos = std::numeric_limits<double>::infinity();
  double max_price = 0.0;
  for (double z : prices) {
    if (!(z >= 0.0) || !std::isfinite(z)) fail(ErrorCode::Domain, "prices must be finite and nonnegative");
    if (z > 0.0) min_pos = std::min(min_pos, z);
    max_price = std::max(max_price, z);
  }
  if (max_price == 0.0) fail(ErrorCode::Domain, "cannot fit market scale: all prices are zero");

  // The likelihood is unimodal in l; search in log space.
  constexpr double kInvPhi = 0.6180339887498949;
  double lo = std::log(min_pos / 100.0);
  double hi = std::log(max_price * 100.0);
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = long_tail_log_likelihood(prices, std::exp(x1));
  double f2 = long_tail_log_likelihood(prices, std::exp(x2));
  while (hi - lo > 1e-7) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = long_tail_log_likelihood(prices, std::exp(x2));
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = long_tail_log_likelihood(prices, std::exp(x1));
    }
  }
  return std::exp(0.5 * (lo + hi));
}

double fit_uniform_l(std::span<const double> prices) {
  if (prices.empty()) fail(ErrorCode::InvalidArgument, "cannot fit market scale from an empty price list");
  double sum = 0.0;
  for (double z : prices) {
    if (!(z >= 0.0) || !std::isfinite(z)) fail(ErrorCode::Domain, "prices must be finite and nonnegative");
    sum += z;
  }
  if (sum == 0.0) fail(ErrorCode::Domain, "cannot fit market scale: all prices are zero");
  return 2.0 * sum / static_cast<double>(prices.size());
}

CvrDistribution fit_empirical_cvr(std::span<const BidRecord> records, std::size_t bins) {
  if (records.empty()) fail(ErrorCode::InvalidArgument, "cannot fit a CVR distribution from no records");
  if (bins == 0) fail(ErrorCode::InvalidArgument, "histogram needs at least one bin");
  double hi = 0.0;
  for (const auto& r : records) {
    if (!(r.pcvr >= 0.0 && r.pcvr <= 1.0)) fail(ErrorCode::Domain, "pcvr out of range");
    hi = std::max(hi, r.pcvr);
  }
  if (hi == 0.0) return CvrDistribution::point_mass(0.0);

  std::vector<double> counts(bins, 0.0);
  for (const auto& r : records) {
    auto idx = static_cast<std::size_t>(r.pcvr / hi * static_cast<double>(bins));
    counts[std::min(idx, bins - 1)] += 1.0;
  }
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = hi * static_cast<double>(i) / static_cast<double>(bins);
  edges[bins] = hi;
  const double n = static_cast<double>(records.size());
  for (double& c : counts) c /= n;
  // Renormalize against accumulated rounding so the histogram validates.
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  for (double& c : counts) c /= total;
  return CvrDistribution::histogram(std::move(edges), std::move(counts));
}

}  // namespace samkit
