#pragma once

// Market-price and CVR distribution models.
//
// Two market-price families are supported:
//   UniformMarket  z ~ U[0, l],          w(b) = min(b / l, 1)
//   LongTail       p_z(z) = l / (z+l)^2,  w(b) = b / (b + l)
// All prices are per-impression currency units.

#include <span>
#include <variant>
#include <vector>

#include "samkit/records.hpp"
#include "samkit/rng.hpp"

namespace samkit {

enum class MarketFamily { UniformMarket, LongTail };

const char* to_string(MarketFamily family);
MarketFamily market_family_from_string(const std::string& name);

class WinningFunction {
 public:
  WinningFunction(MarketFamily family, double scale);

  MarketFamily family() const noexcept { return family_; }
  double scale() const noexcept { return scale_; }

  /// Win probability at a nonnegative bid; throws Domain on negative bids.
  double operator()(double bid) const;
  /// dw/db. For UniformMarket the derivative is 1/l below l and 0 above.
  double derivative(double bid) const;

 private:
  MarketFamily family_;
  double scale_;
};

double win_prob(const WinningFunction& w, double bid);

class MarketPricePdf {
 public:
  explicit MarketPricePdf(const WinningFunction& w) : family_(w.family()), scale_(w.scale()) {}
  MarketPricePdf(MarketFamily family, double scale) : MarketPricePdf(WinningFunction(family, scale)) {}

  double density(double price) const;
  double cdf(double price) const;
  /// Inverse-CDF draw from a uniform in [0, 1).
  double quantile(double u) const;

 private:
  MarketFamily family_;
  double scale_;
};

struct BetaCvr {
  double a;
  double b;
};

struct CvrHistogram {
  std::vector<double> edges;   // size bins + 1, non-decreasing, within [0, 1]
  std::vector<double> masses;  // size bins, sums to 1
};

class CvrDistribution {
 public:
  static CvrDistribution beta(double a, double b);
  static CvrDistribution histogram(std::vector<double> edges, std::vector<double> masses);
  static CvrDistribution point_mass(double theta);

  bool is_beta() const noexcept { return std::holds_alternative<BetaCvr>(kind_); }
  const BetaCvr& as_beta() const { return std::get<BetaCvr>(kind_); }
  const CvrHistogram& as_histogram() const { return std::get<CvrHistogram>(kind_); }

  double mean() const;
  double sample(Rng& rng) const;

 private:
  explicit CvrDistribution(std::variant<BetaCvr, CvrHistogram> kind) : kind_(std::move(kind)) {}
  std::variant<BetaCvr, CvrHistogram> kind_;
};

/// E[theta^2]. Analytic for Beta, midpoint rule for histograms.
double second_moment_phi(const CvrDistribution& p);

/// Maximum-likelihood l for p_z(z) = l/(z+l)^2 by golden-section search.
double fit_long_tail_l(std::span<const double> prices);

/// Method-of-moments upper bound for a uniform market: l = 2 * mean price.
double fit_uniform_l(std::span<const double> prices);

/// Equal-width histogram of logged pCVR over [0, max observed].
CvrDistribution fit_empirical_cvr(std::span<const BidRecord> records, std::size_t bins = 100);

}  // namespace samkit
