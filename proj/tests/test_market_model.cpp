#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "samkit/error.hpp"
#include "samkit/market_model.hpp"

using namespace samkit;

TEST_CASE("win probability examples") {
  CHECK(win_prob(WinningFunction(MarketFamily::LongTail, 50.0), 50.0) == doctest::Approx(0.5));
  CHECK(win_prob(WinningFunction(MarketFamily::LongTail, 50.0), 0.0) == 0.0);
  CHECK(win_prob(WinningFunction(MarketFamily::UniformMarket, 300.0), 0.0) == 0.0);
  CHECK(win_prob(WinningFunction(MarketFamily::UniformMarket, 300.0), 75.0) == doctest::Approx(0.25));
  CHECK(win_prob(WinningFunction(MarketFamily::UniformMarket, 300.0), 300.0) == 1.0);
  CHECK(win_prob(WinningFunction(MarketFamily::UniformMarket, 300.0), 900.0) == 1.0);
}

TEST_CASE("win probability rejects bad input") {
  CHECK_THROWS_AS(WinningFunction(MarketFamily::LongTail, 0.0), Error);
  CHECK_THROWS_AS(WinningFunction(MarketFamily::UniformMarket, -1.0), Error);
  const WinningFunction w(MarketFamily::LongTail, 10.0);
  CHECK_THROWS_AS(w(-0.1), Error);
}

TEST_CASE("win probability is monotone and long tail stays below one") {
  for (auto fam : {MarketFamily::UniformMarket, MarketFamily::LongTail}) {
    const WinningFunction w(fam, 20.0);
    double prev = 0.0;
    for (double b = 0.0; b < 200.0; b += 0.37) {
      const double p = w(b);
      CHECK(p >= prev);
      CHECK(p <= 1.0);
      prev = p;
    }
  }
  const WinningFunction lt(MarketFamily::LongTail, 20.0);
  CHECK(lt(1e12) < 1.0);
}

TEST_CASE("long tail win probability equals the integrated price density") {
  const double l = 25.0;
  const MarketPricePdf pdf(MarketFamily::LongTail, l);
  const WinningFunction w(MarketFamily::LongTail, l);
  for (double b : {1.0, 10.0, 100.0, 1000.0}) {
    const double q = oracle::integrate([&](double z) { return pdf.density(z); }, 0.0, b);
    CHECK(std::abs(q - w(b)) < 1e-6);
  }
  // Total mass via the substitution z = l u / (1 - u).
  const double mass = oracle::integrate(
      [&](double u) { return u >= 1.0 ? 0.0 : pdf.density(l * u / (1.0 - u)) * l / ((1.0 - u) * (1.0 - u)); }, 0.0,
      1.0 - 1e-12);
  CHECK(std::abs(mass - 1.0) < 1e-6);
}

TEST_CASE("quantile inverts the cdf") {
  for (auto fam : {MarketFamily::UniformMarket, MarketFamily::LongTail}) {
    const MarketPricePdf pdf(fam, 40.0);
    for (double u : {0.01, 0.25, 0.5, 0.9, 0.999}) CHECK(pdf.cdf(pdf.quantile(u)) == doctest::Approx(u).epsilon(1e-12));
  }
}

namespace {

double neg_log_lik(double l, const std::vector<double>& z) {
  double s = 0.0;
  for (double x : z) s += std::log(l) - 2.0 * std::log(x + l);
  return s;
}

}  // namespace

TEST_CASE("long tail fit on constant prices recovers the price") {
  const std::vector<double> prices{10, 10, 10, 10};
  CHECK(std::abs(fit_long_tail_l(prices) - 10.0) < 1e-4);
  for (double c : {0.3, 7.0, 250.0}) {
    const std::vector<double> z(5, c);
    const double grid = oracle::grid_argmax([&](double l) { return neg_log_lik(l, z); }, c / 100.0, c * 100.0);
    CHECK(fit_long_tail_l(z) == doctest::Approx(grid).epsilon(1e-5));
    CHECK(fit_long_tail_l(z) == doctest::Approx(c).epsilon(1e-5));
  }
}

TEST_CASE("long tail fit matches a likelihood grid search on mixed prices") {
  const std::vector<double> z{0.5, 3.0, 12.0, 40.0, 0.0, 7.5, 110.0};
  const double grid = oracle::grid_argmax([&](double l) { return neg_log_lik(l, z); }, 0.005, 11000.0, 4001, 12);
  CHECK(fit_long_tail_l(z) == doctest::Approx(grid).epsilon(1e-5));
}

TEST_CASE("long tail fit is scale equivariant") {
  const std::vector<double> z{0.5, 3.0, 12.0, 40.0, 7.5, 110.0};
  std::vector<double> z3;
  for (double x : z) z3.push_back(3.0 * x);
  CHECK(fit_long_tail_l(z3) == doctest::Approx(3.0 * fit_long_tail_l(z)).epsilon(1e-6));
}

TEST_CASE("long tail fit errors") {
  CHECK_THROWS_AS(fit_long_tail_l(std::vector<double>{}), Error);
  CHECK_THROWS_AS(fit_long_tail_l(std::vector<double>{0.0, 0.0}), Error);
  CHECK_THROWS_AS(fit_long_tail_l(std::vector<double>{1.0, -2.0}), Error);
}

TEST_CASE("second moment of Beta(2,8)") {
  const double phi = second_moment_phi(CvrDistribution::beta(2.0, 8.0));
  CHECK(std::abs(phi - 0.0545455) < 1e-7);
  const double q = oracle::integrate(
      [](double t) { return t * t * std::pow(t, 1.0) * std::pow(1.0 - t, 7.0) * std::exp(-std::lgamma(2.0) - std::lgamma(8.0) + std::lgamma(10.0)); },
      0.0, 1.0);
  CHECK(std::abs(phi - q) < 1e-7);
}

TEST_CASE("second moment matches quadrature for random Beta parameters") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.5, 20.0);
  for (int k = 0; k < 20; ++k) {
    const double a = u(rng);
    const double b = u(rng);
    const double logc = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
    auto f = [&](double t) {
      if (t <= 0.0 || t >= 1.0) return 0.0;
      return t * t * std::exp(logc + (a - 1.0) * std::log(t) + (b - 1.0) * std::log1p(-t));
    };
    // Split at the mode region; endpoint singularities for a or b < 1 are integrable.
    const double q = oracle::integrate(f, 1e-14, 0.5, 1e-13) + oracle::integrate(f, 0.5, 1.0 - 1e-14, 1e-13);
    CHECK(std::abs(second_moment_phi(CvrDistribution::beta(a, b)) - q) < 1e-7);
  }
}

TEST_CASE("second moment of point masses") {
  CHECK(second_moment_phi(CvrDistribution::point_mass(0.0)) == 0.0);
  CHECK(second_moment_phi(CvrDistribution::point_mass(1.0)) == 1.0);
}

TEST_CASE("cvr distribution validation") {
  CHECK_THROWS_AS(CvrDistribution::beta(0.0, 1.0), Error);
  CHECK_THROWS_AS(CvrDistribution::histogram({0.0, 0.5, 1.0}, {0.5, 0.6}), Error);
  CHECK_THROWS_AS(CvrDistribution::histogram({0.0, 0.5, 1.5}, {0.5, 0.5}), Error);
  CHECK_NOTHROW(CvrDistribution::histogram({0.0, 0.5, 1.0}, {0.5, 0.5}));
}

namespace {

std::vector<BidRecord> records_with(const std::vector<double>& thetas) {
  std::vector<BidRecord> out;
  for (std::size_t i = 0; i < thetas.size(); ++i) out.push_back({static_cast<std::int64_t>(i), thetas[i], 1.0, false, {}});
  return out;
}

}  // namespace

TEST_CASE("empirical cvr histogram examples") {
  {
    const auto d = fit_empirical_cvr(records_with(std::vector<double>(100, 0.1)), 10);
    const auto& h = d.as_histogram();
    double s = 0.0;
    std::size_t nonzero = 0;
    for (double m : h.masses) {
      s += m;
      nonzero += m > 0.0;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(nonzero == 1);
  }
  {
    std::vector<double> t;
    const int n = 1001;
    for (int i = 0; i < n; ++i) t.push_back(static_cast<double>(i) / (n - 1));
    const auto d = fit_empirical_cvr(records_with(t), 2);
    const auto& h = d.as_histogram();
    REQUIRE(h.masses.size() == 2);
    CHECK(std::abs(h.masses[0] - 0.5) <= 1.0 / n);
    CHECK(std::abs(h.masses[1] - 0.5) <= 1.0 / n);
  }
  {
    Rng rng(5);
    const auto beta = CvrDistribution::beta(2.0, 8.0);
    std::vector<double> t;
    for (int i = 0; i < 1000; ++i) t.push_back(beta.sample(rng));
    const double phi = second_moment_phi(fit_empirical_cvr(records_with(t), 50));
    CHECK(std::abs(phi - 0.0545455) / 0.0545455 < 0.05);
  }
  CHECK_THROWS_AS(fit_empirical_cvr(std::vector<BidRecord>{}, 10), Error);
  CHECK_THROWS_AS(fit_empirical_cvr(records_with({0.1}), 0), Error);
}

TEST_CASE("beta sampling has the right mean") {
  Rng rng(11);
  const auto beta = CvrDistribution::beta(2.0, 8.0);
  double s = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) s += beta.sample(rng);
  CHECK(std::abs(s / n - 0.2) < 0.005);
}
