#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "samkit/error.hpp"
#include "samkit/portfolio.hpp"

using namespace samkit;

namespace {

CampaignSpec campaign_with(const std::vector<double>& thetas, double payoff) {
  CampaignSpec c;
  c.id = "c";
  c.payoff = payoff;
  c.cvr_samples = thetas;
  for (std::size_t i = 0; i < thetas.size(); ++i) c.training.push_back({static_cast<std::int64_t>(i), thetas[i], 1.0, false, {}});
  return c;
}

Eigen::MatrixXd beta_of(std::size_t m, double rho) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m), rho);
  b.diagonal().setOnes();
  return b;
}

}  // namespace

TEST_CASE("margin of identical records with a fixed bid is exact") {
  const auto c = campaign_with(std::vector<double>(20, 0.1), 10.0);
  const WinningFunction w(MarketFamily::UniformMarket, 0.5);
  const auto est = estimate_margin_mc(c, BidFunction::constant(0.5), w, 100, 50, 1);
  CHECK(est.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(est.stddev < 1e-12);
}

TEST_CASE("zero bids give an undefined margin") {
  const auto c = campaign_with({0.1, 0.2, 0.3}, 10.0);
  const WinningFunction w(MarketFamily::LongTail, 5.0);
  CHECK_THROWS_AS(estimate_margin_mc(c, BidFunction::constant(0.0), w, 10, 20, 1), Error);
}

TEST_CASE("two-record margin matches enumeration over ordered pairs") {
  const std::vector<double> t{0.05, 0.3};
  const double r = 20.0;
  const auto c = campaign_with(t, r);
  const WinningFunction w(MarketFamily::LongTail, 2.0);
  std::vector<double> gam;
  const auto g = BidFunction::sam1(0.0);
  for (double a : t)
    for (double b : t) {
      const double ba = g(a, r);
      const double bb = g(b, r);
      const double R = (a * r - ba) * w(ba) + (b * r - bb) * w(bb);
      const double C = ba * w(ba) + bb * w(bb);
      gam.push_back(R / C);
    }
  double mu = 0.0;
  for (double x : gam) mu += x;
  mu /= 4.0;
  double var = 0.0;
  for (double x : gam) var += (x - mu) * (x - mu);
  var /= 4.0;
  const auto est = estimate_margin_mc(c, g, w, 2, 4, 9);
  CHECK(est.exact);
  CHECK(std::abs(est.mean - mu) < 1e-12);
  CHECK(std::abs(est.stddev - std::sqrt(var)) < 1e-12);
}

TEST_CASE("margin estimation is reproducible") {
  std::vector<double> t;
  for (int i = 0; i < 200; ++i) t.push_back(0.001 * (i % 37) + 0.01);
  const auto c = campaign_with(t, 50.0);
  const WinningFunction w(MarketFamily::LongTail, 3.0);
  const auto a = estimate_margin_mc(c, BidFunction::sam2(0.0, 3.0), w, 500, 30, 7);
  const auto b = estimate_margin_mc(c, BidFunction::sam2(0.0, 3.0), w, 500, 30, 7);
  CHECK(a.mean == b.mean);
  CHECK(a.stddev == b.stddev);
  CHECK_FALSE(a.exact);
  CHECK(a.n_samples == 30);
}

TEST_CASE("margin correlation examples") {
  const std::vector<double> a{1.0, 3.0, 2.0, 5.0};
  std::vector<double> neg;
  for (double x : a) neg.push_back(7.0 - x);
  CHECK(margin_correlation(a, a) == doctest::Approx(1.0));
  CHECK(margin_correlation(a, neg) == doctest::Approx(-1.0));
  CHECK(margin_correlation(a, std::vector<double>(4, 2.0)) == 0.0);
  CHECK_THROWS_AS(margin_correlation(a, std::vector<double>{1.0, 2.0, 3.0}), Error);
  CHECK_THROWS_AS(margin_correlation(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}), Error);
}

TEST_CASE("portfolio stats examples") {
  const PortfolioModel m({0.2, 0.1}, {0.3, 0.1}, beta_of(2, 0.0));
  const auto s = portfolio_stats(m, SelectionVector({0.6, 0.4}));
  CHECK(s.mean == doctest::Approx(0.16));
  CHECK(s.variance == doctest::Approx(0.0340));
  const auto one = portfolio_stats(m, SelectionVector::one_hot(2, 0));
  CHECK(one.mean == doctest::Approx(0.2));
  CHECK(one.variance == doctest::Approx(0.09));
  const PortfolioModel hedge({0.1, 0.1}, {0.4, 0.4}, beta_of(2, -1.0));
  CHECK(std::abs(portfolio_stats(hedge, SelectionVector::uniform(2)).variance) < 1e-15);
  CHECK_THROWS_AS(portfolio_stats(m, SelectionVector::uniform(3)), Error);
}

TEST_CASE("selection vector validation") {
  CHECK_THROWS_AS(SelectionVector({0.5, 0.6}), Error);
  CHECK_THROWS_AS(SelectionVector({-0.1, 1.1}), Error);
  CHECK_NOTHROW(SelectionVector({0.25, 0.75}));
}

TEST_CASE("covariance repair yields a PSD matrix") {
  Eigen::MatrixXd beta(3, 3);
  beta << 1, 0.9, -0.9, 0.9, 1, 0.9, -0.9, 0.9, 1;
  const PortfolioModel m({0.1, 0.2, 0.3}, {0.5, 0.4, 0.3}, beta);
  CHECK(m.repaired());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.covariance());
  CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  CHECK((m.covariance() - m.covariance().transpose()).norm() < 1e-15);
}

TEST_CASE("optimize selection examples") {
  {
    const PortfolioModel m({0.5, 0.1}, {0.9, 0.1}, beta_of(2, 0.3));
    const auto v = optimize_selection(m, 0.0);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == 0.0);
  }
  {
    const PortfolioModel m({0.3, 0.3}, {0.2, 0.2}, beta_of(2, 0.0));
    const auto v = optimize_selection(m, 2.0);
    CHECK(v[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(v[1] == doctest::Approx(0.5).epsilon(1e-9));
  }
  {
    const PortfolioModel m({0.2, 0.1}, {0.3, 0.1}, beta_of(2, 0.0));
    const auto v = optimize_selection(m, 1.0);
    CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(v[1] == doctest::Approx(0.4).epsilon(1e-9));
    double best = -INFINITY;
    double best_v = 0.0;
    for (int k = 0; k <= 10000; ++k) {
      const double x = k * 1e-4;
      const double obj = selection_objective(m, SelectionVector({x, 1.0 - x}), 1.0);
      if (obj > best) {
        best = obj;
        best_v = x;
      }
    }
    CHECK(std::abs(best_v - v[0]) <= 1e-4);
    CHECK(selection_kkt_residual(m, v, 1.0) <= 1e-8);
  }
}

TEST_CASE("alpha zero ties break on sigma then index") {
  const PortfolioModel a({0.4, 0.4, 0.1}, {0.3, 0.2, 0.1}, beta_of(3, 0.0));
  CHECK(optimize_selection(a, 0.0)[1] == 1.0);
  const PortfolioModel b({0.4, 0.4}, {0.2, 0.2}, beta_of(2, 0.0));
  CHECK(optimize_selection(b, 0.0)[0] == 1.0);
}

TEST_CASE("optimized selection dominates vertices and uniform, and satisfies KKT") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> um(-0.5, 1.5);
  std::uniform_real_distribution<double> us(0.01, 1.0);
  std::uniform_real_distribution<double> ub(-1.0, 1.0);
  for (int k = 0; k < 60; ++k) {
    const std::size_t m = 2 + k % 4;
    std::vector<double> mu;
    std::vector<double> sigma;
    for (std::size_t i = 0; i < m; ++i) {
      mu.push_back(um(rng));
      sigma.push_back(us(rng));
    }
    Eigen::MatrixXd beta = beta_of(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) beta(i, j) = beta(j, i) = ub(rng);
    const PortfolioModel model(mu, sigma, beta);
    const double alpha = 0.1 + 0.5 * k;
    const auto v = optimize_selection(model, alpha);
    double sum = 0.0;
    for (double x : v.values()) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
    const double obj = selection_objective(model, v, alpha);
    for (std::size_t i = 0; i < m; ++i) CHECK(obj >= selection_objective(model, SelectionVector::one_hot(m, i), alpha) - 1e-12);
    CHECK(obj >= selection_objective(model, SelectionVector::uniform(m), alpha) - 1e-12);
    CHECK(selection_kkt_residual(model, v, alpha) <= 1e-8);
  }
}

TEST_CASE("portfolio risk is non-increasing in alpha") {
  const PortfolioModel m({0.5, 0.3, 0.2, 0.1}, {0.8, 0.4, 0.2, 0.05}, beta_of(4, 0.2));
  double prev = INFINITY;
  for (double alpha : {0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0}) {
    const double var = portfolio_stats(m, optimize_selection(m, alpha)).variance;
    CHECK(var <= prev + 1e-12);
    prev = var;
  }
}

TEST_CASE("simplex projection") {
  const std::vector<double> y{0.2, 0.9, -0.4};
  const auto p = project_to_simplex(y);
  double s = 0.0;
  for (double x : p) {
    CHECK(x >= 0.0);
    s += x;
  }
  CHECK(s == doctest::Approx(1.0));
  const std::vector<double> inside{0.2, 0.3, 0.5};
  const auto q = project_to_simplex(inside);
  for (std::size_t i = 0; i < 3; ++i) CHECK(q[i] == doctest::Approx(inside[i]));
}
