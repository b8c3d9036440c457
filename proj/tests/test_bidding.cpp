#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "samkit/bidding.hpp"
#include "samkit/error.hpp"

using namespace samkit;

namespace {

double lagrangian(double theta, double r, double lambda, double b, const WinningFunction& w) {
  return (theta * r - (1.0 + lambda) * b) * w(b);
}

}  // namespace

TEST_CASE("bid examples") {
  CHECK(BidFunction::sam2(0.0, 50.0)(0.01, 300.0) == doctest::Approx(std::sqrt(150.0 + 2500.0) - 50.0));
  CHECK(BidFunction::sam2(0.0, 50.0)(0.01, 300.0) == doctest::Approx(1.4782).epsilon(1e-4));
  CHECK(BidFunction::sam1(0.0)(0.01, 300.0) == doctest::Approx(1.5));
  CHECK(BidFunction::truth()(0.02, 100.0) == doctest::Approx(2.0));
  CHECK(BidFunction::sam1(3.0)(0.0, 300.0) == 0.0);
  CHECK(BidFunction::sam2(3.0, 20.0)(0.0, 300.0) == 0.0);
  CHECK(BidFunction::lin(2.0, 0.1)(0.0, 10.0) == 0.0);
  CHECK(BidFunction::ortb(5.0, 1e-3)(0.0, 10.0) == 0.0);
  CHECK(BidFunction::truth()(0.0, 10.0) == 0.0);
  CHECK(BidFunction::lin(2.0, 0.1)(0.05, 10.0) == doctest::Approx(1.0));
  CHECK(BidFunction::ortb(5.0, 0.01)(0.2, 10.0) == doctest::Approx(std::sqrt(5.0 * 0.2 / 0.01 + 25.0) - 5.0));
  CHECK(BidFunction::constant(1.25)(0.3, 10.0) == 1.25);
}

TEST_CASE("sam closed forms agree with grid search of the Lagrangian") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ut(0.001, 1.0);
  std::uniform_real_distribution<double> ur(1.0, 1000.0);
  std::uniform_real_distribution<double> ul(0.0, 5.0);
  std::uniform_real_distribution<double> us(1.0, 500.0);
  for (int k = 0; k < 50; ++k) {
    const double theta = ut(rng);
    const double r = ur(rng);
    const double lambda = ul(rng);
    const double l = us(rng);
    {
      const WinningFunction w(MarketFamily::UniformMarket, l);
      const double b_star = BidFunction::sam1(lambda)(theta, r);
      const double b_grid =
          oracle::grid_argmax([&](double b) { return lagrangian(theta, r, lambda, b, w); }, 0.0, l);
      // Interior optimum only when r theta / (2(1+lambda)) <= l.
      if (b_star <= l) CHECK(std::abs(b_star - b_grid) <= 1e-4 * b_star);
    }
    {
      const WinningFunction w(MarketFamily::LongTail, l);
      const double b_star = BidFunction::sam2(lambda, l)(theta, r);
      const double b_grid =
          oracle::grid_argmax([&](double b) { return lagrangian(theta, r, lambda, b, w); }, 0.0, theta * r);
      CHECK(std::abs(b_star - b_grid) <= 1e-4 * b_star);
    }
  }
}

TEST_CASE("sam1 closed-form lambda") {
  const double lambda = sam1_lambda_closed_form(300.0, 100000.0, 1000.0, 300.0, 0.0545455);
  CHECK(lambda == doctest::Approx(19.23).epsilon(1e-3));
  const double slope = sam1_bid_slope(100000.0, 1000.0, 300.0, 0.0545455);
  CHECK(slope == doctest::Approx(7.416).epsilon(1e-4));
  CHECK(std::abs(300.0 / (2.0 * (1.0 + lambda)) - slope) < 1e-9);
  // (r/2) sqrt(T phi / (B l)) = 1 gives lambda = 0.
  const double phi = 4.0 * 1000.0 * 300.0 / (300.0 * 300.0 * 100000.0);
  CHECK(std::abs(sam1_lambda_closed_form(300.0, 100000.0, 1000.0, 300.0, phi)) < 1e-12);
  const double l2 = sam1_lambda_closed_form(600.0, 100000.0, 1000.0, 300.0, 0.0545455);
  CHECK(1.0 + l2 == doctest::Approx(2.0 * (1.0 + lambda)).epsilon(1e-12));
  CHECK_THROWS_AS(sam1_lambda_closed_form(0.0, 1.0, 1.0, 1.0, 1.0), Error);
  CHECK_THROWS_AS(sam1_lambda_closed_form(1.0, 1.0, -1.0, 1.0, 1.0), Error);
}

TEST_CASE("bid validation") {
  CHECK_THROWS_AS(BidFunction::truth()(1.5, 10.0), Error);
  CHECK_THROWS_AS(BidFunction::truth()(-0.1, 10.0), Error);
  CHECK_THROWS_AS(BidFunction::sam1(-1.0), Error);
  CHECK_THROWS_AS(BidFunction::sam2(0.0, 0.0), Error);
  CHECK_THROWS_AS(BidFunction::constant(-1.0), Error);
  CHECK_THROWS_AS(BidFunction::random(2.0, 1.0, 1), Error);
}

TEST_CASE("random bids are reproducible per call index and stay in range") {
  const auto f = BidFunction::random(1.0, 3.0, 42);
  const auto g = BidFunction::random(1.0, 3.0, 42);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double b = f(0.1, 10.0, i);
    CHECK(b >= 1.0);
    CHECK(b <= 3.0);
    CHECK(b == g(0.5, 99.0, i));
  }
  CHECK(f(0.1, 10.0, 1) != f(0.1, 10.0, 2));
}

TEST_CASE("sam2 spend is monotone in lambda and the bid is concave in theta") {
  const WinningFunction w(MarketFamily::LongTail, 30.0);
  for (double theta = 0.01; theta <= 1.0; theta += 0.07) {
    double prev = INFINITY;
    for (double lambda = -0.9; lambda < 20.0; lambda += 0.25) {
      const double b = BidFunction::sam2(lambda, 30.0)(theta, 100.0);
      const double spend = b * w(b);
      CHECK(spend <= prev);
      prev = spend;
    }
  }
  const auto f = BidFunction::sam2(0.5, 30.0);
  const double h = 0.01;
  for (double theta = h; theta + h <= 1.0; theta += 0.03) {
    const double d2 = f(theta + h, 100.0) - 2.0 * f(theta, 100.0) + f(theta - h, 100.0);
    CHECK(d2 <= 1e-12);
  }
}

TEST_CASE("sam2 at zero lambda never exceeds truth") {
  const auto f = BidFunction::sam2(0.0, 30.0);
  for (double theta = 0.01; theta <= 1.0; theta += 0.01) CHECK(f(theta, 100.0) < theta * 100.0);
  CHECK(f(0.0, 100.0) == 0.0);
}

TEST_CASE("sam dlambda matches finite differences") {
  for (const auto& make : {+[](double lam) { return BidFunction::sam1(lam); },
                           +[](double lam) { return BidFunction::sam2(lam, 25.0); }}) {
    const double lam = 0.7;
    const double h = 1e-6;
    const double fd = (make(lam + h)(0.3, 80.0) - make(lam - h)(0.3, 80.0)) / (2.0 * h);
    CHECK(make(lam).dlambda(0.3, 80.0) == doctest::Approx(fd).epsilon(1e-6));
  }
}

namespace {

std::vector<double> thetas(std::size_t n, double value) { return std::vector<double>(n, value); }

}  // namespace

TEST_CASE("numeric lambda for one campaign with equal thetas matches a bisection oracle") {
  const WinningFunction w(MarketFamily::LongTail, 40.0);
  const auto t = thetas(10, 0.1);
  const double r = 200.0;
  const double budget = 500.0;
  const double volume = 1000.0;
  const std::vector<LambdaCampaign> cs{{r, t, 1.0, w}};
  auto spend = [&](double lam) {
    const double b = std::sqrt(r * 40.0 * 0.1 / (1.0 + lam) + 1600.0) - 40.0;
    return b * b / (b + 40.0) - budget / volume;
  };
  const double oracle_lambda = oracle::bisect(spend, kLambdaMin, 1e6);
  for (auto method : {SolveMethod::Bisection, SolveMethod::GradientDescent, SolveMethod::Auto}) {
    LambdaSolveConfig cfg;
    cfg.method = method;
    cfg.tolerance = 1e-10;
    const auto res = solve_lambda_numeric(SamFamily::Sam2, cs, budget, volume, cfg);
    CHECK(res.converged);
    CHECK(res.lambda == doctest::Approx(oracle_lambda).epsilon(1e-5));
  }
}

TEST_CASE("numeric lambda flags an unreachable budget") {
  const WinningFunction w(MarketFamily::LongTail, 40.0);
  const auto t = thetas(10, 0.1);
  const std::vector<LambdaCampaign> cs{{200.0, t, 1.0, w}};
  const auto res = solve_lambda_numeric(SamFamily::Sam2, cs, 1e9, 10.0);
  CHECK(res.under_spend);
  CHECK(res.lambda == kLambdaMin);
}

TEST_CASE("zero-weight campaigns are inert in the lambda solve") {
  const WinningFunction w1(MarketFamily::LongTail, 40.0);
  const WinningFunction w2(MarketFamily::LongTail, 5.0);
  const std::vector<double> t1{0.05, 0.1, 0.2, 0.3};
  const std::vector<double> t2{0.5, 0.9};
  const std::vector<LambdaCampaign> one{{150.0, t1, 1.0, w1}};
  const std::vector<LambdaCampaign> two{{150.0, t1, 1.0, w1}, {900.0, t2, 0.0, w2}};
  const double a = solve_lambda_numeric(SamFamily::Sam2, one, 300.0, 1000.0).lambda;
  const double b = solve_lambda_numeric(SamFamily::Sam2, two, 300.0, 1000.0).lambda;
  CHECK(a == b);
}

TEST_CASE("gradient descent batch modes reach the budget") {
  const WinningFunction w(MarketFamily::LongTail, 40.0);
  std::vector<double> t;
  for (int i = 1; i <= 400; ++i) t.push_back(0.0025 * i);
  const std::vector<LambdaCampaign> cs{{150.0, t, 1.0, w}};
  const double target = 0.8;
  LambdaSolveConfig bis;
  bis.method = SolveMethod::Bisection;
  bis.tolerance = 1e-12;
  const double ref = solve_lambda_numeric(SamFamily::Sam2, cs, target * 1000.0, 1000.0, bis).lambda;
  for (auto batch : {BatchMode::Full, BatchMode::MiniBatch, BatchMode::Stochastic}) {
    LambdaSolveConfig cfg;
    cfg.method = SolveMethod::GradientDescent;
    cfg.batch = batch;
    cfg.batch_size = 64;
    cfg.seed = 3;
    const auto res = solve_lambda_numeric(SamFamily::Sam2, cs, target * 1000.0, 1000.0, cfg);
    CHECK(res.lambda == doctest::Approx(ref).epsilon(batch == BatchMode::Full ? 1e-4 : 5e-2));
  }
}

TEST_CASE("numeric lambda validates the selection weights") {
  const WinningFunction w(MarketFamily::LongTail, 40.0);
  const auto t = thetas(4, 0.1);
  const std::vector<LambdaCampaign> cs{{200.0, t, 0.4, w}};
  CHECK_THROWS_AS(solve_lambda_numeric(SamFamily::Sam2, cs, 10.0, 10.0), Error);
}
