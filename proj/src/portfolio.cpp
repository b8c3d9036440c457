#include "samkit/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "samkit/error.hpp"
#include "samkit/rng.hpp"

namespace samkit {

namespace {

struct Moments {
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  void push(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
};

// n^t, or 0 when it exceeds `cap`.
std::size_t bounded_power(std::size_t n, std::size_t t, std::size_t cap) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < t; ++i) {
    if (n != 0 && out > cap / n) return 0;
    out *= n;
  }
  return out <= cap ? out : 0;
}

}  // namespace

MarginEstimate estimate_margin_mc(const CampaignSpec& campaign, const BidFunction& f, const WinningFunction& w,
                                  std::size_t volume, std::size_t repetitions, std::uint64_t seed) {
  const auto& thetas = campaign.cvr_samples;
  if (thetas.empty()) fail(ErrorCode::InvalidArgument, "campaign " + campaign.id + " has no training data");
  if (repetitions < 2) fail(ErrorCode::InvalidArgument, "margin estimation needs at least 2 repetitions");
  if (volume < 1) fail(ErrorCode::InvalidArgument, "margin estimation needs volume >= 1");

  const std::size_t n = thetas.size();
  std::vector<double> profit(n);
  std::vector<double> cost(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double b = f(thetas[k], campaign.payoff, k);
    const double win = w(b);
    profit[k] = (thetas[k] * campaign.payoff - b) * win;
    cost[k] = b * win;
  }

  Moments acc;
  MarginEstimate est;
  const std::size_t sequences = bounded_power(n, volume, repetitions);
  if (sequences != 0) {
    std::vector<std::size_t> idx(volume, 0);
    for (std::size_t s = 0; s < sequences; ++s) {
      double r = 0.0;
      double c = 0.0;
      for (std::size_t k : idx) {
        r += profit[k];
        c += cost[k];
      }
      if (c > 0.0) acc.push(r / c);
      for (std::size_t pos = 0; pos < volume; ++pos) {
        if (++idx[pos] < n) break;
        idx[pos] = 0;
      }
    }
    est.exact = true;
  } else {
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
      Rng rng(derive_seed(seed, rep));
      double r = 0.0;
      double c = 0.0;
      for (std::size_t t = 0; t < volume; ++t) {
        const auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
        r += profit[k];
        c += cost[k];
      }
      if (c > 0.0) acc.push(r / c);
    }
  }
  if (acc.n < 2) fail(ErrorCode::Numeric, "undefined margin for campaign " + campaign.id + ": no spend");
  est.mean = acc.mean;
  const double denom = est.exact ? static_cast<double>(acc.n) : static_cast<double>(acc.n - 1);
  est.stddev = std::sqrt(std::max(acc.m2 / denom, 0.0));
  est.n_samples = acc.n;
  return est;
}

double margin_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::InvalidArgument, "margin series lengths differ");
  if (a.size() < 3) fail(ErrorCode::InvalidArgument, "margin correlation needs at least 3 points");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

SelectionVector::SelectionVector(std::vector<double> v) : v_(std::move(v)) {
  if (v_.empty()) fail(ErrorCode::InvalidArgument, "selection vector is empty");
  double total = 0.0;
  for (double x : v_) {
    if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::Domain, "selection probabilities must lie in [0, 1]");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::Domain, "selection probabilities must sum to 1");
}

SelectionVector SelectionVector::uniform(std::size_t m) {
  if (m == 0) fail(ErrorCode::InvalidArgument, "selection vector is empty");
  return SelectionVector(std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

SelectionVector SelectionVector::one_hot(std::size_t m, std::size_t i) {
  if (i >= m) fail(ErrorCode::InvalidArgument, "one-hot index out of range");
  std::vector<double> v(m, 0.0);
  v[i] = 1.0;
  return SelectionVector(std::move(v));
}

PortfolioModel::PortfolioModel(std::vector<double> mu, std::vector<double> sigma, const Eigen::MatrixXd& beta)
    : mu_(std::move(mu)), sigma_(std::move(sigma)) {
  const auto m = static_cast<Eigen::Index>(mu_.size());
  if (m == 0 || sigma_.size() != mu_.size() || beta.rows() != m || beta.cols() != m)
    fail(ErrorCode::InvalidArgument, "portfolio dimensions disagree");
  for (double s : sigma_)
    if (!(s >= 0.0)) fail(ErrorCode::Domain, "margin deviations must be nonnegative");

  cov_.resize(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double bij = i == j ? 1.0 : 0.5 * (beta(i, j) + beta(j, i));
      if (!(bij >= -1.0 && bij <= 1.0)) fail(ErrorCode::Domain, "correlation factors must lie in [-1, 1]");
      cov_(i, j) = bij * sigma_[i] * sigma_[j];
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_);
  const double floor = -1e-14 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < floor) {
    const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd fixed = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    cov_ = 0.5 * (fixed + fixed.transpose());
    repaired_ = true;
  }
}

PortfolioModel PortfolioModel::independent(std::vector<double> mu, std::vector<double> sigma) {
  const auto m = static_cast<Eigen::Index>(mu.size());
  return PortfolioModel(std::move(mu), std::move(sigma), Eigen::MatrixXd::Identity(m, m));
}

namespace {

Eigen::VectorXd as_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double objective(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov, const Eigen::VectorXd& v, double alpha) {
  return mu.dot(v) - alpha * v.dot(cov * v);
}

std::vector<double> normalized(const Eigen::VectorXd& v) {
  std::vector<double> out(static_cast<std::size_t>(v.size()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out[static_cast<std::size_t>(i)] = std::clamp(v(i), 0.0, 1.0);
    total += out[static_cast<std::size_t>(i)];
  }
  for (double& x : out) x /= total;
  return out;
}

// Solves the equality-constrained problem on `support`; empty result when infeasible.
std::optional<Eigen::VectorXd> solve_on_support(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov,
                                                double alpha, const std::vector<Eigen::Index>& support) {
  const auto k = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
  Eigen::VectorXd rhs(k + 1);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) kkt(a, b) = 2.0 * alpha * cov(support[a], support[b]);
    kkt(a, k) = 1.0;
    kkt(k, a) = 1.0;
    rhs(a) = mu(support[a]);
  }
  rhs(k) = 1.0;
  const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
  if (!((kkt * sol - rhs).norm() <= 1e-9 * std::max(1.0, rhs.norm()))) return std::nullopt;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(mu.size());
  for (Eigen::Index a = 0; a < k; ++a) v(support[a]) = sol(a);
  return v;
}

}  // namespace

PortfolioStats portfolio_stats(const PortfolioModel& m, const SelectionVector& v) {
  if (v.size() != m.size()) fail(ErrorCode::InvalidArgument, "selection and portfolio dimensions disagree");
  const Eigen::VectorXd x = as_eigen(v.values());
  return {as_eigen(m.mu()).dot(x), std::max(x.dot(m.covariance() * x), 0.0)};
}

double selection_objective(const PortfolioModel& m, const SelectionVector& v, double alpha) {
  const auto s = portfolio_stats(m, v);
  return s.mean - alpha * s.variance;
}

std::vector<double> project_to_simplex(std::span<const double> y) {
  std::vector<double> u(y.begin(), y.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) tau = t;
  }
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = std::max(y[i] - tau, 0.0);
  return out;
}

double selection_kkt_residual(const PortfolioModel& m, const SelectionVector& v, double alpha) {
  const Eigen::VectorXd x = as_eigen(v.values());
  const Eigen::VectorXd grad = as_eigen(m.mu()) - 2.0 * alpha * m.covariance() * x;
  const Eigen::VectorXd y = x + grad;
  const std::vector<double> yv(y.data(), y.data() + y.size());
  const Eigen::VectorXd p = as_eigen(project_to_simplex(yv));
  return (x - p).norm();
}

SelectionVector optimize_selection(const PortfolioModel& m, double alpha) {
  if (!(alpha >= 0.0)) fail(ErrorCode::Domain, "risk aversion must be nonnegative");
  const std::size_t n = m.size();
  if (alpha == 0.0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (m.mu()[i] > m.mu()[best] || (m.mu()[i] == m.mu()[best] && m.sigma()[i] < m.sigma()[best])) best = i;
    }
    return SelectionVector::one_hot(n, best);
  }

  const Eigen::VectorXd mu = as_eigen(m.mu());
  const Eigen::MatrixXd& cov = m.covariance();
  const double denom = 2.0 * alpha * cov.norm() + mu.norm();
  if (denom == 0.0) return SelectionVector::uniform(n);
  const double step = 1.0 / denom;

  Eigen::VectorXd v = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
  double obj = objective(mu, cov, v, alpha);
  std::vector<double> y(n);
  for (int it = 0; it < 10000; ++it) {
    const Eigen::VectorXd grad = mu - 2.0 * alpha * cov * v;
    for (std::size_t i = 0; i < n; ++i) y[i] = v(static_cast<Eigen::Index>(i)) + step * grad(static_cast<Eigen::Index>(i));
    v = as_eigen(project_to_simplex(y));
    const double next = objective(mu, cov, v, alpha);
    const bool done = std::abs(next - obj) < 1e-10 * std::max(1.0, std::abs(next)) && it > 10;
    obj = next;
    if (done) break;
  }

  // Active-set polish: solve exactly on the support, then add dual violators / drop negatives.
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v(i) > 1e-9) support.push_back(i);
  Eigen::VectorXd best = v;
  double best_obj = obj;
  for (int round = 0; round < 4 * static_cast<int>(n) + 4 && !support.empty(); ++round) {
    const auto cand = solve_on_support(mu, cov, alpha, support);
    if (!cand) break;
    const Eigen::VectorXd& x = *cand;
    Eigen::Index most_negative = -1;
    for (Eigen::Index i : support)
      if (x(i) < -1e-15 && (most_negative < 0 || x(i) < x(most_negative))) most_negative = i;
    if (most_negative >= 0) {
      support.erase(std::find(support.begin(), support.end(), most_negative));
      continue;
    }
    const Eigen::VectorXd grad = mu - 2.0 * alpha * cov * x;
    const double nu = grad(support.front());
    Eigen::Index violator = -1;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (std::find(support.begin(), support.end(), i) != support.end()) continue;
      if (grad(i) > nu + 1e-13 && (violator < 0 || grad(i) > grad(violator))) violator = i;
    }
    const Eigen::VectorXd clipped = as_eigen(normalized(x));
    const double x_obj = objective(mu, cov, clipped, alpha);
    if (x_obj >= best_obj - 1e-15) {
      best = clipped;
      best_obj = x_obj;
    }
    if (violator < 0) break;
    support.push_back(violator);
    std::sort(support.begin(), support.end());
  }
  return SelectionVector(normalized(best));
}

}  // namespace samkit
