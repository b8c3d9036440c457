#pragma once

// Campaign margin estimation and risk-averse campaign selection.
//
// The margin gamma_i = R_i / C_i of a campaign is estimated by resampling its
// training requests; campaigns are then combined as a mean-variance portfolio
// over the probability simplex:
//
//   max_v  v'mu - alpha v'Sigma v   s.t.  v >= 0, sum(v) = 1.

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "samkit/bidding.hpp"
#include "samkit/campaign.hpp"

namespace samkit {

struct MarginEstimate {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t n_samples = 0;
  // True when every T-sequence of requests was enumerated instead of sampled.
  bool exact = false;
};

/// Monte Carlo estimate of a campaign's net profit margin under bid function f.
/// Each repetition draws `volume` requests with replacement and records
/// gamma = sum (theta r - b) w(b) / sum b w(b). When the number of ordered
/// request sequences n^T does not exceed `repetitions`, all sequences are
/// enumerated and the exact mean and population deviation are returned.
MarginEstimate estimate_margin_mc(const CampaignSpec& campaign, const BidFunction& f, const WinningFunction& w,
                                  std::size_t volume, std::size_t repetitions, std::uint64_t seed);

/// Pearson correlation clamped to [-1, 1]; 0 when either series is constant.
double margin_correlation(std::span<const double> series_i, std::span<const double> series_j);

class SelectionVector {
 public:
  explicit SelectionVector(std::vector<double> v);
  static SelectionVector uniform(std::size_t m);
  static SelectionVector one_hot(std::size_t m, std::size_t i);

  std::size_t size() const noexcept { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }
  const std::vector<double>& values() const noexcept { return v_; }

 private:
  std::vector<double> v_;
};

class PortfolioModel {
 public:
  /// Sigma_ij = beta_ij sigma_i sigma_j, repaired to the nearest PSD matrix when needed.
  PortfolioModel(std::vector<double> mu, std::vector<double> sigma, const Eigen::MatrixXd& beta);
  static PortfolioModel independent(std::vector<double> mu, std::vector<double> sigma);

  std::size_t size() const noexcept { return mu_.size(); }
  const std::vector<double>& mu() const noexcept { return mu_; }
  const std::vector<double>& sigma() const noexcept { return sigma_; }
  const Eigen::MatrixXd& covariance() const noexcept { return cov_; }
  bool repaired() const noexcept { return repaired_; }

 private:
  std::vector<double> mu_;
  std::vector<double> sigma_;
  Eigen::MatrixXd cov_;
  bool repaired_ = false;
};

struct PortfolioStats {
  double mean;
  double variance;
};

PortfolioStats portfolio_stats(const PortfolioModel& m, const SelectionVector& v);

double selection_objective(const PortfolioModel& m, const SelectionVector& v, double alpha);

/// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::span<const double> y);

/// Maximizes v'mu - alpha v'Sigma v over the simplex. alpha = 0 returns the
/// argmax-mu vertex (ties: lowest sigma, then lowest index).
SelectionVector optimize_selection(const PortfolioModel& m, double alpha);

/// Norm of v - Proj(v + grad); zero exactly at a constrained optimum.
double selection_kkt_residual(const PortfolioModel& m, const SelectionVector& v, double alpha);

}  // namespace samkit
