#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>

#include "samkit/market_model.hpp"

namespace samkit {

// Smallest admissible lambda for the SAM closed forms, which divide by (1 + lambda).
constexpr double kLambdaMin = -1.0 + 1e-6;

struct ConstBid {
  double price;
};
struct RandBid {
  double lo;
  double hi;
  std::uint64_t seed;
};
struct TruthBid {};
struct LinBid {
  double base_bid;
  double avg_cvr;
};
struct OrtbBid {
  double c;
  double lambda;
};
struct Sam1Bid {
  double lambda;
};
struct Sam2Bid {
  double lambda;
  double scale;
};

using BidFamily = std::variant<ConstBid, RandBid, TruthBid, LinBid, OrtbBid, Sam1Bid, Sam2Bid>;

// A bid-price function b(theta, r). Evaluation is pure; Rand draws from a hash of (seed, call index).
class BidFunction {
 public:
  static BidFunction constant(double price);
  static BidFunction random(double lo, double hi, std::uint64_t seed);
  static BidFunction truth();
  static BidFunction lin(double base_bid, double avg_cvr);
  static BidFunction ortb(double c, double lambda);
  static BidFunction sam1(double lambda);
  static BidFunction sam2(double lambda, double scale);

  const BidFamily& family() const noexcept { return family_; }
  std::string name() const;
  bool is_sam() const noexcept {
    return std::holds_alternative<Sam1Bid>(family_) || std::holds_alternative<Sam2Bid>(family_);
  }
  /// Lambda of a SAM family; throws for other families.
  double lambda() const;

  double operator()(double theta, double payoff, std::uint64_t call_index = 0) const;
  /// d b / d lambda for SAM families at fixed (theta, r).
  double dlambda(double theta, double payoff) const;

 private:
  explicit BidFunction(BidFamily family) : family_(family) {}
  BidFamily family_;
};

double bid(const BidFunction& f, double theta, double payoff, std::uint64_t call_index = 0);

/// Closed-form lambda for sam1 on a uniform market: (r/2) sqrt(T phi / (B l)) - 1.
double sam1_lambda_closed_form(double payoff, double volume, double budget, double scale, double phi);

/// Slope of the budget-exhausting sam1 bid, sqrt(B l / (T phi)); independent of r.
double sam1_bid_slope(double volume, double budget, double scale, double phi);

enum class SamFamily { Sam1, Sam2 };

const char* to_string(SamFamily family);

BidFunction make_sam_bid(SamFamily family, double lambda, const WinningFunction& market);

enum class BatchMode { Full, MiniBatch, Stochastic };
enum class SolveMethod { Auto, Bisection, GradientDescent };

struct LambdaSolveConfig {
  // Multiplier on the automatic step 1 / S'(lambda0)^2, where S is the aggregate spend map.
  double learning_rate = 1.0;
  int max_iterations = 10000;
  // Absolute tolerance on the budget residual; <= 0 selects 1e-4 * B / T.
  double tolerance = 0.0;
  BatchMode batch = BatchMode::Full;
  std::size_t batch_size = 256;
  SolveMethod method = SolveMethod::Auto;
  double initial_lambda = 0.0;
  std::uint64_t seed = 0;
};

struct LambdaCampaign {
  double payoff;
  std::span<const double> cvr_samples;
  double weight;  // campaign selection probability v_i
  WinningFunction market;
};

struct LambdaSolveResult {
  double lambda = 0.0;
  bool converged = false;
  bool under_spend = false;
  double residual = 0.0;  // sum_i v_i mean_k[b w(b)] - B/T
  int iterations = 0;
  SolveMethod method = SolveMethod::Bisection;
};

/// Aggregate per-request expected spend sum_i v_i mean_k[b w(b)] at a given lambda.
double expected_spend_per_request(SamFamily family, double lambda, std::span<const LambdaCampaign> campaigns);

/// Solves sum_i v_i mean_k[b(theta_k, r_i, lambda) w(b)] = B / T for lambda >= kLambdaMin.
LambdaSolveResult solve_lambda_numeric(SamFamily family, std::span<const LambdaCampaign> campaigns, double budget,
                                       double volume, const LambdaSolveConfig& cfg = {});

}  // namespace samkit
