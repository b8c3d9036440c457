#pragma once

// Offline second-price replay of logged auctions.
//
// For every round of the replay a campaign i ~ v is sampled and the next
// record of its stream is passed to the bidder; the test ends as soon as a
// sampled stream is exhausted. A bid b wins when b >= z (the logged winning
// price, optionally inflated) and pays z. The effective bid is capped at the
// remaining budget, so spend never exceeds the budget.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "samkit/bidding.hpp"
#include "samkit/portfolio.hpp"
#include "samkit/records.hpp"

namespace samkit {

// Piecewise-constant multiplier on logged winning prices, keyed by hours since the
// first record of the replay. A simple competition hook, not an equilibrium model.
struct InflationStep {
  double start_hour = 0.0;
  double factor = 1.0;
};
using InflationSchedule = std::vector<InflationStep>;

double inflation_at(const InflationSchedule& schedule, double hour);

struct ReplayConfig {
  double budget = 0.0;
  std::uint64_t seed = 0;
  InflationSchedule market_inflation;
  std::int64_t bucket_ms = kHourMs;
  bool record_trace = false;
};

struct ReplayTotals {
  std::size_t auctions = 0;  // records passed to the bidder
  std::size_t bids = 0;      // auctions with a positive effective bid
  std::size_t imps = 0;
  std::size_t convs = 0;
  double revenue = 0.0;  // convs * payoff
  double cost = 0.0;
  double profit() const { return revenue - cost; }
  /// profit / cost; nullopt when nothing was spent.
  std::optional<double> margin() const;
  void add(const ReplayTotals& o);
};

struct AuctionTrace {
  std::size_t seq;
  std::size_t campaign;
  std::int64_t timestamp_ms;
  double pcvr;
  double bid;
  double price;
  bool won;
  bool converted;
  double revenue;
  double cost;
};

struct ReplayReport {
  double budget = 0.0;
  double budget_remaining = 0.0;
  ReplayTotals total;
  std::vector<ReplayTotals> per_campaign;
  std::vector<ReplayTotals> buckets;  // by bucket_ms since the replay origin
  std::size_t malformed = 0;
  std::optional<std::size_t> exhausted_campaign;
  std::vector<AuctionTrace> trace;
};

/// Replays ordered test streams. `bids` and `payoffs` are per campaign.
ReplayReport replay(const StreamSet& streams, std::span<const BidFunction> bids, std::span<const double> payoffs,
                    const SelectionVector& v, const ReplayConfig& cfg);

enum class PayoffMode { Easy, Hard, Explicit };

const char* to_string(PayoffMode mode);

/// eCPA_i = training cost / training conversions; Easy 0.8 eCPA, Hard 0.2 eCPA.
std::vector<double> derive_payoffs(const StreamSet& training, PayoffMode mode,
                                   std::span<const double> explicit_values = {});

}  // namespace samkit
