#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace samkit {

constexpr std::int64_t kHourMs = 3'600'000;
constexpr std::int64_t kDayMs = 24 * kHourMs;

// One replayable auction. Prices are per-impression currency units.
struct BidRecord {
  std::int64_t timestamp_ms = 0;
  double pcvr = 0.0;
  double winning_price = 0.0;
  bool converted = false;
  std::string feature_hash;
};

struct CampaignStream {
  std::string campaign_id;
  std::vector<BidRecord> records;  // non-decreasing timestamps
};

using StreamSet = std::vector<CampaignStream>;

std::size_t total_records(const StreamSet& streams);
double total_cost(const StreamSet& streams);

}  // namespace samkit
