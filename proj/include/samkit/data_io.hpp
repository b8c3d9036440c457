#pragma once

// Bid-log parsing, serialization, synthetic markets and train/test splits.
//
// Log schema: one auction per line, tab separated
//   timestamp_ms  campaign_id  pcvr  winning_price  converted  [feature_hash]
// An optional header line starting with "timestamp" is skipped. Prices are
// per impression unless the log is CPM-quoted (divide by 1000 on read).

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "samkit/market_model.hpp"
#include "samkit/records.hpp"

namespace samkit {

struct ParseOptions {
  bool cpm = false;
};

struct ParseStats {
  std::size_t lines = 0;
  std::size_t valid = 0;
  std::size_t header_lines = 0;
  std::size_t blank_lines = 0;
  std::map<std::string, std::size_t> rejects;  // reason -> count

  std::size_t rejected() const;
};

struct ParsedLog {
  StreamSet streams;  // campaigns ordered by id, records stably sorted by timestamp
  ParseStats stats;
};

/// Parses a log from a stream; throws Parse when no line is valid.
ParsedLog parse_log(std::istream& in, const ParseOptions& opts = {});
/// Reads a plain or gzip (".gz") log file.
ParsedLog parse_log_file(const std::string& path, const ParseOptions& opts = {});

/// Validates a single line. Returns the campaign id and record, or the reject reason.
struct LineResult {
  std::optional<std::pair<std::string, BidRecord>> record;
  std::string reason;
};
LineResult parse_line(std::string_view line, const ParseOptions& opts = {});

/// Canonical decimal text: fixed with at most 6 fractional digits, trailing zeros removed.
std::string format_decimal(double x);

void write_record(std::ostream& out, const std::string& campaign_id, const BidRecord& r);
/// Writes all streams merged by timestamp (ties by campaign order), no header.
void write_log(std::ostream& out, const StreamSet& streams);
void write_log_file(const std::string& path, const StreamSet& streams);

struct DriftSegment {
  double start_hour = 0.0;
  std::optional<BetaCvr> cvr;
  std::optional<double> scale;
};

struct SyntheticCampaign {
  std::string id;
  BetaCvr cvr{2.0, 8.0};
  MarketFamily market = MarketFamily::LongTail;
  double scale = 50.0;
  std::optional<double> price_cap;
  double records_per_hour = 100.0;
  std::vector<DriftSegment> drift;  // piecewise-constant overrides, sorted by start_hour
};

struct SyntheticMarketSpec {
  std::vector<SyntheticCampaign> campaigns;
  double horizon_hours = 240.0;
  std::int64_t start_ms = 0;
  std::uint64_t seed = 1;
};

void validate(const SyntheticMarketSpec& spec);

/// Draws theta ~ Beta, z from the market model (optionally capped), converted ~ Bernoulli(theta).
/// Values are rounded to 6 decimals so that written logs round-trip exactly.
StreamSet generate_synthetic(const SyntheticMarketSpec& spec);

enum class SplitRule { LastDays, TimestampCut };

struct SplitSpec {
  SplitRule rule = SplitRule::LastDays;
  int last_days = 3;
  std::int64_t cut_ms = 0;
};

struct TrainTest {
  StreamSet train;
  StreamSet test;
  std::int64_t cut_ms = 0;
};

/// Records with timestamp >= cut go to test. The last-k-days cut is placed on the UTC day
/// boundary k days before the end of the last day present in the data.
TrainTest split_train_test(const StreamSet& streams, const SplitSpec& spec);

}  // namespace samkit
