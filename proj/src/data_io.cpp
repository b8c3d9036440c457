#include "samkit/data_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>

#include "samkit/error.hpp"
#include "samkit/rng.hpp"

namespace samkit {

std::size_t total_records(const StreamSet& streams) {
  std::size_t n = 0;
  for (const auto& s : streams) n += s.records.size();
  return n;
}

double total_cost(const StreamSet& streams) {
  double c = 0.0;
  for (const auto& s : streams)
    for (const auto& r : s.records) c += r.winning_price;
  return c;
}

std::size_t ParseStats::rejected() const {
  std::size_t n = 0;
  for (const auto& [reason, count] : rejects) n += count;
  return n;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cols;
}

template <class T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

double round6(double x) { return std::round(x * 1e6) / 1e6; }

}  // namespace

LineResult parse_line(std::string_view line, const ParseOptions& opts) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto cols = split_tabs(line);
  LineResult res;
  if (cols.size() != 5 && cols.size() != 6) {
    res.reason = "wrong column count";
    return res;
  }
  BidRecord r;
  if (!parse_number(cols[0], r.timestamp_ms)) {
    res.reason = "bad timestamp";
    return res;
  }
  if (cols[1].empty()) {
    res.reason = "empty campaign id";
    return res;
  }
  if (!parse_number(cols[2], r.pcvr) || !std::isfinite(r.pcvr)) {
    res.reason = "bad pcvr";
    return res;
  }
  if (r.pcvr < 0.0 || r.pcvr > 1.0) {
    res.reason = "pcvr out of range";
    return res;
  }
  if (!parse_number(cols[3], r.winning_price) || !std::isfinite(r.winning_price)) {
    res.reason = "bad winning price";
    return res;
  }
  if (r.winning_price < 0.0) {
    res.reason = "negative winning price";
    return res;
  }
  if (opts.cpm) r.winning_price /= 1000.0;
  if (cols[4] == "1") {
    r.converted = true;
  } else if (cols[4] == "0") {
    r.converted = false;
  } else {
    res.reason = "bad converted flag";
    return res;
  }
  if (cols.size() == 6) r.feature_hash = std::string(cols[5]);
  res.record.emplace(std::string(cols[1]), std::move(r));
  return res;
}

ParsedLog parse_log(std::istream& in, const ParseOptions& opts) {
  ParsedLog out;
  std::map<std::string, std::vector<BidRecord>> by_campaign;
  std::string line;
  while (std::getline(in, line)) {
    ++out.stats.lines;
    if (is_blank(line)) {
      ++out.stats.blank_lines;
      continue;
    }
    if (line.rfind("timestamp", 0) == 0) {
      ++out.stats.header_lines;
      continue;
    }
    auto res = parse_line(line, opts);
    if (!res.record) {
      ++out.stats.rejects[res.reason];
      continue;
    }
    ++out.stats.valid;
    by_campaign[res.record->first].push_back(std::move(res.record->second));
  }
  if (out.stats.valid == 0) fail(ErrorCode::Parse, "log contains no valid records");
  for (auto& [id, records] : by_campaign) {
    std::stable_sort(records.begin(), records.end(),
                     [](const BidRecord& a, const BidRecord& b) { return a.timestamp_ms < b.timestamp_ms; });
    out.streams.push_back({id, std::move(records)});
  }
  return out;
}

ParsedLog parse_log_file(const std::string& path, const ParseOptions& opts) {
  const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
  if (gz) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) fail(ErrorCode::Io, "cannot open log file '" + path + "'");
    std::string content;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) content.append(buf, static_cast<std::size_t>(n));
    const bool bad = n < 0;
    gzclose(f);
    if (bad) fail(ErrorCode::Io, "cannot decompress log file '" + path + "'");
    std::istringstream in(content);
    return parse_log(in, opts);
  }
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open log file '" + path + "'");
  return parse_log(in, opts);
}

std::string format_decimal(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  std::string s(buf);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

void write_record(std::ostream& out, const std::string& campaign_id, const BidRecord& r) {
  out << r.timestamp_ms << '\t' << campaign_id << '\t' << format_decimal(r.pcvr) << '\t'
      << format_decimal(r.winning_price) << '\t' << (r.converted ? '1' : '0');
  if (!r.feature_hash.empty()) out << '\t' << r.feature_hash;
  out << '\n';
}

void write_log(std::ostream& out, const StreamSet& streams) {
  struct Ref {
    std::int64_t ts;
    std::size_t campaign;
    std::size_t index;
  };
  std::vector<Ref> refs;
  refs.reserve(total_records(streams));
  for (std::size_t c = 0; c < streams.size(); ++c)
    for (std::size_t k = 0; k < streams[c].records.size(); ++k)
      refs.push_back({streams[c].records[k].timestamp_ms, c, k});
  std::stable_sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) { return a.ts < b.ts; });
  for (const auto& ref : refs) write_record(out, streams[ref.campaign].campaign_id, streams[ref.campaign].records[ref.index]);
}

void write_log_file(const std::string& path, const StreamSet& streams) {
  if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
    std::ostringstream text;
    write_log(text, streams);
    const std::string data = text.str();
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) fail(ErrorCode::Io, "cannot write log file '" + path + "'");
    const bool ok = data.empty() || gzwrite(f, data.data(), static_cast<unsigned>(data.size())) > 0;
    if (gzclose(f) != Z_OK || !ok) fail(ErrorCode::Io, "cannot write log file '" + path + "'");
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write log file '" + path + "'");
  write_log(out, streams);
  if (!out) fail(ErrorCode::Io, "failed writing log file '" + path + "'");
}

void validate(const SyntheticMarketSpec& spec) {
  if (!(spec.horizon_hours > 0.0)) fail(ErrorCode::InvalidArgument, "synthetic horizon must be positive");
  if (spec.campaigns.empty()) fail(ErrorCode::InvalidArgument, "synthetic market needs at least one campaign");
  for (const auto& c : spec.campaigns) {
    if (c.id.empty()) fail(ErrorCode::InvalidArgument, "synthetic campaign id must not be empty");
    if (!(c.cvr.a > 0.0 && c.cvr.b > 0.0)) fail(ErrorCode::InvalidArgument, "campaign " + c.id + ": Beta parameters must be positive");
    if (!(c.scale > 0.0)) fail(ErrorCode::InvalidArgument, "campaign " + c.id + ": market scale must be positive");
    if (!(c.records_per_hour >= 0.0)) fail(ErrorCode::InvalidArgument, "campaign " + c.id + ": records per hour must be nonnegative");
    if (c.price_cap && !(*c.price_cap > 0.0)) fail(ErrorCode::InvalidArgument, "campaign " + c.id + ": price cap must be positive");
    for (const auto& d : c.drift) {
      if (d.cvr && !(d.cvr->a > 0.0 && d.cvr->b > 0.0)) fail(ErrorCode::InvalidArgument, "campaign " + c.id + ": drift Beta parameters must be positive");
      if (d.scale && !(*d.scale > 0.0)) fail(ErrorCode::InvalidArgument, "campaign " + c.id + ": drift scale must be positive");
    }
  }
}

StreamSet generate_synthetic(const SyntheticMarketSpec& spec) {
  validate(spec);
  StreamSet out;
  for (std::size_t ci = 0; ci < spec.campaigns.size(); ++ci) {
    const auto& c = spec.campaigns[ci];
    CampaignStream stream{c.id, {}};
    Rng rng(derive_seed(spec.seed, ci));
    const auto n = static_cast<std::size_t>(std::floor(c.records_per_hour * spec.horizon_hours + 1e-9));
    stream.records.reserve(n);
    auto drift = c.drift;
    std::stable_sort(drift.begin(), drift.end(),
                     [](const DriftSegment& a, const DriftSegment& b) { return a.start_hour < b.start_hour; });
    const double spacing_ms = c.records_per_hour > 0.0 ? static_cast<double>(kHourMs) / c.records_per_hour : 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      BidRecord r;
      const double offset_ms = std::floor(static_cast<double>(k) * spacing_ms);
      r.timestamp_ms = spec.start_ms + static_cast<std::int64_t>(offset_ms);
      const double hour = offset_ms / static_cast<double>(kHourMs);
      BetaCvr cvr = c.cvr;
      double scale = c.scale;
      for (const auto& d : drift) {
        if (d.start_hour > hour) break;
        if (d.cvr) cvr = *d.cvr;
        if (d.scale) scale = *d.scale;
      }
      r.pcvr = std::clamp(round6(CvrDistribution::beta(cvr.a, cvr.b).sample(rng)), 0.0, 1.0);
      double z = MarketPricePdf(c.market, scale).quantile(uniform01(rng));
      if (c.price_cap) z = std::min(z, *c.price_cap);
      r.winning_price = round6(z);
      r.converted = uniform01(rng) < r.pcvr;
      stream.records.push_back(std::move(r));
    }
    out.push_back(std::move(stream));
  }
  return out;
}

TrainTest split_train_test(const StreamSet& streams, const SplitSpec& spec) {
  std::int64_t min_ts = std::numeric_limits<std::int64_t>::max();
  std::int64_t max_ts = std::numeric_limits<std::int64_t>::min();
  for (const auto& s : streams)
    for (const auto& r : s.records) {
      min_ts = std::min(min_ts, r.timestamp_ms);
      max_ts = std::max(max_ts, r.timestamp_ms);
    }
  if (min_ts > max_ts) fail(ErrorCode::InvalidArgument, "cannot split empty streams");

  TrainTest out;
  if (spec.rule == SplitRule::LastDays) {
    if (spec.last_days < 1) fail(ErrorCode::InvalidArgument, "last-days split needs k >= 1");
    auto floor_div = [](std::int64_t a, std::int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); };
    out.cut_ms = (floor_div(max_ts, kDayMs) + 1 - spec.last_days) * kDayMs;
  } else {
    out.cut_ms = spec.cut_ms;
  }
  if (out.cut_ms <= min_ts) fail(ErrorCode::InvalidArgument, "split cut leaves no training data");
  if (out.cut_ms > max_ts) fail(ErrorCode::InvalidArgument, "split cut leaves no test data");

  for (const auto& s : streams) {
    CampaignStream train{s.campaign_id, {}};
    CampaignStream test{s.campaign_id, {}};
    for (const auto& r : s.records) (r.timestamp_ms < out.cut_ms ? train : test).records.push_back(r);
    out.train.push_back(std::move(train));
    out.test.push_back(std::move(test));
  }
  return out;
}

}  // namespace samkit
