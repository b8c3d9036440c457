#include "samkit/replay.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "samkit/error.hpp"
#include "samkit/rng.hpp"

namespace samkit {

double inflation_at(const InflationSchedule& schedule, double hour) {
  double factor = 1.0;
  for (const auto& step : schedule) {
    if (step.start_hour > hour) break;
    factor = step.factor;
  }
  return factor;
}

std::optional<double> ReplayTotals::margin() const {
  if (cost <= 0.0) return std::nullopt;
  return profit() / cost;
}

void ReplayTotals::add(const ReplayTotals& o) {
  auctions += o.auctions;
  bids += o.bids;
  imps += o.imps;
  convs += o.convs;
  revenue += o.revenue;
  cost += o.cost;
}

ReplayReport replay(const StreamSet& streams, std::span<const BidFunction> bids, std::span<const double> payoffs,
                    const SelectionVector& v, const ReplayConfig& cfg) {
  const std::size_t m = streams.size();
  if (m == 0 || bids.size() != m || payoffs.size() != m || v.size() != m)
    fail(ErrorCode::InvalidArgument, "replay inputs disagree in campaign count");
  if (!(cfg.budget > 0.0) || !std::isfinite(cfg.budget)) fail(ErrorCode::InvalidArgument, "replay budget must be positive");
  if (cfg.bucket_ms <= 0) fail(ErrorCode::InvalidArgument, "bucket width must be positive");
  if (total_records(streams) == 0) fail(ErrorCode::InvalidArgument, "replay streams are empty");
  for (std::size_t i = 1; i < cfg.market_inflation.size(); ++i)
    if (cfg.market_inflation[i].start_hour < cfg.market_inflation[i - 1].start_hour)
      fail(ErrorCode::InvalidArgument, "inflation schedule must be sorted by hour");

  std::int64_t origin = std::numeric_limits<std::int64_t>::max();
  for (const auto& s : streams)
    if (!s.records.empty()) origin = std::min(origin, s.records.front().timestamp_ms);

  std::vector<double> cum(m);
  std::size_t last_positive = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    acc += v[i];
    cum[i] = acc;
    if (v[i] > 0.0) last_positive = i;
  }

  ReplayReport rep;
  rep.budget = cfg.budget;
  rep.per_campaign.resize(m);
  std::vector<std::size_t> pos(m, 0);
  Rng rng(cfg.seed);
  double cost = 0.0;

  for (std::size_t seq = 0;; ++seq) {
    const double u = uniform01(rng);
    std::size_t i = 0;
    while (i < last_positive && (u >= cum[i] || v[i] <= 0.0)) ++i;
    const auto& stream = streams[i].records;
    if (pos[i] >= stream.size()) {
      rep.exhausted_campaign = i;
      break;
    }
    const BidRecord& rec = stream[pos[i]++];
    ReplayTotals step;
    step.auctions = 1;
    if (!(rec.pcvr >= 0.0 && rec.pcvr <= 1.0) || !(rec.winning_price >= 0.0) || !std::isfinite(rec.winning_price)) {
      ++rep.malformed;
      continue;
    }
    const double hour = static_cast<double>(rec.timestamp_ms - origin) / static_cast<double>(kHourMs);
    const double price = rec.winning_price * inflation_at(cfg.market_inflation, hour);
    const double raw_bid = bids[i](rec.pcvr, payoffs[i], seq);
    const double effective = std::min(raw_bid, cfg.budget - cost);
    bool won = false;
    if (effective > 0.0) {
      step.bids = 1;
      const double next_cost = cost + price;
      if (effective >= price && next_cost <= cfg.budget) {
        won = true;
        cost = next_cost;
        step.imps = 1;
        step.cost = price;
        if (rec.converted) {
          step.convs = 1;
          step.revenue = payoffs[i];
        }
      }
    }
    rep.total.add(step);
    rep.per_campaign[i].add(step);
    const auto bucket = static_cast<std::size_t>((rec.timestamp_ms - origin) / cfg.bucket_ms);
    if (rep.buckets.size() <= bucket) rep.buckets.resize(bucket + 1);
    rep.buckets[bucket].add(step);
    if (cfg.record_trace) {
      rep.trace.push_back({seq, i, rec.timestamp_ms, rec.pcvr, std::max(effective, 0.0), price, won, rec.converted,
                           step.revenue, step.cost});
    }
  }
  rep.total.cost = cost;
  rep.budget_remaining = cfg.budget - cost;
  return rep;
}

const char* to_string(PayoffMode mode) {
  switch (mode) {
    case PayoffMode::Easy:
      return "easy";
    case PayoffMode::Hard:
      return "hard";
    case PayoffMode::Explicit:
      return "explicit";
  }
  return "?";
}

std::vector<double> derive_payoffs(const StreamSet& training, PayoffMode mode, std::span<const double> explicit_values) {
  if (mode == PayoffMode::Explicit) {
    if (explicit_values.size() != training.size())
      fail(ErrorCode::InvalidArgument, "explicit payoffs must list one value per campaign");
    for (double r : explicit_values)
      if (!(r >= 0.0)) fail(ErrorCode::Domain, "payoffs must be nonnegative");
    return {explicit_values.begin(), explicit_values.end()};
  }
  const double factor = mode == PayoffMode::Easy ? 0.8 : 0.2;
  std::vector<double> out;
  for (const auto& s : training) {
    double cost = 0.0;
    std::size_t convs = 0;
    for (const auto& r : s.records) {
      cost += r.winning_price;
      convs += r.converted ? 1 : 0;
    }
    if (convs == 0) fail(ErrorCode::InvalidArgument, "campaign " + s.campaign_id + " has no training conversions");
    out.push_back(factor * cost / static_cast<double>(convs));
  }
  return out;
}

}  // namespace samkit
