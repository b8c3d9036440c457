#include "samkit/campaign.hpp"

#include "samkit/error.hpp"

namespace samkit {

namespace {

double fit_scale(MarketFamily family, std::span<const double> prices) {
  return family == MarketFamily::LongTail ? fit_long_tail_l(prices) : fit_uniform_l(prices);
}

}  // namespace

std::vector<CampaignSpec> build_campaigns(const StreamSet& training, const std::vector<double>& payoffs,
                                          MarketFamily family, MarketFit fit, std::size_t cvr_bins) {
  if (training.size() != payoffs.size()) fail(ErrorCode::InvalidArgument, "one payoff per campaign is required");

  std::vector<double> pooled;
  if (fit == MarketFit::Global) {
    for (const auto& s : training)
      for (const auto& r : s.records) pooled.push_back(r.winning_price);
  }
  const double global_scale = fit == MarketFit::Global ? fit_scale(family, pooled) : 0.0;

  std::vector<CampaignSpec> out;
  out.reserve(training.size());
  for (std::size_t i = 0; i < training.size(); ++i) {
    const auto& stream = training[i];
    if (stream.records.empty())
      fail(ErrorCode::InvalidArgument, "campaign " + stream.campaign_id + " has no training records");
    CampaignSpec c;
    c.id = stream.campaign_id;
    c.payoff = payoffs[i];
    c.training = stream.records;
    c.cvr_samples.reserve(stream.records.size());
    std::vector<double> prices;
    prices.reserve(stream.records.size());
    double cost = 0.0;
    std::size_t conversions = 0;
    for (const auto& r : stream.records) {
      c.cvr_samples.push_back(r.pcvr);
      prices.push_back(r.winning_price);
      cost += r.winning_price;
      conversions += r.converted ? 1 : 0;
    }
    c.ecpa = conversions > 0 ? cost / static_cast<double>(conversions) : 0.0;
    c.cvr = fit_empirical_cvr(stream.records, cvr_bins);
    const double scale = fit == MarketFit::Global ? global_scale : fit_scale(family, prices);
    c.market = WinningFunction(family, scale);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace samkit
