#pragma once

#include <string>
#include <vector>

#include "samkit/market_model.hpp"
#include "samkit/records.hpp"

namespace samkit {

// A CPA campaign as seen by the optimizer: payoff, training log and the fitted market.
struct CampaignSpec {
  std::string id;
  double payoff = 0.0;  // r_i per conversion
  double ecpa = 0.0;    // training cost / training conversions, 0 when unknown
  std::vector<BidRecord> training;
  std::vector<double> cvr_samples;  // pcvr column of `training`
  CvrDistribution cvr = CvrDistribution::point_mass(0.0);
  WinningFunction market{MarketFamily::LongTail, 1.0};
};

enum class MarketFit { PerCampaign, Global };

/// Builds campaign specs from per-campaign training streams and payoffs.
/// The market scale is fit per campaign or pooled across all campaigns.
std::vector<CampaignSpec> build_campaigns(const StreamSet& training, const std::vector<double>& payoffs,
                                          MarketFamily family, MarketFit fit = MarketFit::PerCampaign,
                                          std::size_t cvr_bins = 100);

}  // namespace samkit
