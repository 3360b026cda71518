#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "calrank/decode.hpp"
#include "calrank/error.hpp"

namespace calrank {

inline constexpr std::size_t kReliabilityBins = 10;

struct ReliabilityBin {
  std::size_t count = 0;
  // NaN while the bin is empty.
  double mean_confidence = std::numeric_limits<double>::quiet_NaN();
  double frac_correct = std::numeric_limits<double>::quiet_NaN();
};

struct ReliabilityReport {
  std::string scope;  // "all" or a single domain label
  std::array<ReliabilityBin, kReliabilityBins> bins{};
  std::size_t total = 0;
  double ece = 0.0;  // sum over bins of (count/total) * |mean conf - frac correct|

  static double bin_low(std::size_t k) { return static_cast<double>(k) / kReliabilityBins; }
  static double bin_high(std::size_t k) { return static_cast<double>(k + 1) / kReliabilityBins; }
};

// Bins (confidence, ie) pairs into 10 equal-width bins over [0,1]; the
// boundary 1.0 belongs to the last bin. Correct means IE = 0.
inline ReliabilityReport reliability(std::span<const std::pair<double, int>> entries,
                                     std::string scope = "all") {
  ReliabilityReport rep;
  rep.scope = std::move(scope);
  rep.total = entries.size();

  std::array<double, kReliabilityBins> conf_sum{};
  std::array<std::size_t, kReliabilityBins> correct{};
  for (const auto& [r, ie_value] : entries) {
    if (!(r >= 0.0 && r <= 1.0))
      throw DomainError("confidence outside [0,1]");
    auto k = static_cast<std::size_t>(r * kReliabilityBins);
    if (k >= kReliabilityBins) k = kReliabilityBins - 1;
    rep.bins[k].count += 1;
    conf_sum[k] += r;
    correct[k] += ie_value == 0 ? 1 : 0;
  }
  for (std::size_t k = 0; k < kReliabilityBins; ++k) {
    auto& bin = rep.bins[k];
    if (bin.count == 0) continue;
    bin.mean_confidence = conf_sum[k] / static_cast<double>(bin.count);
    bin.frac_correct = static_cast<double>(correct[k]) / static_cast<double>(bin.count);
    rep.ece += static_cast<double>(bin.count) / static_cast<double>(rep.total) *
               std::abs(bin.mean_confidence - bin.frac_correct);
  }
  return rep;
}

// Reliability over decoded outcomes; per-domain scope selects the subset of
// utterances whose TOP hypothesis came from that domain.
inline ReliabilityReport reliability(std::span<const DecodeOutcome> outcomes,
                                     const std::string& scope = "all") {
  std::vector<std::pair<double, int>> entries;
  for (const auto& o : outcomes)
    if (scope == "all" || o.top_domain == scope) entries.emplace_back(o.r, o.ie);
  return reliability(std::span<const std::pair<double, int>>(entries), scope);
}

struct ComparisonRow {
  std::string scheme;
  double semer = 0.0;
  double ie_rate = 0.0;
  double ece = 0.0;
};

struct SchemeComparison {
  std::vector<ComparisonRow> rows;  // one per scheme, input order
  // Cross-domain ("all") and per-domain curves, keyed by scheme then scope.
  std::map<std::string, std::map<std::string, ReliabilityReport>> curves;
};

// Compares schemes evaluated on the same test set. Throws ConfigError when
// the utterance id sets differ across schemes.
inline SchemeComparison compare_schemes(
    const std::vector<std::pair<std::string, std::vector<DecodeOutcome>>>& per_scheme) {
  if (per_scheme.empty()) throw ConfigError("no schemes to compare");

  std::set<std::string> reference_ids;
  for (const auto& o : per_scheme.front().second) reference_ids.insert(o.utterance_id);
  if (reference_ids.empty()) throw ConfigError("empty test set");
  for (const auto& [scheme, outcomes] : per_scheme) {
    std::set<std::string> ids;
    for (const auto& o : outcomes) ids.insert(o.utterance_id);
    if (ids != reference_ids)
      throw ConfigError("scheme '" + scheme + "' was evaluated on a different test set");
  }

  SchemeComparison cmp;
  for (const auto& [scheme, outcomes] : per_scheme) {
    const auto rep = summarize(outcomes);
    auto& scheme_curves = cmp.curves[scheme];
    scheme_curves["all"] = reliability(std::span<const DecodeOutcome>(outcomes), "all");
    std::set<std::string> domains;
    for (const auto& o : outcomes) domains.insert(o.top_domain);
    for (const auto& d : domains)
      scheme_curves[d] = reliability(std::span<const DecodeOutcome>(outcomes), d);
    cmp.rows.push_back(
        {scheme, rep.semer_mean, rep.ie_rate, scheme_curves.at("all").ece});
  }
  return cmp;
}

}  // namespace calrank
