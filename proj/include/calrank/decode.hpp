#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calrank/components.hpp"
#include "calrank/hypothesis.hpp"
#include "calrank/metrics.hpp"
#include "calrank/reranker.hpp"
#include "calrank/types.hpp"

namespace calrank {

// Everything needed to decode against one domain.
struct DomainRuntime {
  DomainSchema schema;
  DomainModels models;
  WeightVector weights;
  double temperature = 1.0;
};

struct DecodeConfig {
  std::size_t beam_ic = 3;
  std::size_t beam_ner = 3;
  std::size_t nbest = 5;
  // Optional rejection threshold on the top hypothesis's r, off by default;
  // a per-domain entry overrides the global one.
  std::optional<double> reject_threshold;
  std::map<std::string, double> domain_reject_thresholds;

  std::optional<double> threshold_for(const std::string& domain) const {
    auto it = domain_reject_thresholds.find(domain);
    if (it != domain_reject_thresholds.end()) return it->second;
    return reject_threshold;
  }
};

struct NBestEntry {
  Hypothesis hyp;
  double s = 0.0;
  double r = 0.5;  // sigmoid(s), the calibrated confidence
};

struct NBest {
  std::string utterance_id;
  std::vector<NBestEntry> entries;  // sorted non-increasing by s
  bool rejected = false;

  const NBestEntry& top() const {
    if (entries.empty()) throw EmptyInputError("n-best list is empty");
    return entries.front();
  }
};

// Merges per-domain hypothesis lists into the globally sorted n-best. Ties
// break by (domain label ascending, hypothesis index ascending).
inline NBest merge_nbest(const std::string& utterance_id,
                         std::vector<std::vector<Hypothesis>> per_domain,
                         const std::map<std::string, WeightVector>& weights, std::size_t n,
                         const DecodeConfig& cfg = {}) {
  if (n < 1) throw ConfigError("n-best size must be at least 1");
  NBest out;
  out.utterance_id = utterance_id;
  for (auto& hyps : per_domain) {
    if (hyps.empty()) continue;
    auto wit = weights.find(hyps.front().domain);
    if (wit == weights.end())
      throw ConfigError("no weight vector for domain '" + hyps.front().domain + "'");
    score_hypotheses(wit->second, hyps);
    for (auto& h : hyps) {
      NBestEntry e;
      e.s = h.s;
      e.r = sigmoid(h.s);
      e.hyp = std::move(h);
      out.entries.push_back(std::move(e));
    }
  }
  if (out.entries.empty()) throw EmptyInputError("no hypotheses to merge");
  std::sort(out.entries.begin(), out.entries.end(), [](const NBestEntry& a, const NBestEntry& b) {
    if (a.s != b.s) return a.s > b.s;
    if (a.hyp.domain != b.hyp.domain) return a.hyp.domain < b.hyp.domain;
    return a.hyp.index < b.hyp.index;
  });
  if (out.entries.size() > n) out.entries.resize(n);

  if (auto thr = cfg.threshold_for(out.top().hyp.domain); thr && out.top().r < *thr)
    out.rejected = true;
  return out;
}

// Decodes one utterance against every configured domain and merges.
inline NBest decode(const Utterance& u, std::span<const DomainRuntime> domains,
                    const DecodeConfig& cfg = {}) {
  if (domains.empty()) throw ConfigError("no domains configured");
  std::vector<std::vector<Hypothesis>> per_domain;
  std::map<std::string, WeightVector> weights;
  for (const auto& d : domains) {
    per_domain.push_back(build_hypotheses(
        score_components(u, d.schema, d.models, cfg.beam_ic, cfg.beam_ner, d.temperature)));
    weights[d.schema.name] = d.weights;
  }
  return merge_nbest(u.id, std::move(per_domain), weights, cfg.nbest, cfg);
}

// Per-utterance outcome of a decoded test utterance, as consumed by the
// calibration analysis.
struct DecodeOutcome {
  std::string utterance_id;
  std::string top_domain;
  std::string truth_domain;
  double s = 0.0;
  double r = 0.5;
  double semer = 0.0;
  int ie = 1;
  bool rejected = false;
};

struct DomainBreakdown {
  std::size_t count = 0;
  double semer_mean = 0.0;
  double ie_rate = 0.0;
};

struct EvaluationReport {
  std::size_t n_utterances = 0;
  std::size_t n_rejected = 0;
  double semer_mean = 0.0;
  double ie_rate = 0.0;
  // Keyed by the domain of the TOP hypothesis, not the truth domain.
  std::map<std::string, DomainBreakdown> per_domain;
};

inline DecodeOutcome outcome_of(const Utterance& u, const NBest& nbest) {
  const auto& top = nbest.top();
  DecodeOutcome o;
  o.utterance_id = u.id;
  o.top_domain = top.hyp.domain;
  o.truth_domain = u.truth.domain;
  o.s = top.s;
  o.r = top.r;
  o.semer = semer(top.hyp, u.truth);
  o.ie = ie(o.semer);
  o.rejected = nbest.rejected;
  return o;
}

inline EvaluationReport summarize(std::span<const DecodeOutcome> outcomes) {
  if (outcomes.empty()) throw EmptyInputError("no outcomes to summarize");
  EvaluationReport rep;
  rep.n_utterances = outcomes.size();
  std::map<std::string, std::pair<double, std::size_t>> dom_sums;  // semer sum, ie count
  for (const auto& o : outcomes) {
    rep.semer_mean += o.semer;
    rep.ie_rate += o.ie;
    rep.n_rejected += o.rejected ? 1 : 0;
    auto& [sum, errs] = dom_sums[o.top_domain];
    sum += o.semer;
    errs += static_cast<std::size_t>(o.ie);
    rep.per_domain[o.top_domain].count += 1;
  }
  rep.semer_mean /= static_cast<double>(outcomes.size());
  rep.ie_rate /= static_cast<double>(outcomes.size());
  for (auto& [domain, breakdown] : rep.per_domain) {
    const auto& [sum, errs] = dom_sums[domain];
    breakdown.semer_mean = sum / static_cast<double>(breakdown.count);
    breakdown.ie_rate = static_cast<double>(errs) / static_cast<double>(breakdown.count);
  }
  return rep;
}

// Decodes a whole test set and aggregates top-1 metrics.
inline std::pair<EvaluationReport, std::vector<DecodeOutcome>> evaluate(
    std::span<const Utterance> test, std::span<const DomainRuntime> domains,
    const DecodeConfig& cfg = {}) {
  if (test.empty()) throw EmptyInputError("test set is empty");
  std::vector<DecodeOutcome> outcomes;
  outcomes.reserve(test.size());
  for (const auto& u : test) outcomes.push_back(outcome_of(u, decode(u, domains, cfg)));
  return {summarize(outcomes), std::move(outcomes)};
}

}  // namespace calrank
