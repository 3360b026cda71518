#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "calrank/features.hpp"
#include "calrank/maxent.hpp"
#include "calrank/types.hpp"

namespace calrank {

inline constexpr const char* kNullTag = "O";
inline constexpr const char* kDcInLabel = "in";
inline constexpr const char* kDcOutLabel = "out";

// Per-token tagger: an independent MaxEnt classifier over {O} + entity types.
// A sequence's log-probability is the sum of its per-token log-probabilities.
class TokenTagger {
 public:
  TokenTagger() = default;
  explicit TokenTagger(MaxEntModel model) : model_(std::move(model)) {}

  bool trained() const { return model_.trained(); }
  const MaxEntModel& model() const { return model_; }
  const std::vector<std::string>& tags() const { return model_.labels(); }

  // Exact top-k tag sequences under per-token independence: keeping the k
  // best prefixes at each position preserves the global top-k because suffix
  // scores do not depend on the prefix.
  std::vector<std::pair<std::vector<std::uint8_t>, double>> top_tag_sequences(
      std::span<const std::string> tokens, std::size_t k, double temperature = 1.0) const {
    std::vector<std::vector<double>> dists;
    dists.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i)
      dists.push_back(model_.log_probs(tagger_features(tokens, i), temperature));

    std::vector<std::pair<std::vector<std::uint8_t>, double>> beam{{{}, 0.0}};
    std::vector<std::pair<std::vector<std::uint8_t>, double>> next;
    for (const auto& dist : dists) {
      next.clear();
      for (const auto& [prefix, lp] : beam) {
        for (std::size_t t = 0; t < dist.size(); ++t) {
          auto tags = prefix;
          tags.push_back(static_cast<std::uint8_t>(t));
          next.emplace_back(std::move(tags), lp + dist[t]);
        }
      }
      std::sort(next.begin(), next.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
      });
      if (next.size() > k) next.resize(k);
      beam.swap(next);
    }
    return beam;
  }

  std::vector<SlotChunk> chunks(const std::vector<std::string>& tokens,
                                const std::vector<std::uint8_t>& tag_seq) const {
    std::vector<SlotChunk> out;
    const auto& names = tags();
    std::size_t i = 0;
    while (i < tag_seq.size()) {
      if (tag_seq[i] == 0) {  // null tag
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      while (j < tag_seq.size() && tag_seq[j] == tag_seq[i]) ++j;
      SlotChunk chunk;
      chunk.type = names[tag_seq[i]];
      chunk.first = i;
      chunk.last = j;
      chunk.text = join_tokens(tokens, i, j);
      out.push_back(std::move(chunk));
      i = j;
    }
    return out;
  }

 private:
  MaxEntModel model_;
};

struct DomainModels {
  MaxEntModel dc;
  MaxEntModel ic;
  TokenTagger ner;

  bool trained() const { return dc.trained() && ic.trained() && ner.trained(); }
};

// DC is trained one-vs-all on the full corpus; IC and NER only on utterances
// whose truth domain matches the schema.
inline DomainModels train_domain_components(const DomainSchema& schema,
                                            std::span<const Utterance> train,
                                            const MaxEntOptions& options = {}) {
  std::vector<MaxEntModel::Example> dc_examples, ic_examples, ner_examples;
  for (const auto& u : train) {
    const bool in_domain = u.truth.domain == schema.name;
    dc_examples.emplace_back(ngram_features(u.tokens), in_domain ? kDcInLabel : kDcOutLabel);
    if (!in_domain) continue;
    ic_examples.emplace_back(ngram_features(u.tokens), u.truth.intent);
    std::vector<std::string> tags(u.tokens.size(), kNullTag);
    for (const auto& slot : u.truth.slots)
      for (std::size_t i = slot.first; i < slot.last; ++i) tags[i] = slot.type;
    for (std::size_t i = 0; i < u.tokens.size(); ++i)
      ner_examples.emplace_back(tagger_features(u.tokens, i), tags[i]);
  }
  if (ic_examples.empty())
    throw TrainingError("domain '" + schema.name + "' has no in-domain training utterances");

  std::vector<std::string> tag_inventory{kNullTag};
  tag_inventory.insert(tag_inventory.end(), schema.entity_types.begin(),
                       schema.entity_types.end());

  DomainModels models;
  models.dc = train_maxent(dc_examples, {kDcInLabel, kDcOutLabel}, options);
  models.ic = train_maxent(ic_examples, schema.intents, options);
  models.ner = TokenTagger(train_maxent(ner_examples, tag_inventory, options));
  return models;
}

// Scores one utterance against one domain. The temperatures divide each
// model's logits before normalization (T < 1 sharpens, T > 1 flattens); the
// outputs stay log-probabilities either way.
inline ComponentScores score_components(const Utterance& u, const DomainSchema& schema,
                                        const DomainModels& models, std::size_t beam_ic,
                                        std::size_t beam_ner,
                                        const ComponentTemperatures& temps = {}) {
  if (beam_ic < 1 || beam_ner < 1) throw ConfigError("beam widths must be at least 1");
  if (!models.trained()) throw StateError("domain '" + schema.name + "' models are not trained");
  if (!(temps.dc > 0.0 && temps.ic > 0.0 && temps.ner > 0.0))
    throw ConfigError("temperatures must be > 0");

  ComponentScores cs;
  cs.domain = schema.name;

  const auto utt_feats = ngram_features(u.tokens);
  cs.dc_logprob = models.dc.log_probs(utt_feats, temps.dc)[models.dc.label_index(kDcInLabel)];

  const auto ic_lp = models.ic.log_probs(utt_feats, temps.ic);
  std::vector<std::size_t> order(ic_lp.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ic_lp[a] > ic_lp[b]; });
  for (std::size_t i = 0; i < std::min(beam_ic, order.size()); ++i)
    cs.ic.emplace_back(models.ic.labels()[order[i]], ic_lp[order[i]]);

  // Distinct tag sequences can produce the same (type, text) chunk sequence
  // from different spans; keep the highest-scoring one.
  for (const auto& [tag_seq, lp] : models.ner.top_tag_sequences(u.tokens, beam_ner, temps.ner)) {
    auto chunks = models.ner.chunks(u.tokens, tag_seq);
    const bool dup = std::any_of(cs.ner.begin(), cs.ner.end(),
                                 [&](const auto& pr) { return pr.first == chunks; });
    if (!dup) cs.ner.emplace_back(std::move(chunks), lp);
  }
  return cs;
}

}  // namespace calrank
