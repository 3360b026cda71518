#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "calrank/error.hpp"

namespace calrank {

// A contiguous token span [first, last) labelled with an entity type.
// `text` is the surface form (span tokens joined by single spaces); slot
// comparison is by (type, text), never by span position.
struct SlotChunk {
  std::string type;
  std::size_t first = 0;
  std::size_t last = 0;
  std::string text;

  friend bool operator==(const SlotChunk& a, const SlotChunk& b) {
    return a.type == b.type && a.text == b.text;
  }
};

struct Annotation {
  std::string domain;
  std::string intent;
  std::vector<SlotChunk> slots;  // in token order, non-overlapping
};

struct Utterance {
  std::string id;
  std::vector<std::string> tokens;  // lowercase words, non-empty
  Annotation truth;
};

// One domain's label inventories plus example surface phrases per entity type.
struct DomainSchema {
  std::string name;
  std::vector<std::string> intents;
  std::vector<std::string> entity_types;
  std::map<std::string, std::vector<std::string>> gazetteer;
};

// Temperatures for the three component models of one domain, applied to the
// logits before normalization. T < 1 sharpens (overconfident scores), T > 1
// flattens (underconfident).
struct ComponentTemperatures {
  double dc = 1.0;
  double ic = 1.0;
  double ner = 1.0;

  ComponentTemperatures() = default;
  ComponentTemperatures(double t) : dc(t), ic(t), ner(t) {}  // uniform
  ComponentTemperatures(double dc_t, double ic_t, double ner_t)
      : dc(dc_t), ic(ic_t), ner(ner_t) {}
};

// Score-miscalibration knob: a per-domain temperature, optionally combined
// with global per-component multipliers (e.g. a flattened NER whose score
// spread then differs from the classifiers').
struct MiscalibrationConfig {
  std::map<std::string, double> temperature;
  ComponentTemperatures component;

  double get(const std::string& domain) const {
    auto it = temperature.find(domain);
    return it == temperature.end() ? 1.0 : it->second;
  }

  ComponentTemperatures effective(const std::string& domain) const {
    const double t = get(domain);
    return {t * component.dc, t * component.ic, t * component.ner};
  }

  void validate() const {
    for (const auto& [d, t] : temperature) {
      if (!(t > 0.0)) throw ConfigError("temperature for domain '" + d + "' must be > 0");
    }
    if (!(component.dc > 0.0 && component.ic > 0.0 && component.ner > 0.0))
      throw ConfigError("component temperatures must be > 0");
  }
};

// Outputs of one domain's DC/IC/NER for one utterance. All scores are
// log-probabilities; ic and ner are sorted non-increasing and truncated to
// their beam widths upstream.
struct ComponentScores {
  std::string domain;
  double dc_logprob = 0.0;
  std::vector<std::pair<std::string, double>> ic;
  std::vector<std::pair<std::vector<SlotChunk>, double>> ner;
};

// One (domain, intent, slots) interpretation with its component scores.
struct Hypothesis {
  std::string domain;
  std::string intent;
  std::vector<SlotChunk> slots;
  std::array<double, 3> l{};  // dc, ic, ner log-probabilities
  double s = 0.0;             // re-ranker score, unset until scored
  std::size_t index = 0;      // position within the domain's hypothesis list
};

// Per-domain re-ranker parameters. Bias is supported but off by default, so
// the score is exactly the dot product w.l.
struct WeightVector {
  std::array<double, 3> w{1.0, 1.0, 1.0};
  std::optional<double> bias;
};

inline std::string join_tokens(const std::vector<std::string>& tokens,
                               std::size_t first, std::size_t last) {
  std::string out;
  for (std::size_t i = first; i < last; ++i) {
    if (i > first) out += ' ';
    out += tokens[i];
  }
  return out;
}

// Checks the documented Utterance invariants: non-empty tokens, slot spans
// valid, non-overlapping and in order.
inline void validate_utterance(const Utterance& u) {
  if (u.tokens.empty()) throw ConfigError("utterance '" + u.id + "' has no tokens");
  std::size_t prev_end = 0;
  for (const auto& slot : u.truth.slots) {
    if (slot.first >= slot.last || slot.last > u.tokens.size())
      throw ConfigError("utterance '" + u.id + "' has an invalid slot span");
    if (slot.first < prev_end)
      throw ConfigError("utterance '" + u.id + "' has overlapping or out-of-order slots");
    prev_end = slot.last;
  }
}

}  // namespace calrank
