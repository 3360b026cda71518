#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "calrank/error.hpp"
#include "calrank/types.hpp"

namespace calrank {

// Standard Levenshtein distance with unit insert/delete/substitute costs,
// single-row DP.
template <typename T>
std::size_t edit_distance(std::span<const T> a, std::span<const T> b) {
  if (a.size() > b.size()) return edit_distance(b, a);

  std::vector<std::size_t> row(a.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});

  for (std::size_t j = 1; j <= b.size(); ++j) {
    std::size_t diag = row[0];
    row[0] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
      std::size_t up = row[i];
      row[i] = std::min({row[i] + 1,                              // insertion
                         row[i - 1] + 1,                          // deletion
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)}); // substitution
      diag = up;
    }
  }
  return row[a.size()];
}

template <typename T>
std::size_t edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
  return edit_distance(std::span<const T>(a), std::span<const T>(b));
}

// One comparison item of a semantic sequence: the intent label, or an
// (entity type, surface value) slot. An intent item never equals a slot item.
struct SemItem {
  bool is_intent = false;
  std::string label;  // intent label or entity type
  std::string value;  // slot surface text, empty for the intent item

  friend bool operator==(const SemItem& a, const SemItem& b) = default;
};

// Item 0 is the intent; items 1..N are the slots. The DC label is excluded:
// intent inventories are disjoint across domains, so a wrong domain already
// shows up as a wrong intent.
inline std::vector<SemItem> sem_sequence(const std::string& intent,
                                         const std::vector<SlotChunk>& slots) {
  std::vector<SemItem> seq;
  seq.reserve(slots.size() + 1);
  seq.push_back({true, intent, ""});
  for (const auto& s : slots) seq.push_back({false, s.type, s.text});
  return seq;
}

// Semantic error rate: edit distance between the hypothesis and truth
// sequences, normalized by the truth sequence length. May exceed 1 when the
// hypothesis carries more slots than the truth. 0 iff intent and all slots
// match exactly.
inline double semer(const std::string& hyp_intent, const std::vector<SlotChunk>& hyp_slots,
                    const Annotation& truth) {
  auto h = sem_sequence(hyp_intent, hyp_slots);
  auto t = sem_sequence(truth.intent, truth.slots);
  return static_cast<double>(edit_distance(h, t)) / static_cast<double>(t.size());
}

inline double semer(const Hypothesis& hyp, const Annotation& truth) {
  return semer(hyp.intent, hyp.slots, truth);
}

// Interpretation error: 0 iff SemER is exactly 0, 1 otherwise.
inline int ie(double semer_value) {
  if (semer_value < 0.0) throw DomainError("semer value must be non-negative");
  return semer_value == 0.0 ? 0 : 1;
}

}  // namespace calrank
