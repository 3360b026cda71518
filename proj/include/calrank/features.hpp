#pragma once

#include <span>
#include <string>
#include <vector>

namespace calrank {

inline constexpr const char* kBos = "<s>";
inline constexpr const char* kEos = "</s>";

// Utterance-level features for DC/IC: token unigrams plus bigrams with
// begin/end sentinels.
inline std::vector<std::string> ngram_features(std::span<const std::string> tokens) {
  std::vector<std::string> out;
  out.reserve(2 * tokens.size() + 1);
  for (const auto& t : tokens) out.push_back("u=" + t);
  std::string prev = kBos;
  for (const auto& t : tokens) {
    out.push_back("b=" + prev + "_" + t);
    prev = t;
  }
  out.push_back("b=" + prev + "_" + kEos);
  return out;
}

// Positional features for the per-token tagger: the token itself, a two-token
// window on each side, and the two bigrams around it.
inline std::vector<std::string> tagger_features(std::span<const std::string> tokens,
                                                std::size_t i) {
  const std::string& cur = tokens[i];
  const std::string prev = i > 0 ? tokens[i - 1] : kBos;
  const std::string prev2 = i > 1 ? tokens[i - 2] : kBos;
  const std::string next = i + 1 < tokens.size() ? tokens[i + 1] : kEos;
  const std::string next2 = i + 2 < tokens.size() ? tokens[i + 2] : kEos;
  return {
      "w=" + cur,
      "p=" + prev,
      "p2=" + prev2,
      "n=" + next,
      "n2=" + next2,
      "pw=" + prev + "_" + cur,
      "wn=" + cur + "_" + next,
  };
}

}  // namespace calrank
