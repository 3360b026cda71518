#pragma once

#include <vector>

#include "calrank/error.hpp"
#include "calrank/types.hpp"

namespace calrank {

// Cartesian product of the IC and NER beams, ic-major. Component scores are
// copied verbatim into each hypothesis's feature vector; nothing is
// renormalized.
inline std::vector<Hypothesis> build_hypotheses(const ComponentScores& cs) {
  if (cs.ic.empty() || cs.ner.empty())
    throw EmptyInputError("component scores for '" + cs.domain + "' have an empty ic or ner list");

  std::vector<Hypothesis> out;
  out.reserve(cs.ic.size() * cs.ner.size());
  for (const auto& [intent, ic_lp] : cs.ic) {
    for (const auto& [chunks, ner_lp] : cs.ner) {
      Hypothesis h;
      h.domain = cs.domain;
      h.intent = intent;
      h.slots = chunks;
      h.l = {cs.dc_logprob, ic_lp, ner_lp};
      h.index = out.size();
      out.push_back(std::move(h));
    }
  }
  return out;
}

}  // namespace calrank
