#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "calrank/error.hpp"
#include "calrank/types.hpp"

namespace calrank {

enum class Scheme { Baseline, R1, R2, R3 };

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Baseline: return "baseline";
    case Scheme::R1: return "r1";
    case Scheme::R2: return "r2";
    case Scheme::R3: return "r3";
  }
  throw ConfigError("unknown scheme");
}

inline Scheme scheme_from_name(const std::string& name) {
  if (name == "baseline") return Scheme::Baseline;
  if (name == "r1") return Scheme::R1;
  if (name == "r2") return Scheme::R2;
  if (name == "r3") return Scheme::R3;
  throw ConfigError("unknown scheme '" + name + "'");
}

// Sign convention for the calibration loss. `standard` is the negated form of
// the printed expression (an actual cross-entropy, minimized by correct
// calibration); `as_printed` keeps the raw expression for auditability.
enum class CeSign { standard, as_printed };

struct LossConfig {
  double k1 = 1.0;
  double k2 = 1.0;
  // Divide each loss term of the combined objective by its magnitude at the
  // initial weights, so k1 = k2 = 1 means equal importance despite the scale
  // difference between the two losses.
  bool auto_scale = true;
  CeSign ce_sign = CeSign::standard;
  // Strength of a proximal term (prox/2)*||params - warm_start||^2 added to
  // the training objective. The cross-entropy loss has a degenerate global
  // basin far from the warm start (park the correct hypotheses at p ~ 0,
  // then push every confidence to 0); a small anchor excludes it without
  // noticeably moving the nearby calibrated optimum. Off by default.
  double proximal = 0.0;
};

struct OptimizerSettings {
  double initial_step = 1.0;
  int max_iterations = 5000;
  double tolerance = 1e-8;  // stop when |objective delta| falls below this
  int max_halvings = 60;
  bool use_bias = false;
};

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double score(const WeightVector& w, const std::array<double, 3>& l) {
  double s = w.w[0] * l[0] + w.w[1] * l[1] + w.w[2] * l[2];
  if (w.bias) s += *w.bias;
  return s;
}

inline double score(const WeightVector& w, std::span<const double> l) {
  if (l.size() != 3) throw ShapeError("feature vector must have 3 entries");
  return score(w, std::array<double, 3>{l[0], l[1], l[2]});
}

// Softmax over one utterance's hypothesis scores, max-subtracted.
inline std::vector<double> hypothesis_softmax(std::span<const double> scores) {
  if (scores.empty()) throw EmptyInputError("softmax over an empty score list");
  const double m = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] = std::exp(scores[i] - m));
  for (auto& v : p) v /= sum;
  return p;
}

// One hypothesis reduced to what the re-ranker consumes: the component score
// vector and its error targets against the utterance's truth.
struct ScoredHyp {
  std::array<double, 3> l{};
  double semer = 0.0;
  int ie = 1;
};

struct RerankUtterance {
  bool in_domain = false;
  std::vector<ScoredHyp> hyps;
};

struct LossValue {
  double loss = 0.0;
  std::array<double, 3> grad_w{};
  double grad_bias = 0.0;
};

namespace detail {

inline void utterance_scores(const WeightVector& w, const RerankUtterance& utt,
                             std::vector<double>& s) {
  s.resize(utt.hyps.size());
  for (std::size_t i = 0; i < utt.hyps.size(); ++i) s[i] = score(w, utt.hyps[i].l);
}

}  // namespace detail

// Expected-SemER loss for one in-domain utterance:
//   S = lambda1 * sum_i p_i * SemER_i,   p = softmax(scores)
// with the analytic gradient through the softmax.
inline LossValue esemer_loss(const WeightVector& w, const RerankUtterance& utt, double lambda1) {
  if (!utt.in_domain)
    throw ContractError("esemer_loss is only defined on in-domain utterances");
  if (utt.hyps.empty()) throw EmptyInputError("utterance has no hypotheses");

  std::vector<double> s;
  detail::utterance_scores(w, utt, s);
  const auto p = hypothesis_softmax(s);

  double expected = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) expected += p[i] * utt.hyps[i].semer;

  LossValue out;
  out.loss = lambda1 * expected;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double coeff = lambda1 * p[i] * (utt.hyps[i].semer - expected);
    for (int k = 0; k < 3; ++k) out.grad_w[k] += coeff * utt.hyps[i].l[k];
    out.grad_bias += coeff;
  }
  return out;
}

// Expected cross-entropy loss for one utterance:
//   C = lambda2 * sum_i p_i * CE(IE_i, r_i),   r_i = sigmoid(score_i)
// where CE(IE, r) = -[(1-IE) log r + IE log(1-r)] under the standard sign.
// Both p and r depend on the weights, so the gradient carries both paths.
inline LossValue ece_loss(const WeightVector& w, const RerankUtterance& utt, double lambda2,
                          CeSign sign = CeSign::standard) {
  if (utt.hyps.empty()) throw EmptyInputError("utterance has no hypotheses");

  std::vector<double> s;
  detail::utterance_scores(w, utt, s);
  const auto p = hypothesis_softmax(s);

  std::vector<double> ce(p.size()), dce(p.size());
  double expected = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = sigmoid(s[i]);
    const double ie = static_cast<double>(utt.hyps[i].ie);
    ce[i] = (1.0 - ie) * softplus(-s[i]) + ie * softplus(s[i]);
    dce[i] = r - (1.0 - ie);
    expected += p[i] * ce[i];
  }

  LossValue out;
  out.loss = lambda2 * expected;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double ds = lambda2 * p[i] * ((ce[i] - expected) + dce[i]);
    for (int k = 0; k < 3; ++k) out.grad_w[k] += ds * utt.hyps[i].l[k];
    out.grad_bias += ds;
  }
  if (sign == CeSign::as_printed) {
    out.loss = -out.loss;
    for (auto& g : out.grad_w) g = -g;
    out.grad_bias = -out.grad_bias;
  }
  return out;
}

// Full training objective for one scheme over a dataset. lambda1/lambda2 are
// the dataset-derived normalizers; s_scale/c_scale divide the two terms of
// the combined objective (1.0 unless auto-scaling is on).
struct RerankObjective {
  Scheme scheme = Scheme::R3;
  const std::vector<RerankUtterance>* data = nullptr;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  LossConfig cfg;
  double s_scale = 1.0;
  double c_scale = 1.0;
  bool use_bias = false;
  std::array<double, 4> anchor{1.0, 1.0, 1.0, 0.0};

  // Raw (unscaled) sums of the two loss terms and their gradients.
  void term_sums(const WeightVector& w, LossValue& s_term, LossValue& c_term) const {
    s_term = {};
    c_term = {};
    const bool want_s = scheme == Scheme::R1 || scheme == Scheme::R3;
    const bool want_c = scheme == Scheme::R2 || scheme == Scheme::R3;
    for (const auto& utt : *data) {
      if (want_s && utt.in_domain) {
        const auto v = esemer_loss(w, utt, lambda1);
        s_term.loss += v.loss;
        for (int k = 0; k < 3; ++k) s_term.grad_w[k] += v.grad_w[k];
        s_term.grad_bias += v.grad_bias;
      }
      if (want_c) {
        const auto v = ece_loss(w, utt, lambda2, cfg.ce_sign);
        c_term.loss += v.loss;
        for (int k = 0; k < 3; ++k) c_term.grad_w[k] += v.grad_w[k];
        c_term.grad_bias += v.grad_bias;
      }
    }
  }

  double eval(const std::array<double, 4>& params, std::array<double, 4>* grad) const {
    WeightVector w;
    w.w = {params[0], params[1], params[2]};
    if (use_bias) w.bias = params[3];

    LossValue s_term, c_term;
    term_sums(w, s_term, c_term);

    double ks = 0.0, kc = 0.0;
    switch (scheme) {
      case Scheme::R1: ks = 1.0; break;
      case Scheme::R2: kc = 1.0; break;
      case Scheme::R3:
        ks = cfg.k1 / s_scale;
        kc = cfg.k2 / c_scale;
        break;
      case Scheme::Baseline: throw ContractError("baseline has no training objective");
    }
    if (grad) {
      for (int k = 0; k < 3; ++k) (*grad)[k] = ks * s_term.grad_w[k] + kc * c_term.grad_w[k];
      (*grad)[3] = use_bias ? ks * s_term.grad_bias + kc * c_term.grad_bias : 0.0;
    }
    double total = ks * s_term.loss + kc * c_term.loss;
    if (cfg.proximal > 0.0) {
      const int dims = use_bias ? 4 : 3;
      for (int k = 0; k < dims; ++k) {
        const double d = params[k] - anchor[k];
        total += 0.5 * cfg.proximal * d * d;
        if (grad) (*grad)[k] += cfg.proximal * d;
      }
    }
    return total;
  }
};

struct TrainResult {
  WeightVector w;
  Scheme scheme = Scheme::Baseline;
  int iterations = 0;
  double final_loss = 0.0;
  bool converged = true;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double s_scale = 1.0;
  double c_scale = 1.0;
};

namespace detail {

// Convex 1-D fit of the bias at the uniform weights. The softmax p does not
// depend on a shared shift, so the cross-entropy term as a function of the
// bias alone has a monotone derivative; bisect its root. Starting the joint
// descent from this point keeps the optimizer in the basin where ranking and
// calibration cooperate instead of the degenerate one where the bias walks
// off to -inf on out-of-domain mass.
inline double prefit_bias(const std::vector<RerankUtterance>& data, double lambda2) {
  WeightVector w0;
  std::vector<double> s;
  std::vector<std::pair<double, double>> terms;  // (weight, 1 - IE)
  for (const auto& utt : data) {
    if (utt.hyps.empty()) continue;
    utterance_scores(w0, utt, s);
    const auto p = hypothesis_softmax(s);
    for (std::size_t i = 0; i < p.size(); ++i)
      terms.emplace_back(lambda2 * p[i], 1.0 - static_cast<double>(utt.hyps[i].ie));
  }
  // Offsets enter through sigmoid(s_i + b); reuse the per-hypothesis scores.
  std::vector<double> offsets;
  offsets.reserve(terms.size());
  for (const auto& utt : data) {
    if (utt.hyps.empty()) continue;
    for (const auto& h : utt.hyps) offsets.push_back(score(w0, h.l));
  }

  auto derivative = [&](double b) {
    double d = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i)
      d += terms[i].first * (sigmoid(offsets[i] + b) - terms[i].second);
    return d;
  };
  double lo = -40.0, hi = 40.0;
  if (derivative(lo) >= 0.0) return lo;
  if (derivative(hi) <= 0.0) return hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (derivative(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Trains one domain's re-ranker. Baseline returns uniform weights with no
// training pass. The optimizer is full-batch gradient descent with a
// backtracking line search (halve the step until the objective does not
// increase), warm-started from the uniform weights.
inline TrainResult train_reranker(Scheme scheme, const std::vector<RerankUtterance>& data,
                                  const LossConfig& cfg = {}, const OptimizerSettings& opt = {}) {
  TrainResult result;
  result.scheme = scheme;
  result.w.w = {1.0, 1.0, 1.0};
  if (opt.use_bias) result.w.bias = 0.0;
  if (scheme == Scheme::Baseline) return result;

  if (data.empty()) throw TrainingError("re-ranker training set is empty");
  if (!(cfg.k1 + cfg.k2 > 0.0)) throw ConfigError("k1 + k2 must be positive");

  std::size_t n_in_domain = 0;
  for (const auto& utt : data) n_in_domain += utt.in_domain ? 1 : 0;
  if ((scheme == Scheme::R1 || scheme == Scheme::R3) && n_in_domain == 0)
    throw TrainingError("no in-domain utterances in the re-ranker training set");

  RerankObjective obj;
  obj.scheme = scheme;
  obj.data = &data;
  obj.lambda1 = n_in_domain > 0 ? 1.0 / static_cast<double>(n_in_domain) : 0.0;
  obj.lambda2 = 1.0 / static_cast<double>(data.size());
  obj.cfg = cfg;
  obj.use_bias = opt.use_bias;
  result.lambda1 = obj.lambda1;
  result.lambda2 = obj.lambda2;

  std::array<double, 4> x{1.0, 1.0, 1.0, 0.0};
  const bool has_ce_term = scheme == Scheme::R2 || (scheme == Scheme::R3 && cfg.k2 > 0.0);
  if (opt.use_bias && has_ce_term && cfg.ce_sign == CeSign::standard)
    x[3] = detail::prefit_bias(data, obj.lambda2);
  obj.anchor = x;
  if (scheme == Scheme::R3 && cfg.auto_scale) {
    WeightVector w0;
    if (opt.use_bias) w0.bias = x[3];
    LossValue s0, c0;
    obj.term_sums(w0, s0, c0);
    obj.s_scale = std::max(std::abs(s0.loss), 1e-12);
    obj.c_scale = std::max(std::abs(c0.loss), 1e-12);
  }
  result.s_scale = obj.s_scale;
  result.c_scale = obj.c_scale;

  std::array<double, 4> g{};
  double f = obj.eval(x, &g);
  for (int it = 0; it < opt.max_iterations; ++it) {
    double step = opt.initial_step;
    std::array<double, 4> trial{};
    double trial_f = f;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      for (int k = 0; k < 4; ++k) trial[k] = x[k] - step * g[k];
      trial_f = obj.eval(trial, nullptr);
      if (trial_f <= f) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no descent representable; treat as converged
    result.iterations = it + 1;
    const bool done = std::abs(f - trial_f) < opt.tolerance;
    x = trial;
    f = trial_f;
    if (done) break;
    if (it + 1 == opt.max_iterations) {
      result.converged = false;
      break;
    }
    obj.eval(x, &g);
  }

  result.w.w = {x[0], x[1], x[2]};
  if (opt.use_bias) result.w.bias = x[3];
  result.final_loss = f;
  return result;
}

inline void score_hypotheses(const WeightVector& w, std::span<Hypothesis> hyps) {
  for (auto& h : hyps) h.s = score(w, h.l);
}

// Argmax of the re-ranker scores; ties break toward the lowest index.
inline const Hypothesis& top_hypothesis(const WeightVector& w, std::span<Hypothesis> hyps) {
  if (hyps.empty()) throw EmptyInputError("no hypotheses to rank");
  score_hypotheses(w, hyps);
  std::size_t best = 0;
  for (std::size_t i = 1; i < hyps.size(); ++i)
    if (hyps[i].s > hyps[best].s) best = i;
  return hyps[best];
}

}  // namespace calrank
