#include <doctest.h>

#include <cmath>
#include <vector>

#include "calrank/reranker.hpp"
#include "calrank/rng.hpp"
#include "oracles.hpp"

using namespace calrank;

namespace {

ScoredHyp hyp(double p_dc, double p_ic, double p_ner, double semer_value) {
  ScoredHyp h;
  h.l = {std::log(p_dc), std::log(p_ic), std::log(p_ner)};
  h.semer = semer_value;
  h.ie = semer_value == 0.0 ? 0 : 1;
  return h;
}

RerankUtterance random_utterance(Rng& rng, std::size_t max_hyps, bool in_domain) {
  RerankUtterance u;
  u.in_domain = in_domain;
  const std::size_t n = 1 + rng.below(max_hyps);
  bool any_correct = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = (in_domain && !any_correct && rng.bernoulli(0.3)) ? 0.0
                                                                       : rng.uniform(0.1, 2.0);
    any_correct = any_correct || s == 0.0;
    u.hyps.push_back(hyp(rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0),
                         in_domain ? s : rng.uniform(0.5, 2.0)));
    if (!in_domain) u.hyps.back().ie = 1;
  }
  return u;
}

WeightVector random_weights(Rng& rng, bool with_bias) {
  WeightVector w;
  w.w = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
  if (with_bias) w.bias = rng.uniform(-1.0, 1.0);
  return w;
}

}  // namespace

TEST_SUITE("reranker") {
  TEST_CASE("linear score") {
    WeightVector uniform;
    CHECK(score(uniform, {std::log(0.6), std::log(0.9), std::log(0.8)}) ==
          doctest::Approx(std::log(0.6 * 0.9 * 0.8)));

    WeightVector zero;
    zero.w = {0.0, 0.0, 0.0};
    CHECK(score(zero, {-3.0, -1.0, -0.2}) == 0.0);

    WeightVector single;
    single.w = {2.0, 0.0, 0.0};
    CHECK(score(single, {-1.0, -5.0, -9.0}) == doctest::Approx(-2.0));

    WeightVector biased;
    biased.bias = 0.5;
    CHECK(score(biased, {-1.0, -1.0, -1.0}) == doctest::Approx(-2.5));

    std::vector<double> wrong_dim{-1.0, -2.0};
    CHECK_THROWS_AS(score(uniform, std::span<const double>(wrong_dim)), ShapeError);
  }

  TEST_CASE("hypothesis softmax") {
    auto equal = hypothesis_softmax(std::vector<double>{1.3, 1.3});
    CHECK(equal[0] == doctest::Approx(0.5));
    CHECK(equal[1] == doctest::Approx(0.5));

    auto closed = hypothesis_softmax(std::vector<double>{0.0, std::log(3.0)});
    CHECK(closed[0] == doctest::Approx(0.25));
    CHECK(closed[1] == doctest::Approx(0.75));

    auto extreme = hypothesis_softmax(std::vector<double>{-1000.0, 0.0});
    CHECK(std::isfinite(extreme[0]));
    CHECK(std::isfinite(extreme[1]));
    CHECK(extreme[0] == doctest::Approx(0.0));
    CHECK(extreme[1] == doctest::Approx(1.0));

    CHECK_THROWS_AS(hypothesis_softmax(std::vector<double>{}), EmptyInputError);

    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> s;
      for (std::size_t i = 0; i < 1 + rng.below(8); ++i) s.push_back(rng.uniform(-30.0, 5.0));
      auto p = hypothesis_softmax(s);
      double sum = 0.0;
      for (auto v : p) sum += v;
      CHECK(std::abs(sum - 1.0) <= 1e-12);

      // Shift invariance: adding a constant leaves p unchanged.
      auto shifted = s;
      for (auto& v : shifted) v += 7.25;
      auto p2 = hypothesis_softmax(shifted);
      for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(p2[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("esemer loss closed forms") {
    const double lambda1 = 0.25;
    WeightVector w;

    RerankUtterance constant;
    constant.in_domain = true;
    for (int i = 0; i < 3; ++i) constant.hyps.push_back(hyp(0.2 + 0.2 * i, 0.5, 0.5, 0.7));
    auto v = esemer_loss(w, constant, lambda1);
    CHECK(v.loss == doctest::Approx(lambda1 * 0.7));
    for (auto g : v.grad_w) CHECK(g == doctest::Approx(0.0).epsilon(1e-12));

    RerankUtterance single;
    single.in_domain = true;
    single.hyps.push_back(hyp(0.3, 0.4, 0.5, 0.5));
    v = esemer_loss(w, single, lambda1);
    CHECK(v.loss == doctest::Approx(0.5 * lambda1));
    for (auto g : v.grad_w) CHECK(g == doctest::Approx(0.0).epsilon(1e-12));

    RerankUtterance out_of_domain;
    out_of_domain.in_domain = false;
    out_of_domain.hyps.push_back(hyp(0.3, 0.4, 0.5, 1.0));
    CHECK_THROWS_AS(esemer_loss(w, out_of_domain, lambda1), ContractError);
  }

  TEST_CASE("ece loss closed forms") {
    const double lambda2 = 0.125;
    WeightVector zero;
    zero.w = {0.0, 0.0, 0.0};  // score 0 regardless of l, so r = 0.5

    RerankUtterance correct;
    correct.in_domain = true;
    correct.hyps.push_back(hyp(0.3, 0.4, 0.5, 0.0));
    auto v = ece_loss(zero, correct, lambda2);
    CHECK(v.loss == doctest::Approx(lambda2 * std::log(2.0)));

    RerankUtterance wrong;
    wrong.in_domain = true;
    wrong.hyps.push_back(hyp(0.3, 0.4, 0.5, 1.0));
    v = ece_loss(zero, wrong, lambda2);
    CHECK(v.loss == doctest::Approx(lambda2 * std::log(2.0)));

    // The printed sign convention is the exact negation.
    Rng rng(9);
    for (int t = 0; t < 20; ++t) {
      auto u = random_utterance(rng, 5, true);
      auto w = random_weights(rng, false);
      auto std_v = ece_loss(w, u, lambda2, CeSign::standard);
      auto printed = ece_loss(w, u, lambda2, CeSign::as_printed);
      CHECK(printed.loss == doctest::Approx(-std_v.loss));
      for (int k = 0; k < 3; ++k) CHECK(printed.grad_w[k] == doctest::Approx(-std_v.grad_w[k]));
    }
  }

  TEST_CASE("esemer gradient matches finite differences") {
    Rng rng(101);
    for (int t = 0; t < 100; ++t) {
      auto u = random_utterance(rng, 4, true);
      const bool with_bias = rng.bernoulli(0.3);
      auto w = random_weights(rng, with_bias);
      const double lambda1 = rng.uniform(0.05, 1.0);

      auto v = esemer_loss(w, u, lambda1);
      std::vector<double> analytic(v.grad_w.begin(), v.grad_w.end());
      std::vector<double> x(w.w.begin(), w.w.end());
      if (with_bias) {
        analytic.push_back(v.grad_bias);
        x.push_back(*w.bias);
      }
      auto fd = oracles::fd_gradient(
          [&](const std::vector<double>& p) {
            WeightVector wp;
            wp.w = {p[0], p[1], p[2]};
            if (with_bias) wp.bias = p[3];
            return esemer_loss(wp, u, lambda1).loss;
          },
          x);
      CHECK(oracles::gradient_rel_error(analytic, fd) < 1e-5);
    }
  }

  TEST_CASE("ece gradient matches finite differences") {
    Rng rng(202);
    for (int t = 0; t < 100; ++t) {
      auto u = random_utterance(rng, 5, rng.bernoulli(0.7));
      const bool with_bias = rng.bernoulli(0.3);
      auto w = random_weights(rng, with_bias);
      const double lambda2 = rng.uniform(0.05, 1.0);
      const auto sign = rng.bernoulli(0.5) ? CeSign::standard : CeSign::as_printed;

      auto v = ece_loss(w, u, lambda2, sign);
      std::vector<double> analytic(v.grad_w.begin(), v.grad_w.end());
      std::vector<double> x(w.w.begin(), w.w.end());
      if (with_bias) {
        analytic.push_back(v.grad_bias);
        x.push_back(*w.bias);
      }
      auto fd = oracles::fd_gradient(
          [&](const std::vector<double>& p) {
            WeightVector wp;
            wp.w = {p[0], p[1], p[2]};
            if (with_bias) wp.bias = p[3];
            return ece_loss(wp, u, lambda2, sign).loss;
          },
          x);
      CHECK(oracles::gradient_rel_error(analytic, fd) < 1e-5);
    }
  }

  TEST_CASE("combined objective gradient matches finite differences") {
    Rng rng(303);
    for (int t = 0; t < 100; ++t) {
      std::vector<RerankUtterance> data;
      const std::size_t n = 2 + rng.below(4);
      for (std::size_t i = 0; i < n; ++i)
        data.push_back(random_utterance(rng, 4, i == 0 || rng.bernoulli(0.5)));

      RerankObjective obj;
      obj.scheme = Scheme::R3;
      obj.data = &data;
      obj.lambda1 = rng.uniform(0.1, 1.0);
      obj.lambda2 = rng.uniform(0.1, 1.0);
      obj.cfg.k1 = rng.uniform(0.2, 2.0);
      obj.cfg.k2 = rng.uniform(0.2, 2.0);
      obj.s_scale = rng.uniform(0.5, 2.0);
      obj.c_scale = rng.uniform(0.5, 2.0);

      std::array<double, 4> x{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                              rng.uniform(-2.0, 2.0), 0.0};
      std::array<double, 4> g{};
      obj.eval(x, &g);
      auto fd = oracles::fd_gradient(
          [&](const std::vector<double>& p) {
            return obj.eval({p[0], p[1], p[2], 0.0}, nullptr);
          },
          {x[0], x[1], x[2]});
      CHECK(oracles::gradient_rel_error({g[0], g[1], g[2]}, fd) < 1e-5);
    }
  }

  TEST_CASE("proximal term enters the objective and its gradient") {
    Rng rng(909);
    std::vector<RerankUtterance> data;
    for (int i = 0; i < 10; ++i) data.push_back(random_utterance(rng, 4, rng.bernoulli(0.6)));
    data[0].in_domain = true;

    RerankObjective obj;
    obj.scheme = Scheme::R3;
    obj.data = &data;
    obj.lambda1 = 0.3;
    obj.lambda2 = 0.1;
    obj.cfg.proximal = 0.05;
    obj.anchor = {1.0, 1.0, 1.0, 0.0};

    std::array<double, 4> x{0.2, 1.7, -0.4, 0.0};
    std::array<double, 4> g{};
    const double with_prox = obj.eval(x, &g);
    auto fd = oracles::fd_gradient(
        [&](const std::vector<double>& p) { return obj.eval({p[0], p[1], p[2], 0.0}, nullptr); },
        {x[0], x[1], x[2]});
    CHECK(oracles::gradient_rel_error({g[0], g[1], g[2]}, fd) < 1e-5);

    obj.cfg.proximal = 0.0;
    const double without_prox = obj.eval(x, nullptr);
    double dist = 0.0;
    for (int k = 0; k < 3; ++k) dist += (x[k] - 1.0) * (x[k] - 1.0);
    CHECK(with_prox == doctest::Approx(without_prox + 0.5 * 0.05 * dist));
  }

  TEST_CASE("bias pre-fit lands at the calibration stationary point") {
    Rng rng(910);
    std::vector<RerankUtterance> data;
    for (int i = 0; i < 50; ++i) data.push_back(random_utterance(rng, 5, rng.bernoulli(0.5)));
    const double lambda2 = 1.0 / static_cast<double>(data.size());
    const double b = detail::prefit_bias(data, lambda2);
    CHECK(std::abs(b) < 40.0);

    // Derivative of the bias-only cross-entropy at the fitted point.
    WeightVector w0;
    double deriv = 0.0;
    std::vector<double> s;
    for (const auto& utt : data) {
      detail::utterance_scores(w0, utt, s);
      auto p = hypothesis_softmax(s);
      for (std::size_t i = 0; i < p.size(); ++i)
        deriv += lambda2 * p[i] *
                 (sigmoid(s[i] + b) - (1.0 - static_cast<double>(utt.hyps[i].ie)));
    }
    CHECK(std::abs(deriv) < 1e-9);
  }

  TEST_CASE("minimizing expected semer with free scores concentrates on the best hypothesis") {
    // Optimize one free score per hypothesis (not w): the softmax must pile
    // onto the minimum-SemER hypothesis.
    const std::vector<double> semers = {1.0, 0.25, 0.75, 1.5};
    std::vector<double> s(semers.size(), 0.0);
    for (int iter = 0; iter < 5000; ++iter) {
      auto p = hypothesis_softmax(s);
      double expected = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) expected += p[i] * semers[i];
      for (std::size_t i = 0; i < s.size(); ++i) s[i] -= 1.0 * p[i] * (semers[i] - expected);
    }
    auto p = hypothesis_softmax(s);
    CHECK(p[1] > 0.95);  // index of the smallest SemER
  }

  TEST_CASE("baseline scheme returns uniform weights without training") {
    std::vector<RerankUtterance> data;  // even an empty set is fine
    auto r = train_reranker(Scheme::Baseline, data);
    CHECK(r.w.w == std::array<double, 3>{1.0, 1.0, 1.0});
    CHECK(r.iterations == 0);
  }

  TEST_CASE("r3 with k2 = 0 degenerates to r1") {
    Rng rng(404);
    std::vector<RerankUtterance> data;
    for (int i = 0; i < 30; ++i) data.push_back(random_utterance(rng, 5, rng.bernoulli(0.6)));
    if (!std::any_of(data.begin(), data.end(), [](const auto& u) { return u.in_domain; }))
      data[0].in_domain = true;

    LossConfig r1_cfg;
    LossConfig r3_cfg;
    r3_cfg.k1 = 1.0;
    r3_cfg.k2 = 0.0;
    r3_cfg.auto_scale = false;  // identical objective, identical trajectory
    OptimizerSettings opt;
    auto r1 = train_reranker(Scheme::R1, data, r1_cfg, opt);
    auto r3 = train_reranker(Scheme::R3, data, r3_cfg, opt);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(r1.w.w[k] - r3.w.w[k]) < 1e-6);
  }

  TEST_CASE("r2 learns to trust the informative coordinate") {
    // The correct hypothesis always wins on ic_logprob; dc and ner are noise.
    auto make_set = [](std::uint64_t seed, std::size_t n) {
      Rng rng(seed);
      std::vector<RerankUtterance> data;
      for (std::size_t i = 0; i < n; ++i) {
        RerankUtterance u;
        u.in_domain = true;
        const double dc = rng.uniform(0.2, 0.9);
        auto correct = hyp(dc, 0.8, rng.uniform(0.1, 0.9), 0.0);
        auto incorrect = hyp(dc, 0.3, rng.uniform(0.1, 0.95), 1.0);
        if (rng.bernoulli(0.5)) {
          u.hyps = {correct, incorrect};
        } else {
          u.hyps = {incorrect, correct};
        }
        data.push_back(std::move(u));
      }
      return data;
    };

    auto train_set = make_set(1, 400);
    auto test_set = make_set(2, 400);
    auto r2 = train_reranker(Scheme::R2, train_set);

    auto ie_rate = [](const WeightVector& w, const std::vector<RerankUtterance>& set) {
      double errors = 0.0;
      for (const auto& u : set) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < u.hyps.size(); ++i)
          if (score(w, u.hyps[i].l) > score(w, u.hyps[best].l)) best = i;
        errors += u.hyps[best].ie;
      }
      return errors / static_cast<double>(set.size());
    };

    WeightVector baseline;
    CHECK(ie_rate(r2.w, test_set) < ie_rate(baseline, test_set));
  }

  TEST_CASE("r1 requires in-domain data") {
    Rng rng(505);
    std::vector<RerankUtterance> data;
    for (int i = 0; i < 10; ++i) data.push_back(random_utterance(rng, 3, false));
    CHECK_THROWS_AS(train_reranker(Scheme::R1, data), TrainingError);
    CHECK_THROWS_AS(train_reranker(Scheme::R1, {}), TrainingError);
  }

  TEST_CASE("training is deterministic and decreases the objective") {
    Rng rng(606);
    std::vector<RerankUtterance> data;
    for (int i = 0; i < 40; ++i) data.push_back(random_utterance(rng, 5, rng.bernoulli(0.5)));
    data[0].in_domain = true;

    auto a = train_reranker(Scheme::R3, data);
    auto b = train_reranker(Scheme::R3, data);
    CHECK(a.w.w == b.w.w);
    CHECK(a.final_loss == b.final_loss);
    CHECK(a.iterations == b.iterations);

    // Final objective no worse than the warm start.
    RerankObjective obj;
    obj.scheme = Scheme::R3;
    obj.data = &data;
    obj.lambda1 = a.lambda1;
    obj.lambda2 = a.lambda2;
    obj.cfg = LossConfig{};
    obj.s_scale = a.s_scale;
    obj.c_scale = a.c_scale;
    CHECK(a.final_loss <= obj.eval({1.0, 1.0, 1.0, 0.0}, nullptr) + 1e-12);
  }

  TEST_CASE("argmax is invariant to positive rescaling of w") {
    Rng rng(707);
    for (int t = 0; t < 50; ++t) {
      auto u = random_utterance(rng, 6, true);
      auto w = random_weights(rng, false);
      WeightVector scaled;
      const double c = rng.uniform(0.1, 5.0);
      for (int k = 0; k < 3; ++k) scaled.w[k] = c * w.w[k];

      auto argmax = [&](const WeightVector& wv) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < u.hyps.size(); ++i)
          if (score(wv, u.hyps[i].l) > score(wv, u.hyps[best].l)) best = i;
        return best;
      };
      CHECK(argmax(w) == argmax(scaled));
    }
  }

  TEST_CASE("top hypothesis argmax and tie-breaking") {
    std::vector<Hypothesis> hyps(2);
    hyps[0].index = 0;
    hyps[0].l = {-1.0, 0.0, 0.0};
    hyps[1].index = 1;
    hyps[1].l = {-0.5, 0.0, 0.0};
    WeightVector w;
    CHECK(top_hypothesis(w, hyps).index == 1);

    hyps[1].l = hyps[0].l;  // exact tie
    CHECK(top_hypothesis(w, hyps).index == 0);

    std::vector<Hypothesis> none;
    CHECK_THROWS_AS(top_hypothesis(w, none), EmptyInputError);
  }

  TEST_CASE("uniform weights rank like the log-probability sum") {
    Rng rng(808);
    WeightVector w;
    for (int t = 0; t < 50; ++t) {
      auto u = random_utterance(rng, 4, true);
      std::vector<Hypothesis> hyps(u.hyps.size());
      for (std::size_t i = 0; i < hyps.size(); ++i) {
        hyps[i].l = u.hyps[i].l;
        hyps[i].index = i;
      }
      std::size_t by_sum = 0;
      for (std::size_t i = 1; i < hyps.size(); ++i) {
        const auto sum = [&](std::size_t k) {
          return hyps[k].l[0] + hyps[k].l[1] + hyps[k].l[2];
        };
        if (sum(i) > sum(by_sum)) by_sum = i;
      }
      CHECK(top_hypothesis(w, hyps).index == by_sum);
    }
  }
}
