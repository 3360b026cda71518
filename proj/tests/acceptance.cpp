// Acceptance suite: runs every acceptance criterion end to end and prints one
// pass/fail line per criterion. Exit code is the number of failed criteria.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "calrank/calrank.hpp"
#include "oracles.hpp"

using namespace calrank;
namespace fs = std::filesystem;

namespace {

struct CriterionResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const auto start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// --- shared benchmark runs ---------------------------------------------------

struct SeedRun {
  std::map<std::string, double> semer;  // by scheme
  std::map<std::string, double> ece;    // by scheme, cross-domain
  double desync_delta_pct = 0.0;
  double wall_seconds = 0.0;
};

SeedRun run_benchmark_seed(const std::string& out_root, std::uint64_t seed) {
  const auto t0 = now_seconds();
  auto cfg = default_benchmark_config(out_root + "/seed" + std::to_string(seed), seed);
  Pipeline p(cfg, /*force=*/true);
  auto result = p.run_all();
  auto desync = p.run_desync();

  SeedRun run;
  for (const auto& row : result.comparison.rows) {
    run.semer[row.scheme] = row.semer;
    run.ece[row.scheme] = row.ece;
  }
  run.desync_delta_pct = desync.relative_delta_pct;
  run.wall_seconds = now_seconds() - t0;
  return run;
}

// --- criteria ----------------------------------------------------------------

CriterionResult gradient_oracle() {
  CriterionResult res{"gradient-oracle"};
  const auto t0 = now_seconds();
  Rng rng(2024);
  double worst = 0.0;
  std::size_t checked = 0;

  auto random_utt = [&](bool in_domain) {
    RerankUtterance u;
    u.in_domain = in_domain;
    const std::size_t n = 1 + rng.below(6);
    for (std::size_t i = 0; i < n; ++i) {
      ScoredHyp h;
      h.l = {std::log(rng.uniform(0.05, 1.0)), std::log(rng.uniform(0.05, 1.0)),
             std::log(rng.uniform(0.05, 1.0))};
      h.semer = in_domain && rng.bernoulli(0.25) ? 0.0 : rng.uniform(0.1, 2.0);
      h.ie = h.semer == 0.0 ? 0 : 1;
      u.hyps.push_back(h);
    }
    return u;
  };
  auto check = [&](const std::vector<double>& analytic, const std::vector<double>& fd) {
    worst = std::max(worst, oracles::gradient_rel_error(analytic, fd));
    ++checked;
  };

  for (int t = 0; t < 100; ++t) {  // esemer
    auto u = random_utt(true);
    WeightVector w;
    w.w = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    const double lambda1 = rng.uniform(0.05, 1.0);
    auto v = esemer_loss(w, u, lambda1);
    auto fd = oracles::fd_gradient(
        [&](const std::vector<double>& x) {
          WeightVector wx;
          wx.w = {x[0], x[1], x[2]};
          return esemer_loss(wx, u, lambda1).loss;
        },
        {w.w[0], w.w[1], w.w[2]});
    check({v.grad_w[0], v.grad_w[1], v.grad_w[2]}, fd);
  }

  for (int t = 0; t < 100; ++t) {  // ece
    auto u = random_utt(rng.bernoulli(0.6));
    WeightVector w;
    w.w = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    const double lambda2 = rng.uniform(0.05, 1.0);
    auto v = ece_loss(w, u, lambda2);
    auto fd = oracles::fd_gradient(
        [&](const std::vector<double>& x) {
          WeightVector wx;
          wx.w = {x[0], x[1], x[2]};
          return ece_loss(wx, u, lambda2).loss;
        },
        {w.w[0], w.w[1], w.w[2]});
    check({v.grad_w[0], v.grad_w[1], v.grad_w[2]}, fd);
  }

  for (int t = 0; t < 100; ++t) {  // r3 combination
    std::vector<RerankUtterance> data;
    const std::size_t n = 2 + rng.below(4);
    for (std::size_t i = 0; i < n; ++i) data.push_back(random_utt(i == 0 || rng.bernoulli(0.5)));
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
        [&](const std::vector<double>& p) { return obj.eval({p[0], p[1], p[2], 0.0}, nullptr); },
        {x[0], x[1], x[2]});
    check({g[0], g[1], g[2]}, fd);
  }

  const double elapsed = now_seconds() - t0;
  res.pass = worst < 1e-5 && elapsed < 10.0;
  res.detail = fmt("%zu instances, worst rel err %.2e, %.2f s", checked, worst, elapsed);
  return res;
}

CriterionResult semer_oracle() {
  CriterionResult res{"semer-oracle"};
  Rng rng(31337);
  const std::vector<std::string> types = {"A", "B", "C"};
  const std::vector<std::string> values = {"x", "y", "z", "w"};
  auto random_slots = [&]() {
    std::vector<SlotChunk> slots;
    const std::size_t n = rng.below(7);
    for (std::size_t i = 0; i < n; ++i) {
      SlotChunk c;
      c.type = rng.pick(types);
      c.text = rng.pick(values);
      slots.push_back(c);
    }
    return slots;
  };

  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    Annotation truth;
    truth.intent = rng.bernoulli(0.5) ? "I1" : "I2";
    truth.slots = random_slots();
    Hypothesis h;
    h.intent = rng.bernoulli(0.5) ? "I1" : "I2";
    h.slots = random_slots();

    auto hs = sem_sequence(h.intent, h.slots);
    auto ts = sem_sequence(truth.intent, truth.slots);
    const double expected =
        static_cast<double>(oracles::edit_distance(hs, ts)) / static_cast<double>(ts.size());
    if (semer(h, truth) != expected) ++mismatches;
  }
  res.pass = mismatches == 0;
  res.detail = fmt("1000 random pairs, %zu mismatches", mismatches);
  return res;
}

CriterionResult eq5_identity(const std::string& out_root) {
  CriterionResult res{"eq5-identity"};
  // Reuse the seed-1 benchmark artifacts; rebuild the in-memory state.
  auto cfg = default_benchmark_config(out_root + "/seed1", 1);
  Pipeline p(cfg);
  p.ensure_hypotheses();

  std::map<std::string, WeightVector> uniform;
  for (const auto& schema : p.schemas()) uniform[schema.name] = WeightVector{};

  std::size_t violations = 0;
  const auto& test = p.test_split();
  const auto& hyps = p.test_hypotheses();
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto nb = merge_nbest(test[i].id, hyps[i], uniform, 1000000);

    struct Key {
      double sum;
      std::string domain;
      std::size_t index;
    };
    std::vector<Key> oracle;
    for (const auto& per_domain : hyps[i])
      for (const auto& h : per_domain)
        oracle.push_back({h.l[0] + h.l[1] + h.l[2], h.domain, h.index});
    std::sort(oracle.begin(), oracle.end(), [](const Key& a, const Key& b) {
      if (a.sum != b.sum) return a.sum > b.sum;
      if (a.domain != b.domain) return a.domain < b.domain;
      return a.index < b.index;
    });

    if (oracle.size() != nb.entries.size()) {
      ++violations;
      continue;
    }
    for (std::size_t k = 0; k < oracle.size(); ++k) {
      const auto& e = nb.entries[k];
      if (e.s != oracle[k].sum || e.hyp.domain != oracle[k].domain ||
          e.hyp.index != oracle[k].index) {
        ++violations;
        break;
      }
    }
  }
  res.pass = violations == 0;
  res.detail = fmt("%zu test utterances, %zu ranking mismatches", test.size(), violations);
  return res;
}

CriterionResult table1_directional(const std::vector<SeedRun>& runs) {
  CriterionResult res{"table1-directional"};
  double baseline = 0.0, r1 = 0.0, r2 = 0.0, r3 = 0.0, worst_seconds = 0.0;
  for (const auto& run : runs) {
    baseline += run.semer.at("baseline");
    r1 += run.semer.at("r1");
    r2 += run.semer.at("r2");
    r3 += run.semer.at("r3");
    worst_seconds = std::max(worst_seconds, run.wall_seconds);
  }
  const auto n = static_cast<double>(runs.size());
  baseline /= n;
  r1 /= n;
  r2 /= n;
  r3 /= n;

  const double r3_gain = relative_improvement(baseline, r3);
  const bool ordering = r3 <= r2 && r2 <= baseline && r1 <= baseline;
  const bool margin = r3_gain >= 1.0;
  const bool time_ok = worst_seconds < 300.0;
  res.pass = ordering && margin && time_ok;
  res.detail = fmt(
      "mean SemER baseline %.4f, r1 %.4f, r2 %.4f, r3 %.4f; r3 gain %.1f%%; slowest seed %.0f s",
      baseline, r1, r2, r3, r3_gain, worst_seconds);
  return res;
}

CriterionResult fig4_directional(const std::vector<SeedRun>& runs) {
  CriterionResult res{"fig4-directional"};
  double baseline = 0.0, r1 = 0.0, r2 = 0.0, r3 = 0.0;
  for (const auto& run : runs) {
    baseline += run.ece.at("baseline");
    r1 += run.ece.at("r1");
    r2 += run.ece.at("r2");
    r3 += run.ece.at("r3");
  }
  const auto n = static_cast<double>(runs.size());
  baseline /= n;
  r1 /= n;
  r2 /= n;
  r3 /= n;
  res.pass = r2 <= 0.8 * baseline && r2 <= 0.8 * r1 && r3 <= 0.8 * baseline && r3 <= 0.8 * r1;
  res.detail =
      fmt("mean ECE baseline %.4f, r1 %.4f, r2 %.4f, r3 %.4f", baseline, r1, r2, r3);
  return res;
}

CriterionResult desync_reproduction(const std::vector<SeedRun>& runs) {
  CriterionResult res{"desync-reproduction"};
  double mean_delta = 0.0;
  for (const auto& run : runs) mean_delta += run.desync_delta_pct;
  mean_delta /= static_cast<double>(runs.size());
  res.pass = mean_delta < 1.0;
  res.detail = fmt("mean relative SemER delta %.3f%% (threshold < 1%%)", mean_delta);
  return res;
}

CriterionResult invariants(const std::string& out_root) {
  CriterionResult res{"normalization-partition-invariants"};
  std::vector<std::string> problems;
  Rng rng(55);

  // Softmax normalization within 1e-12.
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s;
    for (std::size_t i = 0; i < 1 + rng.below(10); ++i) s.push_back(rng.uniform(-40.0, 10.0));
    auto p = hypothesis_softmax(s);
    double sum = 0.0;
    for (auto v : p) sum += v;
    if (std::abs(sum - 1.0) > 1e-12) problems.push_back("softmax sum off by more than 1e-12");
  }

  // Reliability bins partition every entry.
  {
    std::vector<std::pair<double, int>> entries{{0.0, 0}, {1.0, 0}};
    for (int i = 0; i < 5000; ++i) entries.emplace_back(rng.uniform(), rng.bernoulli(0.5) ? 0 : 1);
    auto rep = reliability(entries);
    std::size_t total = 0;
    for (const auto& bin : rep.bins) total += bin.count;
    if (total != entries.size()) problems.push_back("bins do not partition the entries");

    const double base_ece = rep.ece;
    rng.shuffle(entries);
    if (std::abs(reliability(entries).ece - base_ece) > 1e-12)
      problems.push_back("ece changed under permutation");
  }

  // Determinism: same seed, fresh directories, byte-identical reports.
  {
    auto cfg_a = default_benchmark_config(out_root + "/det_a", 11);
    auto cfg_b = default_benchmark_config(out_root + "/det_b", 11);
    for (auto* cfg : {&cfg_a, &cfg_b}) {
      cfg->n_train = 1200;
      cfg->n_dev = 400;
      cfg->n_test = 300;
      cfg->components.epochs = 50;
      cfg->optimizer.max_iterations = 500;
      cfg->k2_grid = {1.0};
    }
    fs::remove_all(cfg_a.out_dir);
    fs::remove_all(cfg_b.out_dir);
    run_pipeline(cfg_a);
    run_pipeline(cfg_b);
    for (const auto* name :
         {"comparison.json", "comparison.txt", "report_baseline.json", "report_r1.json",
          "report_r2.json", "report_r3.json", "nbest_r3.jsonl", "curves_r3_all.tsv",
          "corpus_test.jsonl", "models.json", "weights_r3_Music.json"}) {
      if (read_file(cfg_a.out_dir + "/" + name) != read_file(cfg_b.out_dir + "/" + name)) {
        problems.push_back(std::string("file differs across identical runs: ") + name);
      }
    }
  }

  res.pass = problems.empty();
  res.detail = problems.empty() ? "softmax, binning, permutation, determinism all hold"
                                : problems.front();
  return res;
}

}  // namespace

int main(int argc, char** argv) {
  std::string out_root = "acceptance_out";
  std::size_t seeds = 5;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--out" && i + 1 < argc) out_root = argv[++i];
    if (arg == "--seeds" && i + 1 < argc) seeds = std::stoul(argv[++i]);
  }
  fs::create_directories(out_root);

  std::vector<CriterionResult> results;
  results.push_back(gradient_oracle());
  results.push_back(semer_oracle());

  std::vector<SeedRun> runs;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    runs.push_back(run_benchmark_seed(out_root, seed));
    std::printf("  [seed %llu] semer baseline %.4f r1 %.4f r2 %.4f r3 %.4f | "
                "ece baseline %.3f r1 %.3f r2 %.3f r3 %.3f | desync %+0.2f%% | %.0f s\n",
                static_cast<unsigned long long>(seed), runs.back().semer.at("baseline"),
                runs.back().semer.at("r1"), runs.back().semer.at("r2"),
                runs.back().semer.at("r3"), runs.back().ece.at("baseline"),
                runs.back().ece.at("r1"), runs.back().ece.at("r2"), runs.back().ece.at("r3"),
                runs.back().desync_delta_pct, runs.back().wall_seconds);
    std::fflush(stdout);
  }

  results.push_back(eq5_identity(out_root));
  results.push_back(table1_directional(runs));
  results.push_back(fig4_directional(runs));
  results.push_back(desync_reproduction(runs));
  results.push_back(invariants(out_root));

  int failures = 0;
  for (const auto& r : results) {
    std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    failures += r.pass ? 0 : 1;
  }
  return failures;
}
