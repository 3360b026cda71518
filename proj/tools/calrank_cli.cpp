// Experiment driver for the calibrated cross-domain hypothesis re-ranker.
//
// Subcommands run individual pipeline stages (each stage pulls in whatever
// upstream stages it needs, skipping anything cached in the output directory)
// or the whole experiment at once.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "calrank/calrank.hpp"

using namespace calrank;

namespace {

void add_config_options(CLI::App& app, ExperimentConfig& cfg, std::string& config_path,
                        std::vector<std::string>& temperatures,
                        std::vector<std::string>& schemes) {
  app.add_option("--config", config_path,
                 "JSON config file; its fields override the command-line flags");
  app.add_option("--out", cfg.out_dir, "Output directory for all artifacts");
  app.add_option("--seed", cfg.seed, "Master seed for corpus and training");
  app.add_option("--schema", cfg.schema_path,
                 "Domain schema file (omit to use the built-in benchmark schemas)");
  app.add_option("--train", cfg.n_train, "Training-split size");
  app.add_option("--dev", cfg.n_dev, "Development-split size (re-ranker training data)");
  app.add_option("--test", cfg.n_test, "Test-split size");
  app.add_option("--beam-ic", cfg.beam_ic, "IC beam width");
  app.add_option("--beam-ner", cfg.beam_ner, "NER beam width");
  app.add_option("--nbest", cfg.nbest, "Cross-domain n-best size");
  app.add_option("--schemes", schemes, "Re-ranker schemes (baseline r1 r2 r3)");
  app.add_option("--k1", cfg.loss.k1, "Expected-SemER term weight for r3");
  app.add_option("--k2", cfg.loss.k2, "Expected-cross-entropy term weight for r3");
  app.add_option("--proximal", cfg.loss.proximal,
                 "Proximal anchor strength for re-ranker training (0 disables)");
  app.add_option("--ner-temperature", cfg.skew.component.ner,
                 "Global NER temperature multiplier (>1 flattens the tagger)");
  app.add_flag_callback(
      "--no-auto-scale", [&cfg] { cfg.loss.auto_scale = false; },
      "Disable dividing each r3 loss term by its initial magnitude");
  app.add_option_function<std::string>(
      "--ce-sign",
      [&cfg](const std::string& v) {
        cfg.loss.ce_sign = v == "as_printed" ? CeSign::as_printed : CeSign::standard;
      },
      "Cross-entropy sign convention: standard | as_printed");
  app.add_option("--epochs", cfg.components.epochs, "Component training epochs");
  app.add_option("--l2", cfg.components.l2, "Component L2 regularization");
  app.add_option("--gd-step", cfg.components.step, "Component gradient-descent step");
  app.add_option("--max-iterations", cfg.optimizer.max_iterations,
                 "Re-ranker optimizer iteration cap");
  app.add_option("--tolerance", cfg.optimizer.tolerance, "Re-ranker convergence tolerance");
  app.add_flag("--bias,!--no-bias", cfg.optimizer.use_bias,
               "Train a bias term in the re-ranker (on for the default benchmark)");
  app.add_option("--temperature", temperatures,
                 "Per-domain score temperature, e.g. --temperature Music=0.5 (T<1 sharpens)");
  app.add_option("--desync-fraction", cfg.desync_fraction,
                 "Per-domain sample fraction for the desync experiment");
  app.add_option("--tune-fraction", cfg.tune_fraction,
                 "Share of the dev split held out for k1/k2 selection");
  app.add_option("--k2-grid", cfg.k2_grid, "Candidate k2 values tried on the tune split");
  app.add_option_function<double>(
      "--reject-threshold", [&cfg](double v) { cfg.reject_threshold = v; },
      "Reject decodes whose top confidence r falls below this value");
}

void finalize_config(ExperimentConfig& cfg, const std::string& config_path,
                     const std::vector<std::string>& temperatures,
                     const std::vector<std::string>& schemes) {
  for (const auto& spec : temperatures) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--temperature expects Domain=value, got '" + spec + "'");
    cfg.skew.temperature[spec.substr(0, eq)] = std::stod(spec.substr(eq + 1));
  }
  if (!schemes.empty()) {
    cfg.schemes.clear();
    for (const auto& name : schemes) cfg.schemes.push_back(scheme_from_name(name));
  }
  if (!config_path.empty()) cfg.apply_json(Json::parse(read_file(config_path)));
  cfg.validate();
}

void print_stage_summary(const Pipeline& p) {
  for (const auto& s : p.result().stages_run) std::printf("stage %-11s rebuilt\n", s.c_str());
  for (const auto& s : p.result().stages_skipped)
    std::printf("stage %-11s up to date\n", s.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calrank: calibrated cross-domain NLU hypothesis re-ranking experiments"};
  app.require_subcommand(1);

  ExperimentConfig cfg = default_benchmark_config();
  std::string config_path;
  std::vector<std::string> temperatures, schemes;
  bool force = false;
  app.add_flag("--force", force, "Ignore cached stage outputs and rebuild everything");
  add_config_options(app, cfg, config_path, temperatures, schemes);

  auto* gen = app.add_subcommand("gen-corpus", "Generate the synthetic corpus splits");
  auto* comp = app.add_subcommand("train-components", "Train per-domain DC/IC/NER models");
  auto* rr = app.add_subcommand("train-reranker", "Train re-ranker weights for every scheme");
  auto* eval = app.add_subcommand("evaluate", "Decode the test split and write reports");
  auto* calib = app.add_subcommand("calib-report", "Write reliability curves and the comparison");
  auto* desync =
      app.add_subcommand("desync-experiment", "Retrain r3 on per-domain independent samples");
  auto* all = app.add_subcommand("run-all", "Run the full pipeline end to end");
  for (auto* sub : {gen, comp, rr, eval, calib, desync, all}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    finalize_config(cfg, config_path, temperatures, schemes);
    Pipeline pipeline(cfg, force);

    if (gen->parsed()) {
      pipeline.ensure_corpus();
      std::printf("corpus: %zu train / %zu dev / %zu test utterances in %s\n",
                  pipeline.train_split().size(), pipeline.dev_split().size(),
                  pipeline.test_split().size(), cfg.out_dir.c_str());
    } else if (comp->parsed()) {
      pipeline.ensure_components();
      std::printf("trained components for %zu domains\n", pipeline.models().size());
    } else if (rr->parsed()) {
      pipeline.ensure_rerankers();
      for (const auto& [scheme, by_domain] : pipeline.weights())
        for (const auto& [domain, w] : by_domain)
          std::printf("%-8s %-8s w = (%.4f, %.4f, %.4f)\n", scheme.c_str(), domain.c_str(),
                      w.w[0], w.w[1], w.w[2]);
    } else if (eval->parsed()) {
      pipeline.ensure_eval();
      for (const auto& [scheme, report] : pipeline.result().reports)
        std::printf("%-8s semer %.6f  ie_rate %.6f  (n=%zu)\n", scheme.c_str(),
                    report.semer_mean, report.ie_rate, report.n_utterances);
      pipeline.ensure_calibration();
    } else if (calib->parsed()) {
      pipeline.ensure_calibration();
      std::fputs(comparison_to_text(pipeline.result().comparison).c_str(), stdout);
      std::printf("curve data written under %s (curves_<scheme>_<scope>.tsv)\n",
                  cfg.out_dir.c_str());
    } else if (desync->parsed()) {
      auto res = pipeline.run_desync();
      std::printf("full-data r3 semer    %.6f\n", res.full_semer);
      std::printf("desync r3 semer       %.6f\n", res.desync_semer);
      std::printf("relative delta        %+.3f%%\n", res.relative_delta_pct);
      for (const auto& [domain, n] : res.sample_sizes)
        std::printf("  %-8s trained on %zu utterances\n", domain.c_str(), n);
    } else if (all->parsed()) {
      auto result = pipeline.run_all();
      print_stage_summary(pipeline);
      std::fputs(comparison_to_text(result.comparison).c_str(), stdout);
      const auto& rows = result.comparison.rows;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[0].scheme != "baseline") break;
        std::printf("%s vs baseline: %+0.2f%% relative SemER improvement\n",
                    rows[i].scheme.c_str(),
                    relative_improvement(rows[0].semer, rows[i].semer));
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
