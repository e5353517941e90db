#include <omp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <optional>

#include "md/cli.hpp"

namespace fs = std::filesystem;

namespace md::cli {
namespace {

void setup_logging() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::stderr_color_mt("mdpad");
    l->set_pattern("[%l] %v");
    return l;
  }();
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("MD_LOG");
  spdlog::level::level_enum level = spdlog::level::info;
  if (env && *env) {
    level = spdlog::level::from_str(env);
    // from_str maps anything unknown to "off"; only honour it when asked for.
    if (level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::info;
  }
  logger->set_level(level);
}

struct Common {
  std::string manifest;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

void add_common(CLI::App* sub, Common& c, bool manifest) {
  if (manifest) sub->add_option("--manifest", c.manifest, "Video manifest (default: <out>/manifest.tsv)");
  sub->add_option("--config", c.config, "key=value configuration file");
  sub->add_option("--out", c.out, "Output directory (default: out)");
  sub->add_option("--seed", c.seed, "Run seed");
  sub->add_option("--jobs", c.jobs, "Worker threads (default: all cores)")->check(CLI::PositiveNumber);
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (!c.out.empty()) cfg.out = c.out;
  if (c.seed) cfg.seed = *c.seed;
  if (c.jobs) cfg.jobs = *c.jobs;
  cfg.apply_seed();
  cfg.validate();
  omp_set_max_active_levels(1);
  omp_set_num_threads(cfg.jobs > 0 ? cfg.jobs : omp_get_num_procs());
  return cfg;
}

Manifest resolve_manifest(const Common& c, const RunConfig& cfg) {
  return load_manifest(c.manifest.empty() ? cfg.out / "manifest.tsv" : fs::path(c.manifest));
}

}  // namespace

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  setup_logging();
  CLI::App app{"mdpad: motion-distilled synthetic images and stacked recurrent classifiers for face liveness"};
  app.require_subcommand(1);

  Common gen_c, dist_c, feat_c, train_c, eval_c, bench_c;
  bool resume = false;
  std::string models, val_scores, test_scores;

  auto* gen = app.add_subcommand("gen-corpus", "Render a synthetic live/attack video corpus and its manifest");
  add_common(gen, gen_c, false);
  auto* dist = app.add_subcommand("distill", "Spatiotemporal images and blended synthetic subsets per video");
  add_common(dist, dist_c, true);
  auto* feat = app.add_subcommand("features", "Per-segment feature vectors for every subset");
  add_common(feat, feat_c, true);
  auto* train = app.add_subcommand("train", "Out-of-fold base classifiers and the stacked meta classifier");
  add_common(train, train_c, true);
  train->add_flag("--resume", resume, "Keep an existing model bundle under <out>/models");
  auto* ev = app.add_subcommand("eval", "Score val/test videos and report AUC, EER and HTER");
  add_common(ev, eval_c, true);
  ev->add_option("--models", models, "Model bundle directory (default: <out>/models)");
  auto* vs = ev->add_option("--val-scores", val_scores, "Use this score file instead of the models");
  auto* ts = ev->add_option("--test-scores", test_scores, "Use this score file instead of the models");
  vs->needs(ts);
  ts->needs(vs);
  auto* bench = app.add_subcommand("bench", "Time the distillation stages on one segment");
  add_common(bench, bench_c, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) {
      cmd_gen_corpus(resolve_config(gen_c));
    } else if (dist->parsed()) {
      const RunConfig cfg = resolve_config(dist_c);
      cmd_distill(resolve_manifest(dist_c, cfg), cfg);
    } else if (feat->parsed()) {
      const RunConfig cfg = resolve_config(feat_c);
      cmd_features(resolve_manifest(feat_c, cfg), cfg);
    } else if (train->parsed()) {
      const RunConfig cfg = resolve_config(train_c);
      cmd_train(resolve_manifest(train_c, cfg), cfg, resume);
    } else if (ev->parsed()) {
      const RunConfig cfg = resolve_config(eval_c);
      if (!val_scores.empty()) {
        cmd_eval_scores(cfg, val_scores, test_scores);
      } else {
        cmd_eval(resolve_manifest(eval_c, cfg), cfg, models.empty() ? cfg.out / "models" : fs::path(models));
      }
    } else if (bench->parsed()) {
      RunConfig cfg = resolve_config(bench_c);
      // Single worker unless --jobs says otherwise, so the timings are comparable.
      if (!bench_c.jobs && !(cfg.jobs > 0)) omp_set_num_threads(1);
      if (bench_c.manifest.empty()) {
        cmd_bench(nullptr, cfg);
      } else {
        const Manifest m = load_manifest(bench_c.manifest);
        cmd_bench(&m, cfg);
      }
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}

}  // namespace md::cli
