#include <omp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "md/cli.hpp"
#include "md/embedding.hpp"
#include "md/features.hpp"
#include "md/image_io.hpp"
#include "md/metrics.hpp"
#include "md/msac.hpp"
#include "md/rng.hpp"
#include "md/synthetic.hpp"

namespace fs = std::filesystem;

namespace md::cli {
namespace {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 0x100000001b3ULL;
  return h;
}
std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

// Runs fn(i) for i in [0, n) across OpenMP workers; rethrows the first failure in index order.
template <typename Fn>
void for_each_item(std::size_t n, Fn fn) {
  std::vector<std::string> errors(n);
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }
}

std::vector<fs::path> segment_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& de : fs::directory_iterator(dir)) {
    const std::string name = de.path().filename().string();
    if (de.is_regular_file() && name.rfind("seg_", 0) == 0 && de.path().extension() == ".png") out.push_back(de.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> base_subsets(const std::vector<BaseSpec>& bases) {
  std::vector<std::string> out;
  for (const auto& b : bases) {
    if (std::find(out.begin(), out.end(), b.subset) == out.end()) out.push_back(b.subset);
  }
  return out;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---- gen-corpus -------------------------------------------------------------------

void cmd_gen_corpus(const RunConfig& cfg) {
  const CorpusSpec& c = cfg.corpus;
  const fs::path root = cfg.out;
  fs::create_directories(root / "corpus");
  Manifest m;
  m.base_dir = root;
  for (int i = 0; i < c.videos; ++i) {
    const int pair = i / 2;
    ManifestEntry e;
    e.label = i % 2 == 0 ? 1 : 0;
    char id[32];
    std::snprintf(id, sizeof id, "%s_%03d", e.label ? "live" : "attack", pair);
    e.id = id;
    e.path = fs::path("corpus") / e.id;
    e.subject = "s" + std::to_string(pair);
    e.domain = "synth" + std::to_string(pair % c.domains);
    const int slot = pair % 5;
    e.split = slot < 3 ? "train" : slot == 3 ? "val" : "test";
    m.entries.push_back(e);
  }

  for_each_item(m.entries.size(), [&](std::size_t i) {
    const ManifestEntry& e = m.entries[i];
    Rng rng(derive_seed(cfg.seed, 100, i));
    Scene scene = Scene::random(derive_seed(cfg.seed, 101, i), c.width, c.height, c.rects);
    // A high-contrast checker "face" in the middle. Live videos move it
    // periodically, which blurs it in the distilled image; attacks stay sharp.
    const double cx = c.width / 2.0, cy = c.height / 2.0, r = std::min(c.width, c.height) / 4.0;
    const double cell = std::max(2.0, r / 6.0);
    int parity = 0;
    for (double y = cy - r; y + cell <= cy + r + 1e-9; y += cell, ++parity) {
      int q = parity;
      for (double x = cx - r; x + cell <= cx + r + 1e-9; x += cell, ++q) {
        scene.add({x, y, x + cell, y + cell, (q % 2 ? 200.0 : 55.0) + rng.uniform(-20.0, 20.0), true});
      }
    }
    ClipScript script;
    script.drift = {rng.uniform(-c.max_drift, c.max_drift), rng.uniform(-c.max_drift, c.max_drift)};
    script.local_amplitude = e.label ? c.live_amplitude : 0.0;
    script.local_period = c.live_period;
    const auto frames = render_clip(scene, c.width, c.height, c.frames, script);
    const fs::path dir = root / e.path;
    fs::create_directories(dir);
    for (const auto& f : frames) write_png(dir / frame_file_name(f.index), f);
  });
  write_text(root / "manifest.tsv", serialize_manifest(m));
  load_manifest(root / "manifest.tsv");
  spdlog::info("gen-corpus: {} videos in {}", m.entries.size(), (root / "corpus").string());
}

// ---- distill ----------------------------------------------------------------------

void cmd_distill(const Manifest& m, const RunConfig& cfg) {
  const fs::path root = cfg.out / "distill";
  std::vector<std::size_t> segments(m.entries.size());
  std::vector<std::vector<std::string>> subsets(m.entries.size());
  for_each_item(m.entries.size(), [&](std::size_t i) {
    const ManifestEntry& e = m.entries[i];
    const auto frames = read_video(m.resolve(e));
    PipelineConfig pc = cfg.pipeline;
    pc.seed = derive_seed(cfg.pipeline.seed, fnv1a(e.id));
    const SyntheticSets sets = generate_synthetic_sets(frames, pc, e.id);
    export_synthetic_sets(root, sets);
    segments[i] = sets.original.size();
    subsets[i] = sets.subsets();
    int fallbacks = 0;
    for (const auto& st : sets.original)
      for (const auto& d : st.diagnostics) fallbacks += d.frame > 0 && d.fallback ? 1 : 0;
    spdlog::debug("distill: {} frames={} segments={} fallbacks={}", e.id, frames.size(), segments[i], fallbacks);
  });
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const fs::path vdir = root / m.entries[i].id;
    if (!fs::exists(vdir / "distill_report.txt")) throw std::runtime_error(vdir.string() + ": report missing");
    for (const auto& s : subsets[i]) {
      if (segment_images(vdir / s).size() != segments[i]) throw std::runtime_error((vdir / s).string() + ": segment count mismatch");
    }
  }
  spdlog::info("distill: {} videos into {}", m.entries.size(), root.string());
}

// ---- features ---------------------------------------------------------------------

void cmd_features(const Manifest& m, const RunConfig& cfg) {
  const fs::path froot = cfg.feature_root();
  if (cfg.features_source == "external") {
    const auto subsets = base_subsets(cfg.bases);
    for (const auto& e : m.entries) load_video_features(cfg, e, subsets);
    spdlog::info("features: external vectors under {} validated", froot.string());
    return;
  }
  const fs::path droot = cfg.out / "distill";
  for_each_item(m.entries.size(), [&](std::size_t i) {
    const ManifestEntry& e = m.entries[i];
    const fs::path vdir = droot / e.id;
    if (!fs::is_directory(vdir)) throw std::runtime_error(vdir.string() + ": not distilled yet (run distill first)");
    std::vector<fs::path> subdirs;
    for (const auto& de : fs::directory_iterator(vdir)) {
      if (de.is_directory()) subdirs.push_back(de.path());
    }
    std::sort(subdirs.begin(), subdirs.end());
    fs::create_directories(froot / e.id);
    for (const auto& sd : subdirs) {
      const auto images = segment_images(sd);
      if (images.empty()) throw std::runtime_error(sd.string() + ": no segment images");
      std::vector<std::vector<double>> rows;
      for (const auto& p : images) rows.push_back(extract_features(read_image(p)));
      const fs::path out = froot / e.id / (sd.filename().string() + ".mdfv");
      write_feature_file(out, rows);
      if (read_feature_file(out) != rows) throw std::runtime_error(out.string() + ": read-back mismatch");
    }
  });
  spdlog::info("features: {} videos into {}", m.entries.size(), froot.string());
}

VideoFeatures load_video_features(const RunConfig& cfg, const ManifestEntry& e, const std::vector<std::string>& subsets) {
  VideoFeatures v;
  v.video_id = e.id;
  v.label = e.label;
  std::size_t steps = 0;
  for (const auto& s : subsets) {
    const fs::path p = cfg.feature_root() / e.id / (s + ".mdfv");
    if (!fs::exists(p)) throw std::runtime_error(p.string() + ": feature file missing (run features first)");
    auto rows = read_feature_file(p);
    if (rows.empty()) throw std::runtime_error(p.string() + ": no feature vectors");
    if (steps != 0 && rows.size() != steps) throw std::runtime_error(p.string() + ": segment count differs from other subsets");
    steps = rows.size();
    v.subsets[s] = std::move(rows);
  }
  return v;
}

// ---- train ------------------------------------------------------------------------

void cmd_train(const Manifest& m, const RunConfig& cfg, bool resume) {
  const fs::path models = cfg.out / "models";
  if (resume && fs::exists(models / "ensemble.txt")) {
    const EnsembleBundle b = load_bundle(models);
    spdlog::info("train: --resume and models present in {} ({} bases); skipping training", models.string(), b.bases.size());
    return;
  }
  const auto train_e = m.split("train"), val_e = m.split("val");
  if (train_e.empty()) throw std::runtime_error("train: manifest has no train videos");
  if (val_e.empty()) throw std::runtime_error("train: manifest has no val videos");
  int lives = 0;
  for (const auto& e : train_e) lives += e.label;
  if (lives == 0 || lives == static_cast<int>(train_e.size()))
    throw std::runtime_error(std::string("train: train split has only ") + (lives ? "live" : "attack") +
                             " videos; both classes are required");

  const auto subsets = base_subsets(cfg.bases);
  std::vector<VideoFeatures> train, val;
  std::vector<std::string> ids;
  std::vector<int> labels;
  for (const auto& e : train_e) {
    train.push_back(load_video_features(cfg, e, subsets));
    ids.push_back(e.id);
    labels.push_back(e.label);
  }
  for (const auto& e : val_e) val.push_back(load_video_features(cfg, e, subsets));

  const StackingPlan plan = make_stacking_plan(ids, labels, cfg.folds, cfg.bases, derive_seed(cfg.seed, 4));
  spdlog::info("train: {} train / {} val videos, k={}, {} base runs + {} final", train.size(), val.size(), plan.k,
               plan.k * plan.bases.size(), plan.bases.size());
  const EnsembleTraining t = train_ensemble(plan, cfg.stacking, train, val);
  const auto violations = audit_leakage(t.meta, plan);
  if (!violations.empty()) throw std::runtime_error("train: leakage audit failed: " + violations.front());

  fs::create_directories(models);
  save_bundle(models, t.bundle);
  write_meta_dataset(models / "meta_dataset.tsv", t.meta);
  std::ostringstream folds;
  folds << "video_id\tfold\n";
  for (std::size_t i = 0; i < plan.videos.size(); ++i) folds << plan.videos[i] << '\t' << plan.fold[i] << '\n';
  write_text(models / "folds.tsv", folds.str());

  std::ostringstream log;
  auto run_line = [&](const char* tag, const BaseRun& r) {
    const TrainResult& tr = r.result;
    const TrainCheck& best = tr.checks.at(static_cast<std::size_t>(tr.best_check));
    log << tag << " base=" << r.base << " kind=" << to_string(plan.bases[static_cast<std::size_t>(r.base)].kind)
        << " fold=" << r.fold << " train_videos=" << r.trained_on.size() << " iterations=" << tr.iterations
        << " early_stop=" << (tr.stopped_early ? 1 : 0) << " best_iteration=" << best.iteration
        << " val_loss=" << format_double(best.val_loss) << " val_accuracy=" << format_double(best.val_accuracy) << '\n';
  };
  for (const auto& r : t.meta.runs) run_line("oof", r);
  for (const auto& r : t.final_runs) run_line("final", r);
  const TrainCheck& mb = t.meta_result.checks.at(static_cast<std::size_t>(t.meta_result.best_check));
  log << "meta kind=gru hidden=" << cfg.stacking.meta_hidden << " iterations=" << t.meta_result.iterations
      << " best_iteration=" << mb.iteration << " val_loss=" << format_double(mb.val_loss) << '\n';
  log << "leakage_violations=0\n";
  log << "meta_val_accuracy=" << format_double(t.meta_val_accuracy) << '\n';
  write_text(models / "train_log.txt", log.str());
  load_bundle(models);
  spdlog::info("train: audit passed; meta validation accuracy {:.4f}; models in {}", t.meta_val_accuracy, models.string());
}

// ---- eval -------------------------------------------------------------------------

namespace {

void write_metrics(const fs::path& dir, const std::vector<ScoreRow>& val, const std::vector<ScoreRow>& test) {
  const ScoreSet vs = to_score_set(val), ts = to_score_set(test);
  const MetricsReport r = evaluate(vs, ts);
  const RocCurve c = roc(ts);
  write_text(dir / "metrics.txt", format_report(r));
  write_text(dir / "roc.csv", roc_csv(c));
  char title[96];
  std::snprintf(title, sizeof title, "ROC on test (AUC = %.4f, HTER = %.4f)", r.auc, r.hter);
  write_text(dir / "roc.svg", roc_svg(c, title));
  spdlog::info("eval: auc={:.4f} eer={:.4f} (threshold {:.6g}) hter={:.4f}", r.auc, r.eer, r.eer_threshold, r.hter);
}

}  // namespace

void cmd_eval(const Manifest& m, const RunConfig& cfg, const fs::path& models) {
  const EnsembleBundle bundle = load_bundle(models);
  std::vector<BaseSpec> specs;
  for (const auto& b : bundle.bases) specs.push_back(b.spec);
  const auto subsets = base_subsets(specs);
  const fs::path dir = cfg.out / "eval";
  fs::create_directories(dir);
  std::map<std::string, std::vector<ScoreRow>> rows;
  for (const std::string split : {"val", "test"}) {
    const auto entries = m.split(split);
    if (entries.empty()) throw std::runtime_error("eval: manifest has no " + split + " videos");
    std::vector<ScoreRow> out(entries.size());
    for_each_item(entries.size(), [&](std::size_t i) {
      const VideoFeatures v = load_video_features(cfg, entries[i], subsets);
      out[i] = {entries[i].id, entries[i].label, predict(bundle, v)};
    });
    const fs::path p = dir / ("scores_" + split + ".csv");
    write_scores(p, out);
    if (read_scores(p).size() != out.size()) throw std::runtime_error(p.string() + ": read-back mismatch");
    rows[split] = std::move(out);
  }
  write_metrics(dir, rows["val"], rows["test"]);
}

void cmd_eval_scores(const RunConfig& cfg, const fs::path& val_scores, const fs::path& test_scores) {
  const fs::path dir = cfg.out / "eval";
  fs::create_directories(dir);
  write_metrics(dir, read_scores(val_scores), read_scores(test_scores));
}

// ---- bench ------------------------------------------------------------------------

namespace {

struct BenchRun {
  double detect = 0, describe = 0, match = 0, msac = 0, warp = 0, blend = 0, end_to_end = 0, library = 0;
  std::size_t keypoints = 0, matches = 0, inliers = 0;
  std::uint64_t checksum = 0;
  bool same_as_library = false;
  double stages() const { return detect + describe + match + msac + warp + blend; }
};

BenchRun bench_once(const Segment& seg, const PipelineConfig& pc, const RetinalPattern& pattern) {
  using clock = std::chrono::steady_clock;
  BenchRun r;
  const std::size_t n = seg.frames.size();
  const auto t_start = clock::now();

  std::vector<FrameFeatures> feats(n);
  for (std::size_t i = 0; i < n; ++i) {
    const GrayFrame g = to_grayscale(seg.frames[i]);
    auto t = clock::now();
    feats[i].keypoints = detect_fast(g, pc.fast);
    r.detect += ms_since(t);
    t = clock::now();
    feats[i].descriptors = describe(g, feats[i].keypoints, pattern);
    r.describe += ms_since(t);
    r.keypoints += feats[i].keypoints.size();
  }

  std::vector<RigidTransform> steps(n);
  for (std::size_t i = 1; i < n; ++i) {
    auto t = clock::now();
    const auto matches = match(feats[i - 1].descriptors, feats[i].descriptors, pc.max_match_distance);
    r.match += ms_since(t);
    t = clock::now();
    std::vector<Correspondence> pairs;
    for (const auto& mm : matches) {
      const Keypoint& a = feats[i - 1].descriptors[static_cast<std::size_t>(mm.index_fixed)].keypoint;
      const Keypoint& b = feats[i].descriptors[static_cast<std::size_t>(mm.index_moving)].keypoint;
      pairs.push_back({{a.x, a.y}, {b.x, b.y}});
    }
    MsacParams mp = pc.msac;
    mp.seed = derive_seed(pc.seed, static_cast<std::uint64_t>(seg.index), i);
    const MsacResult res = estimate_msac(pairs, mp);
    r.msac += ms_since(t);
    steps[i] = res.transform;
    r.matches += matches.size();
    r.inliers += res.fallback ? 0 : static_cast<std::size_t>(res.inlier_count());
  }

  auto t = clock::now();
  const Frame& ref = seg.frames.front();
  Frame acc(ref.width, ref.height, ref.channels, 0.0, ref.index);
  RigidTransform cumulative;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) cumulative = compose(cumulative, steps[i]);
    const Frame w = warp_rigid(seg.frames[i], cumulative);
    const double k = static_cast<double>(i + 1);
    for (std::size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += (w.data[j] - acc.data[j]) / k;
  }
  clamp_samples(acc);
  r.warp = ms_since(t);

  t = clock::now();
  std::vector<Frame> blended;
  for (double a : pc.alphas) blended.push_back(pc.swap_blend_roles ? alpha_blend(ref, acc, a) : alpha_blend(acc, ref, a));
  r.blend = ms_since(t);
  r.end_to_end = ms_since(t_start);

  t = clock::now();
  const SpatioTemporalImage lib = distill_segment(seg, pc, pattern);
  for (double a : pc.alphas) pc.swap_blend_roles ? alpha_blend(ref, lib.image, a) : alpha_blend(lib.image, ref, a);
  r.library = ms_since(t);

  r.same_as_library = lib.image == acc;
  r.checksum = fnv1a(acc.data.data(), acc.data.size() * sizeof(double));
  for (const auto& b : blended) r.checksum = fnv1a(b.data.data(), b.data.size() * sizeof(double), r.checksum);
  return r;
}

}  // namespace

void cmd_bench(const Manifest* m, const RunConfig& cfg) {
  const BenchSpec& b = cfg.bench;
  Segment seg;
  std::string source;
  if (m && !m->entries.empty()) {
    auto frames = read_video(m->resolve(m->entries.front()));
    if (frames.size() > static_cast<std::size_t>(b.frames)) frames.resize(static_cast<std::size_t>(b.frames));
    seg.frames = std::move(frames);
    source = m->entries.front().id;
  } else {
    const Scene scene = Scene::random(derive_seed(cfg.seed, 200), b.width, b.height, 90);
    seg.frames = render_clip(scene, b.width, b.height, b.frames, {.drift = {0.5, 0.25}});
    source = "synthetic";
  }
  seg.video_id = source;
  const RetinalPattern pattern = build_pattern(cfg.pipeline.pattern);

  std::vector<BenchRun> runs;
  for (int r = 0; r < b.repeats; ++r) runs.push_back(bench_once(seg, cfg.pipeline, pattern));
  for (const auto& r : runs) {
    if (r.checksum != runs.front().checksum) throw std::runtime_error("bench: repeated runs disagree");
  }
  // Report the run whose end-to-end time is the (lower) median, so its stage times add up.
  std::vector<std::size_t> order(runs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return runs[x].end_to_end < runs[y].end_to_end; });
  const BenchRun& med = runs[order[(order.size() - 1) / 2]];
  std::vector<double> lib;
  for (const auto& r : runs) lib.push_back(r.library);
  std::sort(lib.begin(), lib.end());

  const Frame& f0 = seg.frames.front();
  std::ostringstream os;
  char buf[160];
  os << "source=" << source << '\n'
     << "frames=" << seg.frames.size() << '\n'
     << "width=" << f0.width << '\n'
     << "height=" << f0.height << '\n'
     << "repeats=" << b.repeats << '\n'
     << "workers=" << omp_get_max_threads() << '\n'
     << "keypoints=" << med.keypoints << '\n'
     << "matches=" << med.matches << '\n'
     << "inliers=" << med.inliers << '\n';
  std::snprintf(buf, sizeof buf, "output_checksum=%016llx\n", static_cast<unsigned long long>(med.checksum));
  os << buf << "matches_library=" << (med.same_as_library ? 1 : 0) << '\n';
  const std::pair<const char*, double> stages[] = {{"detect", med.detect}, {"describe", med.describe},
                                                   {"match", med.match},   {"msac", med.msac},
                                                   {"warp", med.warp},     {"blend", med.blend}};
  for (const auto& [name, v] : stages) {
    std::snprintf(buf, sizeof buf, "time.%s_ms=%.3f\n", name, v);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "time.stages_total_ms=%.3f\ntime.end_to_end_ms=%.3f\ntime.library_distill_ms=%.3f\n",
                med.stages(), med.end_to_end, lib[(lib.size() - 1) / 2]);
  os << buf;
  const fs::path dir = cfg.out / "bench";
  fs::create_directories(dir);
  write_text(dir / "bench_report.txt", os.str());
  spdlog::info("bench: {} frames {}x{}, median end-to-end {:.1f} ms ({} workers)", seg.frames.size(), f0.width,
               f0.height, med.end_to_end, omp_get_max_threads());
  if (!med.same_as_library) throw std::runtime_error("bench: instrumented pipeline disagrees with distill_segment");
}

}  // namespace md::cli
