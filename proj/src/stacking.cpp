#include "md/stacking.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "md/rng.hpp"

namespace fs = std::filesystem;

namespace md {
namespace {

std::vector<FeatureSequence> sequences_for(const std::vector<VideoFeatures>& videos, const std::string& subset) {
  std::vector<FeatureSequence> out;
  out.reserve(videos.size());
  for (const auto& v : videos) out.push_back(v.sequence(subset));
  return out;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<BaseSpec> default_pairing() {
  return {{CellKind::lstm, "synt1", 500}, {CellKind::bilstm, "synt2", 20}, {CellKind::gru, "synt3", 20}};
}

FeatureSequence VideoFeatures::sequence(const std::string& subset) const {
  const auto it = subsets.find(subset);
  if (it == subsets.end()) throw std::invalid_argument("video " + video_id + ": no features for subset " + subset);
  FeatureSequence s{video_id, label, subset, it->second};
  s.validate();
  return s;
}

int StackingPlan::fold_of(const std::string& video_id) const {
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (videos[i] == video_id) return fold[i];
  }
  return -1;
}

std::vector<std::string> StackingPlan::fold_members(int f) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (fold[i] == f) out.push_back(videos[i]);
  }
  return out;
}

void StackingPlan::validate() const {
  if (k < 2) throw std::invalid_argument("stacking: k must be >= 2");
  if (bases.empty()) throw std::invalid_argument("stacking: no base models");
  if (static_cast<int>(bases.size()) > k - 1)
    throw std::invalid_argument("stacking: k must exceed the number of base models");
  if (fold.size() != videos.size()) throw std::invalid_argument("stacking: fold table size mismatch");
  std::set<std::string> seen(videos.begin(), videos.end());
  if (seen.size() != videos.size()) throw std::invalid_argument("stacking: duplicate video ids");
  for (int f : fold) {
    if (f < 0 || f >= k) throw std::invalid_argument("stacking: fold index out of range");
  }
  if (training_folds.size() != bases.size()) throw std::invalid_argument("stacking: training fold table mismatch");
  for (std::size_t b = 0; b < bases.size(); ++b) {
    if (training_folds[b].size() != static_cast<std::size_t>(k))
      throw std::invalid_argument("stacking: training fold table mismatch");
    for (int f = 0; f < k; ++f) {
      const auto& tf = training_folds[b][f];
      if (tf.empty() || std::find(tf.begin(), tf.end(), f) != tf.end())
        throw std::invalid_argument("stacking: held-out fold used for training");
    }
  }
}

StackingPlan make_stacking_plan(const std::vector<std::string>& videos, int k, const std::vector<BaseSpec>& bases,
                                std::uint64_t seed) {
  return make_stacking_plan(videos, {}, k, bases, seed);
}

StackingPlan make_stacking_plan(const std::vector<std::string>& videos, const std::vector<int>& labels, int k,
                                const std::vector<BaseSpec>& bases, std::uint64_t seed) {
  if (!labels.empty() && labels.size() != videos.size())
    throw std::invalid_argument("stacking: labels and videos differ in length");
  if (static_cast<int>(videos.size()) < k)
    throw std::invalid_argument("stacking: need at least k = " + std::to_string(k) + " training videos, got " +
                                std::to_string(videos.size()));
  StackingPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.videos = videos;
  plan.bases = bases;
  plan.fold.assign(videos.size(), 0);
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  if (!labels.empty()) std::stable_partition(order.begin(), order.end(), [&](std::size_t i) { return labels[i] == 1; });
  for (std::size_t i = 0; i < order.size(); ++i) plan.fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));

  plan.training_folds.assign(bases.size(), std::vector<std::vector<int>>(static_cast<std::size_t>(k)));
  for (std::size_t b = 0; b < bases.size(); ++b) {
    for (int f = 0; f < k; ++f) {
      std::vector<int> rest;
      for (int g = 0; g < k; ++g) {
        if (g != f) rest.push_back(g);
      }
      Rng drop(derive_seed(seed, b + 1, static_cast<std::uint64_t>(f) + 1));
      drop.shuffle(rest);
      rest.erase(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(std::min(b, rest.size())));
      std::sort(rest.begin(), rest.end());
      plan.training_folds[b][f] = rest;
    }
  }
  plan.validate();
  return plan;
}

std::vector<FeatureSequence> MetaDataset::sequences() const {
  std::vector<FeatureSequence> out;
  for (const auto& e : entries) out.push_back({e.video_id, e.label, "meta", e.steps});
  return out;
}

MetaSequence meta_features(const std::vector<BaseModel>& bases, const VideoFeatures& video, bool flat) {
  MetaSequence m;
  m.video_id = video.video_id;
  m.label = video.label;
  for (std::size_t b = 0; b < bases.size(); ++b) {
    const FeatureSequence s = video.sequence(bases[b].spec.subset);
    std::vector<double> column;
    if (flat) {
      column.push_back(rnn_forward(bases[b].params, s.steps)[1]);
    } else {
      for (const auto& pr : rnn_prefix_forward(bases[b].params, s.steps)) column.push_back(pr[1]);
    }
    if (m.steps.empty()) m.steps.assign(column.size(), {});
    if (column.size() != m.steps.size())
      throw std::invalid_argument("video " + video.video_id + ": subsets have different segment counts");
    for (std::size_t t = 0; t < column.size(); ++t) m.steps[t].push_back(column[t]);
  }
  return m;
}

MetaDataset build_meta_dataset(const StackingPlan& plan, const TrainConfig& base_cfg,
                               const std::vector<VideoFeatures>& train, const std::vector<VideoFeatures>& val,
                               bool flat) {
  plan.validate();
  if (train.size() != plan.videos.size()) throw std::invalid_argument("stacking: training set does not match plan");
  for (const auto& v : train) {
    if (plan.fold_of(v.video_id) < 0) throw std::invalid_argument("stacking: video " + v.video_id + " not in plan");
  }

  MetaDataset meta;
  meta.flat = flat;
  const std::size_t nb = plan.bases.size();
  for (int f = 0; f < plan.k; ++f) {
    for (std::size_t b = 0; b < nb; ++b) {
      BaseRun run;
      run.base = static_cast<int>(b);
      run.fold = f;
      run.training_folds = plan.training_folds[b][static_cast<std::size_t>(f)];
      for (const auto& v : train) {
        const int vf = plan.fold_of(v.video_id);
        if (std::find(run.training_folds.begin(), run.training_folds.end(), vf) != run.training_folds.end())
          run.trained_on.push_back(v.video_id);
      }
      meta.runs.push_back(std::move(run));
    }
  }

  // Each run is a single sequence of updates; runs share nothing but read-only data.
  std::vector<std::string> errors(meta.runs.size());
  const std::ptrdiff_t nruns = static_cast<std::ptrdiff_t>(meta.runs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < nruns; ++r) {
    BaseRun& run = meta.runs[r];
    const BaseSpec& spec = plan.bases[static_cast<std::size_t>(run.base)];
    try {
      std::vector<FeatureSequence> tr;
      for (const auto& v : train) {
        if (std::find(run.trained_on.begin(), run.trained_on.end(), v.video_id) != run.trained_on.end())
          tr.push_back(v.sequence(spec.subset));
      }
      TrainConfig cfg = base_cfg;
      cfg.seed = derive_seed(base_cfg.seed, static_cast<std::uint64_t>(run.base), static_cast<std::uint64_t>(run.fold) + 1);
      run.result = train_rnn(tr, sequences_for(val, spec.subset), spec.kind, spec.hidden, cfg);
    } catch (const std::exception& e) {
      errors[r] = "base " + std::to_string(run.base) + " fold " + std::to_string(run.fold) + ": " + e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error("stacking: " + e);
  }

  for (const auto& v : train) {
    const int vf = plan.fold_of(v.video_id);
    std::vector<BaseModel> producers;
    MetaSequence entry;
    for (std::size_t b = 0; b < nb; ++b) {
      const int r = vf * static_cast<int>(nb) + static_cast<int>(b);
      producers.push_back({plan.bases[b], meta.runs[static_cast<std::size_t>(r)].result.params});
      entry.producers.push_back(r);
    }
    MetaSequence m = meta_features(producers, v, flat);
    m.producers = entry.producers;
    meta.entries.push_back(std::move(m));
  }

  const auto violations = audit_leakage(meta, plan);
  if (!violations.empty()) throw std::runtime_error("stacking: leakage audit failed: " + violations.front());
  return meta;
}

std::vector<std::string> audit_leakage(const MetaDataset& meta, const StackingPlan& plan) {
  std::vector<std::string> out;
  for (const auto& e : meta.entries) {
    const int vf = plan.fold_of(e.video_id);
    if (vf < 0) {
      out.push_back(e.video_id + ": not in plan");
      continue;
    }
    if (e.producers.size() != plan.bases.size()) out.push_back(e.video_id + ": missing producers");
    for (int r : e.producers) {
      if (r < 0 || static_cast<std::size_t>(r) >= meta.runs.size()) {
        out.push_back(e.video_id + ": bad producer index");
        continue;
      }
      const BaseRun& run = meta.runs[static_cast<std::size_t>(r)];
      if (std::find(run.trained_on.begin(), run.trained_on.end(), e.video_id) != run.trained_on.end())
        out.push_back(e.video_id + ": in training data of base " + std::to_string(run.base) + " fold " +
                      std::to_string(run.fold));
      if (std::find(run.training_folds.begin(), run.training_folds.end(), vf) != run.training_folds.end())
        out.push_back(e.video_id + ": fold " + std::to_string(vf) + " among training folds of base " +
                      std::to_string(run.base));
      for (const auto& id : run.trained_on) {
        const int tf = plan.fold_of(id);
        if (std::find(run.training_folds.begin(), run.training_folds.end(), tf) == run.training_folds.end())
          out.push_back(id + ": trained on outside the run's folds");
      }
    }
  }
  return out;
}

double predict(const EnsembleBundle& bundle, const VideoFeatures& video) {
  const MetaSequence m = meta_features(bundle.bases, video, bundle.flat);
  return rnn_forward(bundle.meta, m.steps)[1];
}

TrainResult train_meta(const std::vector<FeatureSequence>& meta_train, const std::vector<FeatureSequence>& meta_val,
                       int hidden, const TrainConfig& cfg) {
  return train_rnn(meta_train, meta_val, CellKind::gru, hidden, cfg);
}

EnsembleTraining train_ensemble(const StackingPlan& plan, const StackingConfig& cfg,
                                const std::vector<VideoFeatures>& train, const std::vector<VideoFeatures>& val) {
  EnsembleTraining out;
  out.meta = build_meta_dataset(plan, cfg.base_train, train, val, cfg.flat);

  const std::size_t nb = plan.bases.size();
  out.final_runs.resize(nb);
  std::vector<std::string> errors(nb);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(nb);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t b = 0; b < n; ++b) {
    BaseRun& run = out.final_runs[b];
    const BaseSpec& spec = plan.bases[b];
    run.base = static_cast<int>(b);
    for (int f = 0; f < plan.k; ++f) run.training_folds.push_back(f);
    for (const auto& v : train) run.trained_on.push_back(v.video_id);
    try {
      TrainConfig c = cfg.base_train;
      c.seed = derive_seed(cfg.base_train.seed, static_cast<std::uint64_t>(b), 0);
      run.result = train_rnn(sequences_for(train, spec.subset), sequences_for(val, spec.subset), spec.kind,
                             spec.hidden, c);
    } catch (const std::exception& e) {
      errors[b] = "final base " + std::to_string(b) + ": " + e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error("stacking: " + e);
  }

  out.bundle.flat = cfg.flat;
  for (std::size_t b = 0; b < nb; ++b) out.bundle.bases.push_back({plan.bases[b], out.final_runs[b].result.params});

  std::vector<FeatureSequence> meta_val;
  for (const auto& v : val) {
    const MetaSequence m = meta_features(out.bundle.bases, v, cfg.flat);
    meta_val.push_back({m.video_id, m.label, "meta", m.steps});
  }
  TrainConfig mc = cfg.meta_train;
  out.meta_result = train_meta(out.meta.sequences(), meta_val, cfg.meta_hidden, mc);
  out.bundle.meta = out.meta_result.params;
  out.meta_val_accuracy = accuracy(out.bundle.meta, meta_val);
  return out;
}

void save_bundle(const fs::path& dir, const EnsembleBundle& bundle) {
  fs::create_directories(dir);
  std::ofstream idx(dir / "ensemble.txt");
  idx << "bases=" << bundle.bases.size() << '\n';
  idx << "flat=" << (bundle.flat ? 1 : 0) << '\n';
  for (std::size_t b = 0; b < bundle.bases.size(); ++b) {
    const auto& s = bundle.bases[b].spec;
    idx << "base." << b << ".kind=" << to_string(s.kind) << '\n';
    idx << "base." << b << ".subset=" << s.subset << '\n';
    idx << "base." << b << ".hidden=" << s.hidden << '\n';
    write_model(dir / ("base_" + std::to_string(b) + ".mdmw"), bundle.bases[b].params);
  }
  write_model(dir / "meta.mdmw", bundle.meta);
  if (!idx) throw std::runtime_error((dir / "ensemble.txt").string() + ": write failed");
}

EnsembleBundle load_bundle(const fs::path& dir) {
  const fs::path index = dir / "ensemble.txt";
  std::ifstream in(index);
  if (!in) throw std::runtime_error(index.string() + ": cannot open model index");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error(index.string() + ": missing key " + key);
    return it->second;
  };
  EnsembleBundle bundle;
  bundle.flat = get("flat") == "1";
  const int n = std::stoi(get("bases"));
  for (int b = 0; b < n; ++b) {
    const std::string pre = "base." + std::to_string(b) + ".";
    BaseModel m;
    m.spec.kind = parse_cell_kind(get(pre + "kind"));
    m.spec.subset = get(pre + "subset");
    m.spec.hidden = std::stoi(get(pre + "hidden"));
    m.params = read_model(dir / ("base_" + std::to_string(b) + ".mdmw"));
    if (m.params.kind != m.spec.kind || m.params.hidden != m.spec.hidden)
      throw std::runtime_error(index.string() + ": base " + std::to_string(b) + " does not match its model file");
    bundle.bases.push_back(std::move(m));
  }
  bundle.meta = read_model(dir / "meta.mdmw");
  if (bundle.meta.input_dim != n) throw std::runtime_error(index.string() + ": meta model input dim != base count");
  return bundle;
}

void write_meta_dataset(const fs::path& path, const MetaDataset& meta) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "# runs: index base fold training_folds\n";
  for (std::size_t r = 0; r < meta.runs.size(); ++r) {
    const auto& run = meta.runs[r];
    out << "# run " << r << ' ' << run.base << ' ' << run.fold << ' ';
    for (std::size_t i = 0; i < run.training_folds.size(); ++i) out << (i ? "," : "") << run.training_folds[i];
    out << '\n';
  }
  out << "video_id\tlabel\tstep\tproducers\tvalues\n";
  for (const auto& e : meta.entries) {
    std::ostringstream prod;
    for (std::size_t i = 0; i < e.producers.size(); ++i) prod << (i ? "," : "") << e.producers[i];
    for (std::size_t t = 0; t < e.steps.size(); ++t) {
      out << e.video_id << '\t' << e.label << '\t' << t << '\t' << prod.str() << '\t';
      for (std::size_t j = 0; j < e.steps[t].size(); ++j) out << (j ? "," : "") << fmt17(e.steps[t][j]);
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace md
