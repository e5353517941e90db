#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "md/rnn.hpp"

namespace md {

// One base learner: a cell kind trained on one image subset.
struct BaseSpec {
  CellKind kind = CellKind::lstm;
  std::string subset;
  int hidden = 20;
};

// LSTM on synt1, BiLSTM on synt2, GRU on synt3 (500 / 20 / 20 units).
std::vector<BaseSpec> default_pairing();

// Per-video feature sequences, one per subset, all with the same step count.
struct VideoFeatures {
  std::string video_id;
  int label = 0;
  std::map<std::string, Steps> subsets;

  FeatureSequence sequence(const std::string& subset) const;  // throws if missing
};

// k-fold assignment by video plus, for every base and held-out fold, the folds
// it trains on. Base b trains on k - 1 - b folds; the extra dropped folds are
// drawn from the plan seed.
struct StackingPlan {
  int k = 5;
  std::uint64_t seed = 0;
  std::vector<std::string> videos;
  std::vector<int> fold;  // fold[i] belongs to videos[i]
  std::vector<BaseSpec> bases;
  std::vector<std::vector<std::vector<int>>> training_folds;  // [base][held-out fold]

  int fold_of(const std::string& video_id) const;  // -1 if unknown
  std::vector<std::string> fold_members(int f) const;
  void validate() const;
};

StackingPlan make_stacking_plan(const std::vector<std::string>& videos, int k, const std::vector<BaseSpec>& bases,
                                std::uint64_t seed);
// Stratified: after the shuffle, videos are grouped by label before the
// round-robin, so each class spreads evenly over the folds.
StackingPlan make_stacking_plan(const std::vector<std::string>& videos, const std::vector<int>& labels, int k,
                                const std::vector<BaseSpec>& bases, std::uint64_t seed);

// A trained base-model instance and the data it saw. fold = -1 marks a model
// trained on every training video (used at prediction time).
struct BaseRun {
  int base = 0;
  int fold = -1;
  std::vector<int> training_folds;
  std::vector<std::string> trained_on;
  TrainResult result;
};

struct MetaSequence {
  std::string video_id;
  int label = 0;
  Steps steps;                 // per segment: p_live of each base; one step in flat mode
  std::vector<int> producers;  // run index per base
};

struct MetaDataset {
  std::vector<MetaSequence> entries;
  std::vector<BaseRun> runs;
  bool flat = false;

  std::size_t dim() const { return entries.empty() ? 0 : entries.front().steps.front().size(); }
  std::vector<FeatureSequence> sequences() const;
};

// Out-of-fold predictions for every training video. `val` drives early
// stopping of every base run. Runs are independent and trained concurrently.
// Throws std::runtime_error when the leakage audit finds anything.
MetaDataset build_meta_dataset(const StackingPlan& plan, const TrainConfig& base_cfg,
                               const std::vector<VideoFeatures>& train, const std::vector<VideoFeatures>& val,
                               bool flat = false);

// Human-readable violations: an entry produced by a run whose training data
// contains the entry's video, or whose folds include the video's fold.
std::vector<std::string> audit_leakage(const MetaDataset& meta, const StackingPlan& plan);

struct BaseModel {
  BaseSpec spec;
  RnnParams params;
};

struct EnsembleBundle {
  std::vector<BaseModel> bases;
  RnnParams meta;
  bool flat = false;
};

MetaSequence meta_features(const std::vector<BaseModel>& bases, const VideoFeatures& video, bool flat);
// Live-class probability from the meta model.
double predict(const EnsembleBundle& bundle, const VideoFeatures& video);

TrainResult train_meta(const std::vector<FeatureSequence>& meta_train, const std::vector<FeatureSequence>& meta_val,
                       int hidden, const TrainConfig& cfg);

struct StackingConfig {
  TrainConfig base_train;
  TrainConfig meta_train{.learning_rate = 1e-3};
  int meta_hidden = 100;
  bool flat = false;
};

struct EnsembleTraining {
  EnsembleBundle bundle;
  MetaDataset meta;
  std::vector<BaseRun> final_runs;  // base models in the bundle, fold = -1
  TrainResult meta_result;
  double meta_val_accuracy = 0.0;
};

// Full stacking: out-of-fold meta dataset, base models retrained on all of
// `train`, and a GRU meta model early-stopped on meta features of `val`.
EnsembleTraining train_ensemble(const StackingPlan& plan, const StackingConfig& cfg,
                                const std::vector<VideoFeatures>& train, const std::vector<VideoFeatures>& val);

// Directory layout: base_<i>.mdmw, meta.mdmw and ensemble.txt (key=value).
void save_bundle(const std::filesystem::path& dir, const EnsembleBundle& bundle);
EnsembleBundle load_bundle(const std::filesystem::path& dir);
void write_meta_dataset(const std::filesystem::path& path, const MetaDataset& meta);

}  // namespace md
