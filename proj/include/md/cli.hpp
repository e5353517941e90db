#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "md/distill.hpp"
#include "md/stacking.hpp"

namespace md::cli {

// ---- manifest ----------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;  // frame directory, as written (relative to the manifest file)
  int label = 0;               // 1 live, 0 attack
  std::string subject;
  std::string domain;
  std::string split;  // train | val | test

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // relative paths resolve against this

  std::filesystem::path resolve(const ManifestEntry& e) const;
  std::vector<ManifestEntry> split(const std::string& name) const;
  bool operator==(const Manifest& o) const { return entries == o.entries; }
};

// Tab-separated `id path label subject domain split`, '#' comments, blank lines
// ignored. Throws std::invalid_argument naming the source and line.
Manifest parse_manifest(std::istream& in, const std::string& source = "manifest");
std::string serialize_manifest(const Manifest& m);
// Parses the file and checks that every frame directory exists.
Manifest load_manifest(const std::filesystem::path& path);

// ---- configuration -------------------------------------------------------------

struct CorpusSpec {
  int videos = 24;
  int frames = 48;
  int width = 96;
  int height = 96;
  int rects = 40;
  int domains = 2;
  double max_drift = 0.1;       // px per frame, each axis
  double live_amplitude = 3.0;  // px, periodic local motion of live videos
  double live_period = 8.0;     // frames
};

struct BenchSpec {
  int repeats = 5;
  int frames = 40;
  int width = 224;
  int height = 224;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  int jobs = 0;  // 0: OpenMP default
  PipelineConfig pipeline;
  std::vector<BaseSpec> bases = default_pairing();
  int folds = 5;
  StackingConfig stacking;
  std::string features_source = "blocks";  // blocks | external
  std::filesystem::path features_dir;      // empty: <out>/features
  CorpusSpec corpus;
  BenchSpec bench;

  // Pushes the run seed into every stage (each gets its own derived stream).
  void apply_seed();
  void validate() const;
  std::filesystem::path feature_root() const { return features_dir.empty() ? out / "features" : features_dir; }
};

// Flat `key=value` lines with dotted keys, '#' comments. Unknown keys and
// malformed values are errors naming the line.
void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& source = "config");
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& cfg);  // every key, sorted

// ---- commands --------------------------------------------------------------------

void cmd_gen_corpus(const RunConfig& cfg);
void cmd_distill(const Manifest& m, const RunConfig& cfg);
void cmd_features(const Manifest& m, const RunConfig& cfg);
void cmd_train(const Manifest& m, const RunConfig& cfg, bool resume);
void cmd_eval(const Manifest& m, const RunConfig& cfg, const std::filesystem::path& models);
void cmd_eval_scores(const RunConfig& cfg, const std::filesystem::path& val_scores,
                     const std::filesystem::path& test_scores);
void cmd_bench(const Manifest* m, const RunConfig& cfg);

VideoFeatures load_video_features(const RunConfig& cfg, const ManifestEntry& e,
                                  const std::vector<std::string>& subsets);

// Entry point shared by tools/mdpad and the tests. Returns the exit code.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace md::cli
