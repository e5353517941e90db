#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "md/cli.hpp"
#include "md/metrics.hpp"
#include "md/rng.hpp"

namespace fs = std::filesystem;

namespace md::cli {
namespace {

template <typename T>
T parse_number(const std::string& s) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("bad boolean '" + s + "'");
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(item));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

struct Field {
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <typename T>
Field num(T& ref) {
  if constexpr (std::is_floating_point_v<T>) {
    return {[&ref] { return format_double(ref); }, [&ref](const std::string& s) { ref = parse_number<T>(s); }};
  } else {
    return {[&ref] { return std::to_string(ref); }, [&ref](const std::string& s) { ref = parse_number<T>(s); }};
  }
}
Field flag(bool& ref) {
  return {[&ref] { return std::string(ref ? "true" : "false"); }, [&ref](const std::string& s) { ref = parse_bool(s); }};
}
Field text(std::string& ref) {
  return {[&ref] { return ref; }, [&ref](const std::string& s) { ref = s; }};
}
Field path(fs::path& ref) {
  return {[&ref] { return ref.generic_string(); }, [&ref](const std::string& s) { ref = s; }};
}

void add_train(std::map<std::string, Field>& f, const std::string& pre, TrainConfig& t) {
  f[pre + "learning_rate"] = num(t.learning_rate);
  f[pre + "batch_size"] = num(t.batch_size);
  f[pre + "val_period"] = num(t.val_period);
  f[pre + "patience"] = num(t.patience);
  f[pre + "max_iters"] = num(t.max_iters);
  f[pre + "min_delta"] = num(t.min_delta);
}

std::map<std::string, Field> fields(RunConfig& c) {
  std::map<std::string, Field> f;
  f["seed"] = num(c.seed);
  f["out"] = path(c.out);
  f["jobs"] = num(c.jobs);
  f["pipeline.segment_length"] = num(c.pipeline.segment_length);
  f["pipeline.alphas"] = {[&c] {
                            std::string s;
                            for (double a : c.pipeline.alphas) s += (s.empty() ? "" : ",") + format_double(a);
                            return s;
                          },
                          [&c](const std::string& s) { c.pipeline.alphas = parse_list(s); }};
  f["pipeline.swap_blend_roles"] = flag(c.pipeline.swap_blend_roles);
  f["fast.threshold"] = num(c.pipeline.fast.threshold);
  f["fast.n_contiguous"] = num(c.pipeline.fast.n_contiguous);
  f["fast.nonmax"] = flag(c.pipeline.fast.nonmax);
  f["fast.max_keypoints"] = num(c.pipeline.fast.max_keypoints);
  f["match.max_distance"] = num(c.pipeline.max_match_distance);
  f["msac.threshold_px"] = num(c.pipeline.msac.threshold_px);
  f["msac.confidence"] = num(c.pipeline.msac.confidence);
  f["msac.max_iters"] = num(c.pipeline.msac.max_iters);
  f["msac.min_inliers"] = num(c.pipeline.msac.min_inliers);
  f["stack.folds"] = num(c.folds);
  f["base.count"] = {[&c] { return std::to_string(c.bases.size()); },
                     [&c](const std::string& s) {
                       const int n = parse_number<int>(s);
                       if (n < 1) throw std::invalid_argument("base.count must be >= 1");
                       c.bases.resize(static_cast<std::size_t>(n), BaseSpec{CellKind::gru, "synt1", 20});
                     }};
  for (std::size_t b = 0; b < c.bases.size(); ++b) {
    const std::string pre = "base." + std::to_string(b) + ".";
    BaseSpec& spec = c.bases[b];
    f[pre + "kind"] = {[&spec] { return to_string(spec.kind); }, [&spec](const std::string& s) { spec.kind = parse_cell_kind(s); }};
    f[pre + "subset"] = text(spec.subset);
    f[pre + "hidden"] = num(spec.hidden);
  }
  add_train(f, "train.", c.stacking.base_train);
  add_train(f, "meta.", c.stacking.meta_train);
  f["meta.hidden"] = num(c.stacking.meta_hidden);
  f["meta.flat"] = flag(c.stacking.flat);
  f["features.source"] = text(c.features_source);
  f["features.dir"] = path(c.features_dir);
  f["corpus.videos"] = num(c.corpus.videos);
  f["corpus.frames"] = num(c.corpus.frames);
  f["corpus.width"] = num(c.corpus.width);
  f["corpus.height"] = num(c.corpus.height);
  f["corpus.rects"] = num(c.corpus.rects);
  f["corpus.domains"] = num(c.corpus.domains);
  f["corpus.max_drift"] = num(c.corpus.max_drift);
  f["corpus.live_amplitude"] = num(c.corpus.live_amplitude);
  f["corpus.live_period"] = num(c.corpus.live_period);
  f["bench.repeats"] = num(c.bench.repeats);
  f["bench.frames"] = num(c.bench.frames);
  f["bench.width"] = num(c.bench.width);
  f["bench.height"] = num(c.bench.height);
  return f;
}

}  // namespace

void RunConfig::apply_seed() {
  pipeline.seed = derive_seed(seed, 1);
  stacking.base_train.seed = derive_seed(seed, 2);
  stacking.meta_train.seed = derive_seed(seed, 3);
}

void RunConfig::validate() const {
  pipeline.validate();
  stacking.base_train.validate();
  stacking.meta_train.validate();
  if (stacking.meta_hidden < 1) throw std::invalid_argument("config: meta.hidden must be >= 1");
  for (const auto& b : bases) {
    if (b.hidden < 1) throw std::invalid_argument("config: base hidden size must be >= 1");
    if (b.subset.empty()) throw std::invalid_argument("config: base subset must be set");
  }
  if (folds <= static_cast<int>(bases.size())) throw std::invalid_argument("config: stack.folds must exceed base.count");
  if (features_source != "blocks" && features_source != "external")
    throw std::invalid_argument("config: features.source must be blocks or external");
  if (corpus.videos < 2 || corpus.frames < 1 || corpus.width < 16 || corpus.height < 16 || corpus.domains < 1)
    throw std::invalid_argument("config: bad corpus geometry");
  if (bench.repeats < 1 || bench.frames < 1 || bench.width < 16 || bench.height < 16)
    throw std::invalid_argument("config: bad bench settings");
}

void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& source) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected key=value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    // base.count may add keys, so the table is rebuilt per line.
    auto table = fields(cfg);
    const auto it = table.find(key);
    if (it == table.end()) throw std::invalid_argument(where + "unknown key '" + key + "'");
    try {
      it->second.set(value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + key + ": " + e.what());
    }
  }
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open config");
  RunConfig cfg;
  apply_config_text(cfg, in, path.string());
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::ostringstream os;
  const auto table = fields(copy);
  // base.count first: it creates the base.N.* keys on the way back in
  os << "base.count=" << table.at("base.count").get() << '\n';
  for (const auto& [key, field] : table) {
    if (key != "base.count") os << key << '=' << field.get() << '\n';
  }
  return os.str();
}

}  // namespace md::cli
