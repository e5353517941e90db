#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "md/cli.hpp"

namespace fs = std::filesystem;

namespace md::cli {

fs::path Manifest::resolve(const ManifestEntry& e) const {
  return e.path.is_absolute() ? e.path : base_dir / e.path;
}

std::vector<ManifestEntry> Manifest::split(const std::string& name) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(e);
  }
  return out;
}

Manifest parse_manifest(std::istream& in, const std::string& source) {
  Manifest m;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fail = [&](const std::string& what) {
      throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": " + what);
    };
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) f.push_back(field);
    if (f.size() != 6) fail("expected 6 tab-separated fields, got " + std::to_string(f.size()));
    for (const auto& x : f) {
      if (x.empty()) fail("empty field");
    }
    ManifestEntry e;
    e.id = f[0];
    e.path = f[1];
    if (f[2] == "live") {
      e.label = 1;
    } else if (f[2] == "attack") {
      e.label = 0;
    } else {
      fail("label must be live or attack, got '" + f[2] + "'");
    }
    e.subject = f[3];
    e.domain = f[4];
    e.split = f[5];
    if (e.split != "train" && e.split != "val" && e.split != "test") fail("split must be train, val or test, got '" + e.split + "'");
    if (e.id.find('/') != std::string::npos || e.id == "." || e.id == "..") fail("id '" + e.id + "' is not a plain name");
    if (!ids.insert(e.id).second) fail("duplicate id '" + e.id + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::string serialize_manifest(const Manifest& m) {
  std::ostringstream os;
  os << "# id\tpath\tlabel\tsubject\tdomain\tsplit\n";
  for (const auto& e : m.entries) {
    os << e.id << '\t' << e.path.generic_string() << '\t' << (e.label ? "live" : "attack") << '\t' << e.subject << '\t'
       << e.domain << '\t' << e.split << '\n';
  }
  return os.str();
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open manifest");
  Manifest m = parse_manifest(in, path.string());
  m.base_dir = path.parent_path();
  for (const auto& e : m.entries) {
    const fs::path dir = m.resolve(e);
    if (!fs::is_directory(dir)) throw std::runtime_error(path.string() + ": video " + e.id + ": no directory " + dir.string());
  }
  return m;
}

}  // namespace md::cli
