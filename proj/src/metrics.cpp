#include "md/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace md {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Counts {
  std::size_t lives = 0, attacks = 0;
};

Counts count_classes(const ScoreSet& s) {
  Counts c;
  for (const auto& x : s) {
    if (x.label == 1) {
      ++c.lives;
    } else if (x.label == 0) {
      ++c.attacks;
    } else {
      throw std::invalid_argument("metrics: label must be 0 or 1");
    }
    if (std::isnan(x.score)) throw std::invalid_argument("metrics: NaN score");
  }
  return c;
}

Counts require_both(const ScoreSet& s) {
  const Counts c = count_classes(s);
  if (c.lives == 0 || c.attacks == 0) throw std::invalid_argument("metrics: both classes must be present");
  return c;
}

}  // namespace

RocCurve roc(const ScoreSet& s) {
  const Counts n = require_both(s);
  ScoreSet sorted = s;
  std::sort(sorted.begin(), sorted.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  RocCurve c;
  c.push_back({-kInf, 1.0, 1.0});
  // Walking up the sorted scores: before the first item with score t, the
  // counts of items below t are known, so at threshold t everything from here on is accepted.
  std::size_t lives_below = 0, attacks_below = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double t = sorted[i].score;
    c.push_back({t, static_cast<double>(n.attacks - attacks_below) / static_cast<double>(n.attacks),
                 static_cast<double>(n.lives - lives_below) / static_cast<double>(n.lives)});
    for (; i < sorted.size() && sorted[i].score == t; ++i) (sorted[i].label == 1 ? lives_below : attacks_below)++;
  }
  c.push_back({kInf, 0.0, 0.0});
  return c;
}

double auc(const RocCurve& c) {
  double area = 0.0;
  for (std::size_t i = 1; i < c.size(); ++i) area += (c[i - 1].fpr - c[i].fpr) * (c[i - 1].tpr + c[i].tpr) / 2.0;
  return area;
}

Rates rates_at(const ScoreSet& s, double threshold) {
  const Counts n = require_both(s);
  std::size_t fa = 0, fr = 0;
  for (const auto& x : s) {
    const bool accepted = x.score >= threshold;
    if (x.label == 0 && accepted) ++fa;
    if (x.label == 1 && !accepted) ++fr;
  }
  return {static_cast<double>(fa) / static_cast<double>(n.attacks), static_cast<double>(fr) / static_cast<double>(n.lives)};
}

double hter(const ScoreSet& s, double threshold) {
  const Rates r = rates_at(s, threshold);
  return (r.far + r.frr) / 2.0;
}

EerResult eer(const ScoreSet& s) {
  const RocCurve c = roc(s);
  const double s_max = c[c.size() - 2].threshold;
  auto tau = [&](std::size_t i) { return std::isinf(c[i].threshold) && c[i].threshold > 0 ? std::nextafter(s_max, kInf) : c[i].threshold; };
  auto diff = [&](std::size_t i) { return c[i].fpr - (1.0 - c[i].tpr); };
  // diff is +1 at -inf and -1 at +inf and never increases.
  for (std::size_t i = 1; i < c.size(); ++i) {
    const double d = diff(i);
    if (d == 0.0) return {c[i].fpr, tau(i)};
    if (d < 0.0) {
      const double d0 = diff(i - 1);
      const double t = d0 / (d0 - d);
      const double far = c[i - 1].fpr + t * (c[i].fpr - c[i - 1].fpr);
      return {far, tau(i - 1) + t * (tau(i) - tau(i - 1))};
    }
  }
  throw std::logic_error("eer: no crossing");  // unreachable with both classes
}

MetricsReport evaluate(const ScoreSet& validation, const ScoreSet& test) {
  MetricsReport r;
  const EerResult e = eer(validation);
  r.eer = e.rate;
  r.eer_threshold = e.threshold;
  const Rates rt = rates_at(test, e.threshold);
  r.far = rt.far;
  r.frr = rt.frr;
  r.hter = (rt.far + rt.frr) / 2.0;
  r.auc = auc(roc(test));
  return r;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << "auc=" << format_double(r.auc) << '\n'
     << "eer=" << format_double(r.eer) << '\n'
     << "eer_threshold=" << format_double(r.eer_threshold) << '\n'
     << "hter=" << format_double(r.hter) << '\n'
     << "far=" << format_double(r.far) << '\n'
     << "frr=" << format_double(r.frr) << '\n';
  return os.str();
}

std::string roc_csv(const RocCurve& c) {
  std::ostringstream os;
  os << "threshold,fpr,tpr\n";
  for (const auto& p : c) os << format_double(p.threshold) << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
  return os.str();
}

std::string roc_svg(const RocCurve& c, const std::string& title) {
  const double x0 = 70, y0 = 30, side = 360;
  auto px = [&](double fpr) { return x0 + fpr * side; };
  auto py = [&](double tpr) { return y0 + (1.0 - tpr) * side; };
  char buf[160];
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"460\" height=\"460\" viewBox=\"0 0 460 460\" "
        "font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"460\" height=\"460\" fill=\"white\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = k / 5.0;
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", px(v), py(0), px(v), py(1));
    os << buf;
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", px(0), py(v), px(1), py(v));
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.1f</text>\n", px(v), py(0) + 18, v);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.1f</text>\n", px(0) - 6, py(v) + 4, v);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n", x0, y0, side, side);
  os << buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n", px(0), py(0), px(1), py(1));
  os << buf;
  os << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
  for (std::size_t i = c.size(); i-- > 0;) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(c[i].fpr), py(c[i].tpr));
    os << buf;
  }
  os << "\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">False Positive Rate</text>\n", x0 + side / 2, y0 + side + 40);
  os << buf;
  std::snprintf(buf, sizeof buf, "<text transform=\"translate(20 %.1f) rotate(-90)\" text-anchor=\"middle\">True Positive Rate</text>\n", y0 + side / 2);
  os << buf;
  std::string safe;
  for (char ch : title) {
    if (ch == '<') safe += "&lt;";
    else if (ch == '>') safe += "&gt;";
    else if (ch == '&') safe += "&amp;";
    else safe += ch;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">", x0 + side / 2);
  os << buf << safe << "</text>\n</svg>\n";
  return os.str();
}

void write_scores(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "video_id,label,score\n";
  for (const auto& r : rows) {
    if (r.video_id.find_first_of(",\n") != std::string::npos)
      throw std::invalid_argument("score file: video id '" + r.video_id + "' contains a separator");
    out << r.video_id << ',' << r.label << ',' << format_double(r.score) << '\n';
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

std::vector<ScoreRow> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open score file");
  std::string line;
  if (!std::getline(in, line) || line != "video_id,label,score")
    throw std::runtime_error(path.string() + ": expected header video_id,label,score");
  std::vector<ScoreRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    ScoreRow r;
    r.video_id = line.substr(0, a);
    const std::string label = line.substr(a + 1, b - a - 1), score = line.substr(b + 1);
    if (label != "0" && label != "1")
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    r.label = label == "1" ? 1 : 0;
    const auto res = std::from_chars(score.data(), score.data() + score.size(), r.score);
    if (res.ec != std::errc() || res.ptr != score.data() + score.size() || std::isnan(r.score))
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad score '" + score + "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

ScoreSet to_score_set(const std::vector<ScoreRow>& rows) {
  ScoreSet s;
  for (const auto& r : rows) s.push_back({r.score, r.label});
  return s;
}

}  // namespace md
