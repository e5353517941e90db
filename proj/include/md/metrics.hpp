#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace md {

// label 1 = live (positive), 0 = attack. Decision rule everywhere: live iff score >= threshold.
struct Scored {
  double score = 0.0;
  int label = 0;
};
using ScoreSet = std::vector<Scored>;

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};
// Ascending threshold: -inf, every distinct score, +inf. FPR and TPR are non-increasing.
using RocCurve = std::vector<RocPoint>;

// Both throw std::invalid_argument unless both classes are present.
RocCurve roc(const ScoreSet& s);
double auc(const RocCurve& c);  // trapezoids over FPR

struct Rates {
  double far = 0.0;  // attacks accepted / attacks
  double frr = 0.0;  // lives rejected / lives
};
Rates rates_at(const ScoreSet& s, double threshold);
double hter(const ScoreSet& s, double threshold);

// FAR = FRR crossing, linearly interpolated between the adjacent sweep points
// where FAR - FRR changes sign. An exact zero at a sweep point returns that
// point (the lowest such threshold). A +inf sweep point is replaced by the
// next double above the largest score.
struct EerResult {
  double rate = 0.0;
  double threshold = 0.0;
};
EerResult eer(const ScoreSet& s);

// EER threshold from `validation`, HTER and AUC on `test`.
struct MetricsReport {
  double auc = 0.0;
  double eer = 0.0;
  double eer_threshold = 0.0;
  double hter = 0.0;
  double far = 0.0;
  double frr = 0.0;
};
MetricsReport evaluate(const ScoreSet& validation, const ScoreSet& test);
std::string format_report(const MetricsReport& r);  // key=value lines

std::string roc_csv(const RocCurve& c);  // threshold,fpr,tpr
// Self-contained SVG: TPR against FPR with chance diagonal.
std::string roc_svg(const RocCurve& c, const std::string& title);

// Score files: CSV with header video_id,label,score.
struct ScoreRow {
  std::string video_id;
  int label = 0;
  double score = 0.0;
};
void write_scores(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_scores(const std::filesystem::path& path);
ScoreSet to_score_set(const std::vector<ScoreRow>& rows);

std::string format_double(double v);  // shortest round-trip text, "inf" / "-inf"

}  // namespace md
