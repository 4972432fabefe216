#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hymad/errors.hpp"

namespace hymad::metrics {

/// N x L, entries 0/1.
using BinaryMatrix = std::vector<std::vector<int>>;
/// N x L real-valued scores (higher means more likely positive).
using ScoreMatrix = std::vector<std::vector<double>>;

double strict_match_accuracy(const BinaryMatrix& pred, const BinaryMatrix& truth);
double hamming_accuracy(const BinaryMatrix& pred, const BinaryMatrix& truth);

struct LabelCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct PrfResult {
  double precision = 0.0, recall = 0.0, f1 = 0.0;  // macro means
  std::vector<LabelCounts> per_label;
};

/// Per-label tallies; 0/0 ratios count as 0; unweighted mean over labels.
PrfResult macro_prf1(const BinaryMatrix& pred, const BinaryMatrix& truth);

/// Mann-Whitney AUROC of one label; ties count 1/2. Empty if the column
/// lacks a positive or a negative.
std::optional<double> label_auroc(std::span<const double> scores,
                                  std::span<const int> truth);

struct AurocResult {
  double macro = 0.0;
  std::vector<std::optional<double>> per_label;
};

/// Macro mean over labels with both classes present; throws
/// UndefinedMetricError if there are none.
AurocResult auroc(const ScoreMatrix& scores, const BinaryMatrix& truth);

enum class CurveKind { kRoc, kPr };

struct CurvePoint {
  std::size_t label = 0;
  double threshold = 0.0;  // predict positive iff score >= threshold
  double x = 0.0;          // FPR (roc) or recall (pr)
  double y = 0.0;          // TPR (roc) or precision (pr)
};

struct CurveResult {
  std::vector<CurvePoint> points;
  std::vector<std::string> notices;  // skipped labels
};

/// Threshold sweep over the unique scores of each label, descending. Both
/// kinds start at threshold +inf: ROC at (0,0), PR at (recall 0,
/// precision 1). The last point predicts every sample positive, giving
/// ROC (1,1) and PR recall 1 at the positive prevalence.
CurveResult curve_points(const ScoreMatrix& scores, const BinaryMatrix& truth,
                         CurveKind kind);

/// Trapezoidal area under (x, y) of one label's points.
double trapezoid_area(std::span<const CurvePoint> points);

/// CSV with header `label,threshold,x,y`; label column uses label_names.
std::string curve_csv(const std::vector<CurvePoint>& points,
                      const std::vector<std::string>& label_names);

struct LabelReport {
  std::string name;
  std::size_t support = 0;  // positives in truth
  LabelCounts counts;
  std::optional<double> auroc;
};

struct MetricsReport {
  std::string split;
  double threshold = 0.5;
  std::size_t n_samples = 0;
  std::size_t n_labels = 0;
  double strict_match = 0.0;
  double hamming = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auroc;  // empty when undefined for every label
  std::vector<LabelReport> per_label;

  /// Key/value header followed by the per-label table.
  std::string to_text() const;
};

/// Full report from scores and thresholded predictions.
MetricsReport make_report(const ScoreMatrix& scores, const BinaryMatrix& pred,
                          const BinaryMatrix& truth,
                          const std::vector<std::string>& label_names,
                          double threshold, const std::string& split);

/// Parses the header fields written by MetricsReport::to_text (per-label
/// rows are not restored).
MetricsReport parse_report(const std::string& text);

}  // namespace hymad::metrics
