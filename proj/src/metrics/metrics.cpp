#include "hymad/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace hymad::metrics {

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  // Shortest text that reads back to the same double.
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Throws ValidationError unless pred and truth are equal-shape N x L 0/1
// matrices with N >= 1. Returns L.
std::size_t check_binary(const BinaryMatrix& pred, const BinaryMatrix& truth) {
  if (pred.empty() || pred.size() != truth.size()) {
    throw ValidationError("metrics: prediction has " + std::to_string(pred.size()) +
                          " rows, truth has " + std::to_string(truth.size()));
  }
  const std::size_t l = truth[0].size();
  if (l == 0) throw ValidationError("metrics: no label columns");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != l || truth[i].size() != l) {
      throw ValidationError("metrics: row " + std::to_string(i) + " width differs from " +
                            std::to_string(l));
    }
    for (std::size_t j = 0; j < l; ++j) {
      if ((pred[i][j] != 0 && pred[i][j] != 1) || (truth[i][j] != 0 && truth[i][j] != 1)) {
        throw ValidationError("metrics: non-binary entry at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
    }
  }
  return l;
}

std::size_t check_scores(const ScoreMatrix& scores, const BinaryMatrix& truth) {
  const auto l = check_binary(truth, truth);
  if (scores.size() != truth.size()) {
    throw ValidationError("metrics: scores have " + std::to_string(scores.size()) +
                          " rows, truth has " + std::to_string(truth.size()));
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != l) throw ValidationError("metrics: score row width mismatch");
    for (double s : scores[i])
      if (std::isnan(s)) throw ValidationError("metrics: NaN score in row " + std::to_string(i));
  }
  return l;
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double strict_match_accuracy(const BinaryMatrix& pred, const BinaryMatrix& truth) {
  check_binary(pred, truth);
  std::size_t exact = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) exact += pred[i] == truth[i] ? 1 : 0;
  return ratio(exact, pred.size());
}

double hamming_accuracy(const BinaryMatrix& pred, const BinaryMatrix& truth) {
  const auto l = check_binary(pred, truth);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = 0; j < l; ++j) wrong += pred[i][j] != truth[i][j] ? 1 : 0;
  return 1.0 - ratio(wrong, pred.size() * l);
}

PrfResult macro_prf1(const BinaryMatrix& pred, const BinaryMatrix& truth) {
  const auto l = check_binary(pred, truth);
  PrfResult out;
  out.per_label.resize(l);
  for (std::size_t j = 0; j < l; ++j) {
    auto& c = out.per_label[j];
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const int p = pred[i][j], t = truth[i][j];
      c.tp += p && t;
      c.fp += p && !t;
      c.fn += !p && t;
      c.tn += !p && !t;
    }
    c.precision = ratio(c.tp, c.tp + c.fp);
    c.recall = ratio(c.tp, c.tp + c.fn);
    c.f1 = c.precision + c.recall > 0.0
               ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
               : 0.0;
    out.precision += c.precision;
    out.recall += c.recall;
    out.f1 += c.f1;
  }
  out.precision /= static_cast<double>(l);
  out.recall /= static_cast<double>(l);
  out.f1 /= static_cast<double>(l);
  return out;
}

std::optional<double> label_auroc(std::span<const double> scores,
                                  std::span<const int> truth) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t k = i;
    while (k < n && scores[order[k]] == scores[order[i]]) ++k;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + k);
    for (std::size_t m = i; m < k; ++m) {
      if (truth[order[m]]) {
        rank_sum += avg_rank;
        ++pos;
      }
    }
    i = k;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

AurocResult auroc(const ScoreMatrix& scores, const BinaryMatrix& truth) {
  const auto l = check_scores(scores, truth);
  AurocResult out;
  std::size_t valid = 0;
  for (std::size_t j = 0; j < l; ++j) {
    std::vector<double> s(scores.size());
    std::vector<int> t(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      s[i] = scores[i][j];
      t[i] = truth[i][j];
    }
    out.per_label.push_back(label_auroc(s, t));
    if (out.per_label.back()) {
      out.macro += *out.per_label.back();
      ++valid;
    }
  }
  if (valid == 0) {
    throw UndefinedMetricError("auroc: no label has both positive and negative samples");
  }
  out.macro /= static_cast<double>(valid);
  return out;
}

CurveResult curve_points(const ScoreMatrix& scores, const BinaryMatrix& truth,
                         CurveKind kind) {
  const auto l = check_scores(scores, truth);
  const std::size_t n = scores.size();
  CurveResult out;
  for (std::size_t j = 0; j < l; ++j) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) pos += truth[i][j];
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) {
      out.notices.push_back("label " + std::to_string(j) + " skipped: " +
                            (pos == 0 ? "no positive" : "no negative") + " samples");
      continue;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a][j] > scores[b][j]; });
    const double inf = std::numeric_limits<double>::infinity();
    out.points.push_back(kind == CurveKind::kRoc ? CurvePoint{j, inf, 0.0, 0.0}
                                                 : CurvePoint{j, inf, 0.0, 1.0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < n;) {
      const double thr = scores[order[i]][j];
      while (i < n && scores[order[i]][j] == thr) {
        truth[order[i]][j] ? ++tp : ++fp;
        ++i;
      }
      if (kind == CurveKind::kRoc) {
        out.points.push_back({j, thr, ratio(fp, neg), ratio(tp, pos)});
      } else {
        out.points.push_back({j, thr, ratio(tp, pos), ratio(tp, tp + fp)});
      }
    }
  }
  return out;
}

double trapezoid_area(std::span<const CurvePoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].x - points[i - 1].x) * (points[i].y + points[i - 1].y) / 2.0;
  return area;
}

std::string curve_csv(const std::vector<CurvePoint>& points,
                      const std::vector<std::string>& label_names) {
  std::ostringstream os;
  os << "label,threshold,x,y\n";
  for (const auto& p : points) {
    const auto name = p.label < label_names.size() ? label_names[p.label] : std::to_string(p.label);
    os << name << ',' << fmt(p.threshold) << ',' << fmt(p.x) << ',' << fmt(p.y) << '\n';
  }
  return os.str();
}

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  os << "split: " << split << '\n'
     << "threshold: " << fmt(threshold) << '\n'
     << "n_samples: " << n_samples << '\n'
     << "n_labels: " << n_labels << '\n'
     << "exact_match_acc: " << fmt(strict_match) << '\n'
     << "hamming_acc: " << fmt(hamming) << '\n'
     << "precision: " << fmt(precision) << '\n'
     << "recall: " << fmt(recall) << '\n'
     << "f1: " << fmt(f1) << '\n'
     << "auroc: " << (auroc ? fmt(*auroc) : "undefined") << "\n\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %8s %6s %6s %6s %10s %10s %10s %10s\n", "label",
                "support", "tp", "fp", "fn", "precision", "recall", "f1", "auroc");
  os << line;
  for (const auto& r : per_label) {
    std::snprintf(line, sizeof line, "%-10s %8zu %6zu %6zu %6zu %10s %10s %10s %10s\n",
                  r.name.c_str(), r.support, r.counts.tp, r.counts.fp, r.counts.fn,
                  fixed(r.counts.precision).c_str(), fixed(r.counts.recall).c_str(),
                  fixed(r.counts.f1).c_str(), r.auroc ? fixed(*r.auroc).c_str() : "n/a");
    os << line;
  }
  return os.str();
}

MetricsReport make_report(const ScoreMatrix& scores, const BinaryMatrix& pred,
                          const BinaryMatrix& truth,
                          const std::vector<std::string>& label_names,
                          double threshold, const std::string& split) {
  MetricsReport r;
  r.split = split;
  r.threshold = threshold;
  r.n_samples = truth.size();
  r.n_labels = check_binary(pred, truth);
  r.strict_match = strict_match_accuracy(pred, truth);
  r.hamming = hamming_accuracy(pred, truth);
  const auto prf = macro_prf1(pred, truth);
  r.precision = prf.precision;
  r.recall = prf.recall;
  r.f1 = prf.f1;
  std::vector<std::optional<double>> per_auc(r.n_labels);
  try {
    auto a = auroc(scores, truth);
    r.auroc = a.macro;
    per_auc = a.per_label;
  } catch (const UndefinedMetricError&) {
  }
  for (std::size_t j = 0; j < r.n_labels; ++j) {
    LabelReport lr;
    lr.name = j < label_names.size() ? label_names[j] : std::to_string(j);
    lr.counts = prf.per_label[j];
    lr.support = lr.counts.tp + lr.counts.fn;
    lr.auroc = per_auc[j];
    r.per_label.push_back(lr);
  }
  return r;
}

MetricsReport parse_report(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line) && !line.empty()) {
    const auto colon = line.find(": ");
    if (colon == std::string::npos) throw ValidationError("report: malformed line '" + line + "'");
    kv[line.substr(0, colon)] = line.substr(colon + 2);
  }
  auto get = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError("report: missing field '" + key + "'");
    return it->second;
  };
  MetricsReport r;
  r.split = get("split");
  r.threshold = std::stod(get("threshold"));
  r.n_samples = std::stoul(get("n_samples"));
  r.n_labels = std::stoul(get("n_labels"));
  r.strict_match = std::stod(get("exact_match_acc"));
  r.hamming = std::stod(get("hamming_acc"));
  r.precision = std::stod(get("precision"));
  r.recall = std::stod(get("recall"));
  r.f1 = std::stod(get("f1"));
  const auto a = get("auroc");
  if (a != "undefined") r.auroc = std::stod(a);
  return r;
}

}  // namespace hymad::metrics
