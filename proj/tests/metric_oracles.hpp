#pragma once

#include <array>
#include <optional>
#include <random>

#include "hymad/metrics.hpp"

namespace hymad::testing {

using metrics::BinaryMatrix;
using metrics::ScoreMatrix;

// Brute-force references: plain loops over samples and label pairs.

inline double oracle_strict(const BinaryMatrix& p, const BinaryMatrix& t) {
  double hits = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    bool same = true;
    for (std::size_t j = 0; j < p[i].size(); ++j) same = same && p[i][j] == t[i][j];
    hits += same;
  }
  return hits / static_cast<double>(p.size());
}

inline double oracle_hamming(const BinaryMatrix& p, const BinaryMatrix& t) {
  double wrong = 0, cells = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p[i].size(); ++j) {
      wrong += p[i][j] != t[i][j];
      cells += 1;
    }
  return 1.0 - wrong / cells;
}

inline std::array<double, 3> oracle_prf(const BinaryMatrix& p, const BinaryMatrix& t) {
  const std::size_t l = t[0].size();
  double sp = 0, sr = 0, sf = 0;
  for (std::size_t j = 0; j < l; ++j) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i][j] == 1 && t[i][j] == 1) tp++;
      if (p[i][j] == 1 && t[i][j] == 0) fp++;
      if (p[i][j] == 0 && t[i][j] == 1) fn++;
    }
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0;
    sp += prec;
    sr += rec;
    sf += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
  }
  return {sp / l, sr / l, sf / l};
}

// Concordant pairs plus half the tied pairs over all positive/negative pairs.
inline std::optional<double> oracle_auc(const ScoreMatrix& s, const BinaryMatrix& t, std::size_t j) {
  double good = 0, pairs = 0;
  for (std::size_t a = 0; a < s.size(); ++a)
    for (std::size_t b = 0; b < s.size(); ++b) {
      if (t[a][j] != 1 || t[b][j] != 0) continue;
      pairs += 1;
      if (s[a][j] > s[b][j]) good += 1;
      else if (s[a][j] == s[b][j]) good += 0.5;
    }
  if (pairs == 0) return std::nullopt;
  return good / pairs;
}

struct Instance {
  BinaryMatrix pred, truth;
  ScoreMatrix scores;
};

inline Instance random_instance(std::mt19937_64& rng, std::size_t l = 4) {
  std::uniform_int_distribution<std::size_t> size(1, 20);
  std::uniform_int_distribution<int> bit(0, 1);
  std::uniform_int_distribution<int> coarse(0, 5);  // forces ties
  const auto n = size(rng);
  Instance in;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> p(l), t(l);
    std::vector<double> s(l);
    for (std::size_t j = 0; j < l; ++j) {
      p[j] = bit(rng);
      t[j] = bit(rng);
      s[j] = coarse(rng) / 5.0 + 0.3 * t[j];
    }
    in.pred.push_back(p);
    in.truth.push_back(t);
    in.scores.push_back(s);
  }
  return in;
}

}  // namespace hymad::testing
