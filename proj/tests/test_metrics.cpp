#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "hymad/metrics.hpp"
#include "metric_oracles.hpp"

using namespace hymad;
using namespace hymad::metrics;
using namespace hymad::testing;

TEST_CASE("strict and hamming") {
  BinaryMatrix truth = {{1, 0, 1, 0}, {0, 0, 0, 1}};
  CHECK(strict_match_accuracy(truth, truth) == 1.0);
  CHECK(hamming_accuracy(truth, truth) == 1.0);
  BinaryMatrix one_wrong = {{1, 0, 1, 0}, {0, 1, 0, 1}};
  CHECK(strict_match_accuracy(one_wrong, truth) == 0.5);
  CHECK(hamming_accuracy(one_wrong, truth) == 0.875);
  BinaryMatrix superset = {{1, 1, 1, 0}, {0, 0, 0, 1}};
  CHECK(strict_match_accuracy(superset, truth) == 0.5);
  BinaryMatrix flipped = {{0, 1, 0, 1}, {1, 1, 1, 0}};
  CHECK(hamming_accuracy(flipped, truth) == 0.0);

  CHECK_THROWS_AS(strict_match_accuracy({{1, 0}}, truth), ValidationError);
  CHECK_THROWS_AS(hamming_accuracy({{1, 0, 1}, {0, 0, 0}}, truth), ValidationError);
  CHECK_THROWS_AS(hamming_accuracy({{2, 0, 1, 0}, {0, 0, 0, 1}}, truth), ValidationError);
  CHECK_THROWS_AS(strict_match_accuracy({}, {}), ValidationError);
}

TEST_CASE("macro_prf1") {
  BinaryMatrix truth = {{1, 0, 1, 0}, {0, 0, 0, 1}};
  auto perfect = macro_prf1(truth, truth);
  // label 1 never occurs and is never predicted: 0/0 counts as 0
  CHECK(perfect.precision == 0.75);
  BinaryMatrix t3 = {{1, 0, 1}, {0, 1, 1}, {1, 1, 0}};
  auto ideal = macro_prf1(t3, t3);
  CHECK(ideal.precision == 1.0);
  CHECK(ideal.recall == 1.0);
  CHECK(ideal.f1 == 1.0);

  BinaryMatrix none = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  CHECK(macro_prf1(none, t3).recall == 0.0);

  SUBCASE("3-label hand tally") {
    BinaryMatrix t = {{1, 0, 1}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
    BinaryMatrix p = {{1, 1, 1}, {0, 1, 0}, {0, 0, 0}, {1, 0, 1}, {1, 0, 1}};
    // label 0: tp 2 fp 1 fn 1 -> P 2/3 R 2/3 F 2/3
    // label 1: tp 1 fp 1 fn 1 -> P 1/2 R 1/2 F 1/2
    // label 2: tp 2 fp 1 fn 0 -> P 2/3 R 1   F 4/5
    auto r = macro_prf1(p, t);
    CHECK(r.per_label[0].tp == 2);
    CHECK(r.per_label[0].fp == 1);
    CHECK(r.per_label[0].fn == 1);
    CHECK(r.per_label[1].tp == 1);
    CHECK(r.per_label[2].fn == 0);
    CHECK(std::fabs(r.precision - (2.0 / 3 + 0.5 + 2.0 / 3) / 3) <= 1e-15);
    CHECK(std::fabs(r.recall - (2.0 / 3 + 0.5 + 1.0) / 3) <= 1e-15);
    CHECK(std::fabs(r.f1 - (2.0 / 3 + 0.5 + 0.8) / 3) <= 1e-15);
  }
}

TEST_CASE("auroc") {
  ScoreMatrix sep = {{0.9}, {0.8}, {0.1}, {0.2}};
  BinaryMatrix t = {{1}, {1}, {0}, {0}};
  CHECK(auroc(sep, t).macro == 1.0);
  ScoreMatrix same = {{0.3}, {0.3}, {0.3}, {0.3}};
  CHECK(auroc(same, t).macro == 0.5);
  ScoreMatrix inverted = {{0.1}, {0.2}, {0.9}, {0.8}};
  CHECK(auroc(inverted, t).macro == 0.0);

  ScoreMatrix two = {{0.9, 0.1}, {0.8, 0.5}, {0.1, 0.7}, {0.2, 0.2}};
  BinaryMatrix tt = {{1, 1}, {1, 1}, {0, 1}, {0, 1}};
  auto r = auroc(two, tt);
  CHECK_FALSE(r.per_label[1].has_value());
  CHECK(r.macro == 1.0);
  CHECK_THROWS_AS(auroc({{0.1}, {0.2}}, {{1}, {1}}), UndefinedMetricError);
  CHECK_THROWS_AS(auroc({{0.1}}, {{1}, {0}}), ValidationError);
}

TEST_CASE("brute-force oracles over random instances") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng);
    CHECK(strict_match_accuracy(in.pred, in.truth) == oracle_strict(in.pred, in.truth));
    CHECK(std::fabs(hamming_accuracy(in.pred, in.truth) - oracle_hamming(in.pred, in.truth)) <=
          1e-12);
    auto prf = macro_prf1(in.pred, in.truth);
    auto ref = oracle_prf(in.pred, in.truth);
    CHECK(std::fabs(prf.precision - ref[0]) <= 1e-12);
    CHECK(std::fabs(prf.recall - ref[1]) <= 1e-12);
    CHECK(std::fabs(prf.f1 - ref[2]) <= 1e-12);
    CHECK(hamming_accuracy(in.pred, in.truth) >= strict_match_accuracy(in.pred, in.truth));

    double sum = 0;
    int valid = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      auto o = oracle_auc(in.scores, in.truth, j);
      if (o) {
        sum += *o;
        ++valid;
      }
    }
    if (valid == 0) {
      CHECK_THROWS_AS(auroc(in.scores, in.truth), UndefinedMetricError);
    } else {
      auto a = auroc(in.scores, in.truth);
      CHECK(std::fabs(a.macro - sum / valid) <= 1e-12);
      for (std::size_t j = 0; j < 4; ++j) {
        auto o = oracle_auc(in.scores, in.truth, j);
        CHECK(a.per_label[j].has_value() == o.has_value());
        if (o) CHECK(std::fabs(*a.per_label[j] - *o) <= 1e-12);
      }
    }
  }
}

TEST_CASE("permutation invariance") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = random_instance(rng);
    auto rows = in;
    std::vector<std::size_t> perm(in.pred.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      rows.pred[i] = in.pred[perm[i]];
      rows.truth[i] = in.truth[perm[i]];
      rows.scores[i] = in.scores[perm[i]];
    }
    CHECK(strict_match_accuracy(rows.pred, rows.truth) == strict_match_accuracy(in.pred, in.truth));
    CHECK(hamming_accuracy(rows.pred, rows.truth) == hamming_accuracy(in.pred, in.truth));
    CHECK(std::fabs(macro_prf1(rows.pred, rows.truth).f1 - macro_prf1(in.pred, in.truth).f1) <= 1e-12);

    auto cols = in;
    for (std::size_t i = 0; i < in.pred.size(); ++i) {
      std::reverse(cols.pred[i].begin(), cols.pred[i].end());
      std::reverse(cols.truth[i].begin(), cols.truth[i].end());
    }
    CHECK(strict_match_accuracy(cols.pred, cols.truth) == strict_match_accuracy(in.pred, in.truth));
    CHECK(hamming_accuracy(cols.pred, cols.truth) == hamming_accuracy(in.pred, in.truth));
  }
}

TEST_CASE("curve_points") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng);
    auto roc = curve_points(in.scores, in.truth, CurveKind::kRoc);
    for (std::size_t j = 0; j < 4; ++j) {
      std::vector<CurvePoint> pts;
      for (const auto& p : roc.points)
        if (p.label == j) pts.push_back(p);
      auto ref = oracle_auc(in.scores, in.truth, j);
      CHECK(pts.empty() == !ref.has_value());
      if (!ref) continue;
      CHECK(pts.front().x == 0.0);
      CHECK(pts.front().y == 0.0);
      CHECK(pts.back().x == 1.0);
      CHECK(pts.back().y == 1.0);
      for (std::size_t k = 1; k < pts.size(); ++k) {
        CHECK(pts[k].threshold < pts[k - 1].threshold);
        CHECK(pts[k].x >= pts[k - 1].x);
        CHECK(pts[k].y >= pts[k - 1].y);
      }
      CHECK(std::fabs(trapezoid_area(pts) - *ref) <= 1e-9);
    }
    CHECK(roc.notices.size() + [&] {
      std::set<std::size_t> labels;
      for (const auto& p : roc.points) labels.insert(p.label);
      return labels.size();
    }() == 4);
  }

  SUBCASE("pr endpoints") {
    ScoreMatrix s = {{0.9}, {0.7}, {0.7}, {0.2}, {0.1}};
    BinaryMatrix t = {{1}, {0}, {1}, {0}, {0}};
    auto pr = curve_points(s, t, CurveKind::kPr).points;
    REQUIRE(pr.size() == 5);
    CHECK(std::isinf(pr[0].threshold));
    CHECK(pr[0].x == 0.0);
    CHECK(pr[0].y == 1.0);
    CHECK(pr[1].x == 0.5);
    CHECK(pr[1].y == 1.0);
    CHECK(pr[2].x == 1.0);
    CHECK(pr[2].y == 2.0 / 3.0);
    CHECK(pr.back().x == 1.0);
    CHECK(pr.back().y == 0.4);  // prevalence
  }

  SUBCASE("csv") {
    ScoreMatrix s = {{0.9, 0.5}, {0.1, 0.5}};
    BinaryMatrix t = {{1, 1}, {0, 1}};
    auto c = curve_points(s, t, CurveKind::kRoc);
    CHECK(c.notices.size() == 1);
    auto csv = curve_csv(c.points, {"human", "animal"});
    CHECK(csv == "label,threshold,x,y\nhuman,inf,0,0\nhuman,0.9,0,1\nhuman,0.1,1,1\n");
  }
}

TEST_CASE("MetricsReport") {
  ScoreMatrix s = {{0.9, 0.2, 0.7, 0.1}, {0.2, 0.1, 0.3, 0.8}};
  BinaryMatrix p = {{1, 0, 1, 0}, {0, 1, 0, 1}};
  BinaryMatrix t = {{1, 0, 1, 0}, {0, 0, 0, 1}};
  auto r = make_report(s, p, t, {"human", "animal", "vehicle", "no_event"}, 0.5, "test");
  CHECK(r.hamming == 0.875);
  CHECK(r.strict_match == 0.5);
  CHECK(r.hamming >= r.strict_match);
  CHECK(r.per_label.size() == 4);
  CHECK_FALSE(r.per_label[1].auroc.has_value());
  auto text = r.to_text();
  for (const char* key : {"exact_match_acc:", "hamming_acc:", "precision:", "recall:", "f1:",
                          "auroc:", "threshold: 0.5"})
    CHECK(text.find(key) != std::string::npos);
  auto back = parse_report(text);
  CHECK(back.hamming == r.hamming);
  CHECK(back.f1 == r.f1);
  CHECK(*back.auroc == *r.auroc);
  CHECK(back.split == "test");
}
