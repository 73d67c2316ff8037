#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "metrics_oracle.hpp"
#include "mrnet/common.hpp"
#include "mrnet/metrics.hpp"

using namespace mrnet;

namespace {

QueryPrediction make_pred(int64_t qid, std::vector<ScoredSpan> spans,
                          std::vector<double> saliency = {}) {
  QueryPrediction p;
  p.qid = qid;
  p.spans = std::move(spans);
  p.saliency = std::move(saliency);
  return p;
}

QueryGroundTruth make_gt(int64_t qid, std::vector<Span> spans,
                         std::vector<std::vector<int>> labels = {}) {
  QueryGroundTruth g;
  g.qid = qid;
  g.spans = std::move(spans);
  g.saliency_labels = std::move(labels);
  return g;
}

// Random prediction/ground-truth pair generator used for the oracle sweep.
struct RandomCase {
  std::vector<QueryPrediction> preds;
  std::vector<QueryGroundTruth> gts;
};

RandomCase random_case(Rng& rng, int n_queries, int mode) {
  RandomCase rc;
  for (int q = 0; q < n_queries; ++q) {
    const int n_gt = rng.uniform_int(1, 4);
    const int n_clip = rng.uniform_int(3, 12);
    QueryGroundTruth gt;
    gt.qid = q;
    for (int i = 0; i < n_gt; ++i) {
      double a = rng.uniform(0.0, 80.0);
      double b = a + rng.uniform(1.0, 40.0);
      gt.spans.push_back({a, b});
    }
    bool any_pos = false;
    for (int c = 0; c < n_clip; ++c) {
      std::vector<int> labels;
      const int annotators = rng.uniform_int(0, 3);
      for (int a = 0; a < annotators; ++a) {
        int l = rng.uniform_int(0, 4);
        labels.push_back(l);
        if (l >= 3) any_pos = true;
      }
      gt.saliency_labels.push_back(labels);
    }
    if (!any_pos) gt.saliency_labels[0] = {4};  // keep every query scoreable

    QueryPrediction pred;
    pred.qid = q;
    if (mode == 1) {
      for (const auto& s : gt.spans) pred.spans.push_back({s, rng.uniform(0.5, 1.0)});
    } else if (mode == 2) {
      for (int i = 0; i < 5; ++i) {
        double a = 1000.0 + 10.0 * i;
        pred.spans.push_back({Span{a, a + 5.0}, rng.uniform()});
      }
    } else {
      const int n_pred = rng.uniform_int(1, 10);
      for (int i = 0; i < n_pred; ++i) {
        double a = rng.uniform(0.0, 100.0);
        double b = a + rng.uniform(0.5, 50.0);
        pred.spans.push_back({Span{a, b}, rng.uniform()});
      }
    }
    for (int c = 0; c < n_clip; ++c) pred.saliency.push_back(rng.uniform());
    rc.preds.push_back(std::move(pred));
    rc.gts.push_back(std::move(gt));
  }
  return rc;
}

}  // namespace

TEST_CASE("recall_at_1 thresholds and averaging") {
  auto gts = std::vector<QueryGroundTruth>{
      make_gt(0, {{10.0, 20.0}}, {{4}}),
      make_gt(1, {{0.0, 10.0}}, {{4}}),
  };
  // Query 0: exact top-1. Query 1: IoU 0.6 (hit at 0.5, miss at 0.7).
  auto preds = std::vector<QueryPrediction>{
      make_pred(0, {{{10.0, 20.0}, 0.9}, {{50.0, 60.0}, 0.5}}, {1.0}),
      make_pred(1, {{{0.0, 6.0}, 0.9}}, {1.0}),
  };
  CHECK(recall_at_1(preds, gts, 0.5) == doctest::Approx(1.0));
  CHECK(recall_at_1(preds, gts, 0.7) == doctest::Approx(0.5));
  CHECK_THROWS_AS(recall_at_1({}, {}, 0.5), InputError);
}

TEST_CASE("average precision hand cases") {
  std::vector<Span> one_gt = {{0.0, 10.0}};
  // First prediction correct.
  CHECK(average_precision_spans({{{0.0, 10.0}, 0.9}}, one_gt, 0.5) == doctest::Approx(1.0));
  // Wrong then right: precision 1/2 at rank 2.
  CHECK(average_precision_spans({{{50.0, 60.0}, 0.9}, {{0.0, 10.0}, 0.8}}, one_gt, 0.5) ==
        doctest::Approx(0.5));
  // Two ground truths matched at ranks 1 and 2: (1/1 + 2/2) / 2 = 1.
  std::vector<Span> two_gt = {{0.0, 10.0}, {20.0, 30.0}};
  CHECK(average_precision_spans({{{0.0, 10.0}, 0.9}, {{20.0, 30.0}, 0.8}}, two_gt, 0.5) ==
        doctest::Approx(1.0));
}

TEST_CASE("mr_map bounds") {
  auto gts = std::vector<QueryGroundTruth>{make_gt(0, {{5.0, 15.0}}, {{4}})};
  auto perfect = std::vector<QueryPrediction>{make_pred(0, {{{5.0, 15.0}, 1.0}}, {1.0})};
  auto m = mr_map(perfect, gts);
  CHECK(m.at_05 == doctest::Approx(1.0));
  CHECK(m.at_075 == doctest::Approx(1.0));
  CHECK(m.avg == doctest::Approx(1.0));

  auto disjoint = std::vector<QueryPrediction>{make_pred(0, {{{50.0, 60.0}, 1.0}}, {1.0})};
  auto z = mr_map(disjoint, gts);
  CHECK(z.at_05 == doctest::Approx(0.0));
  CHECK(z.at_075 == doctest::Approx(0.0));
  CHECK(z.avg == doctest::Approx(0.0));
}

TEST_CASE("hd_map hand cases") {
  // Saliency equal to the positive indicator ranks positives first.
  auto gts = std::vector<QueryGroundTruth>{make_gt(0, {{0.0, 2.0}}, {{4}, {0}, {3}, {1}})};
  auto preds = std::vector<QueryPrediction>{make_pred(0, {{{0.0, 2.0}, 1.0}}, {1.0, 0.0, 1.0, 0.0})};
  CHECK(hd_map(preds, gts) == doctest::Approx(1.0));

  // One positive ranked second of four: AP = 1/2.
  auto gts2 = std::vector<QueryGroundTruth>{make_gt(0, {{0.0, 2.0}}, {{0}, {4}, {0}, {0}})};
  auto preds2 = std::vector<QueryPrediction>{make_pred(0, {{{0.0, 2.0}, 1.0}}, {0.9, 0.8, 0.1, 0.0})};
  CHECK(hd_map(preds2, gts2) == doctest::Approx(0.5));
}

TEST_CASE("hd_map over annotators equals the mean of single-annotator APs") {
  // Annotator 0 marks clip 0, annotator 1 marks clip 2.
  std::vector<std::vector<int>> both = {{4, 0}, {0, 0}, {0, 4}};
  auto pred = make_pred(0, {{{0.0, 2.0}, 1.0}}, {0.9, 0.5, 0.1});
  auto gt_both = std::vector<QueryGroundTruth>{make_gt(0, {{0.0, 2.0}}, both)};
  const double combined = hd_map({pred}, gt_both);

  auto gt_a = std::vector<QueryGroundTruth>{make_gt(0, {{0.0, 2.0}}, {{4}, {0}, {0}})};
  auto gt_b = std::vector<QueryGroundTruth>{make_gt(0, {{0.0, 2.0}}, {{0}, {0}, {4}})};
  const double ap_a = hd_map({pred}, gt_a);
  const double ap_b = hd_map({pred}, gt_b);
  CHECK(combined == doctest::Approx(0.5 * (ap_a + ap_b)).epsilon(1e-12));
}

TEST_CASE("hit_at_1 hand cases") {
  auto pred = make_pred(0, {{{0.0, 2.0}, 1.0}}, {0.9, 0.1});
  CHECK(hit_at_1({pred}, {make_gt(0, {{0.0, 2.0}}, {{4}, {0}})}) == doctest::Approx(1.0));
  CHECK(hit_at_1({pred}, {make_gt(0, {{0.0, 2.0}}, {{2, 2}, {4}})}) == doctest::Approx(0.0));

  // 4 queries, 3 hits.
  std::vector<QueryPrediction> preds;
  std::vector<QueryGroundTruth> gts;
  for (int q = 0; q < 4; ++q) {
    preds.push_back(make_pred(q, {{{0.0, 2.0}, 1.0}}, {1.0, 0.0}));
    gts.push_back(make_gt(q, {{0.0, 2.0}}, {{q == 3 ? 1 : 3}, {4}}));
  }
  CHECK(hit_at_1(preds, gts) == doctest::Approx(0.75));
}

TEST_CASE("evaluate rejects misaligned query ids") {
  auto preds = std::vector<QueryPrediction>{make_pred(7, {{{0.0, 1.0}, 1.0}}, {1.0})};
  auto gts = std::vector<QueryGroundTruth>{make_gt(9, {{0.0, 1.0}}, {{4}})};
  try {
    evaluate(preds, gts);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("9") != std::string::npos);
    CHECK(msg.find("7") != std::string::npos);
  }
}

TEST_CASE("evaluate is invariant to query order") {
  Rng rng(5);
  auto rc = random_case(rng, 12, 0);
  auto base = evaluate(rc.preds, rc.gts);
  std::reverse(rc.preds.begin(), rc.preds.end());
  auto flipped = evaluate(rc.preds, rc.gts);
  CHECK(base.r1_at_07 == flipped.r1_at_07);
  CHECK(base.map_avg == flipped.map_avg);
  CHECK(base.hd_map == flipped.hd_map);
  CHECK(base.hd_hit1 == flipped.hd_hit1);
}

TEST_CASE("metrics are invariant under monotone score transforms") {
  Rng rng(9);
  auto rc = random_case(rng, 10, 0);
  auto base = evaluate(rc.preds, rc.gts);
  for (auto& p : rc.preds) {
    for (auto& s : p.spans) s.score = 3.0 * s.score + 7.0;
    for (auto& v : p.saliency) v = std::exp(v);
  }
  auto scaled = evaluate(rc.preds, rc.gts);
  CHECK(base.r1_at_05 == scaled.r1_at_05);
  CHECK(base.map_at_05 == scaled.map_at_05);
  CHECK(base.map_avg == scaled.map_avg);
  CHECK(base.hd_map == scaled.hd_map);
  CHECK(base.hd_hit1 == scaled.hd_hit1);
}

TEST_CASE("per-query AP never increases with the IoU threshold") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    auto rc = random_case(rng, 1, 0);
    double prev = 2.0;
    for (int k = 0; k < 10; ++k) {
      double ap = average_precision_spans(rc.preds[0].spans, rc.gts[0].spans, 0.5 + 0.05 * k);
      CHECK(ap <= prev + 1e-12);
      prev = ap;
    }
  }
}

TEST_CASE("map_avg lies inside the per-threshold envelope") {
  Rng rng(17);
  auto rc = random_case(rng, 8, 0);
  auto m = mr_map(rc.preds, rc.gts);
  double lo = 1e9, hi = -1e9;
  for (int k = 0; k < 10; ++k) {
    const double v = oracle::naive_map(rc.preds, rc.gts, 0.5 + 0.05 * k);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(m.avg >= lo - 1e-12);
  CHECK(m.avg <= hi + 1e-12);
}

TEST_CASE("library metrics equal the naive oracle on 200 random sets") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    // Modes cycle through generic, perfect-overlap, and zero-overlap sets.
    const int mode = trial % 3 == 0 ? 0 : (trial % 3 == 1 ? 1 : 2);
    auto rc = random_case(rng, rng.uniform_int(1, 6), mode);
    auto rep = evaluate(rc.preds, rc.gts);
    CHECK(std::abs(rep.r1_at_05 - oracle::naive_r1(rc.preds, rc.gts, 0.5)) < 1e-9);
    CHECK(std::abs(rep.r1_at_07 - oracle::naive_r1(rc.preds, rc.gts, 0.7)) < 1e-9);
    CHECK(std::abs(rep.map_at_05 - oracle::naive_map(rc.preds, rc.gts, 0.5)) < 1e-9);
    CHECK(std::abs(rep.map_at_075 - oracle::naive_map(rc.preds, rc.gts, 0.75)) < 1e-9);
    CHECK(std::abs(rep.map_avg - oracle::naive_map_avg(rc.preds, rc.gts)) < 1e-9);
    CHECK(std::abs(rep.hd_map - oracle::naive_hd_map(rc.preds, rc.gts)) < 1e-9);
    CHECK(std::abs(rep.hd_hit1 - oracle::naive_hit1(rc.preds, rc.gts)) < 1e-9);
  }
}

TEST_CASE("report serialization uses the percent convention") {
  EvalReport r;
  r.r1_at_05 = 0.5;
  r.map_avg = 0.25;
  r.n_queries = 16;
  const std::string j = r.to_json();
  CHECK(j.find("\"r1_at_05\": 50.0") != std::string::npos);
  CHECK(j.find("\"map_avg\": 25.0") != std::string::npos);
  CHECK(j.find("\"n_queries\": 16") != std::string::npos);
}
