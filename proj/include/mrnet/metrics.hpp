#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrnet/common.hpp"
#include "mrnet/span.hpp"

// Moment-retrieval and highlight-detection metrics. All functions depend on
// predictions only through rankings: any strictly monotone transform of
// confidence or saliency scores leaves every value unchanged. Tie-breaking is
// deterministic everywhere (earlier span start / lower clip index first).

namespace mrnet {

struct ScoredSpan {
  Span span;
  double score = 0.0;
};

struct QueryPrediction {
  int64_t qid = 0;
  std::vector<ScoredSpan> spans;    // ranked by descending confidence
  std::vector<double> saliency;     // one score per clip
};

struct QueryGroundTruth {
  int64_t qid = 0;
  std::vector<Span> spans;
  // Per clip: 0-4 labels from each annotator; empty list means label 0.
  std::vector<std::vector<int>> saliency_labels;
};

struct EvalReport {
  double r1_at_05 = 0.0;
  double r1_at_07 = 0.0;
  double map_at_05 = 0.0;
  double map_at_075 = 0.0;
  double map_avg = 0.0;   // mean mAP over IoU 0.50:0.05:0.95
  double hd_map = 0.0;
  double hd_hit1 = 0.0;
  int64_t n_queries = 0;
  int64_t hd_skipped = 0;  // queries with no clip labeled >= 3 by any annotator

  // Flat JSON with the seven metric fields in percent plus "n_queries".
  std::string to_json() const;
};

// Fraction of queries whose top-confidence span reaches IoU >= threshold with
// some ground-truth span.
double recall_at_1(const std::vector<QueryPrediction>& preds,
                   const std::vector<QueryGroundTruth>& gts, double iou_threshold);

// Detection AP for one query at one IoU threshold: walk predictions in rank
// order, greedily matching each to the best-IoU unused ground truth.
double average_precision_spans(const std::vector<ScoredSpan>& ranked,
                               const std::vector<Span>& gt_spans, double iou_threshold);

struct MrMap {
  double at_05 = 0.0;
  double at_075 = 0.0;
  double avg = 0.0;
};

MrMap mr_map(const std::vector<QueryPrediction>& preds,
             const std::vector<QueryGroundTruth>& gts);

// Highlight mAP at the "very good" bar: per annotator, clips labeled >= 3 are
// positives; ranking AP over predicted saliency, averaged over annotators
// with at least one positive, then over queries. Queries with no positive at
// all are skipped and counted.
double hd_map(const std::vector<QueryPrediction>& preds,
              const std::vector<QueryGroundTruth>& gts, int64_t* skipped = nullptr);

// Fraction of (non-skipped) queries whose top-scored clip carries a label
// >= 3 from at least one annotator.
double hit_at_1(const std::vector<QueryPrediction>& preds,
                const std::vector<QueryGroundTruth>& gts, int64_t* skipped = nullptr);

// All metrics over a split. Predictions and ground truths are aligned by qid;
// missing or extra ids raise InputError naming them.
EvalReport evaluate(const std::vector<QueryPrediction>& preds,
                    const std::vector<QueryGroundTruth>& gts);

}  // namespace mrnet
