#include "mrnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

namespace mrnet {

namespace {

std::vector<ScoredSpan> ranked_spans(const QueryPrediction& pred) {
  auto spans = pred.spans;
  std::sort(spans.begin(), spans.end(), [](const ScoredSpan& a, const ScoredSpan& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    return a.span.end < b.span.end;
  });
  return spans;
}

std::vector<int> ranked_clips(const std::vector<double>& saliency) {
  std::vector<int> order(saliency.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (saliency[static_cast<size_t>(a)] != saliency[static_cast<size_t>(b)])
      return saliency[static_cast<size_t>(a)] > saliency[static_cast<size_t>(b)];
    return a < b;
  });
  return order;
}

int annotator_label(const QueryGroundTruth& gt, size_t clip, size_t annotator) {
  const auto& labels = gt.saliency_labels[clip];
  return annotator < labels.size() ? labels[annotator] : 0;
}

size_t annotator_count(const QueryGroundTruth& gt) {
  size_t n = 0;
  for (const auto& labels : gt.saliency_labels) n = std::max(n, labels.size());
  return n;
}

bool query_has_very_good(const QueryGroundTruth& gt) {
  for (const auto& labels : gt.saliency_labels)
    for (int l : labels)
      if (l >= 3) return true;
  return false;
}

void require_aligned(const std::vector<QueryPrediction>& preds,
                     const std::vector<QueryGroundTruth>& gts) {
  if (preds.empty() || gts.empty()) throw InputError("metrics: empty dataset");
  std::map<int64_t, int> count;
  for (const auto& p : preds) count[p.qid] += 1;
  for (const auto& g : gts) count[g.qid] -= 1;
  std::string missing, extra;
  for (const auto& [qid, c] : count) {
    if (c < 0) missing += (missing.empty() ? "" : ", ") + std::to_string(qid);
    if (c > 0) extra += (extra.empty() ? "" : ", ") + std::to_string(qid);
  }
  if (!missing.empty() || !extra.empty())
    throw InputError("metrics: query ids disagree; missing predictions for [" + missing +
                     "], predictions without ground truth [" + extra + "]");
}

// Pairs (pred, gt) ordered by ascending qid so reductions are deterministic
// under any input ordering.
std::vector<std::pair<const QueryPrediction*, const QueryGroundTruth*>> paired(
    const std::vector<QueryPrediction>& preds, const std::vector<QueryGroundTruth>& gts) {
  require_aligned(preds, gts);
  std::map<int64_t, const QueryPrediction*> by_qid;
  for (const auto& p : preds) {
    if (!by_qid.emplace(p.qid, &p).second)
      throw InputError("metrics: duplicate prediction qid " + std::to_string(p.qid));
  }
  std::map<int64_t, const QueryGroundTruth*> gt_by_qid;
  for (const auto& g : gts) {
    if (!gt_by_qid.emplace(g.qid, &g).second)
      throw InputError("metrics: duplicate ground-truth qid " + std::to_string(g.qid));
  }
  std::vector<std::pair<const QueryPrediction*, const QueryGroundTruth*>> out;
  out.reserve(preds.size());
  for (const auto& [qid, gt] : gt_by_qid) out.push_back({by_qid.at(qid), gt});
  return out;
}

double ranking_ap(const std::vector<int>& order, const std::vector<char>& positive,
                  int n_positive) {
  double ap = 0.0;
  int hits = 0;
  for (size_t rank = 0; rank < order.size(); ++rank) {
    if (positive[static_cast<size_t>(order[rank])]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(n_positive);
}

}  // namespace

double average_precision_spans(const std::vector<ScoredSpan>& ranked,
                               const std::vector<Span>& gt_spans, double iou_threshold) {
  if (gt_spans.empty()) throw InputError("average_precision_spans: no ground-truth spans");
  std::vector<char> used(gt_spans.size(), 0);
  double ap = 0.0;
  int tp = 0;
  for (size_t rank = 0; rank < ranked.size(); ++rank) {
    int best = -1;
    double best_iou = -1.0;
    for (size_t j = 0; j < gt_spans.size(); ++j) {
      if (used[j]) continue;
      const double iou = iou_1d(ranked[rank].span, gt_spans[j]);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0 && best_iou >= iou_threshold) {
      used[static_cast<size_t>(best)] = 1;
      ++tp;
      ap += static_cast<double>(tp) / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(gt_spans.size());
}

double recall_at_1(const std::vector<QueryPrediction>& preds,
                   const std::vector<QueryGroundTruth>& gts, double iou_threshold) {
  auto pairs = paired(preds, gts);
  double hits = 0.0;
  for (const auto& [pred, gt] : pairs) {
    if (gt->spans.empty())
      throw InputError("recall_at_1: query " + std::to_string(gt->qid) + " has no ground truth");
    auto ranked = ranked_spans(*pred);
    if (ranked.empty()) continue;
    for (const auto& s : gt->spans)
      if (iou_1d(ranked[0].span, s) >= iou_threshold) {
        hits += 1.0;
        break;
      }
  }
  return hits / static_cast<double>(pairs.size());
}

MrMap mr_map(const std::vector<QueryPrediction>& preds,
             const std::vector<QueryGroundTruth>& gts) {
  auto pairs = paired(preds, gts);
  MrMap out;
  double sum_all = 0.0;
  for (int t = 0; t < 10; ++t) {
    const double mu = 0.50 + 0.05 * t;
    double sum = 0.0;
    for (const auto& [pred, gt] : pairs) {
      if (gt->spans.empty())
        throw InputError("mr_map: query " + std::to_string(gt->qid) + " has no ground truth");
      sum += average_precision_spans(ranked_spans(*pred), gt->spans, mu);
    }
    const double m = sum / static_cast<double>(pairs.size());
    if (t == 0) out.at_05 = m;
    if (t == 5) out.at_075 = m;
    sum_all += m;
  }
  out.avg = sum_all / 10.0;
  return out;
}

double hd_map(const std::vector<QueryPrediction>& preds,
              const std::vector<QueryGroundTruth>& gts, int64_t* skipped) {
  auto pairs = paired(preds, gts);
  double sum = 0.0;
  int64_t kept = 0, skip = 0;
  for (const auto& [pred, gt] : pairs) {
    if (!query_has_very_good(*gt)) {
      ++skip;
      continue;
    }
    if (pred->saliency.size() != gt->saliency_labels.size())
      throw InputError("hd_map: clip count mismatch for query " + std::to_string(gt->qid));
    const auto order = ranked_clips(pred->saliency);
    const size_t annotators = annotator_count(*gt);
    double ap_sum = 0.0;
    int ap_count = 0;
    for (size_t a = 0; a < annotators; ++a) {
      std::vector<char> positive(gt->saliency_labels.size(), 0);
      int n_pos = 0;
      for (size_t c = 0; c < gt->saliency_labels.size(); ++c)
        if (annotator_label(*gt, c, a) >= 3) {
          positive[c] = 1;
          ++n_pos;
        }
      if (n_pos == 0) continue;  // this annotator marked nothing very good
      ap_sum += ranking_ap(order, positive, n_pos);
      ++ap_count;
    }
    sum += ap_sum / static_cast<double>(ap_count);
    ++kept;
  }
  if (skipped) *skipped = skip;
  return kept > 0 ? sum / static_cast<double>(kept) : 0.0;
}

double hit_at_1(const std::vector<QueryPrediction>& preds,
                const std::vector<QueryGroundTruth>& gts, int64_t* skipped) {
  auto pairs = paired(preds, gts);
  double hits = 0.0;
  int64_t kept = 0, skip = 0;
  for (const auto& [pred, gt] : pairs) {
    if (!query_has_very_good(*gt)) {
      ++skip;
      continue;
    }
    if (pred->saliency.size() != gt->saliency_labels.size())
      throw InputError("hit_at_1: clip count mismatch for query " + std::to_string(gt->qid));
    const auto order = ranked_clips(pred->saliency);
    const auto& labels = gt->saliency_labels[static_cast<size_t>(order[0])];
    if (std::any_of(labels.begin(), labels.end(), [](int l) { return l >= 3; })) hits += 1.0;
    ++kept;
  }
  if (skipped) *skipped = skip;
  return kept > 0 ? hits / static_cast<double>(kept) : 0.0;
}

EvalReport evaluate(const std::vector<QueryPrediction>& preds,
                    const std::vector<QueryGroundTruth>& gts) {
  EvalReport report;
  report.n_queries = static_cast<int64_t>(gts.size());
  report.r1_at_05 = recall_at_1(preds, gts, 0.5);
  report.r1_at_07 = recall_at_1(preds, gts, 0.7);
  const MrMap m = mr_map(preds, gts);
  report.map_at_05 = m.at_05;
  report.map_at_075 = m.at_075;
  report.map_avg = m.avg;
  report.hd_map = hd_map(preds, gts, &report.hd_skipped);
  report.hd_hit1 = hit_at_1(preds, gts);
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["r1_at_05"] = r1_at_05 * 100.0;
  j["r1_at_07"] = r1_at_07 * 100.0;
  j["map_at_05"] = map_at_05 * 100.0;
  j["map_at_075"] = map_at_075 * 100.0;
  j["map_avg"] = map_avg * 100.0;
  j["hd_map"] = hd_map * 100.0;
  j["hd_hit1"] = hd_hit1 * 100.0;
  j["n_queries"] = n_queries;
  return j.dump(2);
}

}  // namespace mrnet
