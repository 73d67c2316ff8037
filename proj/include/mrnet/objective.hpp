#pragma once

#include <array>
#include <utility>
#include <vector>

#include "mrnet/model.hpp"
#include "mrnet/span.hpp"

// Set-prediction objective: DETR-style Hungarian matching between predicted
// and ground-truth spans, followed by highlight, span (L1 + generalized IoU)
// and foreground classification losses combined into a weighted total.

namespace mrnet {

struct LossWeights {
  double lambda_h = 2.0;
  double lambda_cls = 4.0;
  double lambda_l1 = 10.0;
  double lambda_iou = 1.0;
  double w_p = 10.0;  // foreground up-weight in the classification loss

  void validate() const {
    if (lambda_h <= 0 || lambda_cls <= 0 || lambda_l1 <= 0 || lambda_iou <= 0 || w_p <= 0)
      throw ConfigError("loss weights must be strictly positive");
  }
};

// pairs[j] = (prediction index, ground-truth index), one per GT span, in GT
// order. Prediction indices are unique; the rest are listed unmatched.
struct MatchResult {
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> unmatched_preds;
};

using CostMatrix = std::vector<std::vector<double>>;

// Exact minimum-cost assignment of every ground-truth column to a distinct
// prediction row (requires n_gt <= n_pred). Among equal-cost optima the
// result is canonical: scanning ground truths in order, each takes the lowest
// prediction index consistent with optimality.
MatchResult match_hungarian(const CostMatrix& cost);

// cost[i][j] = lambda_l1 * L1(pred_i, gt_j in center/width) +
//              lambda_iou * (-giou(pred_i, gt_j in start/end)) - fg_prob_i.
CostMatrix matching_cost(const std::vector<std::array<double, 2>>& pred_cw,
                         const std::vector<double>& fg_prob,
                         const std::vector<Span>& gt_spans, const LossWeights& w);

struct LossBreakdown {
  double highlight = 0.0;
  double span_l1 = 0.0;
  double span_iou = 0.0;  // sum of (1 - giou) over matched pairs
  double cls = 0.0;
  double total = 0.0;
};

template <typename S>
struct LossTensors {
  TensorT<S> highlight, span_l1, span_iou, cls, total;

  LossBreakdown values() const {
    return LossBreakdown{static_cast<double>(highlight.scalar()),
                         static_cast<double>(span_l1.scalar()),
                         static_cast<double>(span_iou.scalar()),
                         static_cast<double>(cls.scalar()),
                         static_cast<double>(total.scalar())};
  }
};

// Plain-value views of the prediction tensors, used to build the cost matrix.
template <typename S>
std::vector<std::array<double, 2>> predicted_spans_cw(const ForwardOutputT<S>& out) {
  std::vector<std::array<double, 2>> spans(static_cast<size_t>(out.spans_cw.rows()));
  for (int i = 0; i < out.spans_cw.rows(); ++i)
    spans[static_cast<size_t>(i)] = {static_cast<double>(out.spans_cw.at(i, 0)),
                                     static_cast<double>(out.spans_cw.at(i, 1))};
  return spans;
}

template <typename S>
std::vector<double> predicted_fg(const ForwardOutputT<S>& out) {
  std::vector<double> fg(static_cast<size_t>(out.fg_prob.numel()));
  for (int64_t i = 0; i < out.fg_prob.numel(); ++i)
    fg[static_cast<size_t>(i)] = static_cast<double>(out.fg_prob.at(i));
  return fg;
}

template <typename S>
MatchResult match_predictions(const ForwardOutputT<S>& out, const std::vector<Span>& gt_spans,
                              const LossWeights& w) {
  if (gt_spans.empty()) {
    MatchResult m;
    for (int i = 0; i < out.spans_cw.rows(); ++i) m.unmatched_preds.push_back(i);
    return m;
  }
  return match_hungarian(matching_cost(predicted_spans_cw(out), predicted_fg(out), gt_spans, w));
}

// Differentiable generalized-IoU sum over matched pairs, built from
// elementwise graph ops on the unclamped (c - w/2, c + w/2) conversion so
// gradients stay alive outside [0,1].
template <typename S>
TensorT<S> giou_sum(GraphT<S>& g, const TensorT<S>& matched_cw, const std::vector<Span>& gt) {
  const int m = matched_cw.rows();
  auto c = reshape(g, slice_cols(g, matched_cw, 0, 1), {m});
  auto w = reshape(g, slice_cols(g, matched_cw, 1, 2), {m});
  auto half = scale(g, w, S(0.5));
  auto s1 = sub(g, c, half);
  auto e1 = add(g, c, half);
  auto s2 = TensorT<S>::zeros({m});
  auto e2 = TensorT<S>::zeros({m});
  auto w2 = TensorT<S>::zeros({m});
  for (int i = 0; i < m; ++i) {
    s2.at(i) = static_cast<S>(gt[static_cast<size_t>(i)].start);
    e2.at(i) = static_cast<S>(gt[static_cast<size_t>(i)].end);
    w2.at(i) = static_cast<S>(gt[static_cast<size_t>(i)].length());
  }
  auto inter = relu(g, sub(g, emin(g, e1, e2), emax(g, s1, s2)));
  auto uni = sub(g, add(g, w, w2), inter);            // widths sum minus overlap
  auto hull = sub(g, emax(g, e1, e2), emin(g, s1, s2));
  auto giou = sub(g, div(g, inter, uni), div(g, sub(g, hull, uni), hull));
  return sum(g, giou);
}

// Highlight loss (binary cross entropy summed over clips, no averaging).
template <typename S>
TensorT<S> loss_highlight(GraphT<S>& g, const TensorT<S>& saliency,
                          const std::vector<float>& h_gt) {
  std::vector<S> targets(h_gt.begin(), h_gt.end());
  return weighted_bce_sum(g, saliency, targets, S(1));
}

// Span loss over the matched pairs: (sum L1 in center/width coords,
// sum 1 - giou in start/end coords). Unmatched predictions contribute nothing.
template <typename S>
std::pair<TensorT<S>, TensorT<S>> loss_span(GraphT<S>& g, const TensorT<S>& spans_cw,
                                            const std::vector<Span>& gt_spans,
                                            const MatchResult& match) {
  if (match.pairs.empty())
    return {TensorT<S>::zeros({1}), TensorT<S>::zeros({1})};
  std::vector<int> pred_idx;
  std::vector<Span> gt_ordered;
  auto gt_cw = TensorT<S>::zeros({static_cast<int>(match.pairs.size()), 2});
  for (size_t r = 0; r < match.pairs.size(); ++r) {
    const auto& [pi, gj] = match.pairs[r];
    pred_idx.push_back(pi);
    const Span& s = gt_spans[static_cast<size_t>(gj)];
    gt_ordered.push_back(s);
    gt_cw.at(static_cast<int>(r), 0) = static_cast<S>(s.center());
    gt_cw.at(static_cast<int>(r), 1) = static_cast<S>(s.width());
  }
  auto matched = gather_rows(g, spans_cw, pred_idx);
  auto l1 = sum(g, eabs(g, sub(g, matched, gt_cw)));
  auto iou = sub(g, TensorT<S>::full({1}, S(match.pairs.size())), giou_sum(g, matched, gt_ordered));
  return {l1, iou};
}

// Foreground/background classification loss; matched predictions are
// foreground and weighted by w_p.
template <typename S>
TensorT<S> loss_cls(GraphT<S>& g, const TensorT<S>& fg_prob, const MatchResult& match,
                    const LossWeights& w) {
  std::vector<S> targets(static_cast<size_t>(fg_prob.numel()), S(0));
  for (const auto& [pi, gj] : match.pairs) targets[static_cast<size_t>(pi)] = S(1);
  return weighted_bce_sum(g, fg_prob, targets, S(w.w_p));
}

// Weighted total: lambda_h * L_h + (lambda_l1 * L_l1 + lambda_iou * L_iou) +
// lambda_cls * L_cls.
template <typename S>
TensorT<S> loss_total(GraphT<S>& g, const TensorT<S>& highlight, const TensorT<S>& span_l1,
                      const TensorT<S>& span_iou, const TensorT<S>& cls,
                      const LossWeights& w) {
  auto weighted = add(g, scale(g, highlight, S(w.lambda_h)),
                      add(g, scale(g, span_l1, S(w.lambda_l1)),
                          scale(g, span_iou, S(w.lambda_iou))));
  return add(g, weighted, scale(g, cls, S(w.lambda_cls)));
}

// Full objective for one sample with the matching held fixed (the matching is
// recomputed per step outside, never differentiated through).
template <typename S>
LossTensors<S> build_losses(GraphT<S>& g, const ForwardOutputT<S>& out,
                            const std::vector<Span>& gt_spans, const std::vector<float>& h_gt,
                            const MatchResult& match, const LossWeights& w) {
  LossTensors<S> l;
  l.highlight = loss_highlight(g, out.saliency, h_gt);
  auto [l1, iou] = loss_span(g, out.spans_cw, gt_spans, match);
  l.span_l1 = l1;
  l.span_iou = iou;
  l.cls = loss_cls(g, out.fg_prob, match, w);
  l.total = loss_total(g, l.highlight, l.span_l1, l.span_iou, l.cls, w);
  return l;
}

}  // namespace mrnet
