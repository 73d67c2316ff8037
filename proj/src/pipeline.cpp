#include "mrnet/pipeline.hpp"

namespace mrnet {

QueryPrediction predict_sample(const ModelParams& params, const ModelConfig& cfg,
                               const VideoSample& sample, const AblationFlags& ablation) {
  Graph g(false);
  const ForwardMode eval{};
  auto out = model_forward(g, sample, params, cfg, eval, ablation);
  QueryPrediction pred;
  pred.qid = sample.ann.qid;
  const double duration = sample.ann.duration;
  for (int i = 0; i < out.spans_cw.rows(); ++i) {
    const Span s = span_from_center_width_clamped(out.spans_cw.at(i, 0), out.spans_cw.at(i, 1));
    pred.spans.push_back({Span{s.start * duration, s.end * duration},
                          static_cast<double>(out.fg_prob.at(i))});
  }
  for (int64_t i = 0; i < out.saliency.numel(); ++i)
    pred.saliency.push_back(static_cast<double>(out.saliency.at(i)));
  return pred;
}

std::vector<QueryPrediction> predict(const ModelParams& params, const ModelConfig& cfg,
                                     const std::vector<VideoSample>& samples,
                                     const AblationFlags& ablation) {
  std::vector<QueryPrediction> preds;
  preds.reserve(samples.size());
  for (const auto& s : samples) preds.push_back(predict_sample(params, cfg, s, ablation));
  return preds;
}

std::vector<QueryGroundTruth> ground_truths(const std::vector<VideoSample>& samples) {
  std::vector<QueryGroundTruth> gts;
  gts.reserve(samples.size());
  for (const auto& s : samples) {
    QueryGroundTruth gt;
    gt.qid = s.ann.qid;
    for (const auto& w : s.ann.relevant_windows) gt.spans.push_back(Span{w[0], w[1]});
    gt.saliency_labels = s.ann.saliency;
    gts.push_back(std::move(gt));
  }
  return gts;
}

QueryPrediction oracle_prediction(const VideoSample& sample) {
  QueryPrediction pred;
  pred.qid = sample.ann.qid;
  for (const auto& w : sample.ann.relevant_windows)
    pred.spans.push_back({Span{w[0], w[1]}, 1.0});
  pred.saliency.assign(sample.h_gt.begin(), sample.h_gt.end());
  return pred;
}

EvalReport evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                          const std::vector<VideoSample>& samples,
                          const AblationFlags& ablation) {
  return evaluate(predict(params, cfg, samples, ablation), ground_truths(samples));
}

LossBreakdown dataset_loss(const ModelParams& params, const ModelConfig& cfg,
                           const LossWeights& weights, const std::vector<VideoSample>& samples,
                           const AblationFlags& ablation) {
  if (samples.empty()) throw InputError("dataset_loss: empty dataset");
  LossBreakdown mean;
  for (const auto& s : samples) {
    Graph g(false);
    const ForwardMode eval{};
    auto out = model_forward(g, s, params, cfg, eval, ablation);
    auto match = match_predictions(out, s.norm_spans, weights);
    auto l = build_losses(g, out, s.norm_spans, s.h_gt, match, weights).values();
    mean.highlight += l.highlight;
    mean.span_l1 += l.span_l1;
    mean.span_iou += l.span_iou;
    mean.cls += l.cls;
    mean.total += l.total;
  }
  const double n = static_cast<double>(samples.size());
  mean.highlight /= n;
  mean.span_l1 /= n;
  mean.span_iou /= n;
  mean.cls /= n;
  mean.total /= n;
  return mean;
}

}  // namespace mrnet
