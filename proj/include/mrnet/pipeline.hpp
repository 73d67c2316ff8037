#pragma once

#include <vector>

#include "mrnet/config.hpp"
#include "mrnet/metrics.hpp"
#include "mrnet/model.hpp"
#include "mrnet/objective.hpp"

// Glue between the model and the metric suite: eval-mode prediction, ground
// truth extraction, and full-split evaluation. Span predictions are emitted
// in seconds (scaled by video duration) ranked by foreground probability.

namespace mrnet {

QueryPrediction predict_sample(const ModelParams& params, const ModelConfig& cfg,
                               const VideoSample& sample, const AblationFlags& ablation = {});

std::vector<QueryPrediction> predict(const ModelParams& params, const ModelConfig& cfg,
                                     const std::vector<VideoSample>& samples,
                                     const AblationFlags& ablation = {});

std::vector<QueryGroundTruth> ground_truths(const std::vector<VideoSample>& samples);

// Test hook: ground truth fed back as a prediction. On data whose annotators
// agree this scores 100 on every metric.
QueryPrediction oracle_prediction(const VideoSample& sample);

EvalReport evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                          const std::vector<VideoSample>& samples,
                          const AblationFlags& ablation = {});

// Mean per-sample loss over a dataset in eval mode (matching recomputed per
// sample), without touching gradients.
LossBreakdown dataset_loss(const ModelParams& params, const ModelConfig& cfg,
                           const LossWeights& weights, const std::vector<VideoSample>& samples,
                           const AblationFlags& ablation = {});

}  // namespace mrnet
