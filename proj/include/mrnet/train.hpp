#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "mrnet/config.hpp"
#include "mrnet/pipeline.hpp"

namespace mrnet {

struct EpochStats {
  int epoch = 0;  // 1-based
  int steps = 0;  // optimizer steps taken so far
  LossBreakdown loss;  // mean per-sample loss over the epoch
  std::optional<EvalReport> eval;  // present on eval_every epochs
};

struct TrainHooks {
  // Called after every epoch; return true to stop training early.
  std::function<bool(const EpochStats&)> on_epoch;
  std::ostream* log = nullptr;  // per-epoch JSONL loss log
};

struct TrainResult {
  ModelConfig resolved_model;  // input widths filled in from the data
  ModelParams params;          // final parameters
  std::vector<EpochStats> history;
  int steps = 0;
  int best_epoch = -1;         // by MR mAP Avg on the selection split
  double best_map_avg = -1.0;
  ModelParams best_params;     // parameters at best_epoch (final when never evaluated)
};

// Returns a copy of cfg.model with d_in_visual / d_in_text taken from the
// samples when unset.
ModelConfig resolve_model_config(const ModelConfig& model, const std::vector<VideoSample>& samples);

// Full training loop: deterministic batch shuffling, forward, Hungarian
// matching, Eq-style weighted loss, backward, AdamW step. Aborts with
// diagnostics if the loss ever goes non-finite.
TrainResult train_model(const RunConfig& cfg, const std::vector<VideoSample>& train_split,
                        const std::vector<VideoSample>* val_split = nullptr,
                        const TrainHooks& hooks = {});

}  // namespace mrnet
