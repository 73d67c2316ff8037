#include "mrnet/train.hpp"

#include <cmath>

#include <json.hpp>

namespace mrnet {

namespace {

ModelParams clone_params(const ModelConfig& cfg, ModelParams& src) {
  ModelParams copy = init_params<float>(cfg, 0);
  std::vector<Tensor*> flat;
  visit_params(copy, [&](const std::string&, Tensor& t) { flat.push_back(&t); });
  size_t i = 0;
  visit_params(src, [&](const std::string&, Tensor& t) {
    flat[i]->values() = t.values();
    ++i;
  });
  return copy;
}

nlohmann::ordered_json stats_json(const EpochStats& s) {
  nlohmann::ordered_json j;
  j["epoch"] = s.epoch;
  j["steps"] = s.steps;
  j["l_highlight"] = s.loss.highlight;
  j["l_span_l1"] = s.loss.span_l1;
  j["l_span_iou"] = s.loss.span_iou;
  j["l_cls"] = s.loss.cls;
  j["total"] = s.loss.total;
  if (s.eval) {
    j["map_avg"] = s.eval->map_avg;
    j["r1_at_07"] = s.eval->r1_at_07;
    j["hd_hit1"] = s.eval->hd_hit1;
  }
  return j;
}

}  // namespace

ModelConfig resolve_model_config(const ModelConfig& model,
                                 const std::vector<VideoSample>& samples) {
  ModelConfig cfg = model;
  if (samples.empty()) throw InputError("training requires at least one sample");
  if (cfg.d_in_visual == 0) cfg.d_in_visual = static_cast<int>(samples[0].rgb.cols);
  if (cfg.d_in_text == 0) cfg.d_in_text = static_cast<int>(samples[0].text.cols);
  cfg.validate();
  return cfg;
}

TrainResult train_model(const RunConfig& run_cfg, const std::vector<VideoSample>& train_split,
                        const std::vector<VideoSample>* val_split, const TrainHooks& hooks) {
  const ModelConfig cfg = resolve_model_config(run_cfg.model, train_split);
  RunConfig resolved = run_cfg;
  resolved.model = cfg;
  resolved.validate();

  TrainResult result;
  result.resolved_model = cfg;
  result.params = init_params<float>(cfg, run_cfg.seed);

  AdamW opt(run_cfg.optim);
  visit_params(result.params, [&](const std::string&, Tensor& t) { opt.add_param(t); });

  Rng dropout_rng(mix_seed(run_cfg.seed, 0xd207u));
  const std::vector<VideoSample>& selection_split = val_split ? *val_split : train_split;
  const int n = static_cast<int>(train_split.size());

  for (int epoch = 1; epoch <= run_cfg.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    for (const auto& batch : batch_indices(n, run_cfg.batch_size, run_cfg.seed, epoch)) {
      Graph g;
      ForwardMode mode{true, &dropout_rng};
      Tensor batch_sum;
      LossBreakdown batch_parts;
      for (int idx : batch) {
        const VideoSample& sample = train_split[static_cast<size_t>(idx)];
        auto out = model_forward(g, sample, result.params, cfg, mode, run_cfg.ablation);
        auto match = match_predictions(out, sample.norm_spans, run_cfg.loss);
        auto l = build_losses(g, out, sample.norm_spans, sample.h_gt, match, run_cfg.loss);
        batch_sum = batch_sum.defined() ? add(g, batch_sum, l.total) : l.total;
        const LossBreakdown v = l.values();
        stats.loss.highlight += v.highlight;
        stats.loss.span_l1 += v.span_l1;
        stats.loss.span_iou += v.span_iou;
        stats.loss.cls += v.cls;
        stats.loss.total += v.total;
      }
      // Batch objective is the mean of per-sample totals.
      auto batch_loss = scale(g, batch_sum, 1.0f / static_cast<float>(batch.size()));
      if (!std::isfinite(batch_loss.scalar()))
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                    ", step " + std::to_string(result.steps + 1));
      g.backward(batch_loss);
      opt.step();
      opt.zero_grad();
      ++result.steps;
    }
    stats.steps = result.steps;
    const double dn = static_cast<double>(n);
    stats.loss.highlight /= dn;
    stats.loss.span_l1 /= dn;
    stats.loss.span_iou /= dn;
    stats.loss.cls /= dn;
    stats.loss.total /= dn;

    if (epoch % run_cfg.eval_every == 0 || epoch == run_cfg.epochs) {
      stats.eval = evaluate_model(result.params, cfg, selection_split, run_cfg.ablation);
      if (stats.eval->map_avg > result.best_map_avg) {
        result.best_map_avg = stats.eval->map_avg;
        result.best_epoch = epoch;
        result.best_params = clone_params(cfg, result.params);
      }
    }

    if (hooks.log) *hooks.log << stats_json(stats).dump() << "\n";
    result.history.push_back(stats);
    if (hooks.on_epoch && hooks.on_epoch(result.history.back())) break;
  }

  if (result.best_epoch < 0) result.best_params = clone_params(cfg, result.params);
  return result;
}

}  // namespace mrnet
