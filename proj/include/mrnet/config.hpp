#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mrnet/adamw.hpp"
#include "mrnet/model.hpp"
#include "mrnet/objective.hpp"

#include <json.hpp>

namespace mrnet {

// Everything one run needs: model topology, loss weights, optimizer settings,
// schedule, dataset paths and ablation switches. Serialized as a flat JSON
// object; every key is also a CLI flag.
struct RunConfig {
  ModelConfig model;
  LossWeights loss;
  AdamWConfig optim;
  int epochs = 200;
  int batch_size = 32;
  uint64_t seed = 1;
  int eval_every = 25;  // epochs between metric evaluations during training
  AblationFlags ablation;

  std::string annotations;
  std::string features_dir;
  std::string val_annotations;  // optional; checkpoint selection falls back to train split
  std::string out_dir;
  std::string checkpoint;
  std::string report_path;

  // Early-stop targets; active only when all three are >= 0.
  double target_r1_07 = -1.0;
  double target_hit1 = -1.0;
  double target_loss_ratio = -1.0;

  bool early_stop_enabled() const {
    return target_r1_07 >= 0.0 && target_hit1 >= 0.0 && target_loss_ratio >= 0.0;
  }

  void validate() const {
    model.validate();
    loss.validate();
    ablation.validate();
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (optim.lr <= 0 || optim.weight_decay < 0) throw ConfigError("bad optimizer settings");
  }

  nlohmann::ordered_json to_json() const;
  void apply_json(const nlohmann::json& j);  // unknown keys are rejected

  static RunConfig from_json_file(const std::filesystem::path& path);
  void write_json_file(const std::filesystem::path& path) const;
};

}  // namespace mrnet
