#include "mrnet/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <vector>

namespace mrnet {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Field {
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

template <typename T, typename Member>
Field field(Member member) {
  return Field{[member](RunConfig& c, const json& v) { c.*member = v.get<T>(); },
               [member](const RunConfig& c) { return json(c.*member); }};
}

template <typename T, typename Outer, typename Member>
Field nested(Outer outer, Member member) {
  return Field{[outer, member](RunConfig& c, const json& v) { (c.*outer).*member = v.get<T>(); },
               [outer, member](const RunConfig& c) { return json((c.*outer).*member); }};
}

// Flat key table; declaration order is the serialization order.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"d", nested<int>(&RunConfig::model, &ModelConfig::d)},
      {"d_in_visual", nested<int>(&RunConfig::model, &ModelConfig::d_in_visual)},
      {"d_in_text", nested<int>(&RunConfig::model, &ModelConfig::d_in_text)},
      {"heads", nested<int>(&RunConfig::model, &ModelConfig::heads)},
      {"layers_mfm", nested<int>(&RunConfig::model, &ModelConfig::layers_mfm)},
      {"layers_cat", nested<int>(&RunConfig::model, &ModelConfig::layers_cat)},
      {"layers_encoder", nested<int>(&RunConfig::model, &ModelConfig::layers_encoder)},
      {"n_span_tokens", nested<int>(&RunConfig::model, &ModelConfig::n_span_tokens)},
      {"ffn_hidden", nested<int>(&RunConfig::model, &ModelConfig::ffn_hidden)},
      {"dropout", nested<double>(&RunConfig::model, &ModelConfig::dropout)},
      {"max_video_len", nested<int>(&RunConfig::model, &ModelConfig::max_video_len)},
      {"max_text_len", nested<int>(&RunConfig::model, &ModelConfig::max_text_len)},
      {"lambda_h", nested<double>(&RunConfig::loss, &LossWeights::lambda_h)},
      {"lambda_cls", nested<double>(&RunConfig::loss, &LossWeights::lambda_cls)},
      {"lambda_l1", nested<double>(&RunConfig::loss, &LossWeights::lambda_l1)},
      {"lambda_iou", nested<double>(&RunConfig::loss, &LossWeights::lambda_iou)},
      {"w_p", nested<double>(&RunConfig::loss, &LossWeights::w_p)},
      {"lr", nested<double>(&RunConfig::optim, &AdamWConfig::lr)},
      {"weight_decay", nested<double>(&RunConfig::optim, &AdamWConfig::weight_decay)},
      {"beta1", nested<double>(&RunConfig::optim, &AdamWConfig::beta1)},
      {"beta2", nested<double>(&RunConfig::optim, &AdamWConfig::beta2)},
      {"eps", nested<double>(&RunConfig::optim, &AdamWConfig::eps)},
      {"epochs", field<int>(&RunConfig::epochs)},
      {"batch_size", field<int>(&RunConfig::batch_size)},
      {"seed", field<uint64_t>(&RunConfig::seed)},
      {"eval_every", field<int>(&RunConfig::eval_every)},
      {"bypass_mfm", nested<bool>(&RunConfig::ablation, &AblationFlags::bypass_mfm)},
      {"bypass_qrm", nested<bool>(&RunConfig::ablation, &AblationFlags::bypass_qrm)},
      {"bypass_cat", nested<bool>(&RunConfig::ablation, &AblationFlags::bypass_cat)},
      {"mask_rgb", nested<bool>(&RunConfig::ablation, &AblationFlags::mask_rgb)},
      {"mask_flow", nested<bool>(&RunConfig::ablation, &AblationFlags::mask_flow)},
      {"mask_depth", nested<bool>(&RunConfig::ablation, &AblationFlags::mask_depth)},
      {"annotations", field<std::string>(&RunConfig::annotations)},
      {"features_dir", field<std::string>(&RunConfig::features_dir)},
      {"val_annotations", field<std::string>(&RunConfig::val_annotations)},
      {"out_dir", field<std::string>(&RunConfig::out_dir)},
      {"checkpoint", field<std::string>(&RunConfig::checkpoint)},
      {"report_path", field<std::string>(&RunConfig::report_path)},
      {"target_r1_07", field<double>(&RunConfig::target_r1_07)},
      {"target_hit1", field<double>(&RunConfig::target_hit1)},
      {"target_loss_ratio", field<double>(&RunConfig::target_loss_ratio)},
  };
  return table;
}

}  // namespace

ordered_json RunConfig::to_json() const {
  ordered_json j;
  for (const auto& [key, f] : fields()) j[key] = f.get(*this);
  return j;
}

void RunConfig::apply_json(const json& j) {
  if (!j.is_object()) throw ParseError("config: expected a flat JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(),
                           [&](const auto& e) { return e.first == key; });
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    try {
      it->second.set(*this, value);
    } catch (const json::exception& e) {
      throw ParseError("config: key '" + key + "': " + e.what());
    }
  }
}

RunConfig RunConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("config file " + path.string() + ": " + e.what());
  }
  RunConfig cfg;
  cfg.apply_json(j);
  return cfg;
}

void RunConfig::write_json_file(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file " + path.string());
  out << to_json().dump(2) << "\n";
  if (!out) throw IoError("failed writing config file " + path.string());
}

}  // namespace mrnet
