#include "mrnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mrnet {

namespace {

double forward_loss(const ModelConfig& cfg, const LossWeights& w,
                    const ModelParamsT<double>& params, const VideoSample& sample,
                    const MatchResult& match, bool record,
                    GraphT<double>* out_graph = nullptr,
                    LossTensors<double>* out_loss = nullptr) {
  GraphT<double> local(record);
  GraphT<double>& g = out_graph ? *out_graph : local;
  const ForwardMode eval{};
  auto out = model_forward(g, sample, params, cfg, eval);
  auto losses = build_losses(g, out, sample.norm_spans, sample.h_gt, match, w);
  if (out_loss) *out_loss = losses;
  return static_cast<double>(losses.total.scalar());
}

}  // namespace

GradCheckSetup gradcheck_setup(const RunConfig& cfg, int n_video, int n_text) {
  GradCheckSetup s;
  s.weights = cfg.loss;

  SyntheticConfig synth;
  synth.n_samples = 1;
  synth.n_video_min = synth.n_video_max = n_video;
  synth.n_text_min = synth.n_text_max = n_text;
  synth.d_in_visual = cfg.model.d_in_visual > 0 ? cfg.model.d_in_visual : 12;
  synth.d_in_text = cfg.model.d_in_text > 0 ? cfg.model.d_in_text : 12;
  synth.sigma = 0.3;
  synth.seed = cfg.seed;
  s.sample = synthesize_dataset(synth)[0];

  s.model = cfg.model;
  s.model.d_in_visual = synth.d_in_visual;
  s.model.d_in_text = synth.d_in_text;
  s.model.validate();

  s.params = init_params<double>(s.model, cfg.seed);

  // Matching at the base point, held fixed across every perturbed evaluation.
  {
    GraphT<double> g(false);
    const ForwardMode eval{};
    auto out = model_forward(g, s.sample, s.params, s.model, eval);
    s.match = match_predictions(out, s.sample.norm_spans, s.weights);
  }

  GraphT<double> g(true);
  LossTensors<double> losses;
  s.loss_value = forward_loss(s.model, s.weights, s.params, s.sample, s.match, true, &g, &losses);
  g.backward(losses.total);
  visit_params(s.params, [&](const std::string& name, TensorT<double>& t) {
    std::vector<double> grad(static_cast<size_t>(t.numel()), 0.0);
    if (!t.grad().empty()) grad = t.grad();
    s.grads.push_back({name, std::move(grad)});
  });
  return s;
}

double gradcheck_loss(const GradCheckSetup& setup) {
  return forward_loss(setup.model, setup.weights, setup.params, setup.sample, setup.match,
                      false);
}

GradCheckReport compare_with_fd(GradCheckSetup& setup, double h, double tol, double rel_floor) {
  GradCheckReport report;
  report.tolerance = tol;
  report.step = h;
  report.loss_value = setup.loss_value;
  size_t group_index = 0;
  visit_params(setup.params, [&](const std::string& name, TensorT<double>& t) {
    const auto& [grad_name, grad] = setup.grads[group_index];
    if (grad_name != name) throw UsageError("gradcheck: group order mismatch");
    GradCheckGroup group;
    group.name = name;
    group.size = t.numel();
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double orig = t.at(i);
      t.at(i) = orig + h;
      const double fp = gradcheck_loss(setup);
      t.at(i) = orig - h;
      const double fm = gradcheck_loss(setup);
      t.at(i) = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = grad[static_cast<size_t>(i)];
      const double denom = std::max({std::abs(fd), std::abs(ad), rel_floor});
      group.max_rel_err = std::max(group.max_rel_err, std::abs(fd - ad) / denom);
    }
    report.groups.push_back(std::move(group));
    ++group_index;
  });
  return report;
}

GradCheckReport run_gradcheck(const RunConfig& cfg, int n_video, int n_text, double h,
                              double tol) {
  auto setup = gradcheck_setup(cfg, n_video, n_text);
  return compare_with_fd(setup, h, tol);
}

}  // namespace mrnet
