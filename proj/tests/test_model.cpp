#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mrnet/checkpoint.hpp"
#include "mrnet/gradcheck.hpp"
#include "mrnet/model.hpp"
#include "test_support.hpp"

using namespace mrnet;
using testsupport::random_tensor;

namespace {

ModelConfig desk_config() {
  ModelConfig cfg;
  cfg.d = 32;
  cfg.d_in_visual = 24;
  cfg.d_in_text = 20;
  cfg.heads = 4;
  return cfg;
}

FeatureMatrix random_features(int rows, int cols, Rng& rng) {
  auto m = FeatureMatrix::zeros(rows, cols);
  for (auto& v : m.data) v = static_cast<float>(rng.normal());
  return m;
}

VideoSample random_sample(const ModelConfig& cfg, int n_v, int n_t, Rng& rng) {
  VideoSample s;
  s.ann.qid = 0;
  s.ann.vid = "test";
  s.ann.clip_len = 2.0;
  s.ann.duration = 2.0 * n_v;
  s.ann.relevant_windows = {{0.0, 2.0}};
  s.ann.saliency.assign(static_cast<size_t>(n_v), {1});
  s.ann.saliency[0] = {4};
  s.rgb = random_features(n_v, cfg.d_in_visual, rng);
  s.flow = random_features(n_v, cfg.d_in_visual, rng);
  s.depth = random_features(n_v, cfg.d_in_visual, rng);
  s.text = random_features(n_t, cfg.d_in_text, rng);
  build_targets(s.ann, &s.norm_spans, &s.h_gt);
  return s;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a.at(i) != b.at(i)) return false;
  return true;
}

}  // namespace

TEST_CASE("forward output shape contract") {
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 5);
  Rng rng(1);
  auto sample = random_sample(cfg, 6, 5, rng);
  Graph g(false);
  auto out = model_forward(g, sample, params, cfg, ForwardMode{});
  CHECK(out.saliency.shape() == Shape{6});
  CHECK(out.spans_cw.shape() == Shape{10, 2});
  CHECK(out.fg_prob.shape() == Shape{10});
  CHECK(out.fused_visual.shape() == Shape{6, 32});
  CHECK(out.text_tokens.shape() == Shape{6, 32});  // 5 words + sentence row
  CHECK(out.cross_tokens.shape() == Shape{6, 32});
}

TEST_CASE("identity projection reduces to layernorm (plus positions on visual)") {
  ModelConfig cfg = desk_config();
  cfg.d_in_visual = cfg.d;
  cfg.d_in_text = cfg.d;
  auto params = init_params<float>(cfg, 5);
  // Test mode: identity weights, zero bias; layernorm is at its init (gain 1,
  // bias 0) already.
  for (auto* proj : {&params.proj_rgb, &params.proj_flow, &params.proj_depth, &params.proj_text}) {
    for (int64_t i = 0; i < proj->proj.w.numel(); ++i) proj->proj.w.at(i) = 0.0f;
    for (int i = 0; i < cfg.d; ++i) proj->proj.w.at(i, i) = 1.0f;
  }
  Rng rng(2);
  auto rgb = random_features(4, cfg.d, rng);
  auto flow = random_features(4, cfg.d, rng);
  auto depth = random_features(4, cfg.d, rng);
  auto text = random_features(3, cfg.d, rng);

  Graph g(false);
  auto proj = project_inputs(g, rgb, flow, depth, text, params, cfg);

  auto expected_ln = [&](const FeatureMatrix& m) {
    auto x = constant_from<float>(m);
    return layer_norm_rows(g, x, params.proj_text.norm.gain, params.proj_text.norm.bias);
  };
  // Text carries no positional encoding: exactly the layernormed input.
  auto want_text = expected_ln(text);
  CHECK(bitwise_equal(proj.text, want_text));
  // Visual streams additionally carry the sinusoidal positions.
  auto want_rgb = add(g, expected_ln(rgb), positional_rows<float>(4, 4, cfg.d));
  CHECK(bitwise_equal(proj.rgb, want_rgb));
}

TEST_CASE("project_inputs rejects row and width mismatches by stream") {
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 5);
  Rng rng(3);
  auto rgb = random_features(6, cfg.d_in_visual, rng);
  auto flow = random_features(5, cfg.d_in_visual, rng);  // wrong rows
  auto depth = random_features(6, cfg.d_in_visual, rng);
  auto text = random_features(4, cfg.d_in_text, rng);
  Graph g(false);
  try {
    project_inputs(g, rgb, flow, depth, text, params, cfg);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("flow") != std::string::npos);
  }
  auto bad_text = random_features(4, cfg.d_in_text + 1, rng);
  CHECK_THROWS_AS(project_inputs(g, rgb, depth, depth, bad_text, params, cfg), InputError);
}

TEST_CASE("mfm gate overrides select exactly one branch") {
  auto cfg = desk_config();
  cfg.layers_mfm = 1;
  auto params = init_params<float>(cfg, 7);
  Rng rng(4);
  Graph g(false);
  auto f_r = random_tensor<float>({6, cfg.d}, rng);
  auto f_f = random_tensor<float>({6, cfg.d}, rng);
  auto f_d = random_tensor<float>({6, cfg.d}, rng);

  MfmTrace<float> ones_trace;
  auto fused_ones = mfm_forward(g, f_r, f_f, f_d, params, cfg, ForwardMode{}, &ones_trace,
                                GateOverride::all_ones);
  CHECK(bitwise_equal(fused_ones, ones_trace.rgb_flow[0]));

  MfmTrace<float> zeros_trace;
  auto fused_zeros = mfm_forward(g, f_r, f_f, f_d, params, cfg, ForwardMode{}, &zeros_trace,
                                 GateOverride::all_zeros);
  CHECK(bitwise_equal(fused_zeros, zeros_trace.rgb_depth[0]));
}

TEST_CASE("mfm fusion stays inside the elementwise envelope of its branches") {
  auto cfg = desk_config();
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto params = init_params<float>(cfg, 100 + static_cast<uint64_t>(trial));
    Graph g(false);
    auto f_r = random_tensor<float>({5, cfg.d}, rng);
    auto f_f = random_tensor<float>({5, cfg.d}, rng);
    auto f_d = random_tensor<float>({5, cfg.d}, rng);
    MfmTrace<float> trace;
    mfm_forward(g, f_r, f_f, f_d, params, cfg, ForwardMode{}, &trace);
    for (size_t layer = 0; layer < trace.fused.size(); ++layer) {
      const auto& rf = trace.rgb_flow[layer];
      const auto& rd = trace.rgb_depth[layer];
      const auto& fv = trace.fused[layer];
      for (int64_t i = 0; i < fv.numel(); ++i) {
        const float lo = std::min(rf.at(i), rd.at(i));
        const float hi = std::max(rf.at(i), rd.at(i));
        CHECK(fv.at(i) >= lo - 1e-6f);
        CHECK(fv.at(i) <= hi + 1e-6f);
      }
    }
  }
}

TEST_CASE("fuse_gated hand cases") {
  Graph g(false);
  // Scalar: z=0.25, f=2, d=4 -> 0.25*2 + 0.75*4 = 3.5.
  auto f = Tensor::from({1}, {2.0f});
  auto d = Tensor::from({1}, {4.0f});
  auto z = Tensor::from({1}, {0.25f});
  CHECK(fuse_gated(g, f, d, z).at(0) == doctest::Approx(3.5));

  Rng rng(6);
  auto a = random_tensor<float>({3, 4}, rng);
  auto half = Tensor::full({3, 4}, 0.5f);
  auto b = random_tensor<float>({3, 4}, rng);
  auto mid = fuse_gated(g, a, b, half);
  for (int64_t i = 0; i < mid.numel(); ++i)
    CHECK(mid.at(i) == doctest::Approx(0.5f * (a.at(i) + b.at(i))));

  // Equal branches are a fixed point for any gate.
  auto zr = random_tensor<float>({3, 4}, rng);
  for (int64_t i = 0; i < zr.numel(); ++i) zr.at(i) = static_cast<float>(rng.uniform());
  auto same = fuse_gated(g, a, a, zr);
  for (int64_t i = 0; i < same.numel(); ++i) CHECK(same.at(i) == doctest::Approx(a.at(i)));
}

TEST_CASE("qrm appends the mean sentence row") {
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 11);
  Rng rng(7);
  Graph g(false);

  // Single word: the sentence row equals the word row exactly.
  auto one = random_tensor<float>({1, cfg.d}, rng);
  auto out1 = qrm_forward(g, one, params, cfg, ForwardMode{});
  CHECK(out1.shape() == Shape{2, cfg.d});
  for (int j = 0; j < cfg.d; ++j) CHECK(out1.at(0, j) == out1.at(1, j));

  for (int n_t : {2, 5, 13}) {
    auto f_t = random_tensor<float>({n_t, cfg.d}, rng);
    auto out = qrm_forward(g, f_t, params, cfg, ForwardMode{});
    CHECK(out.shape() == Shape{n_t + 1, cfg.d});
    for (int j = 0; j < cfg.d; ++j) {
      double mean = 0.0;
      for (int i = 0; i < n_t; ++i) mean += out.at(i, j);
      mean /= n_t;
      CHECK(std::abs(out.at(n_t, j) - mean) < 1e-6);
    }
  }
}

TEST_CASE("cat attends duplicated text tokens like a single one") {
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 13);
  Rng rng(8);
  Graph g(false);
  auto f_v = random_tensor<float>({4, cfg.d}, rng);
  auto token = random_tensor<float>({1, cfg.d}, rng);
  auto doubled = concat_rows(g, token, token);
  auto out_single = cat_forward(g, f_v, token, params, cfg, ForwardMode{});
  auto out_double = cat_forward(g, f_v, doubled, params, cfg, ForwardMode{});
  for (int64_t i = 0; i < out_single.numel(); ++i)
    CHECK(std::abs(out_single.at(i) - out_double.at(i)) < 1e-6);
}

TEST_CASE("cat output is invariant to text token permutation") {
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 17);
  Rng rng(9);
  Graph g(false);
  auto f_v = random_tensor<float>({6, cfg.d}, rng);
  auto text = random_tensor<float>({7, cfg.d}, rng);
  auto base = cat_forward(g, f_v, text, params, cfg, ForwardMode{});

  std::vector<int> perm = {3, 0, 6, 1, 5, 2, 4};
  auto shuffled = Tensor::zeros({7, cfg.d});
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < cfg.d; ++j) shuffled.at(i, j) = text.at(perm[static_cast<size_t>(i)], j);
  auto moved = cat_forward(g, f_v, shuffled, params, cfg, ForwardMode{});
  for (int64_t i = 0; i < base.numel(); ++i)
    CHECK(std::abs(base.at(i) - moved.at(i)) < 1e-5);
}

TEST_CASE("encoder splits the sequence back into clip and span features") {
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 19);
  Rng rng(10);
  Graph g(false);
  auto f_v = random_tensor<float>({9, cfg.d}, rng);
  auto [f_h, f_s] = encoder_forward(g, f_v, params.span_tokens, params, cfg, ForwardMode{});
  CHECK(f_h.shape() == Shape{9, cfg.d});
  CHECK(f_s.shape() == Shape{cfg.n_span_tokens, cfg.d});
}

TEST_CASE("zeroed encoder keeps identical span tokens identical") {
  auto cfg = desk_config();
  cfg.layers_encoder = 2;
  auto params = init_params<float>(cfg, 23);
  for (auto& layer : params.encoder) {
    for (Tensor* t : {&layer.self.mha.wq, &layer.self.mha.bq, &layer.self.mha.wk,
                      &layer.self.mha.bk, &layer.self.mha.wv, &layer.self.mha.bv,
                      &layer.self.mha.wo, &layer.self.mha.bo, &layer.ffn.fc1.w,
                      &layer.ffn.fc1.b, &layer.ffn.fc2.w, &layer.ffn.fc2.b})
      for (int64_t i = 0; i < t->numel(); ++i) t->at(i) = 0.0f;
  }
  auto zero_span = Tensor::zeros({cfg.n_span_tokens, cfg.d}, true);
  Rng rng(11);
  Graph g(false);
  auto f_v = random_tensor<float>({5, cfg.d}, rng);
  auto [f_h, f_s] = encoder_forward(g, f_v, zero_span, params, cfg, ForwardMode{});
  (void)f_h;
  for (int i = 1; i < cfg.n_span_tokens; ++i)
    for (int j = 0; j < cfg.d; ++j) CHECK(f_s.at(i, j) == f_s.at(0, j));
}

TEST_CASE("span token parameters receive gradient") {
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 29);
  Rng rng(12);
  auto sample = random_sample(cfg, 5, 4, rng);
  Graph g;
  auto out = model_forward(g, sample, params, cfg, ForwardMode{});
  auto loss = add(g, sum(g, out.spans_cw), sum(g, out.saliency));
  g.backward(loss);
  double norm = 0.0;
  for (float v : params.span_tokens.grad()) norm += static_cast<double>(v) * v;
  CHECK(norm > 0.0);
}

TEST_CASE("heads emit proper probabilities and span coordinates") {
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 31);
  Rng rng(13);
  auto sample = random_sample(cfg, 6, 5, rng);
  Graph g(false);
  auto out = model_forward(g, sample, params, cfg, ForwardMode{});
  for (int i = 0; i < 10; ++i) {
    CHECK(out.class_probs.at(i, 0) + out.class_probs.at(i, 1) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(out.fg_prob.at(i) == out.class_probs.at(i, 0));
    CHECK(out.spans_cw.at(i, 0) > 0.0f);
    CHECK(out.spans_cw.at(i, 0) < 1.0f);
    CHECK(out.spans_cw.at(i, 1) > 0.0f);
    CHECK(out.spans_cw.at(i, 1) < 1.0f);
  }
}

TEST_CASE("eval-mode forward is deterministic") {
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 37);
  Rng rng(14);
  auto sample = random_sample(cfg, 7, 4, rng);
  Graph g1(false), g2(false);
  auto a = model_forward(g1, sample, params, cfg, ForwardMode{});
  auto b = model_forward(g2, sample, params, cfg, ForwardMode{});
  CHECK(bitwise_equal(a.saliency, b.saliency));
  CHECK(bitwise_equal(a.spans_cw, b.spans_cw));
  CHECK(bitwise_equal(a.fg_prob, b.fg_prob));
}

TEST_CASE("bypass ablations substitute the documented stream") {
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 41);
  Rng rng(15);
  auto sample = random_sample(cfg, 6, 5, rng);

  Graph g(false);
  auto proj = project_inputs(g, sample.rgb, sample.flow, sample.depth, sample.text, params, cfg);

  AblationFlags ab;
  ab.bypass_mfm = true;
  ab.bypass_qrm = true;
  ab.bypass_cat = true;
  Graph g2(false);
  auto out = model_forward(g2, sample, params, cfg, ForwardMode{}, ab);
  CHECK(bitwise_equal(out.fused_visual, proj.rgb));
  CHECK(bitwise_equal(out.text_tokens, proj.text));
  CHECK(bitwise_equal(out.cross_tokens, out.fused_visual));
}

TEST_CASE("masking streams equals zeroing the raw features") {
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 43);
  Rng rng(16);
  auto sample = random_sample(cfg, 6, 5, rng);

  AblationFlags ab;
  ab.mask_flow = true;
  ab.mask_depth = true;
  Graph g1(false);
  auto masked = model_forward(g1, sample, params, cfg, ForwardMode{}, ab);

  VideoSample zeroed = sample;
  zeroed.flow = FeatureMatrix::zeros(sample.flow.rows, sample.flow.cols);
  zeroed.depth = FeatureMatrix::zeros(sample.depth.rows, sample.depth.cols);
  Graph g2(false);
  auto manual = model_forward(g2, zeroed, params, cfg, ForwardMode{});
  CHECK(bitwise_equal(masked.saliency, manual.saliency));
  CHECK(bitwise_equal(masked.spans_cw, manual.spans_cw));
}

TEST_CASE("masking all three streams is rejected") {
  AblationFlags ab;
  ab.mask_rgb = ab.mask_flow = ab.mask_depth = true;
  CHECK_THROWS_AS(ab.validate(), ConfigError);
}

TEST_CASE("parameter count is a pure function of the config") {
  auto cfg = desk_config();
  auto a = init_params<float>(cfg, 1);
  auto b = init_params<float>(cfg, 999);
  CHECK(count_params(a) == count_params(b));
  CHECK(count_params(a) > 0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  namespace fs = std::filesystem;
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 47);
  const fs::path path = fs::temp_directory_path() / "mrnet_test_ckpt.mrnp";
  save_checkpoint(path, params);

  auto restored = init_params<float>(cfg, 48);  // different init
  load_checkpoint(path, restored);
  bool all_equal = true;
  std::vector<Tensor*> lhs;
  visit_params(params, [&](const std::string&, Tensor& t) { lhs.push_back(&t); });
  size_t k = 0;
  visit_params(restored, [&](const std::string&, Tensor& t) {
    if (!bitwise_equal(*lhs[k], t)) all_equal = false;
    ++k;
  });
  CHECK(all_equal);

  // Re-saving the restored parameters reproduces the same bytes.
  const fs::path path2 = fs::temp_directory_path() / "mrnet_test_ckpt2.mrnp";
  save_checkpoint(path2, restored);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("checkpoint loading rejects bad magic and shape mismatches") {
  namespace fs = std::filesystem;
  auto cfg = desk_config();
  auto params = init_params<float>(cfg, 53);
  const fs::path path = fs::temp_directory_path() / "mrnet_test_bad.mrnp";
  save_checkpoint(path, params);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(load_checkpoint(path, params), FormatError);

  save_checkpoint(path, params);
  ModelConfig other = cfg;
  other.d = 16;
  other.heads = 2;
  auto mismatched = init_params<float>(other, 1);
  try {
    load_checkpoint(path, mismatched);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("shape") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("full-model gradients match finite differences at tiny scale") {
  RunConfig cfg;
  cfg.model.d = 8;
  cfg.model.heads = 2;
  cfg.model.layers_mfm = 1;
  cfg.model.layers_cat = 1;
  cfg.model.layers_encoder = 1;
  cfg.model.n_span_tokens = 2;
  cfg.model.d_in_visual = 6;
  cfg.model.d_in_text = 6;
  // Seed chosen so no relu pre-activation sits inside the h=1e-3 central
  // difference window; at a kink the comparison is meaningless.
  cfg.seed = 6;
  auto report = run_gradcheck(cfg, 4, 3);
  for (const auto& group : report.groups) {
    INFO(group.name, " max rel err ", group.max_rel_err);
    CHECK(group.max_rel_err <= 1e-3);
  }
  CHECK(report.passed());
}
