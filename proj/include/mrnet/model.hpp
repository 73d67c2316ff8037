#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mrnet/data.hpp"
#include "mrnet/ops.hpp"

// MRNet forward pass: per-stream input projection, multi-modal fusion module
// (MFM), query refinement module (QRM), cross-attention transformer (CAT),
// span-token encoder, and prediction heads. Every attention and FFN sublayer
// is wrapped residual + post-norm.

namespace mrnet {

struct ModelConfig {
  int d = 32;             // model width
  int d_in_visual = 0;    // raw visual feature width (set from data)
  int d_in_text = 0;      // raw text feature width
  int heads = 4;
  int layers_mfm = 2;
  int layers_cat = 2;
  int layers_encoder = 4;
  int n_span_tokens = 10;
  int ffn_hidden = 0;     // 0 means 4 * d
  double dropout = 0.1;
  int max_video_len = 512;
  int max_text_len = 128;

  int ffn() const { return ffn_hidden > 0 ? ffn_hidden : 4 * d; }

  void validate() const {
    auto bad = [](const std::string& why) { throw ConfigError("model config: " + why); };
    if (d < 2) bad("width d must be >= 2");
    if (heads < 1 || d % heads != 0)
      bad("width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
    if (layers_mfm < 1 || layers_cat < 1 || layers_encoder < 1) bad("all layer counts must be >= 1");
    if (n_span_tokens < 1) bad("n_span_tokens must be >= 1");
    if (ffn() < 1) bad("ffn_hidden must be positive");
    if (dropout < 0.0 || dropout >= 1.0) bad("dropout must be in [0, 1)");
    if (d_in_visual < 1 || d_in_text < 1) bad("input feature widths must be set");
    if (max_video_len < 1 || max_text_len < 1) bad("sequence maxima must be >= 1");
  }
};

// Tables 3/5-style switches: module bypasses and input-stream masks.
struct AblationFlags {
  bool bypass_mfm = false;
  bool bypass_qrm = false;
  bool bypass_cat = false;
  bool mask_rgb = false;
  bool mask_flow = false;
  bool mask_depth = false;

  void validate() const {
    if (mask_rgb && mask_flow && mask_depth)
      throw ConfigError("ablation: masking all three visual streams leaves no input");
  }
};

struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

template <typename S>
struct LinearP {
  TensorT<S> w, b;
};

template <typename S>
struct LayerNormP {
  TensorT<S> gain, bias;
};

template <typename S>
struct AttnBlockP {
  MhaParams<S> mha;
  LayerNormP<S> norm;
};

template <typename S>
struct FfnBlockP {
  LinearP<S> fc1, fc2;
  LayerNormP<S> norm;
};

template <typename S>
struct ConvP {
  TensorT<S> kernel, bias;
};

template <typename S>
struct StreamProjP {
  LinearP<S> proj;
  LayerNormP<S> norm;
};

template <typename S>
struct MfmLayerP {
  AttnBlockP<S> self_rgb;      // video-context self-attention on the RGB stream
  AttnBlockP<S> cross_flow;    // RGB-guided flow attention
  AttnBlockP<S> cross_depth;   // RGB-guided depth attention
  LinearP<S> gate_fc1, gate_fc2;  // sigmoid gate FFN
};

template <typename S>
struct QrmP {
  ConvP<S> conv_word;    // k = 1
  ConvP<S> conv_pair;    // k = 2
  ConvP<S> conv_triple;  // k = 3
  FfnBlockP<S> ffn;
};

template <typename S>
struct CatLayerP {
  AttnBlockP<S> cross;
  FfnBlockP<S> ffn;
};

template <typename S>
struct EncLayerP {
  AttnBlockP<S> self;
  FfnBlockP<S> ffn;
};

template <typename S>
struct HeadsP {
  LinearP<S> sal_fc1, sal_fc2;    // 2-layer FFN -> saliency logit per clip
  LinearP<S> span_fc1, span_fc2;  // 2-layer FFN -> sigmoid (center, width)
  LinearP<S> cls;                 // linear -> 2-class logits
};

template <typename S>
struct ModelParamsT {
  StreamProjP<S> proj_rgb, proj_flow, proj_depth, proj_text;
  std::vector<MfmLayerP<S>> mfm;
  QrmP<S> qrm;
  std::vector<CatLayerP<S>> cat;
  std::vector<EncLayerP<S>> encoder;
  TensorT<S> span_tokens;  // N_s x d learnable queries
  HeadsP<S> heads;
};

using ModelParams = ModelParamsT<float>;

// ---------------------------------------------------------------------------
// Parameter traversal. Order is fixed; checkpoints and the optimizer rely on
// it only through the stable names.

template <typename S, typename F>
void visit_params(ModelParamsT<S>& p, F&& f) {
  auto lin = [&](const std::string& n, LinearP<S>& l) {
    f(n + ".w", l.w);
    f(n + ".b", l.b);
  };
  auto ln = [&](const std::string& n, LayerNormP<S>& l) {
    f(n + ".gain", l.gain);
    f(n + ".bias", l.bias);
  };
  auto mha = [&](const std::string& n, MhaParams<S>& m) {
    f(n + ".wq", m.wq);
    f(n + ".bq", m.bq);
    f(n + ".wk", m.wk);
    f(n + ".bk", m.bk);
    f(n + ".wv", m.wv);
    f(n + ".bv", m.bv);
    f(n + ".wo", m.wo);
    f(n + ".bo", m.bo);
  };
  auto attn = [&](const std::string& n, AttnBlockP<S>& a) {
    mha(n, a.mha);
    ln(n + ".norm", a.norm);
  };
  auto ffn = [&](const std::string& n, FfnBlockP<S>& b) {
    lin(n + ".fc1", b.fc1);
    lin(n + ".fc2", b.fc2);
    ln(n + ".norm", b.norm);
  };
  auto conv = [&](const std::string& n, ConvP<S>& c) {
    f(n + ".kernel", c.kernel);
    f(n + ".bias", c.bias);
  };
  auto stream = [&](const std::string& n, StreamProjP<S>& s) {
    lin(n + ".proj", s.proj);
    ln(n + ".norm", s.norm);
  };

  stream("proj.rgb", p.proj_rgb);
  stream("proj.flow", p.proj_flow);
  stream("proj.depth", p.proj_depth);
  stream("proj.text", p.proj_text);
  for (size_t i = 0; i < p.mfm.size(); ++i) {
    const std::string base = "mfm." + std::to_string(i);
    attn(base + ".self", p.mfm[i].self_rgb);
    attn(base + ".flow", p.mfm[i].cross_flow);
    attn(base + ".depth", p.mfm[i].cross_depth);
    lin(base + ".gate.fc1", p.mfm[i].gate_fc1);
    lin(base + ".gate.fc2", p.mfm[i].gate_fc2);
  }
  conv("qrm.conv_word", p.qrm.conv_word);
  conv("qrm.conv_pair", p.qrm.conv_pair);
  conv("qrm.conv_triple", p.qrm.conv_triple);
  ffn("qrm.ffn", p.qrm.ffn);
  for (size_t i = 0; i < p.cat.size(); ++i) {
    const std::string base = "cat." + std::to_string(i);
    attn(base + ".cross", p.cat[i].cross);
    ffn(base + ".ffn", p.cat[i].ffn);
  }
  for (size_t i = 0; i < p.encoder.size(); ++i) {
    const std::string base = "enc." + std::to_string(i);
    attn(base + ".self", p.encoder[i].self);
    ffn(base + ".ffn", p.encoder[i].ffn);
  }
  f("span_tokens", p.span_tokens);
  lin("head.saliency.fc1", p.heads.sal_fc1);
  lin("head.saliency.fc2", p.heads.sal_fc2);
  lin("head.span.fc1", p.heads.span_fc1);
  lin("head.span.fc2", p.heads.span_fc2);
  lin("head.cls", p.heads.cls);
}

template <typename S>
int64_t count_params(ModelParamsT<S>& p) {
  int64_t n = 0;
  visit_params(p, [&](const std::string&, TensorT<S>& t) { n += t.numel(); });
  return n;
}

// ---------------------------------------------------------------------------
// Initialization: Xavier-uniform weights, zero biases, unit layernorm gains.

namespace init {

template <typename S>
TensorT<S> xavier(Shape shape, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  auto t = TensorT<S>::zeros(std::move(shape), true);
  for (int64_t i = 0; i < t.numel(); ++i)
    t.at(i) = static_cast<S>(rng.uniform(-limit, limit));
  return t;
}

template <typename S>
LinearP<S> linear(int in, int out, Rng& rng) {
  return {xavier<S>({in, out}, in, out, rng), TensorT<S>::zeros({out}, true)};
}

template <typename S>
LayerNormP<S> layer_norm(int d) {
  return {TensorT<S>::full({d}, S(1), true), TensorT<S>::zeros({d}, true)};
}

template <typename S>
MhaParams<S> mha(int d, Rng& rng) {
  MhaParams<S> m;
  auto q = linear<S>(d, d, rng);
  m.wq = q.w;
  m.bq = q.b;
  auto k = linear<S>(d, d, rng);
  m.wk = k.w;
  m.bk = k.b;
  auto v = linear<S>(d, d, rng);
  m.wv = v.w;
  m.bv = v.b;
  auto o = linear<S>(d, d, rng);
  m.wo = o.w;
  m.bo = o.b;
  return m;
}

template <typename S>
AttnBlockP<S> attn_block(int d, Rng& rng) {
  return {mha<S>(d, rng), layer_norm<S>(d)};
}

template <typename S>
FfnBlockP<S> ffn_block(int d, int hidden, Rng& rng) {
  return {linear<S>(d, hidden, rng), linear<S>(hidden, d, rng), layer_norm<S>(d)};
}

template <typename S>
ConvP<S> conv(int k, int d_in, int d_out, Rng& rng) {
  return {xavier<S>({k, d_in, d_out}, k * d_in, k * d_out, rng),
          TensorT<S>::zeros({d_out}, true)};
}

}  // namespace init

template <typename S>
ModelParamsT<S> init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(mix_seed(seed, 0x6d726e70ULL));
  const int d = cfg.d, hidden = cfg.ffn();
  ModelParamsT<S> p;
  p.proj_rgb = {init::linear<S>(cfg.d_in_visual, d, rng), init::layer_norm<S>(d)};
  p.proj_flow = {init::linear<S>(cfg.d_in_visual, d, rng), init::layer_norm<S>(d)};
  p.proj_depth = {init::linear<S>(cfg.d_in_visual, d, rng), init::layer_norm<S>(d)};
  p.proj_text = {init::linear<S>(cfg.d_in_text, d, rng), init::layer_norm<S>(d)};
  for (int i = 0; i < cfg.layers_mfm; ++i)
    p.mfm.push_back({init::attn_block<S>(d, rng), init::attn_block<S>(d, rng),
                     init::attn_block<S>(d, rng), init::linear<S>(d, hidden, rng),
                     init::linear<S>(hidden, d, rng)});
  p.qrm = {init::conv<S>(1, d, d, rng), init::conv<S>(2, d, d, rng),
           init::conv<S>(3, d, d, rng), init::ffn_block<S>(d, hidden, rng)};
  for (int i = 0; i < cfg.layers_cat; ++i)
    p.cat.push_back({init::attn_block<S>(d, rng), init::ffn_block<S>(d, hidden, rng)});
  for (int i = 0; i < cfg.layers_encoder; ++i)
    p.encoder.push_back({init::attn_block<S>(d, rng), init::ffn_block<S>(d, hidden, rng)});
  p.span_tokens = init::xavier<S>({cfg.n_span_tokens, d}, cfg.n_span_tokens, d, rng);
  p.heads.sal_fc1 = init::linear<S>(d, d, rng);
  p.heads.sal_fc2 = init::linear<S>(d, 1, rng);
  p.heads.span_fc1 = init::linear<S>(d, d, rng);
  p.heads.span_fc2 = init::linear<S>(d, 2, rng);
  p.heads.cls = init::linear<S>(d, 2, rng);
  return p;
}

// ---------------------------------------------------------------------------
// Building blocks.

template <typename S>
TensorT<S> constant_from(const FeatureMatrix& m) {
  auto t = TensorT<S>::zeros({static_cast<int>(m.rows), static_cast<int>(m.cols)});
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = static_cast<S>(m.data[static_cast<size_t>(i)]);
  return t;
}

// Fixed sinusoidal positional encoding over the first n_rows rows; remaining
// rows (span tokens) stay position-free.
template <typename S>
TensorT<S> positional_rows(int total_rows, int n_rows, int d) {
  auto pe = TensorT<S>::zeros({total_rows, d});
  for (int pos = 0; pos < n_rows; ++pos)
    for (int j = 0; j < d; ++j) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (j / 2)) / d);
      const double ang = pos / rate;
      pe.at(pos, j) = static_cast<S>((j % 2 == 0) ? std::sin(ang) : std::cos(ang));
    }
  return pe;
}

template <typename S>
TensorT<S> add_positional(GraphT<S>& g, const TensorT<S>& x, int n_rows) {
  return add(g, x, positional_rows<S>(x.rows(), n_rows, x.cols()));
}

template <typename S>
TensorT<S> attn_block_forward(GraphT<S>& g, const TensorT<S>& x, const TensorT<S>& kv,
                              const AttnBlockP<S>& p, const ModelConfig& cfg,
                              const ForwardMode& mode) {
  auto a = multi_head_attention(g, x, kv, kv, p.mha, cfg.heads);
  a = dropout(g, a, cfg.dropout, mode.rng, mode.training);
  return layer_norm_rows(g, add(g, x, a), p.norm.gain, p.norm.bias);
}

template <typename S>
TensorT<S> ffn_block_forward(GraphT<S>& g, const TensorT<S>& x, const FfnBlockP<S>& p,
                             const ModelConfig& cfg, const ForwardMode& mode) {
  auto h = linear(g, relu(g, linear(g, x, p.fc1.w, p.fc1.b)), p.fc2.w, p.fc2.b);
  h = dropout(g, h, cfg.dropout, mode.rng, mode.training);
  return layer_norm_rows(g, add(g, x, h), p.norm.gain, p.norm.bias);
}

// ---------------------------------------------------------------------------
// Module forwards.

template <typename S>
struct ProjectedInputs {
  TensorT<S> rgb, flow, depth, text;
};

template <typename S>
ProjectedInputs<S> project_inputs(GraphT<S>& g, const FeatureMatrix& rgb,
                                  const FeatureMatrix& flow, const FeatureMatrix& depth,
                                  const FeatureMatrix& text, const ModelParamsT<S>& p,
                                  const ModelConfig& cfg) {
  auto check = [&](const FeatureMatrix& m, const char* stream, int64_t rows, int64_t cols) {
    if (m.rows != rows)
      throw InputError(std::string(stream) + ": expected " + std::to_string(rows) +
                       " rows, got " + std::to_string(m.rows));
    if (m.cols != cols)
      throw InputError(std::string(stream) + ": expected feature width " +
                       std::to_string(cols) + ", got " + std::to_string(m.cols));
  };
  check(rgb, "rgb", rgb.rows, cfg.d_in_visual);
  check(flow, "flow", rgb.rows, cfg.d_in_visual);
  check(depth, "depth", rgb.rows, cfg.d_in_visual);
  check(text, "text", text.rows, cfg.d_in_text);

  auto project = [&](const FeatureMatrix& m, const StreamProjP<S>& sp) {
    auto x = linear(g, constant_from<S>(m), sp.proj.w, sp.proj.b);
    return layer_norm_rows(g, x, sp.norm.gain, sp.norm.bias);
  };
  ProjectedInputs<S> out;
  out.rgb = add_positional(g, project(rgb, p.proj_rgb), static_cast<int>(rgb.rows));
  out.flow = add_positional(g, project(flow, p.proj_flow), static_cast<int>(flow.rows));
  out.depth = add_positional(g, project(depth, p.proj_depth), static_cast<int>(depth.rows));
  out.text = project(text, p.proj_text);  // QRM convolutions encode text order
  return out;
}

// Z * F_rf + (1 - Z) * F_rd, elementwise. A convex combination: each output
// element stays inside the [min, max] envelope of its two inputs.
template <typename S>
TensorT<S> fuse_gated(GraphT<S>& g, const TensorT<S>& f_rf, const TensorT<S>& f_rd,
                      const TensorT<S>& z) {
  return add(g, mul(g, z, f_rf), mul(g, affine(g, z, S(-1), S(1)), f_rd));
}

enum class GateOverride { none, all_ones, all_zeros };  // test hook

template <typename S>
struct MfmTrace {
  std::vector<TensorT<S>> rgb_flow, rgb_depth, gate, fused;
};

template <typename S>
TensorT<S> mfm_forward(GraphT<S>& g, const TensorT<S>& f_r, const TensorT<S>& f_f,
                       const TensorT<S>& f_d, const ModelParamsT<S>& p,
                       const ModelConfig& cfg, const ForwardMode& mode,
                       MfmTrace<S>* trace = nullptr,
                       GateOverride gate_override = GateOverride::none) {
  if (f_r.shape() != f_f.shape() || f_r.shape() != f_d.shape())
    throw ShapeError("mfm_forward: stream shapes differ: " + shape_str(f_r.shape()) + ", " +
                     shape_str(f_f.shape()) + ", " + shape_str(f_d.shape()));
  TensorT<S> r = f_r;  // RGB stream carries the state across layers
  for (const auto& layer : p.mfm) {
    auto ctx = attn_block_forward(g, r, r, layer.self_rgb, cfg, mode);
    auto rf = attn_block_forward(g, ctx, f_f, layer.cross_flow, cfg, mode);
    auto rd = attn_block_forward(g, ctx, f_d, layer.cross_depth, cfg, mode);
    TensorT<S> z;
    switch (gate_override) {
      case GateOverride::all_ones:
        z = TensorT<S>::full(ctx.shape(), S(1));
        break;
      case GateOverride::all_zeros:
        z = TensorT<S>::zeros(ctx.shape());
        break;
      case GateOverride::none:
        z = sigmoid(g, linear(g, relu(g, linear(g, ctx, layer.gate_fc1.w, layer.gate_fc1.b)),
                              layer.gate_fc2.w, layer.gate_fc2.b));
        break;
    }
    auto fused = fuse_gated(g, rf, rd, z);
    if (trace) {
      trace->rgb_flow.push_back(rf);
      trace->rgb_depth.push_back(rd);
      trace->gate.push_back(z);
      trace->fused.push_back(fused);
    }
    r = fused;
  }
  return r;
}

// Word-, phrase- and sentence-level refinement: conv k=1 for words, k=2 and
// k=3 summed for phrases, FFN over the sum, then a mean-pooled sentence row
// appended last.
template <typename S>
TensorT<S> qrm_forward(GraphT<S>& g, const TensorT<S>& f_t, const ModelParamsT<S>& p,
                       const ModelConfig& cfg, const ForwardMode& mode) {
  if (f_t.rank() != 2 || f_t.rows() < 1)
    throw InputError("qrm_forward: need at least one text token");
  auto word = conv1d_same(g, f_t, p.qrm.conv_word.kernel, p.qrm.conv_word.bias);
  auto pair = conv1d_same(g, f_t, p.qrm.conv_pair.kernel, p.qrm.conv_pair.bias);
  auto triple = conv1d_same(g, f_t, p.qrm.conv_triple.kernel, p.qrm.conv_triple.bias);
  auto merged = add(g, word, add(g, pair, triple));
  auto wp = ffn_block_forward(g, merged, p.qrm.ffn, cfg, mode);
  return concat_rows(g, wp, mean_rows(g, wp));
}

template <typename S>
TensorT<S> cat_forward(GraphT<S>& g, const TensorT<S>& f_v, const TensorT<S>& text_tokens,
                       const ModelParamsT<S>& p, const ModelConfig& cfg,
                       const ForwardMode& mode) {
  TensorT<S> x = f_v;
  for (const auto& layer : p.cat) {
    x = attn_block_forward(g, x, text_tokens, layer.cross, cfg, mode);
    x = ffn_block_forward(g, x, layer.ffn, cfg, mode);
  }
  return x;
}

template <typename S>
std::pair<TensorT<S>, TensorT<S>> encoder_forward(GraphT<S>& g, const TensorT<S>& f_v,
                                                  const TensorT<S>& span_tokens,
                                                  const ModelParamsT<S>& p,
                                                  const ModelConfig& cfg,
                                                  const ForwardMode& mode) {
  const int n_v = f_v.rows(), n_s = span_tokens.rows();
  auto x = add_positional(g, concat_rows(g, f_v, span_tokens), n_v);
  for (const auto& layer : p.encoder) {
    x = attn_block_forward(g, x, x, layer.self, cfg, mode);
    x = ffn_block_forward(g, x, layer.ffn, cfg, mode);
  }
  return {slice_rows(g, x, 0, n_v), slice_rows(g, x, n_v, n_v + n_s)};
}

template <typename S>
struct ForwardOutputT {
  TensorT<S> saliency_logits;  // [N_v]
  TensorT<S> saliency;         // sigmoid(logits), in (0,1)
  TensorT<S> spans_cw;         // [N_s x 2] sigmoid (center, width)
  TensorT<S> class_probs;      // [N_s x 2] softmax (fg, bg)
  TensorT<S> fg_prob;          // [N_s] foreground column
  // Intermediates retained for tests and ablation checks.
  TensorT<S> fused_visual;     // F_v
  TensorT<S> text_tokens;      // refined text tokens
  TensorT<S> cross_tokens;     // query-relevant visual tokens
};

using ForwardOutput = ForwardOutputT<float>;

template <typename S>
ForwardOutputT<S> heads_forward(GraphT<S>& g, const TensorT<S>& f_h, const TensorT<S>& f_s,
                                const ModelParamsT<S>& p) {
  ForwardOutputT<S> out;
  auto sal = linear(g, relu(g, linear(g, f_h, p.heads.sal_fc1.w, p.heads.sal_fc1.b)),
                    p.heads.sal_fc2.w, p.heads.sal_fc2.b);
  out.saliency_logits = reshape(g, sal, {f_h.rows()});
  out.saliency = sigmoid(g, out.saliency_logits);
  out.spans_cw = sigmoid(
      g, linear(g, relu(g, linear(g, f_s, p.heads.span_fc1.w, p.heads.span_fc1.b)),
                p.heads.span_fc2.w, p.heads.span_fc2.b));
  out.class_probs = softmax_rows(g, linear(g, f_s, p.heads.cls.w, p.heads.cls.b));
  out.fg_prob = reshape(g, slice_cols(g, out.class_probs, 0, 1), {f_s.rows()});
  return out;
}

template <typename S>
ForwardOutputT<S> model_forward(GraphT<S>& g, const VideoSample& sample,
                                const ModelParamsT<S>& p, const ModelConfig& cfg,
                                const ForwardMode& mode, const AblationFlags& ab = {}) {
  ab.validate();
  if (sample.rgb.rows > cfg.max_video_len)
    throw InputError(sample.ann.vid + ": video length " + std::to_string(sample.rgb.rows) +
                     " exceeds max_video_len " + std::to_string(cfg.max_video_len));
  if (sample.text.rows > cfg.max_text_len)
    throw InputError(sample.ann.vid + ": text length " + std::to_string(sample.text.rows) +
                     " exceeds max_text_len " + std::to_string(cfg.max_text_len));

  auto masked = [](const FeatureMatrix& m, bool mask) {
    return mask ? FeatureMatrix::zeros(m.rows, m.cols) : m;
  };
  const FeatureMatrix rgb = masked(sample.rgb, ab.mask_rgb);
  const FeatureMatrix flow = masked(sample.flow, ab.mask_flow);
  const FeatureMatrix depth = masked(sample.depth, ab.mask_depth);

  auto proj = project_inputs(g, rgb, flow, depth, sample.text, p, cfg);
  TensorT<S> f_v = ab.bypass_mfm
                       ? proj.rgb
                       : mfm_forward(g, proj.rgb, proj.flow, proj.depth, p, cfg, mode);
  TensorT<S> text_tokens = ab.bypass_qrm ? proj.text : qrm_forward(g, proj.text, p, cfg, mode);
  TensorT<S> cross = ab.bypass_cat ? f_v : cat_forward(g, f_v, text_tokens, p, cfg, mode);
  auto [f_h, f_s] = encoder_forward(g, cross, p.span_tokens, p, cfg, mode);
  auto out = heads_forward(g, f_h, f_s, p);
  out.fused_visual = f_v;
  out.text_tokens = text_tokens;
  out.cross_tokens = cross;
  return out;
}

}  // namespace mrnet
