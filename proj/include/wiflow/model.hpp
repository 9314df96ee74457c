#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wiflow/ops.hpp"
#include "wiflow/params.hpp"
#include "wiflow/rng.hpp"

namespace wiflow {

// Architecture hyperparameters. Defaults reproduce the published layer
// schedule: a four-block dilated-causal TCN with monotone channel
// compression, an asymmetric-convolution spatial encoder that halves the
// subcarrier axis per block, two-stage grouped axial attention, and a
// convolutional coordinate decoder.
struct WiFlowConfig {
  std::int64_t input_channels = 540;
  std::int64_t window_T = 20;
  std::vector<std::int64_t> tcn_channel_schedule = {540, 440, 340, 240};
  std::vector<std::int64_t> tcn_dilations = {1, 2, 4, 8};
  std::int64_t tcn_kernel = 3;
  // grouped-conv group count; 4 divides every entry of the default schedule
  // and lands the default model at ~2.17M parameters
  std::int64_t tcn_groups = 4;
  std::int64_t tcn_convs_per_block = 2;
  std::vector<std::int64_t> spatial_channel_schedule = {8, 16, 32, 64};
  std::int64_t spatial_kernel_w = 3;
  std::int64_t keypoints = 15;
  std::int64_t attention_groups = 8;
  std::int64_t attention_layers = 1;
  std::int64_t decoder_mid_channels = 32;
  bool tcn_residual = false;

  void validate() const {
    auto bad = [](const std::string& field, const std::string& why) {
      fail("config error: " + field + " " + why);
    };
    if (input_channels <= 0) bad("input_channels", "must be positive");
    if (window_T <= 0) bad("window_T", "must be positive");
    if (keypoints <= 0) bad("keypoints", "must be positive");
    if (tcn_kernel < 1) bad("tcn_kernel", "must be >= 1");
    if (tcn_convs_per_block < 1) bad("tcn_convs_per_block", "must be >= 1");
    if (tcn_channel_schedule.empty()) bad("tcn_channel_schedule", "must be non-empty");
    if (tcn_dilations.size() != tcn_channel_schedule.size())
      bad("tcn_dilations", "must have one entry per tcn_channel_schedule entry");
    for (auto d : tcn_dilations)
      if (d < 1) bad("tcn_dilations", "entries must be >= 1");
    if (tcn_channel_schedule[0] > input_channels)
      bad("tcn_channel_schedule", "first entry may not exceed input_channels");
    for (std::size_t i = 0; i + 1 < tcn_channel_schedule.size(); ++i)
      if (tcn_channel_schedule[i + 1] >= tcn_channel_schedule[i])
        bad("tcn_channel_schedule", "must be strictly decreasing");
    if (tcn_groups < 1) bad("tcn_groups", "must be >= 1");
    if (input_channels % tcn_groups != 0)
      bad("tcn_groups", "must divide input_channels=" + std::to_string(input_channels));
    for (auto c : tcn_channel_schedule) {
      if (c <= 0) bad("tcn_channel_schedule", "entries must be positive");
      if (c % tcn_groups != 0)
        bad("tcn_groups", "must divide every tcn_channel_schedule entry, violated at " +
                              std::to_string(c));
    }
    if (spatial_channel_schedule.empty()) bad("spatial_channel_schedule", "must be non-empty");
    for (auto c : spatial_channel_schedule)
      if (c <= 0) bad("spatial_channel_schedule", "entries must be positive");
    if (spatial_kernel_w < 1 || spatial_kernel_w % 2 == 0)
      bad("spatial_kernel_w", "must be odd and >= 1");
    // the subcarrier axis starts at the TCN output width and halves per block
    std::int64_t s = tcn_channel_schedule.back();
    for (std::size_t n = 0; n < spatial_channel_schedule.size(); ++n) {
      if (s % 2 != 0)
        bad("spatial_channel_schedule",
            "needs an even subcarrier width at every block, got " + std::to_string(s) +
                " at block " + std::to_string(n));
      s /= 2;
    }
    if (s != keypoints)
      bad("keypoints", "must equal the compressed subcarrier width " + std::to_string(s));
    if (attention_groups < 1) bad("attention_groups", "must be >= 1");
    if (spatial_channel_schedule.back() % attention_groups != 0)
      bad("attention_groups", "must divide the final spatial channel count " +
                                  std::to_string(spatial_channel_schedule.back()));
    if (attention_layers < 1) bad("attention_layers", "must be >= 1");
    if (decoder_mid_channels < 1) bad("decoder_mid_channels", "must be >= 1");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"input_channels", input_channels},
                          {"window_T", window_T},
                          {"tcn_channel_schedule", tcn_channel_schedule},
                          {"tcn_dilations", tcn_dilations},
                          {"tcn_kernel", tcn_kernel},
                          {"tcn_groups", tcn_groups},
                          {"tcn_convs_per_block", tcn_convs_per_block},
                          {"spatial_channel_schedule", spatial_channel_schedule},
                          {"spatial_kernel_w", spatial_kernel_w},
                          {"keypoints", keypoints},
                          {"attention_groups", attention_groups},
                          {"attention_layers", attention_layers},
                          {"decoder_mid_channels", decoder_mid_channels},
                          {"tcn_residual", tcn_residual}};
  }

  static WiFlowConfig from_json(const nlohmann::json& j) {
    WiFlowConfig c;
    static const std::vector<std::string> known = {
        "input_channels",   "window_T",     "tcn_channel_schedule",
        "tcn_dilations",    "tcn_kernel",   "tcn_groups",
        "tcn_convs_per_block", "spatial_channel_schedule", "spatial_kernel_w",
        "keypoints",        "attention_groups", "attention_layers",
        "decoder_mid_channels", "tcn_residual"};
    for (const auto& item : j.items()) {
      bool ok = false;
      for (const auto& k : known) ok = ok || k == item.key();
      check(ok, "config error: unknown model key '" + item.key() + "'");
    }
    c.input_channels = j.value("input_channels", c.input_channels);
    c.window_T = j.value("window_T", c.window_T);
    c.tcn_channel_schedule = j.value("tcn_channel_schedule", c.tcn_channel_schedule);
    c.tcn_dilations = j.value("tcn_dilations", c.tcn_dilations);
    c.tcn_kernel = j.value("tcn_kernel", c.tcn_kernel);
    c.tcn_groups = j.value("tcn_groups", c.tcn_groups);
    c.tcn_convs_per_block = j.value("tcn_convs_per_block", c.tcn_convs_per_block);
    c.spatial_channel_schedule = j.value("spatial_channel_schedule", c.spatial_channel_schedule);
    c.spatial_kernel_w = j.value("spatial_kernel_w", c.spatial_kernel_w);
    c.keypoints = j.value("keypoints", c.keypoints);
    c.attention_groups = j.value("attention_groups", c.attention_groups);
    c.attention_layers = j.value("attention_layers", c.attention_layers);
    c.decoder_mid_channels = j.value("decoder_mid_channels", c.decoder_mid_channels);
    c.tcn_residual = j.value("tcn_residual", c.tcn_residual);
    return c;
  }
};

// ------------------------------------------------------- parameter inventory

enum class ParamKind { Weight, Bias, BnGamma, BnBeta, BnMean, BnVar };

inline bool param_trainable(ParamKind k) {
  return k != ParamKind::BnMean && k != ParamKind::BnVar;
}

// Enumerates every model parameter in a stable order. fn receives
// (name, shape, kind, fan_in); fan_in is meaningful for weights only.
// init_model, count_params and the checkpoint layout all derive from this
// single walk.
template <typename F>
void visit_params(const WiFlowConfig& cfg, F&& fn) {
  auto bn = [&](const std::string& prefix, std::int64_t c) {
    fn(prefix + ".gamma", Shape{c}, ParamKind::BnGamma, c);
    fn(prefix + ".beta", Shape{c}, ParamKind::BnBeta, c);
    fn(prefix + ".running_mean", Shape{c}, ParamKind::BnMean, c);
    fn(prefix + ".running_var", Shape{c}, ParamKind::BnVar, c);
  };

  std::int64_t c_in = cfg.input_channels;
  for (std::size_t l = 0; l < cfg.tcn_channel_schedule.size(); ++l) {
    const std::string p = "tcn.block" + std::to_string(l) + ".";
    const std::int64_t c_out = cfg.tcn_channel_schedule[l];
    const std::int64_t cg = c_in / cfg.tcn_groups;
    for (std::int64_t j = 0; j < cfg.tcn_convs_per_block; ++j) {
      const std::string q = p + "conv" + std::to_string(j) + ".";
      fn(q + "weight", Shape{c_in, cg, cfg.tcn_kernel}, ParamKind::Weight, cg * cfg.tcn_kernel);
      fn(q + "bias", Shape{c_in}, ParamKind::Bias, 0);
    }
    fn(p + "pointwise.weight", Shape{c_out, c_in, 1}, ParamKind::Weight, c_in);
    fn(p + "pointwise.bias", Shape{c_out}, ParamKind::Bias, 0);
    if (cfg.tcn_residual) {
      fn(p + "shortcut.weight", Shape{c_out, c_in, 1}, ParamKind::Weight, c_in);
      fn(p + "shortcut.bias", Shape{c_out}, ParamKind::Bias, 0);
    }
    c_in = c_out;
  }

  const std::int64_t kw = cfg.spatial_kernel_w;
  const std::int64_t s0 = cfg.spatial_channel_schedule[0];
  for (std::int64_t j = 0; j < 3; ++j) {
    const std::string q = "spatial.up.conv" + std::to_string(j) + ".";
    const std::int64_t ci = j == 0 ? 1 : s0;
    fn(q + "weight", Shape{s0, ci, 1, kw}, ParamKind::Weight, ci * kw);
    fn(q + "bias", Shape{s0}, ParamKind::Bias, 0);
    bn("spatial.up.bn" + std::to_string(j), s0);
  }

  std::int64_t cs = s0;
  for (std::size_t n = 0; n < cfg.spatial_channel_schedule.size(); ++n) {
    const std::string p = "spatial.res" + std::to_string(n) + ".";
    const std::int64_t co = cfg.spatial_channel_schedule[n];
    for (std::int64_t j = 0; j < 3; ++j) {
      const std::string q = p + "conv" + std::to_string(j) + ".";
      const std::int64_t ci = j == 0 ? cs : co;
      fn(q + "weight", Shape{co, ci, 1, kw}, ParamKind::Weight, ci * kw);
      fn(q + "bias", Shape{co}, ParamKind::Bias, 0);
    }
    bn(p + "bn0", co);
    bn(p + "bn1", co);
    fn(p + "shortcut.weight", Shape{co, cs, 1, 1}, ParamKind::Weight, cs);
    fn(p + "shortcut.bias", Shape{co}, ParamKind::Bias, 0);
    cs = co;
  }

  const std::int64_t c_attn = cfg.spatial_channel_schedule.back();
  for (std::int64_t i = 0; i < cfg.attention_layers; ++i) {
    for (int stage = 0; stage < 2; ++stage) {
      const std::int64_t e = stage == 0 ? cfg.window_T : cfg.keypoints;
      const std::string p =
          "attn.layer" + std::to_string(i) + ".stage" + std::to_string(stage) + ".";
      fn(p + "wq", Shape{e, e}, ParamKind::Weight, e);
      fn(p + "wk", Shape{e, e}, ParamKind::Weight, e);
      fn(p + "wv", Shape{e, e}, ParamKind::Weight, e);
      bn(p + "bn", c_attn);
    }
  }

  fn("decoder.conv0.weight", Shape{cfg.decoder_mid_channels, c_attn, 3, 3}, ParamKind::Weight,
     c_attn * 9);
  fn("decoder.conv0.bias", Shape{cfg.decoder_mid_channels}, ParamKind::Bias, 0);
  bn("decoder.bn", cfg.decoder_mid_channels);
  fn("decoder.conv1.weight", Shape{2, cfg.decoder_mid_channels, 1, 1}, ParamKind::Weight,
     cfg.decoder_mid_channels);
  fn("decoder.conv1.bias", Shape{2}, ParamKind::Bias, 0);
}

// Deterministic initialization: every weight gets its own RNG stream derived
// from (seed, name); weights are uniform in +-sqrt(6/fan_in), biases zero,
// batch-norm gamma=1 / beta=0 with running stats (0, 1).
template <typename S>
ParameterStore<S> init_model(const WiFlowConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterStore<S> ps;
  visit_params(cfg, [&](const std::string& name, Shape shape, ParamKind kind,
                        std::int64_t fan_in) {
    Tensor<S>& t = ps.create(name, std::move(shape), param_trainable(kind));
    switch (kind) {
      case ParamKind::Weight: {
        Rng rng = derive_rng(seed, name);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (std::int64_t i = 0; i < t.size(); ++i)
          t[i] = static_cast<S>(rng.uniform(-bound, bound));
        break;
      }
      case ParamKind::BnGamma:
      case ParamKind::BnVar:
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = S(1);
        break;
      case ParamKind::Bias:
      case ParamKind::BnBeta:
      case ParamKind::BnMean:
        break;  // zero-initialized by construction
    }
  });
  return ps;
}

inline std::int64_t count_params(const WiFlowConfig& cfg) {
  cfg.validate();
  std::int64_t n = 0;
  visit_params(cfg, [&](const std::string&, Shape shape, ParamKind kind, std::int64_t) {
    if (param_trainable(kind)) n += numel(shape);
  });
  return n;
}

// Analytic multiply-accumulate count for one forward pass of one window
// (convolutions, attention projections and attention matmuls; elementwise
// and normalization work is excluded by convention).
inline std::int64_t count_flops(const WiFlowConfig& cfg) {
  cfg.validate();
  const std::int64_t T = cfg.window_T;
  std::int64_t macs = 0;

  std::int64_t c_in = cfg.input_channels;
  for (std::size_t l = 0; l < cfg.tcn_channel_schedule.size(); ++l) {
    const std::int64_t c_out = cfg.tcn_channel_schedule[l];
    const std::int64_t cg = c_in / cfg.tcn_groups;
    macs += cfg.tcn_convs_per_block * c_in * cg * cfg.tcn_kernel * T;
    macs += c_in * c_out * T;
    if (cfg.tcn_residual) macs += c_in * c_out * T;
    c_in = c_out;
  }

  const std::int64_t kw = cfg.spatial_kernel_w;
  const std::int64_t s0 = cfg.spatial_channel_schedule[0];
  std::int64_t w = cfg.tcn_channel_schedule.back();
  macs += (1 * s0 + s0 * s0 + s0 * s0) * kw * T * w;
  std::int64_t cs = s0;
  for (std::size_t n = 0; n < cfg.spatial_channel_schedule.size(); ++n) {
    const std::int64_t co = cfg.spatial_channel_schedule[n];
    w /= 2;
    macs += cs * co * kw * T * w;       // strided conv
    macs += 2 * co * co * kw * T * w;   // two stride-1 convs
    macs += cs * co * T * w;            // 1x1 shortcut
    cs = co;
  }

  const std::int64_t C = cfg.spatial_channel_schedule.back();
  const std::int64_t K = cfg.keypoints;
  for (std::int64_t i = 0; i < cfg.attention_layers; ++i) {
    macs += 3 * K * C * T * T + K * 2 * T * T * C;  // width stage
    macs += 3 * T * C * K * K + T * 2 * K * K * C;  // height stage
  }

  macs += C * cfg.decoder_mid_channels * 9 * K * T;
  macs += cfg.decoder_mid_channels * 2 * K * T;
  return macs;
}

// -------------------------------------------------------------- shape trace

struct ShapeTraceEntry {
  std::string name;
  Shape shape;  // per-sample, batch axis dropped
  bool operator==(const ShapeTraceEntry&) const = default;
};

inline std::vector<ShapeTraceEntry> expected_trace(const WiFlowConfig& cfg) {
  cfg.validate();
  std::vector<ShapeTraceEntry> tr;
  tr.push_back({"Input", {cfg.input_channels, cfg.window_T}});
  for (std::size_t l = 0; l < cfg.tcn_channel_schedule.size(); ++l)
    tr.push_back({"TCN Layer " + std::to_string(l + 1),
                  {cfg.tcn_channel_schedule[l], cfg.window_T}});
  std::int64_t w = cfg.tcn_channel_schedule.back();
  tr.push_back({"ConvBlock1 (up)", {cfg.spatial_channel_schedule[0], cfg.window_T, w}});
  for (std::size_t n = 0; n < cfg.spatial_channel_schedule.size(); ++n) {
    w /= 2;
    tr.push_back({"ResBlock " + std::to_string(n + 1),
                  {cfg.spatial_channel_schedule[n], cfg.window_T, w}});
  }
  tr.push_back({"AxialAttention", {cfg.spatial_channel_schedule.back(), cfg.keypoints,
                                   cfg.window_T}});
  tr.push_back({"Decoder", {2, cfg.keypoints, cfg.window_T}});
  tr.push_back({"Avg Pooling", {2, cfg.keypoints, 1}});
  tr.push_back({"Output", {cfg.keypoints, 2}});
  return tr;
}

// ------------------------------------------------------------------- forward

namespace detail {

template <typename S>
Tensor<S> bn_forward(ParameterStore<S>& ps, const std::string& prefix, const Tensor<S>& x,
                     bool training) {
  return batch_norm(x, ps.at(prefix + ".gamma"), ps.at(prefix + ".beta"),
                    ps.at(prefix + ".running_mean"), ps.at(prefix + ".running_var"), 0.1, 1e-5,
                    training, 1);
}

// One axial attention stage. stage 0 attends along the trailing (width/T)
// axis of a BxCxKxT tensor; stage 1 along the height/K axis. Both follow the
// same recipe: project with ExE matrices, split channels into G groups,
// scaled dot-product attention per group, concat, batch norm.
template <typename S>
Tensor<S> axial_stage(const WiFlowConfig& cfg, ParameterStore<S>& ps, const std::string& prefix,
                      const Tensor<S>& x, int stage, bool training) {
  const std::int64_t B = x.dim(0), C = x.dim(1), K = x.dim(2), T = x.dim(3);
  const std::int64_t G = cfg.attention_groups;
  const std::int64_t d = C / G;
  const std::int64_t e = stage == 0 ? T : K;      // attended axis length
  const std::int64_t slices = stage == 0 ? B * K : B * T;

  Tensor<S> xp = stage == 0 ? permute(x, {0, 2, 1, 3})   // B,K,C,T
                            : permute(x, {0, 3, 1, 2});  // B,T,C,K
  Tensor<S> x2 = reshape(xp, {slices * C, e});
  Tensor<S> q = matmul(x2, ps.at(prefix + ".wq"));
  Tensor<S> k = matmul(x2, ps.at(prefix + ".wk"));
  Tensor<S> v = matmul(x2, ps.at(prefix + ".wv"));

  auto grouped = [&](const Tensor<S>& t) { return reshape(t, {slices * G, d, e}); };
  Tensor<S> qt = permute(grouped(q), {0, 2, 1});  // (slices*G, e, d)
  Tensor<S> kg = grouped(k);                      // (slices*G, d, e)
  Tensor<S> att = scale(bmm(qt, kg), static_cast<S>(1.0 / std::sqrt(static_cast<double>(d))));
  att = softmax(att, 2);
  Tensor<S> vt = permute(grouped(v), {0, 2, 1});  // (slices*G, e, d)
  Tensor<S> o = permute(bmm(att, vt), {0, 2, 1});  // (slices*G, d, e)

  Tensor<S> back = stage == 0 ? permute(reshape(o, {B, K, C, T}), {0, 2, 1, 3})
                              : permute(reshape(o, {B, T, C, K}), {0, 2, 3, 1});
  return bn_forward(ps, prefix + ".bn", back, training);
}

}  // namespace detail

// Temporal encoder alone: BxCxT -> Bx(schedule back)xT. Strictly causal in
// the trailing axis.
template <typename S>
Tensor<S> tcn_encode(const WiFlowConfig& cfg, ParameterStore<S>& ps, Tensor<S> x,
                     std::vector<ShapeTraceEntry>* trace = nullptr) {
  const std::int64_t T = cfg.window_T;
  for (std::size_t l = 0; l < cfg.tcn_channel_schedule.size(); ++l) {
    const std::string p = "tcn.block" + std::to_string(l) + ".";
    Tensor<S> h = x;
    for (std::int64_t j = 0; j < cfg.tcn_convs_per_block; ++j) {
      h = conv1d_causal(h, ps.at(p + "conv" + std::to_string(j) + ".weight"),
                        ps.at(p + "conv" + std::to_string(j) + ".bias"), cfg.tcn_dilations[l],
                        cfg.tcn_groups);
      h = silu(h);
    }
    Tensor<S> z =
        conv1d_causal(h, ps.at(p + "pointwise.weight"), ps.at(p + "pointwise.bias"), 1, 1);
    if (cfg.tcn_residual)
      z = add(z, conv1d_causal(x, ps.at(p + "shortcut.weight"), ps.at(p + "shortcut.bias"), 1, 1));
    x = silu(z);
    if (trace)
      trace->push_back({"TCN Layer " + std::to_string(l + 1), {cfg.tcn_channel_schedule[l], T}});
  }
  return x;
}

// Full encoder-decoder forward. Accepts CxT (one window) or BxCxT; returns
// Kx2 or BxKx2 respectively. When `trace` is given it receives the
// per-sample shape of every named stage.
template <typename S>
Tensor<S> forward(const WiFlowConfig& cfg, ParameterStore<S>& ps, const Tensor<S>& input,
                  bool training, std::vector<ShapeTraceEntry>* trace = nullptr) {
  const bool batched = input.rank() == 3;
  check(batched || input.rank() == 2,
        "forward expects CxT or BxCxT input, got " + shape_str(input.shape()));
  Tensor<S> x = batched ? input : reshape(input, {1, input.dim(0), input.dim(1)});
  check(x.dim(1) == cfg.input_channels && x.dim(2) == cfg.window_T,
        "forward input " + shape_str(input.shape()) + " does not match configured " +
            std::to_string(cfg.input_channels) + "x" + std::to_string(cfg.window_T));
  const std::int64_t B = x.dim(0);
  auto tr = [&](std::string name, Shape per_sample) {
    if (trace) trace->push_back({std::move(name), std::move(per_sample)});
  };
  tr("Input", {cfg.input_channels, cfg.window_T});

  const std::int64_t T = cfg.window_T;
  x = tcn_encode(cfg, ps, x, trace);
  std::int64_t c = cfg.tcn_channel_schedule.back();

  // channels become the subcarrier/width axis of a single-channel image
  std::int64_t w = c;
  x = reshape(permute(x, {0, 2, 1}), {B, 1, T, w});

  const std::int64_t pad_w = (cfg.spatial_kernel_w - 1) / 2;
  const std::int64_t s0 = cfg.spatial_channel_schedule[0];
  for (std::int64_t j = 0; j < 3; ++j) {
    const std::string q = "spatial.up.conv" + std::to_string(j) + ".";
    x = conv2d(x, ps.at(q + "weight"), ps.at(q + "bias"), 1, 1, 0, pad_w);
    x = detail::bn_forward(ps, "spatial.up.bn" + std::to_string(j), x, training);
    x = silu(x);
  }
  tr("ConvBlock1 (up)", {s0, T, w});

  for (std::size_t n = 0; n < cfg.spatial_channel_schedule.size(); ++n) {
    const std::string p = "spatial.res" + std::to_string(n) + ".";
    check(x.dim(3) % 2 == 0, "asymmetric residual block " + std::to_string(n) +
                                 " requires an even subcarrier width, got " +
                                 std::to_string(x.dim(3)));
    Tensor<S> h = conv2d(x, ps.at(p + "conv0.weight"), ps.at(p + "conv0.bias"), 1, 2, 0, pad_w);
    h = silu(detail::bn_forward(ps, p + "bn0", h, training));
    h = conv2d(h, ps.at(p + "conv1.weight"), ps.at(p + "conv1.bias"), 1, 1, 0, pad_w);
    h = silu(detail::bn_forward(ps, p + "bn1", h, training));
    h = conv2d(h, ps.at(p + "conv2.weight"), ps.at(p + "conv2.bias"), 1, 1, 0, pad_w);
    Tensor<S> shortcut =
        conv2d(x, ps.at(p + "shortcut.weight"), ps.at(p + "shortcut.bias"), 1, 2, 0, 0);
    x = add(silu(h), shortcut);  // activation inside, addition outside
    w = x.dim(3);
    tr("ResBlock " + std::to_string(n + 1), {cfg.spatial_channel_schedule[n], T, w});
  }

  // the compressed subcarrier axis now indexes keypoints: go to BxCxKxT
  x = permute(x, {0, 1, 3, 2});
  for (std::int64_t i = 0; i < cfg.attention_layers; ++i) {
    const std::string p = "attn.layer" + std::to_string(i);
    x = detail::axial_stage(cfg, ps, p + ".stage0", x, 0, training);
    x = detail::axial_stage(cfg, ps, p + ".stage1", x, 1, training);
  }
  tr("AxialAttention", {cfg.spatial_channel_schedule.back(), cfg.keypoints, T});

  Tensor<S> h = conv2d(x, ps.at("decoder.conv0.weight"), ps.at("decoder.conv0.bias"), 1, 1, 1, 1);
  h = silu(detail::bn_forward(ps, "decoder.bn", h, training));
  h = conv2d(h, ps.at("decoder.conv1.weight"), ps.at("decoder.conv1.bias"), 1, 1, 0, 0);
  tr("Decoder", {2, cfg.keypoints, T});
  Tensor<S> pooled = adaptive_avg_pool_last(h);
  tr("Avg Pooling", {2, cfg.keypoints, 1});
  Tensor<S> out = permute(reshape(pooled, {B, 2, cfg.keypoints}), {0, 2, 1});
  tr("Output", {cfg.keypoints, 2});
  return batched ? out : reshape(out, {cfg.keypoints, 2});
}

}  // namespace wiflow
