// Release gate: one self-contained check per acceptance criterion, each
// printing a single [PASS]/[FAIL] line with the measured numbers. The
// process exits 0 iff every gated criterion passes. Criterion 12 (full-scale
// reproduction) is a documented manual path, reported as [INFO] and not
// gated.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wiflow/csi.hpp"
#include "wiflow/dataset.hpp"
#include "wiflow/gradaudit.hpp"
#include "wiflow/labels.hpp"
#include "wiflow/losses.hpp"
#include "wiflow/metrics.hpp"
#include "wiflow/model.hpp"
#include "wiflow/optim.hpp"
#include "wiflow/rng.hpp"
#include "wiflow/split.hpp"
#include "wiflow/synth.hpp"
#include "wiflow/tape.hpp"
#include "wiflow/train.hpp"

using namespace wiflow;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
fs::path g_work;

void report(const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %s -- %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

template <typename Fn>
void criterion(const char* name, Fn&& fn) {
  try {
    fn(name);
  } catch (const std::exception& e) {
    report(name, false, std::string("unexpected exception: ") + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  check(static_cast<bool>(is), "cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness: every layer family plus a structurally complete
//    miniature model end to end, 64-bit central differences, 20 seeds.

void c01_gradients(const char* name) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto worst = gradient_audit<double>(20, 1e-6);
  double overall = 0.0;
  for (const auto& [layer, err] : worst) overall = std::max(overall, err);
  const double secs = seconds_since(t0);
  const bool pass = overall < 1e-4 && secs < 300.0 && !worst.empty();
  report(name, pass,
         fmt("max rel err %.3e < 1e-4 across %zu layer families, 20 seeds, 64-bit (%.1f s < 300 s)",
             overall, worst.size(), secs));
}

// ---------------------------------------------------------------------------
// 2. Causality: perturbing input column t' must leave every temporal-encoder
//    stage bitwise unchanged at columns before t'. Stage outputs come from
//    running the encoder with the channel schedule truncated to a prefix;
//    parameter names only depend on the block index, so all prefixes read
//    the same store.

void c02_causality(const char* name) {
  WiFlowConfig cfg;
  ParameterStore<float> ps = init_model<float>(cfg, 3);
  Rng rng(99);
  const std::int64_t C = cfg.input_channels, T = cfg.window_T;
  const std::size_t n_stages = cfg.tcn_channel_schedule.size();

  std::int64_t violations = 0, downstream_diffs = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor<float> x = random_tensor<float>({1, C, T}, rng);
    const std::int64_t tp = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(T - 1)));
    Tensor<float> xp = x.clone();
    for (std::int64_t c = 0; c < C; ++c)
      xp.flat()[c * T + tp] += static_cast<float>(rng.uniform(0.5, 1.5));

    for (std::size_t stages = 1; stages <= n_stages; ++stages) {
      WiFlowConfig sub = cfg;
      sub.tcn_channel_schedule.assign(cfg.tcn_channel_schedule.begin(),
                                      cfg.tcn_channel_schedule.begin() +
                                          static_cast<std::ptrdiff_t>(stages));
      sub.tcn_dilations.assign(cfg.tcn_dilations.begin(),
                               cfg.tcn_dilations.begin() + static_cast<std::ptrdiff_t>(stages));
      Tensor<float> a = tcn_encode(sub, ps, x);
      Tensor<float> b = tcn_encode(sub, ps, xp);
      const std::int64_t co = a.dim(1);
      for (std::int64_t c = 0; c < co; ++c)
        for (std::int64_t t = 0; t < T; ++t) {
          const bool same =
              std::memcmp(&a.flat()[c * T + t], &b.flat()[c * T + t], sizeof(float)) == 0;
          if (t < tp && !same) ++violations;
          if (t >= tp && !same) ++downstream_diffs;
        }
    }
  }
  // downstream_diffs > 0 guards against a vacuous pass (perturbation lost)
  const bool pass = violations == 0 && downstream_diffs > 0;
  report(name, pass,
         fmt("100 random inputs x %zu encoder stages: %lld pre-perturbation columns changed "
             "(bitwise), perturbation visible downstream at %lld entries",
             n_stages, static_cast<long long>(violations),
             static_cast<long long>(downstream_diffs)));
}

// ---------------------------------------------------------------------------
// 3. Shape conformance: the forward trace must equal the published schedule.

void c03_shape_trace(const char* name) {
  const std::vector<ShapeTraceEntry> expected = {
      {"Input", {540, 20}},          {"TCN Layer 1", {540, 20}},
      {"TCN Layer 2", {440, 20}},    {"TCN Layer 3", {340, 20}},
      {"TCN Layer 4", {240, 20}},    {"ConvBlock1 (up)", {8, 20, 240}},
      {"ResBlock 1", {8, 20, 120}},  {"ResBlock 2", {16, 20, 60}},
      {"ResBlock 3", {32, 20, 30}},  {"ResBlock 4", {64, 20, 15}},
      {"AxialAttention", {64, 15, 20}}, {"Decoder", {2, 15, 20}},
      {"Avg Pooling", {2, 15, 1}},   {"Output", {15, 2}},
  };
  WiFlowConfig cfg;
  ParameterStore<float> ps = init_model<float>(cfg, 7);
  std::vector<ShapeTraceEntry> trace;
  Tensor<float> y = forward(cfg, ps, Tensor<float>::zeros({540, 20}), false, &trace);

  std::string mismatch;
  if (y.shape() != Shape{15, 2}) mismatch = "output shape " + shape_str(y.shape());
  if (mismatch.empty() && trace.size() != expected.size())
    mismatch = fmt("trace has %zu stages, expected %zu", trace.size(), expected.size());
  for (std::size_t i = 0; mismatch.empty() && i < expected.size(); ++i)
    if (!(trace[i] == expected[i]))
      mismatch = "stage " + std::to_string(i) + ": got " + trace[i].name + " " +
                 shape_str(trace[i].shape) + ", expected " + expected[i].name + " " +
                 shape_str(expected[i].shape);
  report(name, mismatch.empty(),
         mismatch.empty()
             ? fmt("all %zu stages match 540x20 -> ... -> 64x15x20 -> 2x15x20 -> 15x2",
                   expected.size())
             : mismatch);
}

// ---------------------------------------------------------------------------
// 4. Parameter / MAC budget on the default configuration.

void c04_budget(const char* name) {
  WiFlowConfig cfg;
  const std::int64_t n = count_params(cfg);
  const std::int64_t macs = count_flops(cfg);
  const double ref = 2'230'000.0;
  const double delta_pct = (static_cast<double>(n) - ref) / ref * 100.0;
  const bool params_ok = n >= 1'800'000 && n <= 2'700'000;
  const bool macs_ok = macs >= 35'000'000 && macs <= 140'000'000;  // within 2x of 0.07 B
  report(name, params_ok && macs_ok,
         fmt("%lld params in [1.8M, 2.7M] (reference 2.23M, delta %+.1f%%: grouped temporal "
             "convs at group width 4, see README design notes); %lld MACs within 2x of 0.07B",
             static_cast<long long>(n), delta_pct, static_cast<long long>(macs)));
}

// ---------------------------------------------------------------------------
// 5. Learnability: 300 optimizer steps on a fixed-seed 512-window synthetic
//    dataset must crush training-set MPJPE and push PCK@50 above 0.95.

void c05_overfit(const char* name) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path root = g_work / "overfit_data";
  SynthConfig sc;
  sc.ticks_per_session = 5120;  // 2 sessions x 256 windows at stride 20
  sc.seed = 21;
  make_dataset(1, 2, sc, root.string());
  const std::vector<Session> sessions = load_dataset(root.string());
  const SkeletonTopology topo = SkeletonTopology::standard();
  const std::vector<Example> examples = make_examples(sessions, topo, PairingOptions{});
  if (examples.size() != 512) {
    report(name, false, fmt("expected 512 windows, got %zu", examples.size()));
    return;
  }

  WiFlowConfig cfg;
  LossConfig loss_cfg;
  ParameterStore<float> ps = init_model<float>(cfg, 5);
  ps.set_requires_grad_on_trainable();
  const EvalOutcome initial = run_eval(cfg, ps, topo, examples, loss_cfg, 32);

  AdamW<float> opt(1e-3, 5e-5);
  Rng order_rng = derive_rng(13, "acceptance/overfit");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  for (int step = 0; step < 300; ++step) {
    if (cursor + 32 > order.size()) {
      order_rng.shuffle(order);
      cursor = 0;
    }
    const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                       order.begin() + static_cast<std::ptrdiff_t>(cursor) + 32);
    cursor += 32;
    Batch b = make_batch(examples, idx);
    ps.zero_grads();
    Tape<float> tape;
    Tensor<float> pred = forward(cfg, ps, b.inputs, /*training=*/true);
    LossParts<float> parts = total_loss(pred, b.targets, topo, loss_cfg);
    check(std::isfinite(static_cast<double>(parts.total[0])),
          "non-finite training loss at step " + std::to_string(step));
    tape.backward(parts.total);
    opt.step(ps);
  }
  const EvalOutcome final_ = run_eval(cfg, ps, topo, examples, loss_cfg, 32);
  const double secs = seconds_since(t0);

  const double ratio = final_.report.mpjpe / initial.report.mpjpe;
  const double pck50 = final_.report.pck.at(50);
  const bool pass = ratio < 0.10 && pck50 >= 0.95 && secs < 600.0;
  report(name, pass,
         fmt("512 windows, 300 steps: MPJPE %.4f -> %.4f (%.1f%% of initial, need <10%%), "
             "PCK@50 %.3f >= 0.95 (%.0f s < 600 s)",
             initial.report.mpjpe, final_.report.mpjpe, ratio * 100.0, pck50, secs));
}

// ---------------------------------------------------------------------------
// 6. Metric oracles: library pck/mpjpe vs independent brute-force loops.

void c06_metric_oracles(const char* name) {
  Rng rng(31);
  double worst_pck = 0.0, worst_mpjpe = 0.0;
  bool monotone = true;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t k = 15;
    Tensor<double> gt = random_tensor<double>({n, k, 2}, rng);
    Tensor<double> pred = gt.clone();
    for (std::int64_t i = 0; i < pred.size(); ++i)
      pred.flat()[i] += rng.uniform(-0.4, 0.4);
    std::vector<double> scales(static_cast<std::size_t>(n));
    for (auto& s : scales) s = rng.uniform(0.2, 1.5);
    const double alpha = rng.uniform(0.05, 0.6);

    // brute-force oracle, double accumulation
    std::int64_t correct = 0;
    double dist_sum = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < k; ++j) {
        const double dx = pred.flat()[(i * k + j) * 2] - gt.flat()[(i * k + j) * 2];
        const double dy = pred.flat()[(i * k + j) * 2 + 1] - gt.flat()[(i * k + j) * 2 + 1];
        const double d = std::sqrt(dx * dx + dy * dy);
        dist_sum += d;
        if (d / scales[static_cast<std::size_t>(i)] <= alpha) ++correct;
      }
    const double o_pck = static_cast<double>(correct) / static_cast<double>(n * k);
    const double o_mpjpe = dist_sum / static_cast<double>(n * k);

    worst_pck = std::max(worst_pck, std::abs(o_pck - pck(pred, gt, scales, alpha)));
    worst_mpjpe = std::max(worst_mpjpe, std::abs(o_mpjpe - mpjpe(pred, gt)));

    double prev = -1.0;
    for (const double a : {0.1, 0.2, 0.3, 0.4, 0.5}) {
      const double v = pck(pred, gt, scales, a);
      if (v < prev) monotone = false;
      prev = v;
    }
  }
  const bool pass = worst_pck <= 1e-7 && worst_mpjpe <= 1e-7 && monotone;
  report(name, pass,
         fmt("1000 instances: |pck - oracle| <= %.2e, |mpjpe - oracle| <= %.2e (need <= 1e-7); "
             "pck monotone in alpha: %s",
             worst_pck, worst_mpjpe, monotone ? "yes" : "NO"));
}

// ---------------------------------------------------------------------------
// 7. Loss properties: zero iff equal, bone-loss translation invariance,
//    exact reduction at lambda = 0, smooth-L1 continuity at the knee.

void c07_loss_properties(const char* name) {
  const SkeletonTopology topo = SkeletonTopology::standard();
  const LossConfig lc;
  Rng rng(41);

  bool zero_iff = true, translation_ok = true, lambda0_ok = true;
  double worst_translation = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(3));
    Tensor<double> gt = random_tensor<double>({n, 15, 2}, rng);

    LossParts<double> at_eq = total_loss(gt.clone(), gt, topo, lc);
    zero_iff = zero_iff && at_eq.total[0] == 0.0;

    Tensor<double> pred = gt.clone();
    for (std::int64_t i = 0; i < pred.size(); ++i) {
      const double mag = rng.uniform(0.01, 0.3);
      pred.flat()[i] += rng.uniform() < 0.5 ? -mag : mag;
    }
    LossParts<double> at_diff = total_loss(pred, gt, topo, lc);
    zero_iff = zero_iff && at_diff.total[0] > 0.0;

    const double dx = rng.uniform(-5.0, 5.0), dy = rng.uniform(-5.0, 5.0);
    Tensor<double> shifted = pred.clone();
    for (std::int64_t i = 0; i < shifted.dim(0) * shifted.dim(1); ++i) {
      shifted.flat()[i * 2] += dx;
      shifted.flat()[i * 2 + 1] += dy;
    }
    const double base = bone_loss(pred, gt, topo, lc.beta_bone)[0];
    worst_translation = std::max(
        worst_translation, std::abs(bone_loss(shifted, gt, topo, lc.beta_bone)[0] - base));
    translation_ok = translation_ok && worst_translation <= 1e-9;

    LossConfig l0 = lc;
    l0.lambda_bone = 0.0;
    LossParts<double> p0 = total_loss(pred, gt, topo, l0);
    lambda0_ok = lambda0_ok && p0.total[0] == p0.keypoint[0];
  }

  double worst_jump = 0.0;
  for (const double beta : {lc.beta_main, lc.beta_bone, 1.0}) {
    const double d = 1e-9;
    Tensor<double> probe({4});
    probe[0] = beta - d;
    probe[1] = beta + d;
    probe[2] = -beta + d;
    probe[3] = -beta - d;
    Tensor<double> h = smooth_l1(probe, beta);
    worst_jump = std::max({worst_jump, std::abs(h[0] - h[1]), std::abs(h[2] - h[3])});
  }
  const bool continuity_ok = worst_jump <= 1e-6;

  const bool pass = zero_iff && translation_ok && lambda0_ok && continuity_ok;
  report(name, pass,
         fmt("zero iff equal: %s; bone loss translation drift %.2e <= 1e-9; lambda=0 equals "
             "keypoint term exactly: %s; smooth-L1 knee jump %.2e <= 1e-6",
             zero_iff ? "yes" : "NO", worst_translation, lambda0_ok ? "yes" : "NO", worst_jump));
}

// ---------------------------------------------------------------------------
// 8. Label cleaning: exact midpoint interpolation, no missing entries after
//    cleaning, identity on already-clean sequences.

void c08_label_cleaning(const char* name) {
  Rng rng(61);
  // coordinates on a 1/1024 grid keep the midpoint average exact in doubles
  auto grid_pose = [&rng](std::int64_t frame) {
    PoseSample s;
    s.frame_index = frame;
    for (int k = 0; k < 15; ++k) {
      s.keypoints.push_back({static_cast<double>(1 + rng.below(4096)) / 1024.0,
                             static_cast<double>(1 + rng.below(4096)) / 1024.0});
      s.confidence.push_back(1.0);
    }
    return s;
  };

  bool midpoint_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    LabelSequence seq;
    seq.samples = {grid_pose(0), grid_pose(10), grid_pose(20)};
    const std::size_t joint = rng.below(15);
    seq.samples[1].keypoints[joint] = {0.0, 0.0};  // detector dropout artifact
    seq.missing = detect_missing(seq);
    const auto& lo = seq.samples[0].keypoints[joint];
    const auto& hi = seq.samples[2].keypoints[joint];
    LabelSequence cleaned = interpolate_missing(seq);
    const auto& got = cleaned.samples[1].keypoints[joint];
    midpoint_ok = midpoint_ok && got[0] == (lo[0] + hi[0]) / 2.0 &&
                  got[1] == (lo[1] + hi[1]) / 2.0;
  }

  bool none_missing = true;
  for (int trial = 0; trial < 20; ++trial) {
    LabelSequence seq;
    for (int f = 0; f < 40; ++f) seq.samples.push_back(grid_pose(f * 3));
    for (int f = 0; f < 40; ++f)
      for (std::size_t k = 0; k < 15; ++k)
        if (rng.uniform() < 0.2 && f != 17)  // frame 17 stays fully valid per joint
          seq.samples[static_cast<std::size_t>(f)].keypoints[k] = {0.0, 0.0};
    seq.missing = detect_missing(seq);
    LabelSequence cleaned = interpolate_missing(seq);
    for (const auto& row : detect_missing(cleaned))
      for (const bool m : row) none_missing = none_missing && !m;
    for (const auto& row : cleaned.missing)
      for (const bool m : row) none_missing = none_missing && !m;
  }

  bool identity_ok = true;
  {
    LabelSequence seq;
    for (int f = 0; f < 25; ++f) seq.samples.push_back(grid_pose(f * 2));
    seq.missing = detect_missing(seq);
    LabelSequence cleaned = interpolate_missing(seq);
    identity_ok = cleaned.samples.size() == seq.samples.size();
    for (std::size_t f = 0; identity_ok && f < seq.samples.size(); ++f) {
      identity_ok = cleaned.samples[f].frame_index == seq.samples[f].frame_index &&
                    cleaned.samples[f].keypoints == seq.samples[f].keypoints &&
                    cleaned.samples[f].confidence == seq.samples[f].confidence;
    }
  }

  report(name, midpoint_ok && none_missing && identity_ok,
         fmt("midpoint interpolation exact on 100 cases: %s; cleaned sequences carry no missing "
             "entries: %s; identity on clean sequences: %s",
             midpoint_ok ? "yes" : "NO", none_missing ? "yes" : "NO",
             identity_ok ? "yes" : "NO"));
}

// ---------------------------------------------------------------------------
// 9. Parser round trip on 1000 records over all antenna configurations, plus
//    the truncated-stream contract.

CsiFrame random_frame(Rng& rng, int n_rx, int n_tx) {
  CsiFrame f;
  f.n_rx = n_rx;
  f.n_tx = n_tx;
  f.timestamp = static_cast<std::uint32_t>(rng.next_u64());
  f.csi.resize(static_cast<std::size_t>(kSubcarriers) * static_cast<std::size_t>(n_rx * n_tx));
  for (auto& v : f.csi)
    v = {static_cast<float>(static_cast<int>(rng.below(256)) - 128),
         static_cast<float>(static_cast<int>(rng.below(256)) - 128)};
  return f;
}

void c09_parser(const char* name) {
  Rng rng(53);
  bool frames_ok = true;
  std::vector<BfeeRecord> records;
  records.reserve(1000);
  for (int i = 0; i < 1000; ++i) {
    const int n_rx = i % 3 + 1;
    const int n_tx = (i / 3) % 3 + 1;
    CsiFrame f = random_frame(rng, n_rx, n_tx);
    std::vector<int> perm(static_cast<std::size_t>(n_rx));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::uint8_t sel = 0;
    for (int m = 0; m < n_rx; ++m)
      sel = static_cast<std::uint8_t>(sel | (perm[static_cast<std::size_t>(m)] << (2 * m)));

    BfeeRecord rec = encode_bfee(f, sel);
    rec.timestamp_low = f.timestamp;
    rec.bfee_count = static_cast<std::uint16_t>(i);
    rec.rssi_a = static_cast<std::uint8_t>(rng.below(80));
    rec.rssi_b = static_cast<std::uint8_t>(rng.below(80));
    rec.rssi_c = static_cast<std::uint8_t>(rng.below(80));
    rec.noise = static_cast<std::int8_t>(static_cast<int>(rng.below(60)) - 90);
    rec.agc = static_cast<std::uint8_t>(rng.below(64));
    rec.rate = static_cast<std::uint16_t>(rng.below(0x4000));

    const CsiFrame back = decode_bfee(rec);
    frames_ok = frames_ok && back.n_rx == f.n_rx && back.n_tx == f.n_tx && back.csi == f.csi;
    records.push_back(std::move(rec));
  }

  const std::vector<std::uint8_t> stream = encode_dat_stream(records);
  ParseReport rep;
  const std::vector<BfeeRecord> parsed = parse_dat_stream(stream, &rep);
  bool stream_ok = rep.ok() && rep.truncated == 0 && parsed.size() == records.size();
  for (std::size_t i = 0; stream_ok && i < records.size(); ++i) {
    const BfeeRecord& a = records[i];
    const BfeeRecord& b = parsed[i];
    stream_ok = a.timestamp_low == b.timestamp_low && a.bfee_count == b.bfee_count &&
                a.n_rx == b.n_rx && a.n_tx == b.n_tx && a.rssi_a == b.rssi_a &&
                a.rssi_b == b.rssi_b && a.rssi_c == b.rssi_c && a.noise == b.noise &&
                a.agc == b.agc && a.antenna_sel == b.antenna_sel && a.rate == b.rate &&
                a.payload == b.payload;
  }

  // Truncation contract: the complete prefix is returned and the partial
  // trailing record is counted. A cut mid-record also carries an error
  // message; a cut inside the 2-byte length prologue does not.
  const std::size_t prefix_len =
      encode_dat_stream({records.begin(), records.end() - 1}).size();
  ParseReport rep_mid;
  const auto parsed_mid =
      parse_dat_stream(stream.data(), prefix_len + 10, &rep_mid);
  const bool mid_ok = parsed_mid.size() == records.size() - 1 && rep_mid.truncated == 1 &&
                      !rep_mid.ok();
  ParseReport rep_head;
  const auto parsed_head = parse_dat_stream(stream.data(), prefix_len + 2, &rep_head);
  const bool head_ok = parsed_head.size() == records.size() - 1 && rep_head.truncated == 1 &&
                       rep_head.ok();

  report(name, frames_ok && stream_ok && mid_ok && head_ok,
         fmt("1000 records over all 9 antenna configurations: bit-packed round trip %s, stream "
             "round trip %s; truncation mid-record -> prefix + flagged error: %s, truncation in "
             "length prologue -> prefix, no error: %s",
             frames_ok ? "exact" : "BROKEN", stream_ok ? "exact" : "BROKEN",
             mid_ok ? "yes" : "NO", head_ok ? "yes" : "NO"));
}

// ---------------------------------------------------------------------------
// 10. Split contracts on a 5-subject synthetic dataset: exact session-level
//     partition for the random-session setting, held-out-subject exclusion
//     for every fold of the leave-one-subject-out setting.

void c10_splits(const char* name) {
  const fs::path root = g_work / "splits_data";
  SynthConfig sc;
  sc.channel_count = 24;
  sc.ticks_per_session = 200;
  sc.seed = 77;
  make_dataset(5, 2, sc, root.string());
  const std::vector<Session> sessions = load_dataset(root.string());
  const std::size_t n = sessions.size();

  auto partition_exact = [n](const SplitResult& r) {
    std::set<std::size_t> seen;
    for (const auto* part : {&r.train, &r.val, &r.test})
      for (const std::size_t i : *part)
        if (i >= n || !seen.insert(i).second) return false;
    return seen.size() == n;
  };

  bool random_ok = true;
  const std::array<double, 3> ratios{0.70, 0.15, 0.15};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SplitResult r = split_random_session(n, ratios, seed);
    // independent largest-remainder oracle
    std::array<std::size_t, 3> want{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
      const double q = static_cast<double>(n) * ratios[static_cast<std::size_t>(i)];
      want[static_cast<std::size_t>(i)] = static_cast<std::size_t>(std::floor(q));
      frac[static_cast<std::size_t>(i)] = q - std::floor(q);
      assigned += want[static_cast<std::size_t>(i)];
    }
    while (assigned < n) {
      const int best = static_cast<int>(std::max_element(frac.begin(), frac.end()) - frac.begin());
      ++want[static_cast<std::size_t>(best)];
      frac[static_cast<std::size_t>(best)] = -1.0;
      ++assigned;
    }
    random_ok = random_ok && partition_exact(r) && r.train.size() == want[0] &&
                r.val.size() == want[1] && r.test.size() == want[2];
  }

  std::vector<std::string> subject_of;
  std::set<std::string> subjects;
  for (const auto& s : sessions) {
    subject_of.push_back(s.meta.subject_id);
    subjects.insert(s.meta.subject_id);
  }
  bool loso_ok = subjects.size() == 5;
  for (const std::string& held_out : subjects) {
    const SplitResult r = split_loso(subject_of, held_out, 0.9, 5);
    loso_ok = loso_ok && partition_exact(r) && !r.test.empty();
    for (const std::size_t i : r.test) loso_ok = loso_ok && subject_of[i] == held_out;
    for (const auto* part : {&r.train, &r.val})
      for (const std::size_t i : *part) loso_ok = loso_ok && subject_of[i] != held_out;
    // every session of the held-out subject lands in test
    std::size_t expect = 0;
    for (const auto& s : subject_of) expect += s == held_out ? 1 : 0;
    loso_ok = loso_ok && r.test.size() == expect;
  }

  report(name, random_ok && loso_ok,
         fmt("random-session split partitions %zu sessions exactly (largest-remainder sizes, 20 "
             "seeds): %s; all 5 leave-one-subject-out folds keep the held-out subject "
             "test-only: %s",
             n, random_ok ? "yes" : "NO", loso_ok ? "yes" : "NO"));
}

// ---------------------------------------------------------------------------
// 11. Determinism: two identical-seed training runs emit identical artifacts.

void c11_determinism(const char* name) {
  const fs::path root = g_work / "determinism_data";
  SynthConfig sc;
  sc.channel_count = 60;
  sc.ticks_per_session = 1200;
  sc.seed = 3;
  make_dataset(2, 2, sc, root.string());
  const std::vector<Session> sessions = load_dataset(root.string());

  TrainConfig tc;
  tc.model.input_channels = 60;
  tc.model.tcn_channel_schedule = {60, 30};
  tc.model.tcn_dilations = {1, 2};
  tc.model.tcn_groups = 2;
  tc.model.spatial_channel_schedule = {6};
  tc.model.attention_groups = 3;
  tc.model.decoder_mid_channels = 8;
  tc.epochs = 2;
  tc.batch_size = 16;
  tc.lr = 2e-3;
  tc.seed = 11;

  train(sessions, tc, g_work / "det_run1");
  train(sessions, tc, g_work / "det_run2");
  const std::string m1 = slurp(g_work / "det_run1" / "metrics.csv");
  const std::string m2 = slurp(g_work / "det_run2" / "metrics.csv");
  const bool metrics_same = m1 == m2 && !m1.empty();
  const bool ckpt_same =
      slurp(g_work / "det_run1" / "best.ckpt") == slurp(g_work / "det_run2" / "best.ckpt");
  report(name, metrics_same && ckpt_same,
         fmt("two identical-seed runs, single-threaded: metrics.csv byte-identical (%zu bytes): "
             "%s; best.ckpt byte-identical: %s",
             m1.size(), metrics_same ? "yes" : "NO", ckpt_same ? "yes" : "NO"));
}

}  // namespace

int main() {
  g_work = fs::temp_directory_path() / "wiflow_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  criterion("01 gradient correctness", c01_gradients);
  criterion("02 temporal causality", c02_causality);
  criterion("03 shape conformance", c03_shape_trace);
  criterion("04 parameter/MAC budget", c04_budget);
  criterion("05 learnability (overfit)", c05_overfit);
  criterion("06 metric oracles", c06_metric_oracles);
  criterion("07 loss properties", c07_loss_properties);
  criterion("08 label cleaning", c08_label_cleaning);
  criterion("09 capture parser round trip", c09_parser);
  criterion("10 split contracts", c10_splits);
  criterion("11 training determinism", c11_determinism);
  std::printf(
      "[INFO] 12 full-scale reproduction -- manual path, not gated: ingest captures with "
      "`wiflow parse`, then `wiflow train --data <root> --out <dir>` runs the full-scale recipe "
      "by default (50 epochs, batch 64, decoupled weight decay 5e-5, plateau scheduler); see "
      "README \"Full-scale runs\".\n");

  fs::remove_all(g_work);
  if (g_failures == 0) {
    std::printf("acceptance: all 11 gated criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
  return 1;
}
