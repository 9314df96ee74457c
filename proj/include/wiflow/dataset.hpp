#pragma once

// Portable dataset interchange: one directory per session holding csi.f32
// (row-major channels x N little-endian floats), labels.csv and meta.json, plus
// the window/label pairing that turns a session into training examples.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wiflow/csi.hpp"
#include "wiflow/labels.hpp"
#include "wiflow/skeleton.hpp"
#include "wiflow/tensor.hpp"

namespace wiflow {

struct SessionMeta {
  std::string subject_id;
  std::string session_id;
  std::string action;
  std::int64_t csi_rate_hz = 600;
  std::int64_t label_fps = 30;
  std::int64_t channels = 540;  // fused amplitude channels per tick

  nlohmann::json to_json() const;
  static SessionMeta from_json(const nlohmann::json& j);
};

struct Session {
  SessionMeta meta;
  Tensor<float> csi;  // channels x N, channel-major
  LabelSequence labels;

  std::int64_t ticks() const { return csi.rank() == 2 ? csi.dim(1) : 0; }
};

void save_session(const std::string& dir, const Session& session);
Session load_session(const std::string& dir);

// All session directories under root (any directory containing meta.json),
// sorted by path for deterministic ordering.
std::vector<std::string> list_sessions(const std::string& root);
std::vector<Session> load_dataset(const std::string& root);

// One aligned (window, pose) pair.
struct Example {
  Tensor<float> input;   // channels x T, normalized
  Tensor<float> target;  // K x 2
  double scale = 1.0;    // reference scale of the ground-truth pose
  std::string subject_id;
  std::string session_id;
  std::int64_t start_tick = 0;
};

struct PairingOptions {
  std::int64_t window_T = 20;
  std::int64_t stride = 20;
  bool normalize_windows = true;
};

// Cleans the session labels, slides windows over the CSI ticks and pairs each
// window with the video frame its last tick falls in. Windows never straddle
// sessions; windows without a matching label frame are skipped.
std::vector<Example> make_examples(const Session& session, const SkeletonTopology& topo,
                                   const PairingOptions& opts = {});

std::vector<Example> make_examples(const std::vector<Session>& sessions,
                                   const SkeletonTopology& topo,
                                   const PairingOptions& opts = {});

// Stacks examples[indices] into batched tensors: inputs B x C x T,
// targets B x K x 2, scales per sample.
struct Batch {
  Tensor<float> inputs;
  Tensor<float> targets;
  std::vector<double> scales;
};

Batch make_batch(const std::vector<Example>& examples, const std::vector<std::size_t>& indices);

}  // namespace wiflow
