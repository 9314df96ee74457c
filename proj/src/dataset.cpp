#include "wiflow/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "wiflow/params.hpp"  // little-endian f32 packing helpers

namespace fs = std::filesystem;

namespace wiflow {

nlohmann::json SessionMeta::to_json() const {
  return nlohmann::json{{"subject_id", subject_id},
                        {"session_id", session_id},
                        {"action", action},
                        {"csi_rate_hz", csi_rate_hz},
                        {"label_fps", label_fps},
                        {"channels", channels}};
}

SessionMeta SessionMeta::from_json(const nlohmann::json& j) {
  SessionMeta m;
  m.subject_id = j.at("subject_id").get<std::string>();
  m.session_id = j.at("session_id").get<std::string>();
  m.action = j.at("action").get<std::string>();
  m.csi_rate_hz = j.at("csi_rate_hz").get<std::int64_t>();
  m.label_fps = j.at("label_fps").get<std::int64_t>();
  m.channels = j.value("channels", std::int64_t{540});
  check(m.csi_rate_hz >= 1 && m.label_fps >= 1, "session rates must be positive");
  check(m.channels >= 1, "session channel count must be positive");
  return m;
}

void save_session(const std::string& dir, const Session& session) {
  check(session.csi.rank() == 2 && session.csi.dim(0) == session.meta.channels,
        "session csi must be " + std::to_string(session.meta.channels) + " x N, got " +
            shape_str(session.csi.shape()));
  fs::create_directories(dir);

  {
    std::ofstream os(fs::path(dir) / "csi.f32", std::ios::binary);
    check(os.good(), "cannot write csi.f32 under " + dir);
    for (std::int64_t i = 0; i < session.csi.size(); ++i)
      ckpt::put_f32(os, session.csi.flat()[i]);
  }
  save_labels((fs::path(dir) / "labels.csv").string(), session.labels);
  {
    std::ofstream os(fs::path(dir) / "meta.json");
    check(os.good(), "cannot write meta.json under " + dir);
    os << session.meta.to_json().dump(2) << "\n";
  }
}

Session load_session(const std::string& dir) {
  Session s;
  {
    std::ifstream is(fs::path(dir) / "meta.json");
    check(is.good(), "missing meta.json under " + dir);
    nlohmann::json j;
    is >> j;
    s.meta = SessionMeta::from_json(j);
  }
  {
    std::ifstream is(fs::path(dir) / "csi.f32", std::ios::binary);
    check(is.good(), "missing csi.f32 under " + dir);
    is.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::int64_t>(is.tellg());
    is.seekg(0, std::ios::beg);
    const std::int64_t c = s.meta.channels;
    check(bytes % (c * 4) == 0, "csi.f32 under " + dir + " is not a whole number of " +
                                    std::to_string(c) + "-channel ticks");
    const std::int64_t n = bytes / (c * 4);
    s.csi = Tensor<float>::zeros({c, n});
    for (std::int64_t i = 0; i < s.csi.size(); ++i) s.csi.flat()[i] = ckpt::get_f32(is);
    check(is.good(), "csi.f32 under " + dir + " ended prematurely");
  }
  s.labels = load_labels((fs::path(dir) / "labels.csv").string());
  return s;
}

std::vector<std::string> list_sessions(const std::string& root) {
  check(fs::exists(root), "dataset root does not exist: " + root);
  std::vector<std::string> dirs;
  if (fs::exists(fs::path(root) / "meta.json")) dirs.push_back(root);
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json"))
      dirs.push_back(entry.path().string());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::vector<Session> load_dataset(const std::string& root) {
  std::vector<Session> out;
  for (const std::string& dir : list_sessions(root)) out.push_back(load_session(dir));
  check(!out.empty(), "no sessions found under " + root);
  return out;
}

std::vector<Example> make_examples(const Session& session, const SkeletonTopology& topo,
                                   const PairingOptions& opts) {
  check(opts.window_T >= 1 && opts.stride >= 1, "window and stride must be positive");
  const std::int64_t per_label = align_streams(session.meta.csi_rate_hz, session.meta.label_fps);

  LabelSequence cleaned = session.labels;
  cleaned.missing = detect_missing(cleaned);
  cleaned = interpolate_missing(cleaned, session.meta.session_id);

  std::unordered_map<std::int64_t, std::size_t> frame_of;
  for (std::size_t i = 0; i < cleaned.samples.size(); ++i)
    frame_of[cleaned.samples[i].frame_index] = i;

  const std::int64_t n = session.ticks();
  const std::int64_t width = session.csi.rank() == 2 ? session.csi.dim(0) : 0;
  std::vector<std::vector<float>> ticks(static_cast<std::size_t>(n));
  for (std::int64_t t = 0; t < n; ++t) {
    auto& tick = ticks[static_cast<std::size_t>(t)];
    tick.resize(static_cast<std::size_t>(width));
    for (std::int64_t c = 0; c < width; ++c)
      tick[static_cast<std::size_t>(c)] = session.csi.flat()[c * n + t];
  }

  std::vector<Example> out;
  for (CsiWindow& w : window(ticks, opts.window_T, opts.stride)) {
    const std::int64_t frame = (w.start_tick + opts.window_T - 1) / per_label;
    auto it = frame_of.find(frame);
    if (it == frame_of.end()) continue;  // no label for this window
    const PoseSample& pose = cleaned.samples[it->second];

    Example ex;
    ex.input = opts.normalize_windows ? normalize(w).values : w.values;
    const auto k = static_cast<std::int64_t>(pose.keypoints.size());
    ex.target = Tensor<float>::zeros({k, 2});
    for (std::int64_t j = 0; j < k; ++j) {
      ex.target.flat()[2 * j] = static_cast<float>(pose.keypoints[static_cast<std::size_t>(j)][0]);
      ex.target.flat()[2 * j + 1] =
          static_cast<float>(pose.keypoints[static_cast<std::size_t>(j)][1]);
    }
    ex.scale = reference_scale(pose, topo);
    ex.subject_id = session.meta.subject_id;
    ex.session_id = session.meta.session_id;
    ex.start_tick = w.start_tick;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> make_examples(const std::vector<Session>& sessions,
                                   const SkeletonTopology& topo, const PairingOptions& opts) {
  std::vector<Example> out;
  for (const Session& s : sessions) {
    auto ex = make_examples(s, topo, opts);
    out.insert(out.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
  }
  return out;
}

Batch make_batch(const std::vector<Example>& examples, const std::vector<std::size_t>& indices) {
  check(!indices.empty(), "cannot build an empty batch");
  const Example& first = examples.at(indices[0]);
  const std::int64_t c = first.input.dim(0), t = first.input.dim(1);
  const std::int64_t k = first.target.dim(0);
  const auto b = static_cast<std::int64_t>(indices.size());

  Batch batch;
  batch.inputs = Tensor<float>::zeros({b, c, t});
  batch.targets = Tensor<float>::zeros({b, k, 2});
  batch.scales.reserve(indices.size());
  for (std::int64_t i = 0; i < b; ++i) {
    const Example& ex = examples.at(indices[static_cast<std::size_t>(i)]);
    check(ex.input.shape() == first.input.shape() && ex.target.shape() == first.target.shape(),
          "batch members must share shapes");
    for (std::int64_t j = 0; j < c * t; ++j)
      batch.inputs.flat()[i * c * t + j] = ex.input.flat()[j];
    for (std::int64_t j = 0; j < k * 2; ++j)
      batch.targets.flat()[i * k * 2 + j] = ex.target.flat()[j];
    batch.scales.push_back(ex.scale);
  }
  return batch;
}

}  // namespace wiflow
