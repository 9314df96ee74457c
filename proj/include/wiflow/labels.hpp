#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wiflow/skeleton.hpp"
#include "wiflow/tensor.hpp"

namespace wiflow {

// One video frame worth of vision-derived keypoints, in label units.
struct PoseSample {
  std::int64_t frame_index = 0;
  std::vector<std::array<double, 2>> keypoints;  // K x (x, y)
  std::vector<double> confidence;                // K, defaults to 1
};

struct LabelSequence {
  std::vector<PoseSample> samples;                // frame indices strictly increasing
  std::vector<std::vector<bool>> missing;         // [frame][joint]
};

// A joint observation counts as missing when the detector emitted the
// zero-coordinate artifact (both coords exactly 0) or zero confidence.
inline std::vector<std::vector<bool>> detect_missing(const LabelSequence& seq) {
  std::vector<std::vector<bool>> mask;
  mask.reserve(seq.samples.size());
  for (const auto& s : seq.samples) {
    std::vector<bool> row(s.keypoints.size(), false);
    for (std::size_t k = 0; k < s.keypoints.size(); ++k)
      row[k] = (s.keypoints[k][0] == 0.0 && s.keypoints[k][1] == 0.0) || s.confidence[k] == 0.0;
    mask.push_back(std::move(row));
  }
  return mask;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

// Reads the portable labels.csv: header `frame_index` followed by
// K x (x, y, confidence) columns, or K x (x, y) when the source carries no
// confidences (they default to 1). One pose per row.
inline LabelSequence load_labels(const std::string& path, int expected_joints = 15) {
  std::ifstream is(path);
  check(static_cast<bool>(is), "cannot open labels file: " + path);
  std::string line;
  check(static_cast<bool>(std::getline(is, line)), "labels file is empty: " + path);
  const auto header = detail::split_csv_line(line);
  check(!header.empty() && header[0] == "frame_index",
        "labels file " + path + " must start with a frame_index header column");
  const std::size_t ncols = header.size() - 1;
  bool with_conf;
  std::size_t joints;
  if (ncols % 3 == 0 && !header.empty() && header.size() > 1 && header.back().ends_with("_c")) {
    with_conf = true;
    joints = ncols / 3;
  } else if (ncols % 2 == 0) {
    with_conf = false;
    joints = ncols / 2;
  } else {
    fail("labels file " + path + " has a malformed header with " + std::to_string(ncols) +
         " keypoint columns");
  }
  check(static_cast<int>(joints) == expected_joints,
        "labels file " + path + " carries " + std::to_string(joints) + " keypoints, expected " +
            std::to_string(expected_joints));

  LabelSequence seq;
  std::size_t row = 1;
  std::int64_t prev_frame = -1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    check(cells.size() == header.size(), "labels row " + std::to_string(row) + " in " + path +
                                             " has " + std::to_string(cells.size()) +
                                             " cells, expected " + std::to_string(header.size()));
    PoseSample s;
    try {
      s.frame_index = std::stoll(cells[0]);
      for (std::size_t k = 0; k < joints; ++k) {
        const std::size_t base = 1 + k * (with_conf ? 3 : 2);
        s.keypoints.push_back({std::stod(cells[base]), std::stod(cells[base + 1])});
        s.confidence.push_back(with_conf ? std::stod(cells[base + 2]) : 1.0);
      }
    } catch (const std::exception&) {
      fail("labels row " + std::to_string(row) + " in " + path + " has a non-numeric cell");
    }
    check(s.frame_index > prev_frame,
          "labels row " + std::to_string(row) + " in " + path + " breaks frame ordering");
    prev_frame = s.frame_index;
    seq.samples.push_back(std::move(s));
  }
  seq.missing = detect_missing(seq);
  return seq;
}

inline void save_labels(const std::string& path, const LabelSequence& seq, int joints = 15) {
  std::ofstream os(path);
  check(static_cast<bool>(os), "cannot open labels file for writing: " + path);
  os << "frame_index";
  for (int k = 0; k < joints; ++k)
    os << ",k" << k << "_x,k" << k << "_y,k" << k << "_c";
  os << "\n";
  os.precision(17);
  for (const auto& s : seq.samples) {
    os << s.frame_index;
    for (int k = 0; k < joints; ++k)
      os << ',' << s.keypoints[static_cast<std::size_t>(k)][0] << ','
         << s.keypoints[static_cast<std::size_t>(k)][1] << ','
         << s.confidence[static_cast<std::size_t>(k)];
    os << "\n";
  }
  check(static_cast<bool>(os), "write failure on labels file: " + path);
}

// Repairs missing joints by linear interpolation between the nearest valid
// frames of the same joint track: p_t = (1-a) p_prev + a p_next with
// a = (t - t_prev)/(t_next - t_prev) in frame-index time. Gaps at either
// end clamp to the nearest valid value. The result carries an all-clear
// missing mask and confidence 1 on repaired joints.
inline LabelSequence interpolate_missing(LabelSequence seq, const std::string& session = "") {
  if (seq.samples.empty()) return seq;
  seq.missing = detect_missing(seq);
  const std::size_t n = seq.samples.size();
  const std::size_t joints = seq.samples[0].keypoints.size();
  for (std::size_t k = 0; k < joints; ++k) {
    std::vector<std::size_t> valid;
    for (std::size_t f = 0; f < n; ++f)
      if (!seq.missing[f][k]) valid.push_back(f);
    if (valid.empty())
      fail("keypoint " + std::to_string(k) + " has no valid frame in session '" + session + "'");
    std::size_t vi = 0;  // first valid index with frame >= current, maintained monotonically
    for (std::size_t f = 0; f < n; ++f) {
      if (!seq.missing[f][k]) continue;
      while (vi < valid.size() && valid[vi] < f) ++vi;
      auto& kp = seq.samples[f].keypoints[k];
      if (vi == 0) {
        kp = seq.samples[valid.front()].keypoints[k];  // leading gap: clamp
      } else if (vi == valid.size()) {
        kp = seq.samples[valid.back()].keypoints[k];   // trailing gap: clamp
      } else {
        const std::size_t fp = valid[vi - 1], fnx = valid[vi];
        const double t = static_cast<double>(seq.samples[f].frame_index);
        const double tp = static_cast<double>(seq.samples[fp].frame_index);
        const double tn = static_cast<double>(seq.samples[fnx].frame_index);
        const double a = (t - tp) / (tn - tp);
        const auto& pp = seq.samples[fp].keypoints[k];
        const auto& pn = seq.samples[fnx].keypoints[k];
        kp = {(1.0 - a) * pp[0] + a * pn[0], (1.0 - a) * pp[1] + a * pn[1]};
      }
      seq.samples[f].confidence[k] = 1.0;
      seq.missing[f][k] = false;
    }
  }
  return seq;
}

// PCK normalization factor: right-shoulder-to-left-hip distance, floored to
// avoid division blowup on degenerate detections.
inline double reference_scale(const PoseSample& pose, const SkeletonTopology& topo) {
  const auto& a = pose.keypoints[static_cast<std::size_t>(topo.right_shoulder)];
  const auto& b = pose.keypoints[static_cast<std::size_t>(topo.left_hip)];
  const double d = std::hypot(a[0] - b[0], a[1] - b[1]);
  return std::max(d, 1e-6);
}

inline std::vector<double> bone_lengths(const PoseSample& pose, const SkeletonTopology& topo) {
  std::vector<double> out;
  out.reserve(topo.edges.size());
  for (auto [i, j] : topo.edges) {
    const auto& a = pose.keypoints[static_cast<std::size_t>(i)];
    const auto& b = pose.keypoints[static_cast<std::size_t>(j)];
    out.push_back(std::hypot(a[0] - b[0], a[1] - b[1]));
  }
  return out;
}

}  // namespace wiflow
