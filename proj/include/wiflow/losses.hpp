#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wiflow/ops.hpp"
#include "wiflow/skeleton.hpp"

namespace wiflow {

struct LossConfig {
  double beta_main = 0.1;    // Smooth-L1 smoothing for coordinates
  double beta_bone = 0.05;   // smaller smoothing for bone-length residuals
  double lambda_bone = 0.2;  // bone constraint weight

  void validate() const {
    check(beta_main > 0.0, "loss config: beta_main must be positive");
    check(beta_bone > 0.0, "loss config: beta_bone must be positive");
    check(lambda_bone >= 0.0, "loss config: lambda_bone must be non-negative");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"beta_main", beta_main}, {"beta_bone", beta_bone}, {"lambda_bone", lambda_bone}};
  }
  static LossConfig from_json(const nlohmann::json& j) {
    LossConfig c;
    for (const auto& item : j.items())
      check(item.key() == "beta_main" || item.key() == "beta_bone" ||
                item.key() == "lambda_bone",
            "loss config: unknown key '" + item.key() + "'");
    c.beta_main = j.value("beta_main", c.beta_main);
    c.beta_bone = j.value("beta_bone", c.beta_bone);
    c.lambda_bone = j.value("lambda_bone", c.lambda_bone);
    c.validate();
    return c;
  }
};

namespace detail {

template <typename S>
void check_pose_pair(const Tensor<S>& pred, const Tensor<S>& gt) {
  check(pred.rank() == 3 && pred.dim(2) == 2,
        "pose tensors must be NxKx2, got " + shape_str(pred.shape()));
  check(pred.shape() == gt.shape(), "pose shape mismatch: " + shape_str(pred.shape()) + " vs " +
                                        shape_str(gt.shape()));
}

// per-sample bone lengths: NxKx2 -> Nx|edges|
template <typename S>
Tensor<S> edge_lengths(const Tensor<S>& pose, const SkeletonTopology& topo) {
  std::vector<std::int64_t> from, to;
  for (auto [i, j] : topo.edges) {
    check(i < pose.dim(1) && j < pose.dim(1),
          "skeleton edge joint exceeds pose joint count " + std::to_string(pose.dim(1)));
    from.push_back(i);
    to.push_back(j);
  }
  Tensor<S> diff = sub(index_select(pose, 1, from), index_select(pose, 1, to));
  return sqrt_guarded(sum_last(square(diff)));
}

}  // namespace detail

// Mean over samples and joints of the Smooth-L1 coordinate residual
// h(dx) + h(dy).
template <typename S>
Tensor<S> keypoint_loss(const Tensor<S>& pred, const Tensor<S>& gt, double beta_main) {
  detail::check_pose_pair(pred, gt);
  const std::int64_t nk = pred.dim(0) * pred.dim(1);
  Tensor<S> h = smooth_l1(sub(pred, gt), static_cast<S>(beta_main));
  return scale(sum_all(h), static_cast<S>(1.0 / static_cast<double>(nk)));
}

// Mean over samples and bones of h(|pred bone| - |gt bone|) with the bone
// smoothing parameter.
template <typename S>
Tensor<S> bone_loss(const Tensor<S>& pred, const Tensor<S>& gt, const SkeletonTopology& topo,
                    double beta_bone) {
  detail::check_pose_pair(pred, gt);
  Tensor<S> dl = sub(detail::edge_lengths(pred, topo), detail::edge_lengths(gt, topo));
  Tensor<S> h = smooth_l1(dl, static_cast<S>(beta_bone));
  const std::int64_t ne = pred.dim(0) * static_cast<std::int64_t>(topo.edges.size());
  return scale(sum_all(h), static_cast<S>(1.0 / static_cast<double>(ne)));
}

template <typename S>
struct LossParts {
  Tensor<S> total;     // keypoint + lambda * bone
  Tensor<S> keypoint;  // L_H
  Tensor<S> bone;      // L_B
};

template <typename S>
LossParts<S> total_loss(const Tensor<S>& pred, const Tensor<S>& gt, const SkeletonTopology& topo,
                        const LossConfig& cfg) {
  cfg.validate();
  LossParts<S> parts;
  parts.keypoint = keypoint_loss(pred, gt, cfg.beta_main);
  parts.bone = bone_loss(pred, gt, topo, cfg.beta_bone);
  parts.total = add(parts.keypoint, scale(parts.bone, static_cast<S>(cfg.lambda_bone)));
  return parts;
}

}  // namespace wiflow
