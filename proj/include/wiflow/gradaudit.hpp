#pragma once

// Finite-difference audit over every layer family the network uses, plus a
// structurally complete miniature model end to end. Returns the worst
// relative error seen per layer across the requested seeds.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "wiflow/gradcheck.hpp"
#include "wiflow/losses.hpp"
#include "wiflow/model.hpp"
#include "wiflow/rng.hpp"
#include "wiflow/skeleton.hpp"

namespace wiflow {

template <typename S>
Tensor<S> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<S> t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.flat()[i] = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

namespace detail {

// Offsets a pose pair so every residual sits away from the smooth-L1 kink.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> kink_safe_pose_pair(Rng& rng, double beta) {
  Tensor<S> gt = random_tensor<S>({3, 15, 2}, rng);
  Tensor<S> pred = gt.clone();
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const double inner = rng.uniform(0.2 * beta, 0.8 * beta);
    const double outer = rng.uniform(1.5 * beta, 4.0 * beta);
    const double mag = rng.uniform() < 0.5 ? inner : outer;
    pred.flat()[i] = static_cast<S>(static_cast<double>(pred.flat()[i]) +
                                    (rng.uniform() < 0.5 ? -mag : mag));
  }
  return {pred, gt};
}

}  // namespace detail

// A miniature of the full network: one block of every family, sized so an
// exhaustive finite-difference sweep stays cheap.
inline WiFlowConfig miniature_config() {
  WiFlowConfig cfg;
  cfg.input_channels = 30;
  cfg.window_T = 6;
  cfg.tcn_channel_schedule = {30};
  cfg.tcn_dilations = {1};
  cfg.tcn_groups = 2;
  cfg.spatial_channel_schedule = {4};
  cfg.attention_groups = 2;
  cfg.decoder_mid_channels = 4;
  return cfg;
}

template <typename S>
std::map<std::string, double> gradient_audit(std::int64_t seeds, double eps) {
  const SkeletonTopology topo = SkeletonTopology::standard();
  const LossConfig loss_cfg;
  std::map<std::string, double> worst;
  auto note = [&](const std::string& layer, double err) {
    auto it = worst.find(layer);
    if (it == worst.end() || err > it->second) worst[layer] = err;
  };

  for (std::int64_t seed = 0; seed < seeds; ++seed) {
    Rng rng(derive_seed(static_cast<std::uint64_t>(seed) + 1, "gradcheck"));

    {
      std::vector<Tensor<S>> in{random_tensor<S>({2, 3, 4}, rng, -2.0, 2.0)};
      note("silu", grad_check([](auto& v) { return mean_all(silu(v[0])); }, in, eps).max_rel_err);
    }
    {
      std::vector<Tensor<S>> in{random_tensor<S>({2, 6, 5}, rng),
                                random_tensor<S>({4, 3, 3}, rng),
                                random_tensor<S>({4}, rng, -0.5, 0.5)};
      note("conv1d_causal (grouped, dilated)",
           grad_check([](auto& v) { return mean_all(conv1d_causal(v[0], v[1], v[2], 2, 2)); }, in,
                      eps)
               .max_rel_err);
    }
    {
      std::vector<Tensor<S>> in{random_tensor<S>({2, 3, 6, 8}, rng),
                                random_tensor<S>({4, 3, 3, 3}, rng),
                                random_tensor<S>({4}, rng, -0.5, 0.5)};
      note("conv2d (strided)",
           grad_check([](auto& v) { return mean_all(conv2d(v[0], v[1], v[2], 1, 2, 1, 1)); }, in,
                      eps)
               .max_rel_err);
    }
    {
      std::vector<Tensor<S>> in{random_tensor<S>({2, 5, 4, 3}, rng),
                                random_tensor<S>({5}, rng, 0.5, 1.5),
                                random_tensor<S>({5}, rng, -0.5, 0.5)};
      Tensor<S> rm = Tensor<S>::zeros({5});
      Tensor<S> rv = Tensor<S>::zeros({5});
      for (int c = 0; c < 5; ++c) rv[c] = static_cast<S>(1);
      auto fn = [&rm, &rv](auto& v) {
        return mean_all(batch_norm(v[0], v[1], v[2], rm, rv, 0.1, 1e-5, /*training=*/true));
      };
      note("batch_norm (training)", grad_check(fn, in, eps).max_rel_err);
    }
    {
      std::vector<Tensor<S>> in{random_tensor<S>({2, 3, 3}, rng),
                                random_tensor<S>({2, 3, 4}, rng)};
      note("attention core (softmax-bmm)",
           grad_check([](auto& v) { return mean_all(bmm(softmax(v[0], 2), v[1])); }, in, eps)
               .max_rel_err);
    }
    {
      std::vector<Tensor<S>> in{random_tensor<S>({2, 3, 7}, rng)};
      note("adaptive_avg_pool",
           grad_check([](auto& v) { return mean_all(adaptive_avg_pool_last(v[0])); }, in, eps)
               .max_rel_err);
    }
    {
      auto [pred, gt] = detail::kink_safe_pose_pair<S>(rng, loss_cfg.beta_main);
      std::vector<Tensor<S>> in{pred};
      auto fn = [&gt, &loss_cfg](auto& v) { return keypoint_loss(v[0], gt, loss_cfg.beta_main); };
      note("keypoint_loss", grad_check(fn, in, eps).max_rel_err);
    }
    {
      auto [pred, gt] = detail::kink_safe_pose_pair<S>(rng, loss_cfg.beta_main);
      std::vector<Tensor<S>> in{pred};
      auto fn = [&gt, &topo, &loss_cfg](auto& v) {
        return bone_loss(v[0], gt, topo, loss_cfg.beta_bone);
      };
      note("bone_loss", grad_check(fn, in, eps).max_rel_err);
    }
    {
      const WiFlowConfig cfg = miniature_config();
      ParameterStore<S> ps =
          init_model<S>(cfg, derive_seed(static_cast<std::uint64_t>(seed), "gc-model"));
      Tensor<S> x = random_tensor<S>({2, cfg.input_channels, cfg.window_T}, rng);
      Tensor<S> y = random_tensor<S>({2, cfg.keypoints, 2}, rng);
      std::vector<Tensor<S>> in;
      for (const auto& name : ps.names())
        if (ps.trainable(name)) in.push_back(ps.at(name));  // shared storage with the store
      in.push_back(x);
      auto fn = [&](auto&) {
        return total_loss(forward(cfg, ps, in.back(), /*training=*/true), y, topo, loss_cfg)
            .total;
      };
      note("model (end-to-end)", grad_check(fn, in, eps, 4, &rng).max_rel_err);
    }
  }
  return worst;
}

}  // namespace wiflow
