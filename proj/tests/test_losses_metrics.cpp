#include <doctest.h>

#include <cmath>
#include <vector>

#include "wiflow/gradcheck.hpp"
#include "wiflow/losses.hpp"
#include "wiflow/metrics.hpp"
#include "wiflow/rng.hpp"
#include "wiflow/skeleton.hpp"

using namespace wiflow;

namespace {

double h_ref(double x, double beta) {
  const double a = std::abs(x);
  return a < beta ? 0.5 * x * x / beta : a - 0.5 * beta;
}

Tensor<double> random_pose_batch(Rng& rng, int64_t n, int64_t k, double lo, double hi) {
  Tensor<double> t = Tensor<double>::zeros({n, k, 2});
  for (auto& v : t.flat()) v = rng.uniform(lo, hi);
  return t;
}

// plain-loop oracle for the keypoint term
double keypoint_oracle(const Tensor<double>& pred, const Tensor<double>& gt, double beta) {
  const int64_t n = pred.shape()[0], k = pred.shape()[1];
  double acc = 0.0;
  for (int64_t i = 0; i < n * k; ++i) {
    acc += h_ref(pred.flat()[2 * i] - gt.flat()[2 * i], beta);
    acc += h_ref(pred.flat()[2 * i + 1] - gt.flat()[2 * i + 1], beta);
  }
  return acc / static_cast<double>(n * k);
}

double bone_oracle(const Tensor<double>& pred, const Tensor<double>& gt,
                   const SkeletonTopology& topo, double beta) {
  const auto& edges = topo.edges;
  const int64_t n = pred.shape()[0], k = pred.shape()[1];
  auto len = [&](const Tensor<double>& t, int64_t i, const std::pair<int, int>& e) {
    const double dx = t.flat()[(i * k + e.first) * 2] - t.flat()[(i * k + e.second) * 2];
    const double dy =
        t.flat()[(i * k + e.first) * 2 + 1] - t.flat()[(i * k + e.second) * 2 + 1];
    return std::sqrt(dx * dx + dy * dy);
  };
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i)
    for (const auto& e : edges) acc += h_ref(len(pred, i, e) - len(gt, i, e), beta);
  return acc / static_cast<double>(n * static_cast<int64_t>(edges.size()));
}

}  // namespace

TEST_CASE("smooth l1 kernel frozen values") {
  auto h = [](double x, double beta) {
    return smooth_l1(Tensor<double>::scalar(x), beta).flat()[0];
  };
  CHECK(h(0.0, 0.1) == 0.0);
  CHECK(h(0.05, 0.1) == doctest::Approx(0.0125).epsilon(1e-12));
  CHECK(h(1.0, 0.1) == doctest::Approx(0.95).epsilon(1e-12));
  // continuity across the quadratic/linear joint
  for (double beta : {0.1, 0.05}) {
    const double eps = 1e-7;
    CHECK(std::abs(h(beta - eps, beta) - h(beta + eps, beta)) <= 1e-6);
    CHECK(std::abs(h(-beta + eps, beta) - h(-beta - eps, beta)) <= 1e-6);
  }
}

TEST_CASE("keypoint loss") {
  LossConfig cfg;

  SUBCASE("zero iff prediction matches") {
    Rng rng(5);
    Tensor<double> gt = random_pose_batch(rng, 3, 15, -1.0, 1.0);
    CHECK(keypoint_loss(gt, gt, cfg.beta_main).flat()[0] == 0.0);
  }

  SUBCASE("single displaced coordinate") {
    Tensor<double> gt = Tensor<double>::zeros({1, 1, 2});
    Tensor<double> pred = Tensor<double>::from({1, 1, 2}, {0.05, 0.0});
    CHECK(keypoint_loss(pred, gt, 0.1).flat()[0] ==
          doctest::Approx(0.0125).epsilon(1e-12));
  }

  SUBCASE("matches plain-loop oracle") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      const int64_t n = 1 + static_cast<int64_t>(rng.below(4));
      const int64_t k = 2 + static_cast<int64_t>(rng.below(14));
      Tensor<double> gt = random_pose_batch(rng, n, k, -2.0, 2.0);
      Tensor<double> pred = random_pose_batch(rng, n, k, -2.0, 2.0);
      const double got = keypoint_loss(pred, gt, 0.1).flat()[0];
      CHECK(std::abs(got - keypoint_oracle(pred, gt, 0.1)) <= 1e-7);
    }
  }

  SUBCASE("symmetric in arguments") {
    Rng rng(9);
    Tensor<double> a = random_pose_batch(rng, 2, 15, -1.0, 1.0);
    Tensor<double> b = random_pose_batch(rng, 2, 15, -1.0, 1.0);
    CHECK(keypoint_loss(a, b, 0.1).flat()[0] ==
          doctest::Approx(keypoint_loss(b, a, 0.1).flat()[0]).epsilon(1e-12));
  }

  SUBCASE("shape contract") {
    Tensor<double> bad = Tensor<double>::zeros({2, 15, 3});
    CHECK_THROWS(keypoint_loss(bad, bad, 0.1));
    Tensor<double> a = Tensor<double>::zeros({2, 15, 2});
    Tensor<double> b = Tensor<double>::zeros({2, 14, 2});
    CHECK_THROWS(keypoint_loss(a, b, 0.1));
  }
}

TEST_CASE("bone loss") {
  const SkeletonTopology topo = SkeletonTopology::standard();
  LossConfig cfg;
  Rng rng(11);

  SUBCASE("invariant to rigid translation of either argument") {
    Tensor<double> gt = random_pose_batch(rng, 2, 15, -1.0, 1.0);
    Tensor<double> pred = gt.clone();
    for (int64_t i = 0; i < pred.shape()[0] * pred.shape()[1]; ++i) {
      pred.flat()[2 * i] += 3.25;  // same shift for every joint: all bones unchanged
      pred.flat()[2 * i + 1] -= 1.5;
    }
    CHECK(std::abs(bone_loss(pred, gt, topo, cfg.beta_bone).flat()[0]) <= 1e-9);
  }

  SUBCASE("single elongated leaf bone") {
    // r_wrist is a leaf joint: moving it along its limb stretches exactly one bone
    Tensor<double> gt = Tensor<double>::zeros({1, 15, 2});
    for (int k = 0; k < 15; ++k) {
      gt.flat()[2 * k] = 1.0 * k;
      gt.flat()[2 * k + 1] = 0.25 * k;
    }
    Tensor<double> pred = gt.clone();
    const int wrist = 4, elbow = 3;
    const double dx = gt.flat()[2 * wrist] - gt.flat()[2 * elbow];
    const double dy = gt.flat()[2 * wrist + 1] - gt.flat()[2 * elbow + 1];
    const double len = std::hypot(dx, dy);
    pred.flat()[2 * wrist] += 0.2 * dx / len;
    pred.flat()[2 * wrist + 1] += 0.2 * dy / len;
    const double got = bone_loss(pred, gt, topo, 0.05).flat()[0];
    CHECK(got == doctest::Approx(h_ref(0.2, 0.05) / 14.0).epsilon(1e-9));
    CHECK(got == doctest::Approx(0.0125).epsilon(1e-9));
  }

  SUBCASE("matches plain-loop oracle") {
    for (int trial = 0; trial < 50; ++trial) {
      Tensor<double> gt = random_pose_batch(rng, 2, 15, -2.0, 2.0);
      Tensor<double> pred = random_pose_batch(rng, 2, 15, -2.0, 2.0);
      const double got = bone_loss(pred, gt, topo, cfg.beta_bone).flat()[0];
      CHECK(std::abs(got - bone_oracle(pred, gt, topo, cfg.beta_bone)) <= 1e-7);
    }
  }
}

TEST_CASE("total loss composition") {
  const SkeletonTopology topo = SkeletonTopology::standard();
  Rng rng(13);
  Tensor<double> gt = random_pose_batch(rng, 3, 15, -1.0, 1.0);
  Tensor<double> pred = random_pose_batch(rng, 3, 15, -1.0, 1.0);

  SUBCASE("lambda zero reduces to the keypoint term") {
    LossConfig cfg;
    cfg.lambda_bone = 0.0;
    LossParts<double> parts = total_loss(pred, gt, topo, cfg);
    CHECK(parts.total.flat()[0] == keypoint_loss(pred, gt, cfg.beta_main).flat()[0]);
  }

  SUBCASE("weighted combination") {
    LossConfig cfg;  // lambda = 0.2
    LossParts<double> parts = total_loss(pred, gt, topo, cfg);
    CHECK(parts.total.flat()[0] ==
          doctest::Approx(parts.keypoint.flat()[0] + 0.2 * parts.bone.flat()[0])
              .epsilon(1e-12));
    // e.g. keypoint term 0.1 and bone term 0.05 combine to 0.11
    CHECK(0.1 + 0.2 * 0.05 == doctest::Approx(0.11));
  }

  SUBCASE("zero iff equal, positive otherwise") {
    LossConfig cfg;
    CHECK(total_loss(gt, gt, topo, cfg).total.flat()[0] == 0.0);
    CHECK(total_loss(pred, gt, topo, cfg).total.flat()[0] > 0.0);
  }

  SUBCASE("gradient matches finite differences") {
    LossConfig cfg;
    // keep every |delta| away from the kinks at beta_main and beta_bone
    Tensor<double> base = random_pose_batch(rng, 2, 15, -1.0, 1.0);
    Tensor<double> off = base.clone();
    for (auto& v : off.flat()) v += 0.3 + rng.uniform(0.0, 0.1);
    std::vector<Tensor<double>> inputs{off};
    auto res = grad_check(
        [&](const std::vector<Tensor<double>>& in) {
          return total_loss(in[0], base, topo, cfg).total;
        },
        inputs, 1e-6);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("pck") {
  SUBCASE("frozen example") {
    Tensor<double> gt = Tensor<double>::zeros({1, 2, 2});
    Tensor<double> pred = Tensor<double>::from({1, 2, 2}, {1.0, 0.0, 9.0, 0.0});
    std::vector<double> scales{10.0};
    CHECK(pck(pred, gt, scales, 0.5) == doctest::Approx(0.5));
    // boundary uses <=: error exactly alpha*scale is correct
    CHECK(pck(pred, gt, scales, 0.9) == doctest::Approx(1.0));
    CHECK(pck(pred, gt, scales, 0.1) == doctest::Approx(0.5));
    CHECK(pck(pred, gt, scales, 0.05) == doctest::Approx(0.0));
  }

  SUBCASE("perfect prediction is 1 at every threshold") {
    Rng rng(31);
    Tensor<double> gt = random_pose_batch(rng, 4, 15, -1.0, 1.0);
    std::vector<double> scales(4, 1.0);
    for (double a : default_pck_alphas()) CHECK(pck(gt, gt, scales, a) == 1.0);
  }

  SUBCASE("monotone in alpha") {
    Rng rng(33);
    Tensor<double> gt = random_pose_batch(rng, 4, 15, -1.0, 1.0);
    Tensor<double> pred = random_pose_batch(rng, 4, 15, -1.0, 1.0);
    std::vector<double> scales{0.8, 1.0, 1.2, 2.0};
    double prev = -1.0;
    for (double a : {0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 5.0}) {
      const double v = pck(pred, gt, scales, a);
      CHECK(v >= prev);
      prev = v;
    }
    CHECK(prev == 1.0);  // huge threshold accepts everything
  }

  SUBCASE("invariant to joint rigid translation") {
    Rng rng(35);
    Tensor<double> gt = random_pose_batch(rng, 3, 15, -1.0, 1.0);
    Tensor<double> pred = random_pose_batch(rng, 3, 15, -1.0, 1.0);
    std::vector<double> scales{1.0, 1.0, 1.0};
    Tensor<double> gt2 = gt.clone(), pred2 = pred.clone();
    for (auto* t : {&gt2, &pred2})
      for (int64_t i = 0; i < 45; ++i) {
        t->flat()[2 * i] += 7.0;
        t->flat()[2 * i + 1] -= 2.0;
      }
    for (double a : default_pck_alphas())
      CHECK(pck(pred, gt, scales, a) == pck(pred2, gt2, scales, a));
  }

  SUBCASE("contracts") {
    Tensor<double> x = Tensor<double>::zeros({2, 15, 2});
    std::vector<double> one{1.0};
    CHECK_THROWS(pck(x, x, one, 0.5));  // scale count mismatch
    std::vector<double> bad{1.0, 0.0};
    CHECK_THROWS(pck(x, x, bad, 0.5));  // non-positive scale
  }
}

TEST_CASE("mpjpe") {
  SUBCASE("frozen offset") {
    Tensor<double> gt = Tensor<double>::zeros({1, 15, 2});
    Tensor<double> pred = gt.clone();
    for (int64_t k = 0; k < 15; ++k) {
      pred.flat()[2 * k] = 3.0;
      pred.flat()[2 * k + 1] = 4.0;
    }
    CHECK(mpjpe(pred, gt) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(mpjpe(gt, gt) == 0.0);
  }

  SUBCASE("matches plain-loop oracle") {
    Rng rng(37);
    for (int trial = 0; trial < 50; ++trial) {
      const int64_t n = 1 + static_cast<int64_t>(rng.below(5));
      Tensor<double> gt = random_pose_batch(rng, n, 15, -3.0, 3.0);
      Tensor<double> pred = random_pose_batch(rng, n, 15, -3.0, 3.0);
      double acc = 0.0;
      for (int64_t i = 0; i < n * 15; ++i)
        acc += std::hypot(pred.flat()[2 * i] - gt.flat()[2 * i],
                          pred.flat()[2 * i + 1] - gt.flat()[2 * i + 1]);
      CHECK(std::abs(mpjpe(pred, gt) - acc / double(n * 15)) <= 1e-7);
    }
  }
}

TEST_CASE("metric reports merge by sample weight") {
  Rng rng(41);
  Tensor<double> gt_a = random_pose_batch(rng, 2, 15, -1.0, 1.0);
  Tensor<double> pr_a = random_pose_batch(rng, 2, 15, -1.0, 1.0);
  Tensor<double> gt_b = random_pose_batch(rng, 3, 15, -1.0, 1.0);
  Tensor<double> pr_b = random_pose_batch(rng, 3, 15, -1.0, 1.0);
  std::vector<double> sc_a{1.0, 1.3}, sc_b{0.9, 1.1, 1.5};

  MetricReport ra = evaluate_metrics(pr_a, gt_a, sc_a, default_pck_alphas());
  MetricReport rb = evaluate_metrics(pr_b, gt_b, sc_b, default_pck_alphas());
  MetricReport merged = merge_reports({ra, rb});

  // pooled ground truth
  Tensor<double> gt = Tensor<double>::zeros({5, 15, 2});
  Tensor<double> pr = Tensor<double>::zeros({5, 15, 2});
  for (int64_t i = 0; i < 60; ++i) {
    gt.flat()[i] = gt_a.flat()[i];
    pr.flat()[i] = pr_a.flat()[i];
  }
  for (int64_t i = 0; i < 90; ++i) {
    gt.flat()[60 + i] = gt_b.flat()[i];
    pr.flat()[60 + i] = pr_b.flat()[i];
  }
  std::vector<double> sc{1.0, 1.3, 0.9, 1.1, 1.5};
  MetricReport pooled = evaluate_metrics(pr, gt, sc, default_pck_alphas());

  CHECK(merged.sample_count == 5);
  CHECK(merged.mpjpe == doctest::Approx(pooled.mpjpe).epsilon(1e-12));
  for (const auto& [k, v] : pooled.pck)
    CHECK(merged.pck.at(k) == doctest::Approx(v).epsilon(1e-12));

  auto j = pooled.to_json();
  CHECK(j.at("pck").contains("pck@50"));
  CHECK(j.contains("mpjpe"));
}
