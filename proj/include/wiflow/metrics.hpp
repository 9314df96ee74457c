#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "wiflow/tensor.hpp"

namespace wiflow {

// Fraction of joints whose normalized error ||pred - gt|| / scale_i is <= alpha
// (boundary counts as correct). scales holds one positive reference length
// per sample. Accumulation is 64-bit regardless of the tensor scalar.
template <typename S>
double pck(const Tensor<S>& pred, const Tensor<S>& gt, const std::vector<double>& scales,
           double alpha) {
  check(pred.rank() == 3 && pred.dim(2) == 2 && pred.shape() == gt.shape(),
        "pck expects matching NxKx2 tensors, got " + shape_str(pred.shape()) + " vs " +
            shape_str(gt.shape()));
  const std::int64_t n = pred.dim(0), k = pred.dim(1);
  check(static_cast<std::int64_t>(scales.size()) == n,
        "pck needs one scale per sample: " + std::to_string(scales.size()) + " vs " +
            std::to_string(n));
  for (double s : scales) check(s > 0.0, "pck scales must be positive");
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < k; ++j) {
      const double dx = static_cast<double>(pred[(i * k + j) * 2]) -
                        static_cast<double>(gt[(i * k + j) * 2]);
      const double dy = static_cast<double>(pred[(i * k + j) * 2 + 1]) -
                        static_cast<double>(gt[(i * k + j) * 2 + 1]);
      if (std::hypot(dx, dy) / scales[static_cast<std::size_t>(i)] <= alpha) ++correct;
    }
  return static_cast<double>(correct) / static_cast<double>(n * k);
}

// Mean Euclidean distance over all N*K joints, in label units.
template <typename S>
double mpjpe(const Tensor<S>& pred, const Tensor<S>& gt) {
  check(pred.rank() == 3 && pred.dim(2) == 2 && pred.shape() == gt.shape(),
        "mpjpe expects matching NxKx2 tensors, got " + shape_str(pred.shape()) + " vs " +
            shape_str(gt.shape()));
  const std::int64_t n = pred.dim(0), k = pred.dim(1);
  double acc = 0.0;
  for (std::int64_t i = 0; i < n * k; ++i) {
    const double dx = static_cast<double>(pred[i * 2]) - static_cast<double>(gt[i * 2]);
    const double dy = static_cast<double>(pred[i * 2 + 1]) - static_cast<double>(gt[i * 2 + 1]);
    acc += std::hypot(dx, dy);
  }
  return acc / static_cast<double>(n * k);
}

struct MetricReport {
  std::map<int, double> pck;  // percent label (10..50) -> fraction
  double mpjpe = 0.0;
  std::int64_t sample_count = 0;

  nlohmann::json to_json() const {
    nlohmann::json jp;
    for (const auto& [pct, frac] : pck) jp["pck@" + std::to_string(pct)] = frac;
    return nlohmann::json{
        {"pck", jp}, {"mpjpe", mpjpe}, {"sample_count", sample_count}};
  }
};

inline const std::vector<double>& default_pck_alphas() {
  static const std::vector<double> alphas = {0.1, 0.2, 0.3, 0.4, 0.5};
  return alphas;
}

template <typename S>
MetricReport evaluate_metrics(const Tensor<S>& pred, const Tensor<S>& gt,
                              const std::vector<double>& scales,
                              const std::vector<double>& alphas = default_pck_alphas()) {
  MetricReport r;
  r.sample_count = pred.dim(0);
  for (double a : alphas) r.pck[static_cast<int>(std::lround(a * 100))] = pck(pred, gt, scales, a);
  r.mpjpe = mpjpe(pred, gt);
  return r;
}

// Merge shard reports by sample-count-weighted average (all shards must
// carry the same alpha set).
inline MetricReport merge_reports(const std::vector<MetricReport>& shards) {
  MetricReport out;
  double total = 0.0;
  for (const auto& s : shards) total += static_cast<double>(s.sample_count);
  check(total > 0.0, "cannot merge empty metric reports");
  for (const auto& s : shards) {
    const double w = static_cast<double>(s.sample_count) / total;
    out.mpjpe += w * s.mpjpe;
    for (const auto& [pct, frac] : s.pck) out.pck[pct] += w * frac;
    out.sample_count += s.sample_count;
  }
  return out;
}

}  // namespace wiflow
