#pragma once

#include <cstdint>
#include <vector>

#include "wiflow/rng.hpp"
#include "wiflow/tape.hpp"
#include "wiflow/tensor.hpp"

namespace wiflow {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::int64_t entries_checked = 0;
};

// Validates reverse-mode gradients of a scalar-valued function against
// central finite differences. The error reported for an entry is
// |analytic - numeric| / max(1, |analytic|); the result keeps the maximum
// over all checked entries. `fn` must map the given inputs to a scalar
// tensor and be deterministic in their values.
//
// When max_entries_per_input > 0 and an input is larger than that, a random
// subset of its entries is perturbed (the analytic gradient is still the
// full reverse-mode result).
template <typename Fn, typename S>
GradCheckResult grad_check(Fn&& fn, std::vector<Tensor<S>>& inputs, double eps = 1e-5,
                           std::int64_t max_entries_per_input = 0, Rng* rng = nullptr) {
  check(eps > 0.0, "grad_check eps must be positive");
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<S> tape;
    Tensor<S> loss = fn(inputs);
    check(loss.size() == 1, "grad_check expects a scalar loss, got " + shape_str(loss.shape()));
    tape.backward(loss);
  }
  analytic.reserve(inputs.size());
  for (auto& in : inputs) {
    std::vector<double> g(static_cast<std::size_t>(in.size()), 0.0);
    if (in.has_grad())
      for (std::int64_t j = 0; j < in.size(); ++j)
        g[static_cast<std::size_t>(j)] = static_cast<double>(in.grad_buffer()[j]);
    analytic.push_back(std::move(g));
  }

  auto eval = [&]() {
    Tensor<S> v = fn(inputs);
    return static_cast<double>(v[0]);
  };

  GradCheckResult res;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& in = inputs[i];
    const std::int64_t n = in.size();
    std::vector<std::int64_t> picks;
    if (max_entries_per_input > 0 && n > max_entries_per_input) {
      check(rng != nullptr, "grad_check sampling requires an rng");
      std::vector<std::int64_t> all(static_cast<std::size_t>(n));
      for (std::int64_t j = 0; j < n; ++j) all[static_cast<std::size_t>(j)] = j;
      rng->shuffle(all);
      picks.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(max_entries_per_input));
    } else {
      picks.resize(static_cast<std::size_t>(n));
      for (std::int64_t j = 0; j < n; ++j) picks[static_cast<std::size_t>(j)] = j;
    }
    for (std::int64_t j : picks) {
      const S saved = in[j];
      in[j] = static_cast<S>(static_cast<double>(saved) + eps);
      const double lp = eval();
      in[j] = static_cast<S>(static_cast<double>(saved) - eps);
      const double lm = eval();
      in[j] = saved;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = analytic[i][static_cast<std::size_t>(j)];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      res.max_rel_err = std::max(res.max_rel_err, err);
      ++res.entries_checked;
    }
  }
  return res;
}

}  // namespace wiflow
