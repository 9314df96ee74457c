#pragma once

// Session-level dataset splitting: random 70/15/15 and leave-one-subject-out.
// The splitting unit is always a whole session; frames of one continuous
// action sequence never straddle sets.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wiflow/rng.hpp"
#include "wiflow/tensor.hpp"

namespace wiflow {

struct SplitSpec {
  enum class Mode { random_session, loso };
  Mode mode = Mode::random_session;
  std::array<double, 3> ratios{0.70, 0.15, 0.15};  // train/val/test
  std::string test_subject;                        // loso only
  double pool_train_ratio = 0.90;                  // loso train share of the non-test pool

  void validate() const {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    check(std::abs(sum - 1.0) <= 1e-9, "split ratios must sum to 1");
    for (double r : ratios) check(r >= 0.0, "split ratios must be non-negative");
    check(pool_train_ratio > 0.0 && pool_train_ratio < 1.0, "pool_train_ratio must lie in (0,1)");
    if (mode == Mode::loso) check(!test_subject.empty(), "loso mode needs a test subject");
  }
};

struct SplitResult {
  std::vector<std::size_t> train, val, test;  // indices into the session list

  nlohmann::json to_json(const std::vector<std::string>& session_ids) const {
    auto names = [&](const std::vector<std::size_t>& part) {
      nlohmann::json arr = nlohmann::json::array();
      for (std::size_t i : part) arr.push_back(session_ids.at(i));
      return arr;
    };
    return nlohmann::json{{"train", names(train)}, {"val", names(val)}, {"test", names(test)}};
  }
};

namespace detail {

// largest-remainder apportionment of n into parts proportional to ratios
inline std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(n) * ratios[static_cast<std::size_t>(i)];
    sizes[static_cast<std::size_t>(i)] = static_cast<std::size_t>(quota);
    frac[static_cast<std::size_t>(i)] = quota - static_cast<double>(sizes[static_cast<std::size_t>(i)]);
    assigned += sizes[static_cast<std::size_t>(i)];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (frac[static_cast<std::size_t>(i)] > frac[static_cast<std::size_t>(best)]) best = i;
    ++sizes[static_cast<std::size_t>(best)];
    frac[static_cast<std::size_t>(best)] = -1.0;
    ++assigned;
  }
  return sizes;
}

}  // namespace detail

inline SplitResult split_random_session(std::size_t n_sessions,
                                        const std::array<double, 3>& ratios, std::uint64_t seed) {
  check(n_sessions >= 3, "random session split needs at least 3 sessions, got " +
                             std::to_string(n_sessions));
  std::vector<std::size_t> order(n_sessions);
  for (std::size_t i = 0; i < n_sessions; ++i) order[i] = i;
  Rng rng = derive_rng(seed, "split/random-session");
  rng.shuffle(order);

  const auto sizes = detail::apportion(n_sessions, ratios);
  SplitResult out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < sizes[0]; ++i) out.train.push_back(order[pos++]);
  for (std::size_t i = 0; i < sizes[1]; ++i) out.val.push_back(order[pos++]);
  for (std::size_t i = 0; i < sizes[2]; ++i) out.test.push_back(order[pos++]);
  return out;
}

inline SplitResult split_loso(const std::vector<std::string>& subject_per_session,
                              const std::string& test_subject, double pool_train_ratio,
                              std::uint64_t seed) {
  SplitResult out;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < subject_per_session.size(); ++i) {
    if (subject_per_session[i] == test_subject)
      out.test.push_back(i);
    else
      pool.push_back(i);
  }
  check(!out.test.empty(), "unknown test subject: " + test_subject);

  Rng rng = derive_rng(seed, "split/loso-pool");
  rng.shuffle(pool);
  const auto n_train = static_cast<std::size_t>(pool_train_ratio * static_cast<double>(pool.size()));
  out.train.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_train), pool.end());
  return out;
}

inline SplitResult split_sessions(const std::vector<std::string>& subject_per_session,
                                  const SplitSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (spec.mode == SplitSpec::Mode::loso)
    return split_loso(subject_per_session, spec.test_subject, spec.pool_train_ratio, seed);
  return split_random_session(subject_per_session.size(), spec.ratios, seed);
}

}  // namespace wiflow
