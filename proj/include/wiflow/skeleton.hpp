#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wiflow/tensor.hpp"

namespace wiflow {

// 15-joint skeleton with a 14-edge bone tree. The edge list and the two
// joints used for the PCK reference scale are overridable via JSON.
struct SkeletonTopology {
  std::vector<std::string> names;
  std::vector<std::pair<int, int>> edges;
  int right_shoulder = 2;
  int left_hip = 12;

  static SkeletonTopology standard() {
    SkeletonTopology t;
    t.names = {"nose",    "neck",    "r_shoulder", "r_elbow", "r_wrist",
               "l_shoulder", "l_elbow", "l_wrist",  "mid_hip", "r_hip",
               "r_knee",  "r_ankle", "l_hip",      "l_knee",  "l_ankle"};
    t.edges = {{0, 1},  {1, 2},  {2, 3},   {3, 4},   {1, 5},  {5, 6},  {6, 7},
               {1, 8},  {8, 9},  {9, 10},  {10, 11}, {8, 12}, {12, 13}, {13, 14}};
    t.right_shoulder = 2;
    t.left_hip = 12;
    return t;
  }

  int joints() const { return static_cast<int>(names.size()); }

  void validate() const {
    const int n = joints();
    check(n >= 2, "skeleton needs at least two joints");
    check(static_cast<int>(edges.size()) == n - 1,
          "skeleton with " + std::to_string(n) + " joints needs " + std::to_string(n - 1) +
              " edges, got " + std::to_string(edges.size()));
    // connected tree: n-1 edges + full connectivity
    std::vector<int> parent(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
    auto find = [&](int a) {
      while (parent[static_cast<std::size_t>(a)] != a) a = parent[static_cast<std::size_t>(a)];
      return a;
    };
    for (auto [a, b] : edges) {
      check(a >= 0 && a < n && b >= 0 && b < n && a != b,
            "skeleton edge (" + std::to_string(a) + "," + std::to_string(b) + ") out of range");
      const int ra = find(a), rb = find(b);
      check(ra != rb, "skeleton edges contain a cycle through joint " + std::to_string(a));
      parent[static_cast<std::size_t>(ra)] = rb;
    }
    check(right_shoulder >= 0 && right_shoulder < n && left_hip >= 0 && left_hip < n &&
              right_shoulder != left_hip,
          "skeleton reference joints out of range");
  }

  nlohmann::json to_json() const {
    nlohmann::json je = nlohmann::json::array();
    for (auto [a, b] : edges) je.push_back({a, b});
    return nlohmann::json{{"names", names},
                          {"edges", je},
                          {"right_shoulder", right_shoulder},
                          {"left_hip", left_hip}};
  }

  static SkeletonTopology from_json(const nlohmann::json& j) {
    SkeletonTopology t;
    t.names = j.at("names").get<std::vector<std::string>>();
    for (const auto& e : j.at("edges")) {
      check(e.is_array() && e.size() == 2, "skeleton edge must be a [from, to] pair");
      t.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    t.right_shoulder = j.value("right_shoulder", t.right_shoulder);
    t.left_hip = j.value("left_hip", t.left_hip);
    t.validate();
    return t;
  }
};

}  // namespace wiflow
