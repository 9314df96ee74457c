#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "wiflow/dataset.hpp"
#include "wiflow/skeleton.hpp"
#include "wiflow/rng.hpp"
#include "wiflow/synth.hpp"

using namespace wiflow;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("trajectories") {
  const SkeletonTopology topo = SkeletonTopology::standard();

  SUBCASE("zero duration is empty") {
    CHECK(gen_trajectory("walking", 0, 1).empty());
    CHECK(gen_trajectory("walking", 19, 1).empty());  // less than one frame
  }

  SUBCASE("unknown tag throws") {
    CHECK_THROWS_WITH_AS(gen_trajectory("moonwalk", 200, 1),
                         doctest::Contains("moonwalk"), std::invalid_argument);
  }

  SUBCASE("bone lengths constant per trajectory") {
    for (const std::string& action : synth_actions()) {
      auto poses = gen_trajectory(action, 1200, 42);
      REQUIRE(poses.size() == 60);
      const auto ref = bone_lengths(poses[0], topo);
      for (const PoseSample& p : poses) {
        const auto lens = bone_lengths(p, topo);
        for (std::size_t e = 0; e < lens.size(); ++e)
          CHECK(std::abs(lens[e] - ref[e]) <= 1e-6);
      }
    }
  }

  SUBCASE("raise phase lifts both wrists monotonically") {
    auto poses = gen_trajectory("raising_hands", 2400, 7);
    REQUIRE(poses.size() == 120);
    const auto lo = static_cast<std::size_t>(0.15 * 120), hi = static_cast<std::size_t>(0.85 * 120);
    for (std::size_t f = lo + 1; f < hi; ++f) {
      CHECK(poses[f].keypoints[4][1] > poses[f - 1].keypoints[4][1]);
      CHECK(poses[f].keypoints[7][1] > poses[f - 1].keypoints[7][1]);
    }
  }

  SUBCASE("deterministic per seed") {
    auto a = gen_trajectory("kicking", 600, 9);
    auto b = gen_trajectory("kicking", 600, 9);
    auto c = gen_trajectory("kicking", 600, 10);
    REQUIRE(a.size() == b.size());
    bool same = true, diff = false;
    for (std::size_t f = 0; f < a.size(); ++f)
      for (int j = 0; j < 15; ++j) {
        same = same && a[f].keypoints[static_cast<std::size_t>(j)] ==
                           b[f].keypoints[static_cast<std::size_t>(j)];
        diff = diff || a[f].keypoints[static_cast<std::size_t>(j)] !=
                           c[f].keypoints[static_cast<std::size_t>(j)];
      }
    CHECK(same);
    CHECK(diff);
  }
}

TEST_CASE("csi synthesis from poses") {
  auto still_pose = [](double x, double y) {
    PoseSample p;
    p.keypoints.assign(15, {x, y});
    p.confidence.assign(15, 1.0);
    return p;
  };

  SUBCASE("static-only channels are constant in time") {
    SynthConfig cfg;
    cfg.noise_std = 0.0;
    ChannelModel m;
    m.h_static = {0.7, -0.4};
    cfg.channels = {m};
    std::vector<PoseSample> poses{still_pose(0, 1), still_pose(0.5, 1.2), still_pose(1, 0.8)};
    for (std::size_t f = 0; f < poses.size(); ++f) poses[f].frame_index = static_cast<std::int64_t>(f);
    Tensor<float> amp = gen_csi_from_pose(poses, cfg);
    CHECK(amp.shape() == Shape{1, 60});
    const float expect = static_cast<float>(std::abs(std::complex<double>(0.7, -0.4)));
    for (std::int64_t t = 0; t < 60; ++t) CHECK(amp.flat()[t] == doctest::Approx(expect));
  }

  SUBCASE("single path beats once per wavelength of path sweep") {
    SynthConfig cfg;
    cfg.noise_std = 0.0;
    ChannelModel m;
    m.h_static = {1.0, 0.0};
    PathSpec path;
    path.alpha = 0.5;
    path.base_length = 0.0;
    path.couplings = {{0, 1.0, 0.0}};  // d(t) = x_0(t)
    m.paths = {path};
    cfg.channels = {m};

    // joint 0 sweeps x from 0 to exactly one wavelength
    std::vector<PoseSample> poses;
    const int frames = 61;
    for (int f = 0; f < frames; ++f) {
      PoseSample p = still_pose(cfg.wavelength * f / (frames - 1), 1.0);
      p.frame_index = f;
      poses.push_back(std::move(p));
    }
    Tensor<float> amp = gen_csi_from_pose(poses, cfg);
    const std::int64_t n = amp.dim(1);
    float lo = 1e9f, hi = -1e9f;
    for (std::int64_t t = 0; t < n; ++t) {
      lo = std::min(lo, amp.flat()[t]);
      hi = std::max(hi, amp.flat()[t]);
    }
    CHECK(lo == doctest::Approx(0.5).epsilon(1e-3));   // destructive at half cycle
    CHECK(hi == doctest::Approx(1.5).epsilon(1e-3));   // constructive at the ends
    // one full beat: ends match, both at the constructive extreme
    CHECK(amp.flat()[0] == doctest::Approx(1.5).epsilon(1e-4));
    CHECK(amp.flat()[n - 20] == doctest::Approx(amp.flat()[0]).epsilon(1e-2));
  }

  SUBCASE("triangle inequality bounds the amplitude") {
    SynthConfig cfg;
    cfg.noise_std = 0.0;
    cfg.channel_count = 24;
    cfg.seed = 3;
    auto poses = gen_trajectory("walking", 1200, 3);
    cfg.channels = build_channel_models(cfg);
    Tensor<float> amp = gen_csi_from_pose(poses, cfg);
    for (std::int64_t c = 0; c < amp.dim(0); ++c) {
      double bound = std::abs(cfg.channels[static_cast<std::size_t>(c)].h_static);
      for (const auto& p : cfg.channels[static_cast<std::size_t>(c)].paths) bound += p.alpha;
      for (std::int64_t t = 0; t < amp.dim(1); ++t) {
        CHECK(amp.flat()[c * amp.dim(1) + t] <= static_cast<float>(bound) + 1e-5f);
        CHECK(std::isfinite(amp.flat()[c * amp.dim(1) + t]));
      }
    }
  }

  SUBCASE("distinct poses produce distinct amplitude vectors") {
    SynthConfig cfg;
    cfg.noise_std = 0.0;
    cfg.channel_count = 64;
    cfg.seed = 11;
    cfg.channels = build_channel_models(cfg);
    Rng rng(17);
    int checked = 0;
    while (checked < 100) {
      PoseSample a = still_pose(rng.uniform(-1.0, 1.0), rng.uniform(0.0, 2.0));
      PoseSample b = still_pose(rng.uniform(-1.0, 1.0), rng.uniform(0.0, 2.0));
      for (int j = 0; j < 15; ++j) {
        a.keypoints[static_cast<std::size_t>(j)][0] += rng.uniform(-0.2, 0.2);
        b.keypoints[static_cast<std::size_t>(j)][1] += rng.uniform(-0.2, 0.2);
      }
      double dist = 0.0;
      for (int j = 0; j < 15; ++j)
        dist += std::hypot(a.keypoints[static_cast<std::size_t>(j)][0] -
                               b.keypoints[static_cast<std::size_t>(j)][0],
                           a.keypoints[static_cast<std::size_t>(j)][1] -
                               b.keypoints[static_cast<std::size_t>(j)][1]);
      if (dist <= 0.1) continue;
      ++checked;
      a.frame_index = 0;
      b.frame_index = 0;
      Tensor<float> amp_a = gen_csi_from_pose({a}, cfg);
      Tensor<float> amp_b = gen_csi_from_pose({b}, cfg);
      double delta = 0.0;
      for (std::int64_t i = 0; i < amp_a.size(); ++i)
        delta += std::abs(static_cast<double>(amp_a.flat()[i]) - amp_b.flat()[i]);
      CHECK(delta > 0.0);
    }
  }
}

TEST_CASE("synthetic dataset generation") {
  const std::string root = "test_synth_data_tmp";
  fs::remove_all(root);

  SynthConfig cfg;
  cfg.ticks_per_session = 400;  // 20 frames per session, desk scale
  cfg.noise_std = 0.002;
  cfg.seed = 21;

  SUBCASE("session layout, alignment and reload") {
    auto dirs = make_dataset(2, 2, cfg, root);
    CHECK(dirs.size() == 4);
    CHECK(list_sessions(root).size() == 4);

    Session s = load_session(dirs[0]);
    CHECK(s.meta.subject_id == "subj00");
    CHECK(s.csi.shape() == Shape{540, 400});
    CHECK(s.labels.samples.size() == 20);  // 20:1 tick alignment
    CHECK(s.ticks() == static_cast<std::int64_t>(s.labels.samples.size()) *
                           align_streams(s.meta.csi_rate_hz, s.meta.label_fps));

    // full pipeline: windows pair with frames, nothing dropped, nothing missing
    const SkeletonTopology topo = SkeletonTopology::standard();
    auto examples = make_examples(s, topo);
    CHECK(examples.size() == 20);
    for (const auto& ex : examples) {
      CHECK(ex.input.shape() == Shape{540, 20});
      CHECK(ex.target.shape() == Shape{15, 2});
      CHECK(ex.scale > 0.0);
      CHECK(ex.input.all_finite());
    }

    // collision guard
    CHECK_THROWS_WITH_AS(make_dataset(2, 2, cfg, root), doctest::Contains("collision"),
                         std::invalid_argument);
  }

  SUBCASE("regeneration is byte-identical") {
    fs::remove_all(root);
    auto dirs = make_dataset(1, 2, cfg, root);
    std::vector<std::vector<std::uint8_t>> first;
    for (const auto& d : dirs)
      for (const char* f : {"csi.f32", "labels.csv", "meta.json"})
        first.push_back(slurp(fs::path(d) / f));

    fs::remove_all(root);
    auto dirs2 = make_dataset(1, 2, cfg, root);
    REQUIRE(dirs2 == dirs);
    std::size_t i = 0;
    for (const auto& d : dirs2)
      for (const char* f : {"csi.f32", "labels.csv", "meta.json"})
        CHECK(slurp(fs::path(d) / f) == first[i++]);
  }

  fs::remove_all(root);
}

TEST_CASE("portable session io round trip") {
  const std::string dir = "test_session_tmp";
  fs::remove_all(dir);

  Rng rng(31);
  Session s;
  s.meta = {"subjA", "sessB", "waving", 600, 30};
  s.csi = Tensor<float>::zeros({540, 40});
  for (auto& v : s.csi.flat()) v = static_cast<float>(rng.uniform(0.0, 5.0));
  auto poses = gen_trajectory("waving", 40, 5);
  s.labels.samples = poses;

  save_session(dir, s);
  Session back = load_session(dir);
  CHECK(back.meta.subject_id == "subjA");
  CHECK(back.meta.action == "waving");
  CHECK(back.csi.shape() == s.csi.shape());
  for (std::int64_t i = 0; i < s.csi.size(); ++i)
    CHECK(back.csi.flat()[i] == s.csi.flat()[i]);  // f32 round trip is exact
  REQUIRE(back.labels.samples.size() == poses.size());
  for (std::size_t f = 0; f < poses.size(); ++f)
    for (int j = 0; j < 15; ++j)
      CHECK(back.labels.samples[f].keypoints[static_cast<std::size_t>(j)] ==
            poses[f].keypoints[static_cast<std::size_t>(j)]);

  fs::remove_all(dir);
  CHECK_THROWS(load_session(dir));
}

TEST_CASE("batching") {
  const SkeletonTopology topo = SkeletonTopology::standard();
  SynthConfig cfg;
  cfg.ticks_per_session = 200;
  cfg.seed = 33;
  const std::string root = "test_batch_tmp";
  fs::remove_all(root);
  make_dataset(1, 1, cfg, root);
  auto examples = make_examples(load_dataset(root), topo);
  REQUIRE(examples.size() == 10);

  Batch b = make_batch(examples, {0, 3, 7});
  CHECK(b.inputs.shape() == Shape{3, 540, 20});
  CHECK(b.targets.shape() == Shape{3, 15, 2});
  CHECK(b.scales.size() == 3);
  for (std::int64_t j = 0; j < 540 * 20; ++j)
    CHECK(b.inputs.flat()[540 * 20 + j] == examples[3].input.flat()[j]);
  for (std::int64_t j = 0; j < 30; ++j)
    CHECK(b.targets.flat()[30 + j] == examples[3].target.flat()[j]);
  CHECK_THROWS(make_batch(examples, {}));

  fs::remove_all(root);
}
