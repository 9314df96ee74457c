#include "wiflow/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>

#include "wiflow/rng.hpp"

namespace fs = std::filesystem;

namespace wiflow {

namespace {

constexpr double kPi = 3.14159265358979323846;

double deg(double d) { return d * kPi / 180.0; }

// quintic smoothstep: C2-continuous monotone ramp on [0,1]
double smooth5(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u * (u * (6.0 * u - 15.0) + 10.0);
}

struct Lengths {
  double torso = 0.50, head = 0.25, clav = 0.18, upper = 0.28, fore = 0.25;
  double pelvis = 0.12, thigh = 0.42, shin = 0.40;

  void scale(double s) {
    torso *= s, head *= s, clav *= s, upper *= s, fore *= s;
    pelvis *= s, thigh *= s, shin *= s;
  }
};

// absolute bone angles (radians, x right / y up); joints hang off these
struct BoneSet {
  double root_x = 0.0, root_y = 1.0;
  double body_rot = 0.0;  // rigid rotation about the root
  double torso = deg(90), head = deg(90);
  double r_clav = deg(-20), l_clav = deg(200);
  double r_upper = deg(-90), r_fore = deg(-90);
  double l_upper = deg(-90), l_fore = deg(-90);
  double r_pelvis = deg(-60), l_pelvis = deg(240);
  double r_thigh = deg(-90), r_shin = deg(-90);
  double l_thigh = deg(-90), l_shin = deg(-90);
};

struct MotionParams {
  double phase0 = 0.0;  // periodic actions only
  double cycles = 1.0;
  double subject_scale = 1.0;
};

// tau in [0,1] across the trajectory
BoneSet action_angles(const std::string& action, double tau, const MotionParams& mp) {
  BoneSet b;
  const double p = 2.0 * kPi * (mp.cycles * tau) + mp.phase0;

  if (action == "walking") {
    const double arm = deg(25) * std::sin(p);
    const double leg = deg(22) * std::sin(p);
    b.r_upper += arm;
    b.l_upper -= arm;
    b.r_fore += 0.6 * arm;
    b.l_fore -= 0.6 * arm;
    b.r_thigh += leg;
    b.l_thigh -= leg;
    b.r_shin += leg - deg(12) * (1.0 + std::cos(p)) * 0.5;
    b.l_shin += -leg - deg(12) * (1.0 - std::cos(p)) * 0.5;
    b.root_x = 0.15 * std::sin(0.5 * p);
    b.root_y += 0.03 * std::sin(2.0 * p);
  } else if (action == "raising_hands") {
    // monotone raise between tau 0.1 and 0.9; both arms straight
    const double arm = deg(-80) + deg(160) * smooth5((tau - 0.1) / 0.8);
    b.r_upper = b.r_fore = arm;
    b.l_upper = b.l_fore = deg(180) - arm;  // mirrored so the left wrist rises too
  } else if (action == "squatting") {
    const double dip = 0.5 * (1.0 - std::cos(p));
    b.root_y -= 0.25 * dip;
    b.r_thigh += deg(35) * dip;
    b.r_shin -= deg(35) * dip;
    b.l_thigh -= deg(35) * dip;
    b.l_shin += deg(35) * dip;
    b.r_upper += deg(60) * dip;  // arms swing forward for balance
    b.l_upper += deg(120) * dip;
    b.r_fore += deg(60) * dip;
    b.l_fore += deg(120) * dip;
  } else if (action == "hands_up") {
    const double sway = deg(6) * std::sin(p);
    b.r_upper = deg(70) + sway;
    b.r_fore = deg(82) + sway;
    b.l_upper = deg(110) - sway;
    b.l_fore = deg(98) - sway;
  } else if (action == "kicking") {
    const double kick = 0.5 * (1.0 - std::cos(p));
    b.r_thigh += deg(55) * kick;
    b.r_shin += deg(55) * kick + deg(18) * std::sin(p) * kick;
    b.l_upper += deg(12) * kick;
    b.r_upper -= deg(18) * kick;
  } else if (action == "waving") {
    b.r_upper = deg(40);
    b.r_fore = deg(70) + deg(35) * std::sin(p);
  } else if (action == "turning") {
    b.body_rot = deg(15) * std::sin(p);
    b.root_x = 0.05 * std::sin(p);
  } else if (action == "jumping") {
    const double hop = 0.5 * (1.0 - std::cos(p));
    b.root_y += 0.18 * hop;
    const double arm = deg(30) * std::sin(p);
    b.r_upper += arm;
    b.l_upper -= arm;
    b.r_shin -= deg(15) * hop;
    b.l_shin -= deg(15) * hop;
  } else {
    fail("unknown action tag: " + action);
  }
  return b;
}

PoseSample pose_from_angles(const BoneSet& b, const Lengths& L) {
  std::array<std::array<double, 2>, 15> j{};
  auto place = [&](int child, int parent, double len, double theta) {
    j[static_cast<std::size_t>(child)] = {
        j[static_cast<std::size_t>(parent)][0] + len * std::cos(theta),
        j[static_cast<std::size_t>(parent)][1] + len * std::sin(theta)};
  };
  j[8] = {b.root_x, b.root_y};
  place(1, 8, L.torso, b.torso);
  place(0, 1, L.head, b.head);
  place(2, 1, L.clav, b.r_clav);
  place(3, 2, L.upper, b.r_upper);
  place(4, 3, L.fore, b.r_fore);
  place(5, 1, L.clav, b.l_clav);
  place(6, 5, L.upper, b.l_upper);
  place(7, 6, L.fore, b.l_fore);
  place(9, 8, L.pelvis, b.r_pelvis);
  place(10, 9, L.thigh, b.r_thigh);
  place(11, 10, L.shin, b.r_shin);
  place(12, 8, L.pelvis, b.l_pelvis);
  place(13, 12, L.thigh, b.l_thigh);
  place(14, 13, L.shin, b.l_shin);

  if (b.body_rot != 0.0) {  // rigid rotation about the root preserves lengths
    const double c = std::cos(b.body_rot), s = std::sin(b.body_rot);
    for (auto& kp : j) {
      const double x = kp[0] - b.root_x, y = kp[1] - b.root_y;
      kp = {b.root_x + c * x - s * y, b.root_y + s * x + c * y};
    }
  }

  PoseSample pose;
  pose.keypoints.assign(j.begin(), j.end());
  pose.confidence.assign(15, 1.0);
  return pose;
}

}  // namespace

void SynthConfig::validate() const {
  check(wavelength > 0.0, "wavelength must be positive");
  check(noise_std >= 0.0, "noise std must be non-negative");
  check(ticks_per_session >= 0, "ticks_per_session must be non-negative");
  check(csi_rate_hz >= 1 && label_fps >= 1 && csi_rate_hz % label_fps == 0,
        "csi rate must be a positive multiple of the label rate");
  check(channel_count >= 1, "channel_count must be positive");
  check(paths_per_channel >= 0, "paths_per_channel must be non-negative");
  check(alpha_min >= 0.0 && alpha_min <= alpha_max, "alpha range invalid");
  check(static_mag_min > 0.0 && static_mag_min <= static_mag_max, "static magnitude range invalid");
  check(coupling_min >= 0.0 && coupling_min <= coupling_max, "coupling range invalid");
}

const std::vector<std::string>& synth_actions() {
  static const std::vector<std::string> kActions{"walking", "raising_hands", "squatting",
                                                 "hands_up", "kicking",       "waving",
                                                 "turning", "jumping"};
  return kActions;
}

std::vector<PoseSample> gen_trajectory(const std::string& action, std::int64_t duration_ticks,
                                       std::uint64_t seed, std::int64_t packets_per_label) {
  check(packets_per_label >= 1, "packets_per_label must be positive");
  check(duration_ticks >= 0, "duration must be non-negative");
  check(std::find(synth_actions().begin(), synth_actions().end(), action) !=
            synth_actions().end(),
        "unknown action tag: " + action);

  const std::int64_t frames = duration_ticks / packets_per_label;
  std::vector<PoseSample> out;
  if (frames == 0) return out;

  Rng rng = derive_rng(seed, "trajectory");
  MotionParams mp;
  mp.subject_scale = rng.uniform(0.9, 1.1);
  mp.cycles = std::max(1.0, static_cast<double>(frames) / 75.0) * rng.uniform(0.8, 1.2);
  mp.phase0 = action == "raising_hands" ? 0.0 : rng.uniform(0.0, 2.0 * kPi);

  Lengths lengths;
  lengths.scale(mp.subject_scale);

  out.reserve(static_cast<std::size_t>(frames));
  for (std::int64_t f = 0; f < frames; ++f) {
    const double tau = frames == 1 ? 0.0 : static_cast<double>(f) / static_cast<double>(frames - 1);
    PoseSample pose = pose_from_angles(action_angles(action, tau, mp), lengths);
    pose.frame_index = f;
    out.push_back(std::move(pose));
  }
  return out;
}

std::vector<ChannelModel> build_channel_models(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng = derive_rng(cfg.seed, "channels");
  std::vector<ChannelModel> models;
  models.reserve(static_cast<std::size_t>(cfg.channel_count));
  for (int c = 0; c < cfg.channel_count; ++c) {
    ChannelModel m;
    const double mag = rng.uniform(cfg.static_mag_min, cfg.static_mag_max);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    m.h_static = std::polar(mag, phase);
    for (int n = 0; n < cfg.paths_per_channel; ++n) {
      PathSpec path;
      path.alpha = rng.uniform(cfg.alpha_min, cfg.alpha_max);
      path.base_length = rng.uniform(2.0, 6.0);
      for (int q = 0; q < 2; ++q) {
        PathSpec::Coupling cp;
        // first coupling of the first path walks the joints so that every
        // keypoint drives at least one path across the channel bank
        cp.joint = (n == 0 && q == 0) ? c % 15 : static_cast<int>(rng.below(15));
        const double sx = rng.below(2) ? 1.0 : -1.0;
        const double sy = rng.below(2) ? 1.0 : -1.0;
        cp.ax = sx * rng.uniform(cfg.coupling_min, cfg.coupling_max);
        cp.ay = sy * rng.uniform(cfg.coupling_min, cfg.coupling_max);
        path.couplings.push_back(cp);
      }
      m.paths.push_back(std::move(path));
    }
    models.push_back(std::move(m));
  }
  return models;
}

Tensor<float> gen_csi_from_pose(const std::vector<PoseSample>& poses, const SynthConfig& cfg) {
  cfg.validate();
  const std::vector<ChannelModel> local = cfg.channels.empty() ? build_channel_models(cfg)
                                                               : cfg.channels;
  const auto n_channels = static_cast<std::int64_t>(local.size());
  const auto frames = static_cast<std::int64_t>(poses.size());
  const std::int64_t per_label = cfg.csi_rate_hz / cfg.label_fps;
  const std::int64_t n_ticks = frames * per_label;

  Tensor<float> out = Tensor<float>::zeros({n_channels, n_ticks});
  if (n_ticks == 0) return out;

  const std::size_t joints = poses[0].keypoints.size();
  for (const ChannelModel& m : local)
    for (const PathSpec& p : m.paths)
      for (const PathSpec::Coupling& cp : p.couplings)
        check(cp.joint >= 0 && static_cast<std::size_t>(cp.joint) < joints,
              "path coupling references keypoint " + std::to_string(cp.joint) +
                  " but poses have " + std::to_string(joints));

  Rng noise_rng = derive_rng(cfg.seed, "amplitude-noise");
  std::vector<std::array<double, 2>> kp(joints);
  for (std::int64_t t = 0; t < n_ticks; ++t) {
    // linear pose interpolation at the CSI tick rate
    const double phi = static_cast<double>(t) / static_cast<double>(per_label);
    const auto i0 = static_cast<std::int64_t>(phi);
    const std::int64_t i1 = std::min(i0 + 1, frames - 1);
    const double w = phi - static_cast<double>(i0);
    const PoseSample& a = poses[static_cast<std::size_t>(i0)];
    const PoseSample& bb = poses[static_cast<std::size_t>(i1)];
    for (std::size_t j = 0; j < joints; ++j)
      kp[j] = {(1.0 - w) * a.keypoints[j][0] + w * bb.keypoints[j][0],
               (1.0 - w) * a.keypoints[j][1] + w * bb.keypoints[j][1]};

    for (std::int64_t c = 0; c < n_channels; ++c) {
      const ChannelModel& m = local[static_cast<std::size_t>(c)];
      std::complex<double> h = m.h_static;
      for (const PathSpec& p : m.paths) {
        double d = p.base_length;
        for (const PathSpec::Coupling& cp : p.couplings)
          d += cp.ax * kp[static_cast<std::size_t>(cp.joint)][0] +
               cp.ay * kp[static_cast<std::size_t>(cp.joint)][1];
        h += std::polar(p.alpha, -2.0 * kPi * d / cfg.wavelength);
      }
      double amp = std::abs(h);
      if (cfg.noise_std > 0.0) amp += cfg.noise_std * noise_rng.normal();
      out.flat()[c * n_ticks + t] = static_cast<float>(amp);
    }
  }
  return out;
}

std::vector<std::string> make_dataset(int n_subjects, int sessions_per_subject,
                                      const SynthConfig& cfg, const std::string& out_root) {
  check(n_subjects >= 1 && sessions_per_subject >= 1, "need at least one subject and session");
  cfg.validate();

  SynthConfig session_cfg = cfg;
  session_cfg.channels = cfg.channels.empty() ? build_channel_models(cfg) : cfg.channels;

  std::vector<std::string> dirs;
  char buf[64];
  for (int s = 0; s < n_subjects; ++s) {
    std::snprintf(buf, sizeof(buf), "subj%02d", s);
    const std::string subject = buf;
    for (int r = 0; r < sessions_per_subject; ++r) {
      std::snprintf(buf, sizeof(buf), "%s_sess%02d", subject.c_str(), r);
      const std::string session_id = buf;
      const fs::path dir = fs::path(out_root) / session_id;
      check(!fs::exists(dir / "meta.json"), "output path collision: " + dir.string());

      const std::string action =
          synth_actions()[static_cast<std::size_t>(r) % synth_actions().size()];
      const std::uint64_t traj_seed = derive_seed(cfg.seed, "traj/" + session_id);
      const std::int64_t per_label = cfg.csi_rate_hz / cfg.label_fps;

      Session session;
      session.meta.subject_id = subject;
      session.meta.session_id = session_id;
      session.meta.action = action;
      session.meta.csi_rate_hz = cfg.csi_rate_hz;
      session.meta.label_fps = cfg.label_fps;
      session.meta.channels = cfg.channel_count;

      auto poses = gen_trajectory(action, cfg.ticks_per_session, traj_seed, per_label);
      session_cfg.seed = derive_seed(cfg.seed, "noise/" + session_id);
      session.csi = gen_csi_from_pose(poses, session_cfg);
      session.labels.samples = std::move(poses);

      save_session(dir.string(), session);
      dirs.push_back(dir.string());
    }
  }
  return dirs;
}

}  // namespace wiflow
