#pragma once

// Physics-flavored synthetic generator: parametric skeletal motions drive
// multipath lengths, and channel responses H(k,t) = H_s + sum_n alpha_n *
// exp(-j*2*pi*d_n(t)/lambda) yield amplitude streams paired with the poses.

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "wiflow/dataset.hpp"
#include "wiflow/labels.hpp"
#include "wiflow/tensor.hpp"

namespace wiflow {

// One propagation path: its length is an affine function of the driven
// keypoint coordinates, d(t) = base_length + sum_j ax_j*x_j(t) + ay_j*y_j(t).
struct PathSpec {
  double alpha = 0.3;  // attenuation magnitude
  double base_length = 3.0;
  struct Coupling {
    int joint = 0;
    double ax = 0.0;
    double ay = 0.0;
  };
  std::vector<Coupling> couplings;
};

struct ChannelModel {
  std::complex<double> h_static{1.0, 0.0};
  std::vector<PathSpec> paths;
};

struct SynthConfig {
  double wavelength = 0.06;  // meters, c / 5 GHz
  double noise_std = 0.005;  // additive Gaussian on amplitude
  std::int64_t ticks_per_session = 2400;
  std::int64_t csi_rate_hz = 600;
  std::int64_t label_fps = 30;
  std::uint64_t seed = 1;

  // random channel-model construction (used when `channels` is empty)
  int channel_count = 540;
  int paths_per_channel = 2;
  double alpha_min = 0.15, alpha_max = 0.40;
  double static_mag_min = 0.8, static_mag_max = 1.2;
  // coupling coefficient magnitudes keep path excursions within ~lambda/2 so
  // the amplitude varies smoothly with pose
  double coupling_min = 0.004, coupling_max = 0.02;

  std::vector<ChannelModel> channels;  // explicit models override the above

  void validate() const;
};

// The eight supported motion tags.
const std::vector<std::string>& synth_actions();

// Smooth 15-keypoint trajectories at label_fps covering duration_ticks CSI
// ticks (floor(duration_ticks / packets_per_label) frames). Bone lengths stay
// constant per trajectory; deterministic per seed. Throws on unknown tags.
std::vector<PoseSample> gen_trajectory(const std::string& action, std::int64_t duration_ticks,
                                       std::uint64_t seed, std::int64_t packets_per_label = 20);

// Deterministic channel models for the config's RNG seed.
std::vector<ChannelModel> build_channel_models(const SynthConfig& cfg);

// Amplitudes C x (frames * packets_per_label); poses interpolate linearly to
// the CSI tick rate between label frames.
Tensor<float> gen_csi_from_pose(const std::vector<PoseSample>& poses, const SynthConfig& cfg);

// Emits n_subjects x sessions_per_subject portable session directories under
// out_root, cycling through the action tags. Channel couplings are shared
// across the dataset; trajectories are per-session. Throws if a target
// session directory already exists.
std::vector<std::string> make_dataset(int n_subjects, int sessions_per_subject,
                                      const SynthConfig& cfg, const std::string& out_root);

}  // namespace wiflow
