#pragma once

// Training and evaluation loops: AdamW over shuffled mini-batches, per-epoch
// validation driving a plateau scheduler, best-checkpoint retention and a
// metrics.csv log with one row per epoch per split.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "wiflow/dataset.hpp"
#include "wiflow/losses.hpp"
#include "wiflow/metrics.hpp"
#include "wiflow/model.hpp"
#include "wiflow/optim.hpp"
#include "wiflow/split.hpp"

namespace wiflow {

struct TrainConfig {
  std::int64_t epochs = 50;
  std::int64_t batch_size = 64;
  std::int64_t max_steps = 0;  // optional cap on optimizer steps (0 = none)
  double lr = 1e-4;
  double weight_decay = 5e-5;
  double scheduler_factor = 0.5;
  std::int64_t scheduler_patience = 3;
  double scheduler_min_lr = 1e-7;
  std::uint64_t seed = 1;
  PairingOptions pairing;
  SplitSpec split;
  WiFlowConfig model;
  LossConfig loss;

  void validate() const;

  // Flat object with dotted keys ("train.lr", "model.tcn_groups", ...), the
  // same schema the command-line flags use. from_json rejects unknown keys.
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EvalOutcome {
  double loss_total = 0.0;
  double loss_h = 0.0;
  double loss_b = 0.0;
  MetricReport report;
};

// Fixed-order batched forward in eval mode; averages losses over examples.
EvalOutcome run_eval(const WiFlowConfig& model_cfg, ParameterStore<float>& params,
                     const SkeletonTopology& topo, const std::vector<Example>& examples,
                     const LossConfig& loss_cfg, std::int64_t batch_size);

struct EpochRow {
  std::int64_t epoch = 0;
  std::string split;
  EvalOutcome stats;
  double lr = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochRow& row);

struct TrainResult {
  std::vector<EpochRow> history;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  double best_val_mpjpe = 0.0;
  std::int64_t steps_taken = 0;
  std::int64_t steps_skipped = 0;
  SplitResult split;
};

// Splits the sessions, trains for cfg.epochs (or until cfg.max_steps), and
// writes config.json, split.json, metrics.csv, best.ckpt and last.ckpt into
// out_dir. epochs == 0 performs an evaluation-only pass with the freshly
// initialized weights and touches no parameter.
TrainResult train(const std::vector<Session>& sessions, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir);

// Restores a checkpoint (weights + config echo) and evaluates it on every
// given session.
MetricReport evaluate(const std::filesystem::path& checkpoint_path,
                      const std::vector<Session>& sessions);

}  // namespace wiflow
