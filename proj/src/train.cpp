#include "wiflow/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "wiflow/rng.hpp"
#include "wiflow/skeleton.hpp"
#include "wiflow/tape.hpp"

namespace wiflow {

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string mode_name(SplitSpec::Mode m) {
  return m == SplitSpec::Mode::loso ? "loso" : "random_session";
}

SplitSpec::Mode mode_from_name(const std::string& s) {
  if (s == "loso") return SplitSpec::Mode::loso;
  check(s == "random_session", "unknown split mode '" + s + "'");
  return SplitSpec::Mode::random_session;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  check(static_cast<bool>(os), "cannot write " + path.string());
  os << text;
  check(static_cast<bool>(os), "write failure on " + path.string());
}

}  // namespace

void TrainConfig::validate() const {
  check(epochs >= 0, "train config: epochs must be >= 0");
  check(batch_size >= 1, "train config: batch_size must be >= 1");
  check(max_steps >= 0, "train config: max_steps must be >= 0");
  check(lr >= 0.0, "train config: lr must be non-negative");
  check(weight_decay >= 0.0, "train config: weight_decay must be non-negative");
  check(scheduler_factor > 0.0 && scheduler_factor <= 1.0,
        "train config: scheduler_factor must lie in (0,1]");
  check(scheduler_patience >= 1, "train config: scheduler_patience must be >= 1");
  check(scheduler_min_lr > 0.0, "train config: scheduler_min_lr must be positive");
  check(pairing.window_T >= 1 && pairing.stride >= 1,
        "train config: window and stride must be >= 1");
  check(pairing.window_T == model.window_T,
        "train config: data.window must match model.window_T");
  split.validate();
  model.validate();
  loss.validate();
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j{
      {"train.epochs", epochs},
      {"train.batch_size", batch_size},
      {"train.max_steps", max_steps},
      {"train.lr", lr},
      {"train.weight_decay", weight_decay},
      {"train.scheduler_factor", scheduler_factor},
      {"train.scheduler_patience", scheduler_patience},
      {"train.scheduler_min_lr", scheduler_min_lr},
      {"train.seed", seed},
      {"data.window", pairing.window_T},
      {"data.stride", pairing.stride},
      {"data.normalize", pairing.normalize_windows},
      {"split.mode", mode_name(split.mode)},
      {"split.train_ratio", split.ratios[0]},
      {"split.val_ratio", split.ratios[1]},
      {"split.test_ratio", split.ratios[2]},
      {"split.test_subject", split.test_subject},
      {"split.pool_train_ratio", split.pool_train_ratio},
  };
  const nlohmann::json mj = model.to_json();
  const nlohmann::json lj = loss.to_json();
  for (const auto& item : mj.items()) j["model." + item.key()] = item.value();
  for (const auto& item : lj.items()) j["loss." + item.key()] = item.value();
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  nlohmann::json model_j = nlohmann::json::object();
  nlohmann::json loss_j = nlohmann::json::object();
  for (const auto& item : j.items()) {
    const std::string& k = item.key();
    const nlohmann::json& v = item.value();
    if (k.rfind("model.", 0) == 0) {
      model_j[k.substr(6)] = v;
    } else if (k.rfind("loss.", 0) == 0) {
      loss_j[k.substr(5)] = v;
    } else if (k == "train.epochs") {
      c.epochs = v.get<std::int64_t>();
    } else if (k == "train.batch_size") {
      c.batch_size = v.get<std::int64_t>();
    } else if (k == "train.max_steps") {
      c.max_steps = v.get<std::int64_t>();
    } else if (k == "train.lr") {
      c.lr = v.get<double>();
    } else if (k == "train.weight_decay") {
      c.weight_decay = v.get<double>();
    } else if (k == "train.scheduler_factor") {
      c.scheduler_factor = v.get<double>();
    } else if (k == "train.scheduler_patience") {
      c.scheduler_patience = v.get<std::int64_t>();
    } else if (k == "train.scheduler_min_lr") {
      c.scheduler_min_lr = v.get<double>();
    } else if (k == "train.seed") {
      c.seed = v.get<std::uint64_t>();
    } else if (k == "data.window") {
      c.pairing.window_T = v.get<std::int64_t>();
    } else if (k == "data.stride") {
      c.pairing.stride = v.get<std::int64_t>();
    } else if (k == "data.normalize") {
      c.pairing.normalize_windows = v.get<bool>();
    } else if (k == "split.mode") {
      c.split.mode = mode_from_name(v.get<std::string>());
    } else if (k == "split.train_ratio") {
      c.split.ratios[0] = v.get<double>();
    } else if (k == "split.val_ratio") {
      c.split.ratios[1] = v.get<double>();
    } else if (k == "split.test_ratio") {
      c.split.ratios[2] = v.get<double>();
    } else if (k == "split.test_subject") {
      c.split.test_subject = v.get<std::string>();
    } else if (k == "split.pool_train_ratio") {
      c.split.pool_train_ratio = v.get<double>();
    } else {
      fail("train config: unknown key '" + k + "'");
    }
  }
  c.model = WiFlowConfig::from_json(model_j);
  c.loss = LossConfig::from_json(loss_j);
  c.validate();
  return c;
}

EvalOutcome run_eval(const WiFlowConfig& model_cfg, ParameterStore<float>& params,
                     const SkeletonTopology& topo, const std::vector<Example>& examples,
                     const LossConfig& loss_cfg, std::int64_t batch_size) {
  check(!examples.empty(), "evaluation requires a non-empty example set");
  EvalOutcome out;
  std::vector<MetricReport> shards;
  double weight = 0.0;
  const std::int64_t n = static_cast<std::int64_t>(examples.size());
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t stop = std::min(n, start + batch_size);
    std::vector<std::size_t> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), static_cast<std::size_t>(start));
    Batch b = make_batch(examples, idx);
    Tensor<float> pred = forward(model_cfg, params, b.inputs, /*training=*/false);
    LossParts<float> parts = total_loss(pred, b.targets, topo, loss_cfg);
    const double w = static_cast<double>(stop - start);
    out.loss_total += w * static_cast<double>(parts.total[0]);
    out.loss_h += w * static_cast<double>(parts.keypoint[0]);
    out.loss_b += w * static_cast<double>(parts.bone[0]);
    weight += w;
    shards.push_back(evaluate_metrics(pred, b.targets, b.scales));
  }
  out.loss_total /= weight;
  out.loss_h /= weight;
  out.loss_b /= weight;
  out.report = merge_reports(shards);
  return out;
}

std::string metrics_csv_header() {
  return "epoch,split,loss_total,loss_h,loss_b,pck10,pck20,pck30,pck40,pck50,mpjpe,lr";
}

std::string metrics_csv_row(const EpochRow& row) {
  std::string s = std::to_string(row.epoch) + "," + row.split;
  for (double v : {row.stats.loss_total, row.stats.loss_h, row.stats.loss_b}) s += "," + fmt_g(v);
  for (int pct : {10, 20, 30, 40, 50}) s += "," + fmt_g(row.stats.report.pck.at(pct));
  s += "," + fmt_g(row.stats.report.mpjpe);
  s += "," + fmt_g(row.lr);
  return s;
}

TrainResult train(const std::vector<Session>& sessions, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir) {
  cfg.validate();
  check(!sessions.empty(), "train: no sessions given");
  const SkeletonTopology topo = SkeletonTopology::standard();

  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "config.json", cfg.to_json().dump(2) + "\n");

  std::vector<std::string> subjects, ids;
  for (const Session& s : sessions) {
    subjects.push_back(s.meta.subject_id);
    ids.push_back(s.meta.session_id);
  }
  TrainResult res;
  res.split = split_sessions(subjects, cfg.split, cfg.seed);
  write_text(out_dir / "split.json", res.split.to_json(ids).dump(2) + "\n");

  auto part = [&](const std::vector<std::size_t>& idxs) {
    std::vector<Session> subset;
    for (std::size_t i : idxs) subset.push_back(sessions[i]);
    return make_examples(subset, topo, cfg.pairing);
  };
  const std::vector<Example> train_ex = part(res.split.train);
  const std::vector<Example> val_ex = part(res.split.val);
  const std::vector<Example> test_ex = part(res.split.test);
  check(!train_ex.empty(), "train: the training split produced no examples");
  check(!val_ex.empty(), "train: the validation split produced no examples");

  ParameterStore<float> params = init_model<float>(cfg.model, cfg.seed);
  params.set_requires_grad_on_trainable();
  AdamW<float> opt(cfg.lr, cfg.weight_decay);
  PlateauScheduler sched(cfg.lr, cfg.scheduler_factor, static_cast<int>(cfg.scheduler_patience),
                         cfg.scheduler_min_lr);

  std::ofstream csv(out_dir / "metrics.csv");
  check(static_cast<bool>(csv), "cannot write metrics.csv in " + out_dir.string());
  csv << metrics_csv_header() << "\n";
  auto emit = [&](EpochRow row) {
    csv << metrics_csv_row(row) << "\n";
    csv.flush();
    res.history.push_back(std::move(row));
  };

  res.best_val_mpjpe = std::numeric_limits<double>::infinity();
  const std::filesystem::path best_path = out_dir / "best.ckpt";
  const std::filesystem::path last_path = out_dir / "last.ckpt";
  auto save = [&](const std::filesystem::path& p) {
    Checkpoint ck;
    ck.config_json = cfg.to_json().dump();
    ck.seed = cfg.seed;
    ck.params = params;
    save_checkpoint(p.string(), ck);
  };

  if (cfg.epochs == 0) {  // evaluation-only pass: report, touch nothing
    emit({0, "train", run_eval(cfg.model, params, topo, train_ex, cfg.loss, cfg.batch_size),
          sched.lr()});
    emit({0, "val", run_eval(cfg.model, params, topo, val_ex, cfg.loss, cfg.batch_size),
          sched.lr()});
    if (!test_ex.empty())
      emit({0, "test", run_eval(cfg.model, params, topo, test_ex, cfg.loss, cfg.batch_size),
            sched.lr()});
    save(last_path);
    res.last_checkpoint = last_path;
    return res;
  }

  const std::int64_t n_train = static_cast<std::int64_t>(train_ex.size());
  std::int64_t steps = 0;
  bool hit_cap = false;
  std::int64_t epoch = 0;
  for (epoch = 1; epoch <= cfg.epochs && !hit_cap; ++epoch) {
    std::vector<std::size_t> order(train_ex.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler = derive_rng(cfg.seed, "train/epoch-" + std::to_string(epoch));
    shuffler.shuffle(order);

    const double lr_epoch = sched.lr();
    opt.lr = lr_epoch;
    double lt = 0.0, lh = 0.0, lb = 0.0, weight = 0.0;
    std::vector<MetricReport> shards;
    std::int64_t batch_id = 0;
    for (std::int64_t start = 0; start < n_train; start += cfg.batch_size, ++batch_id) {
      const std::int64_t stop = std::min(n_train, start + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
      Batch b = make_batch(train_ex, idx);

      params.zero_grads();
      Tape<float> tape;
      Tensor<float> pred = forward(cfg.model, params, b.inputs, /*training=*/true);
      LossParts<float> parts = total_loss(pred, b.targets, topo, cfg.loss);
      const double loss_value = static_cast<double>(parts.total[0]);
      if (!std::isfinite(loss_value))
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(batch_id));
      tape.backward(parts.total);
      opt.step(params);

      const double w = static_cast<double>(stop - start);
      lt += w * loss_value;
      lh += w * static_cast<double>(parts.keypoint[0]);
      lb += w * static_cast<double>(parts.bone[0]);
      weight += w;
      shards.push_back(evaluate_metrics(pred, b.targets, b.scales));

      ++steps;
      if (cfg.max_steps > 0 && steps >= cfg.max_steps) {
        hit_cap = true;
        break;
      }
    }

    EpochRow trow;
    trow.epoch = epoch;
    trow.split = "train";
    trow.stats.loss_total = lt / weight;
    trow.stats.loss_h = lh / weight;
    trow.stats.loss_b = lb / weight;
    trow.stats.report = merge_reports(shards);
    trow.lr = lr_epoch;
    emit(trow);

    EvalOutcome val = run_eval(cfg.model, params, topo, val_ex, cfg.loss, cfg.batch_size);
    emit({epoch, "val", val, lr_epoch});

    if (val.report.mpjpe < res.best_val_mpjpe) {
      res.best_val_mpjpe = val.report.mpjpe;
      save(best_path);
      res.best_checkpoint = best_path;
    }
    sched.observe(val.report.mpjpe);
  }

  save(last_path);
  res.last_checkpoint = last_path;
  res.steps_taken = opt.steps_taken();
  res.steps_skipped = opt.steps_skipped();

  if (res.best_checkpoint.empty()) {  // every epoch diverged upward; keep last
    save(best_path);
    res.best_checkpoint = best_path;
  }
  if (!test_ex.empty()) {
    Checkpoint best = load_checkpoint(best_path.string());
    EvalOutcome t = run_eval(cfg.model, best.params, topo, test_ex, cfg.loss, cfg.batch_size);
    emit({epoch - 1, "test", t, sched.lr()});
  }
  return res;
}

MetricReport evaluate(const std::filesystem::path& checkpoint_path,
                      const std::vector<Session>& sessions) {
  Checkpoint ck = load_checkpoint(checkpoint_path.string());
  const TrainConfig cfg = TrainConfig::from_json(nlohmann::json::parse(ck.config_json));
  const SkeletonTopology topo = SkeletonTopology::standard();
  const std::vector<Example> examples = make_examples(sessions, topo, cfg.pairing);
  check(!examples.empty(), "evaluate: the given sessions produced no examples");
  return run_eval(cfg.model, ck.params, topo, examples, cfg.loss, cfg.batch_size).report;
}

}  // namespace wiflow
