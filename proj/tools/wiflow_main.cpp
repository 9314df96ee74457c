// wiflow: single entry point for capture parsing, synthetic data generation,
// label cleaning, training, evaluation, gradient checking and model
// inspection. Every flag has a config-file equivalent under the same dotted
// key; explicit flags override file values. Exit codes: 0 success, 1 runtime
// failure, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wiflow/csi.hpp"
#include "wiflow/dataset.hpp"
#include "wiflow/gradaudit.hpp"
#include "wiflow/labels.hpp"
#include "wiflow/losses.hpp"
#include "wiflow/model.hpp"
#include "wiflow/skeleton.hpp"
#include "wiflow/synth.hpp"
#include "wiflow/tape.hpp"
#include "wiflow/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wiflow;

namespace {

bool g_verbose = false;

void info(const std::string& msg) {
  if (g_verbose) std::cerr << "[wiflow] " << msg << "\n";
}

json load_json_file(const std::string& path) {
  std::ifstream is(path);
  check(static_cast<bool>(is), "cannot open " + path);
  json j;
  is >> j;
  return j;
}

// Flag values arrive as strings; config files carry typed JSON. Parse the
// string as JSON when possible so numbers/bools/arrays line up either way.
json parse_value(const std::string& s) {
  json v = json::parse(s, nullptr, /*allow_exceptions=*/false);
  if (v.is_discarded()) return json(s);
  return v;
}

std::string shape_x(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out;
}

void reject_unknown_keys(const json& cfg, const std::vector<std::string>& allowed,
                         const std::string& command) {
  for (const auto& item : cfg.items()) {
    bool ok = false;
    for (const auto& k : allowed) ok = ok || k == item.key();
    check(ok, command + " config: unknown key '" + item.key() + "'");
  }
}

// ----------------------------------------------------------------- parse

struct ParseArgs {
  std::vector<std::string> inputs;
  std::string layout, out, labels;
  std::string subject = "subj00", session = "sess00", action = "unknown";
  std::int64_t csi_rate = 600, fps = 30;
};

int cmd_parse(const ParseArgs& a) {
  check(!a.inputs.empty(), "parse: at least one --in capture is required");
  check(!a.out.empty(), "parse: --out session directory is required");

  LinkLayout layout =
      a.layout.empty() ? LinkLayout::standard() : LinkLayout::from_json(load_json_file(a.layout));
  layout.validate();
  const std::vector<int> receivers = layout.receivers();
  check(a.inputs.size() == receivers.size(),
        "parse: the layout names " + std::to_string(receivers.size()) +
            " receivers, so exactly that many --in captures are required (got " +
            std::to_string(a.inputs.size()) + ")");

  json per_capture = json::array();
  std::vector<std::vector<CsiFrame>> streams;
  for (std::size_t i = 0; i < a.inputs.size(); ++i) {
    ParseReport rep;
    const std::vector<BfeeRecord> records = parse_dat_file(a.inputs[i], &rep);
    if (!rep.error.empty())
      std::cerr << "warning: " << a.inputs[i] << ": " << rep.error
                << " (continuing with the records parsed so far)\n";
    check(rep.parsed > 0, "parse: no beamforming records found in " + a.inputs[i]);
    std::vector<CsiFrame> frames;
    frames.reserve(records.size());
    for (const BfeeRecord& r : records) {
      CsiFrame f = decode_bfee(r);
      f.receiver_id = receivers[i];
      frames.push_back(std::move(f));
    }
    info(a.inputs[i] + ": " + std::to_string(rep.parsed) + " records");
    per_capture.push_back(json{{"file", a.inputs[i]},
                               {"receiver", receivers[i]},
                               {"parsed", rep.parsed},
                               {"skipped_non_bfee", rep.skipped_non_bfee},
                               {"invalid_records", rep.invalid_records},
                               {"truncated", rep.truncated}});
    streams.push_back(std::move(frames));
  }

  std::size_t n_ticks = streams[0].size();
  for (const auto& s : streams) n_ticks = std::min(n_ticks, s.size());
  std::int64_t dropped = 0;
  for (const auto& s : streams) dropped += static_cast<std::int64_t>(s.size() - n_ticks);

  std::vector<std::vector<float>> ticks;
  ticks.reserve(n_ticks);
  std::int64_t unfused = 0;
  for (std::size_t t = 0; t < n_ticks; ++t) {
    std::map<int, CsiFrame> by_receiver;
    for (std::size_t i = 0; i < streams.size(); ++i) by_receiver[receivers[i]] = streams[i][t];
    if (auto fused = assemble_links(by_receiver, layout))
      ticks.push_back(std::move(*fused));
    else
      ++unfused;
  }
  check(!ticks.empty(), "parse: no tick could be fused against the layout");

  Session session;
  session.meta.subject_id = a.subject;
  session.meta.session_id = a.session;
  session.meta.action = a.action;
  session.meta.csi_rate_hz = a.csi_rate;
  session.meta.label_fps = a.fps;
  session.meta.channels = static_cast<std::int64_t>(ticks[0].size());
  const auto n = static_cast<std::int64_t>(ticks.size());
  session.csi = Tensor<float>::zeros({session.meta.channels, n});
  for (std::int64_t t = 0; t < n; ++t)
    for (std::int64_t c = 0; c < session.meta.channels; ++c)
      session.csi.flat()[c * n + t] = ticks[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)];
  if (!a.labels.empty()) session.labels = load_labels(a.labels);
  save_session(a.out, session);

  json summary{{"session_dir", a.out},
               {"ticks", n},
               {"dropped_tail_records", dropped},
               {"unfused_ticks", unfused},
               {"channels", session.meta.channels},
               {"captures", per_capture}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ----------------------------------------------------------------- synth

struct SynthArgs {
  std::int64_t subjects = 2, sessions = 4, ticks = 12000;
  std::uint64_t seed = 7;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  check(!a.out.empty(), "synth: --out directory is required");
  SynthConfig cfg;
  cfg.ticks_per_session = a.ticks;
  cfg.seed = a.seed;
  const auto dirs = make_dataset(static_cast<int>(a.subjects), static_cast<int>(a.sessions), cfg,
                                 a.out);
  json summary{{"root", a.out}, {"sessions", dirs}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ----------------------------------------------------------- clean-labels

struct CleanArgs {
  std::string in, out, session = "session";
};

int cmd_clean_labels(const CleanArgs& a) {
  check(!a.in.empty() && !a.out.empty(), "clean-labels: --in and --out are required");
  LabelSequence seq = load_labels(a.in);
  seq.missing = detect_missing(seq);
  std::int64_t before = 0;
  for (const auto& frame : seq.missing)
    for (bool m : frame) before += m ? 1 : 0;
  LabelSequence cleaned = interpolate_missing(seq, a.session);
  cleaned.missing = detect_missing(cleaned);
  std::int64_t after = 0;
  for (const auto& frame : cleaned.missing)
    for (bool m : frame) after += m ? 1 : 0;
  save_labels(a.out, cleaned);
  json summary{{"frames", cleaned.samples.size()},
               {"missing_before", before},
               {"missing_after", after},
               {"out", a.out}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ----------------------------------------------------------------- train

int cmd_train(const std::string& data_dir, const std::string& out_dir, const json& merged) {
  check(!data_dir.empty(), "train: --data (or config key io.data) is required");
  check(!out_dir.empty(), "train: --out (or config key io.out) is required");
  const TrainConfig cfg = TrainConfig::from_json(merged);
  const std::vector<Session> sessions = load_dataset(data_dir);
  info("loaded " + std::to_string(sessions.size()) + " sessions from " + data_dir);
  TrainResult res = train(sessions, cfg, out_dir);
  json summary{{"run_dir", out_dir},
               {"epochs_logged", res.history.empty() ? 0 : res.history.back().epoch},
               {"steps", res.steps_taken},
               {"skipped_steps", res.steps_skipped},
               {"best_val_mpjpe", res.best_val_mpjpe},
               {"best_checkpoint", res.best_checkpoint.string()},
               {"last_checkpoint", res.last_checkpoint.string()}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
  std::string ckpt, data, split_file;
  std::string part = "test";
};

int cmd_eval(const EvalArgs& a) {
  check(!a.ckpt.empty(), "eval: --ckpt is required");
  check(!a.data.empty(), "eval: --data is required");
  std::vector<Session> sessions = load_dataset(a.data);
  if (!a.split_file.empty()) {
    const json manifest = load_json_file(a.split_file);
    check(manifest.contains(a.part), "eval: split file has no '" + a.part + "' entry");
    std::vector<Session> kept;
    for (const auto& id : manifest.at(a.part)) {
      const std::string want = id.get<std::string>();
      bool found = false;
      for (const Session& s : sessions)
        if (s.meta.session_id == want) {
          kept.push_back(s);
          found = true;
          break;
        }
      check(found, "eval: split names session '" + want + "' which is not under " + a.data);
    }
    check(!kept.empty(), "eval: the '" + a.part + "' part of the split is empty");
    sessions = std::move(kept);
  }
  const MetricReport report = evaluate(a.ckpt, sessions);
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------- gradcheck

template <typename S>
int run_gradcheck(std::int64_t seeds, double eps, double threshold) {
  const std::map<std::string, double> worst = gradient_audit<S>(seeds, eps);
  double overall = 0.0;
  for (const auto& [layer, err] : worst) {
    std::printf("%-34s max rel err %.3e\n", layer.c_str(), err);
    overall = std::max(overall, err);
  }
  const bool ok = overall < threshold;
  std::printf("%-34s max rel err %.3e -> %s (threshold %.1e, %lld seeds)\n", "overall", overall,
              ok ? "OK" : "FAIL", threshold, static_cast<long long>(seeds));
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------- inspect

int cmd_inspect(const std::string& config_path) {
  TrainConfig tc;
  if (!config_path.empty()) tc = TrainConfig::from_json(load_json_file(config_path));
  const WiFlowConfig& cfg = tc.model;

  ParameterStore<float> ps = init_model<float>(cfg, 0);
  std::vector<ShapeTraceEntry> trace;
  Tensor<float> probe = Tensor<float>::zeros({1, cfg.input_channels, cfg.window_T});
  forward(cfg, ps, probe, /*training=*/false, &trace);

  std::printf("%-22s %s\n", "Layer", "Output size");
  for (const auto& e : trace) std::printf("%-22s %s\n", e.name.c_str(), shape_x(e.shape).c_str());
  const std::int64_t n_params = count_params(cfg);
  const std::int64_t macs = count_flops(cfg);
  std::printf("\nTrainable parameters: %lld (%.2f M)\n", static_cast<long long>(n_params),
              static_cast<double>(n_params) / 1e6);
  std::printf("MACs per window:      %lld (%.3f G)\n", static_cast<long long>(macs),
              static_cast<double>(macs) / 1e9);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wiflow: continuous human pose estimation from WiFi CSI"};
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", g_verbose, "log progress to stderr");

  // parse
  ParseArgs pa;
  std::string pa_config;
  auto* parse_cmd = app.add_subcommand("parse", "convert raw .dat captures into a session dir");
  auto* pa_in = parse_cmd->add_option("--in", pa.inputs, "capture file, once per receiver");
  auto* pa_layout = parse_cmd->add_option("--layout", pa.layout, "link layout json");
  auto* pa_out = parse_cmd->add_option("--out", pa.out, "session directory to write");
  auto* pa_labels = parse_cmd->add_option("--labels", pa.labels, "labels.csv to bundle");
  auto* pa_subject = parse_cmd->add_option("--subject", pa.subject, "subject id");
  auto* pa_session = parse_cmd->add_option("--session", pa.session, "session id");
  auto* pa_action = parse_cmd->add_option("--action", pa.action, "action label");
  auto* pa_rate = parse_cmd->add_option("--csi-rate", pa.csi_rate, "CSI packet rate (Hz)");
  auto* pa_fps = parse_cmd->add_option("--fps", pa.fps, "label frame rate");
  parse_cmd->add_option("--config", pa_config, "flat json config");

  // synth
  SynthArgs sa;
  std::string sa_config;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  auto* sa_subjects = synth_cmd->add_option("--subjects", sa.subjects, "number of subjects");
  auto* sa_sessions = synth_cmd->add_option("--sessions", sa.sessions, "sessions per subject");
  auto* sa_ticks = synth_cmd->add_option("--ticks", sa.ticks, "CSI ticks per session");
  auto* sa_seed = synth_cmd->add_option("--seed", sa.seed, "generator seed");
  auto* sa_out = synth_cmd->add_option("--out", sa.out, "dataset root to write");
  synth_cmd->add_option("--config", sa_config, "flat json config");

  // clean-labels
  CleanArgs ca;
  std::string ca_config;
  auto* clean_cmd = app.add_subcommand("clean-labels", "interpolate missing keypoints");
  auto* ca_in = clean_cmd->add_option("--in", ca.in, "labels.csv to clean");
  auto* ca_out = clean_cmd->add_option("--out", ca.out, "cleaned labels.csv");
  auto* ca_session = clean_cmd->add_option("--session", ca.session, "session id for diagnostics");
  clean_cmd->add_option("--config", ca_config, "flat json config");

  // train
  std::string tr_data, tr_out, tr_config, tr_split, tr_subject;
  std::map<std::string, std::string> tr_overrides;
  std::map<std::string, CLI::Option*> tr_opts;
  auto* train_cmd = app.add_subcommand("train", "train a model and log metrics");
  auto* tr_data_opt = train_cmd->add_option("--data", tr_data, "dataset root");
  auto* tr_out_opt = train_cmd->add_option("--out", tr_out, "run directory");
  train_cmd->add_option("--config", tr_config, "flat json config");
  auto* tr_split_opt =
      train_cmd->add_option("--split", tr_split, "random|loso (alias for --split.mode)");
  auto* tr_subject_opt = train_cmd->add_option("--test-subject", tr_subject,
                                               "alias for --split.test_subject");
  {
    const json defaults = TrainConfig{}.to_json();
    for (const auto& item : defaults.items()) {
      const std::string& key = item.key();
      tr_opts[key] = train_cmd->add_option("--" + key, tr_overrides[key],
                                           "config key (default " + item.value().dump() + ")");
    }
  }

  // eval
  EvalArgs ea;
  std::string ea_config;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* ea_ckpt = eval_cmd->add_option("--ckpt", ea.ckpt, "checkpoint file");
  auto* ea_data = eval_cmd->add_option("--data", ea.data, "dataset root");
  auto* ea_split = eval_cmd->add_option("--split-file", ea.split_file, "split manifest json");
  auto* ea_part = eval_cmd->add_option("--part", ea.part, "train|val|test (default test)");
  eval_cmd->add_option("--config", ea_config, "flat json config");

  // gradcheck
  std::int64_t gc_bits = 64, gc_seeds = 3;
  std::string gc_config;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  auto* gc_bits_opt = gc_cmd->add_option("--bits", gc_bits, "scalar width: 32 or 64");
  auto* gc_seeds_opt = gc_cmd->add_option("--seeds", gc_seeds, "random seeds to sweep");
  gc_cmd->add_option("--config", gc_config, "flat json config");

  // inspect
  std::string in_config;
  auto* inspect_cmd = app.add_subcommand("inspect", "print the shape trace and budgets");
  inspect_cmd->add_option("--config", in_config, "flat json config (model.* keys)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (parse_cmd->parsed()) {
      if (!pa_config.empty()) {
        const json cfg = load_json_file(pa_config);
        reject_unknown_keys(cfg,
                            {"parse.in", "parse.layout", "parse.out", "parse.labels",
                             "parse.subject", "parse.session", "parse.action", "parse.csi_rate",
                             "parse.fps"},
                            "parse");
        if (!pa_in->count() && cfg.contains("parse.in"))
          pa.inputs = cfg.at("parse.in").get<std::vector<std::string>>();
        if (!pa_layout->count() && cfg.contains("parse.layout"))
          pa.layout = cfg.at("parse.layout").get<std::string>();
        if (!pa_out->count() && cfg.contains("parse.out"))
          pa.out = cfg.at("parse.out").get<std::string>();
        if (!pa_labels->count() && cfg.contains("parse.labels"))
          pa.labels = cfg.at("parse.labels").get<std::string>();
        if (!pa_subject->count() && cfg.contains("parse.subject"))
          pa.subject = cfg.at("parse.subject").get<std::string>();
        if (!pa_session->count() && cfg.contains("parse.session"))
          pa.session = cfg.at("parse.session").get<std::string>();
        if (!pa_action->count() && cfg.contains("parse.action"))
          pa.action = cfg.at("parse.action").get<std::string>();
        if (!pa_rate->count() && cfg.contains("parse.csi_rate"))
          pa.csi_rate = cfg.at("parse.csi_rate").get<std::int64_t>();
        if (!pa_fps->count() && cfg.contains("parse.fps"))
          pa.fps = cfg.at("parse.fps").get<std::int64_t>();
      }
      return cmd_parse(pa);
    }

    if (synth_cmd->parsed()) {
      if (!sa_config.empty()) {
        const json cfg = load_json_file(sa_config);
        reject_unknown_keys(
            cfg, {"synth.subjects", "synth.sessions", "synth.ticks", "synth.seed", "synth.out"},
            "synth");
        if (!sa_subjects->count() && cfg.contains("synth.subjects"))
          sa.subjects = cfg.at("synth.subjects").get<std::int64_t>();
        if (!sa_sessions->count() && cfg.contains("synth.sessions"))
          sa.sessions = cfg.at("synth.sessions").get<std::int64_t>();
        if (!sa_ticks->count() && cfg.contains("synth.ticks"))
          sa.ticks = cfg.at("synth.ticks").get<std::int64_t>();
        if (!sa_seed->count() && cfg.contains("synth.seed"))
          sa.seed = cfg.at("synth.seed").get<std::uint64_t>();
        if (!sa_out->count() && cfg.contains("synth.out"))
          sa.out = cfg.at("synth.out").get<std::string>();
      }
      return cmd_synth(sa);
    }

    if (clean_cmd->parsed()) {
      if (!ca_config.empty()) {
        const json cfg = load_json_file(ca_config);
        reject_unknown_keys(cfg, {"clean.in", "clean.out", "clean.session"}, "clean-labels");
        if (!ca_in->count() && cfg.contains("clean.in"))
          ca.in = cfg.at("clean.in").get<std::string>();
        if (!ca_out->count() && cfg.contains("clean.out"))
          ca.out = cfg.at("clean.out").get<std::string>();
        if (!ca_session->count() && cfg.contains("clean.session"))
          ca.session = cfg.at("clean.session").get<std::string>();
      }
      return cmd_clean_labels(ca);
    }

    if (train_cmd->parsed()) {
      json merged = json::object();
      if (!tr_config.empty()) merged = load_json_file(tr_config);
      if (merged.contains("io.data")) {
        if (!tr_data_opt->count()) tr_data = merged.at("io.data").get<std::string>();
        merged.erase("io.data");
      }
      if (merged.contains("io.out")) {
        if (!tr_out_opt->count()) tr_out = merged.at("io.out").get<std::string>();
        merged.erase("io.out");
      }
      for (auto& [key, opt] : tr_opts)
        if (opt->count() > 0) merged[key] = parse_value(tr_overrides[key]);
      if (tr_split_opt->count() > 0) {
        check(tr_split == "random" || tr_split == "loso" || tr_split == "random_session",
              "train: --split must be 'random' or 'loso'");
        merged["split.mode"] = tr_split == "random" ? "random_session" : tr_split;
      }
      if (tr_subject_opt->count() > 0) merged["split.test_subject"] = tr_subject;
      return cmd_train(tr_data, tr_out, merged);
    }

    if (eval_cmd->parsed()) {
      if (!ea_config.empty()) {
        const json cfg = load_json_file(ea_config);
        reject_unknown_keys(cfg, {"eval.ckpt", "eval.data", "eval.split_file", "eval.part"},
                            "eval");
        if (!ea_ckpt->count() && cfg.contains("eval.ckpt"))
          ea.ckpt = cfg.at("eval.ckpt").get<std::string>();
        if (!ea_data->count() && cfg.contains("eval.data"))
          ea.data = cfg.at("eval.data").get<std::string>();
        if (!ea_split->count() && cfg.contains("eval.split_file"))
          ea.split_file = cfg.at("eval.split_file").get<std::string>();
        if (!ea_part->count() && cfg.contains("eval.part"))
          ea.part = cfg.at("eval.part").get<std::string>();
      }
      return cmd_eval(ea);
    }

    if (gc_cmd->parsed()) {
      if (!gc_config.empty()) {
        const json cfg = load_json_file(gc_config);
        reject_unknown_keys(cfg, {"gradcheck.bits", "gradcheck.seeds"}, "gradcheck");
        if (!gc_bits_opt->count() && cfg.contains("gradcheck.bits"))
          gc_bits = cfg.at("gradcheck.bits").get<std::int64_t>();
        if (!gc_seeds_opt->count() && cfg.contains("gradcheck.seeds"))
          gc_seeds = cfg.at("gradcheck.seeds").get<std::int64_t>();
      }
      check(gc_seeds >= 1, "gradcheck: --seeds must be >= 1");
      if (gc_bits == 64) return run_gradcheck<double>(gc_seeds, 1e-6, 1e-4);
      if (gc_bits == 32) return run_gradcheck<float>(gc_seeds, 1e-2, 5e-2);
      fail("gradcheck: --bits must be 32 or 64");
    }

    if (inspect_cmd->parsed()) return cmd_inspect(in_config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
