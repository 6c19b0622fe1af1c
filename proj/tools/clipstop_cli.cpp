// clipstop command-line front end: synth, train, eval, inspect.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "clipstop/clipstop.hpp"

namespace fs = std::filesystem;
using namespace clipstop;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kCapability = 4 };

struct Common {
  std::string config_path;
  std::vector<std::string> sets;  // section.key=value
};

RunConfig resolve(const Common& c) {
  RunConfig rc = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    set_config_value(rc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return rc;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot write '" + p.string() + "'");
  return os;
}

void write_snapshot(const fs::path& dir, const RunConfig& rc) {
  auto os = open_out(dir / "config.snapshot");
  write_config_snapshot(os, rc);
}

// -- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::string preset;
  std::optional<int> D;
  std::optional<int> n_studies;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const Common& common, const SynthArgs& a) {
  RunConfig rc = resolve(common);
  if (!a.preset.empty()) {
    const SynthConfig p = synth_preset(a.preset, rc.synth.n_studies, rc.synth.seed);
    rc.synth = p;
    // Explicit --set values win over the preset.
    for (const auto& kv : common.sets)
      if (kv.rfind("synth.", 0) == 0) set_config_value(rc, kv.substr(0, kv.find('=')), kv.substr(kv.find('=') + 1));
  }
  if (a.D) rc.synth.D = *a.D;
  if (a.n_studies) rc.synth.n_studies = *a.n_studies;
  if (a.seed) rc.synth.seed = *a.seed;
  if (rc.synth.D <= 0) throw ConfigError("synth: D is required (--D or [synth] D)");
  const auto m = generate_synthetic(rc.synth);
  write_dataset(a.out, m);
  std::cout << "wrote " << m.studies.size() << " studies (D=" << m.D << ") to " << a.out << "\n";
  return kOk;
}

// -- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out_dir;
  std::optional<long> timesteps;
  std::string mode;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  std::optional<long> stop_after;
};

int cmd_train(const Common& common, const TrainArgs& a) {
  RunConfig rc;
  fs::path dir;
  if (a.resume) {
    if (a.out_dir.empty()) throw ConfigError("--resume needs --out-dir");
    dir = a.out_dir;
    rc = load_run_config((dir / "config.snapshot").string());
  } else {
    rc = resolve(common);
    if (!a.data.empty()) rc.dataset = a.data;
    if (!a.out_dir.empty()) rc.out_dir = a.out_dir;
    if (a.timesteps) rc.train.ppo.total_timesteps = *a.timesteps;
    if (!a.mode.empty()) rc.train.mode = parse_agent_mode(a.mode);
    if (a.seed) rc.seed = *a.seed;
    if (rc.dataset.empty()) throw ConfigError("train: a dataset is required (--data or [run] dataset)");
    dir = rc.out_dir;
  }
  rc.train.ppo.validate();
  const auto data = load_dataset(rc.dataset);
  fs::create_directories(dir);

  Trainer trainer(data, rc.train, rc.seed);
  const fs::path ckpt_path = dir / "checkpoint.bin";
  if (a.resume) {
    const auto ck = load_checkpoint(ckpt_path.string());
    if (!ck.trainer_state) throw ValidationError("checkpoint in '" + dir.string() + "' holds no resumable trainer state");
    trainer.load_state(*ck.trainer_state);
  } else {
    write_snapshot(dir, rc);
  }

  long ran = 0;
  while (!trainer.done() && (!a.stop_after || ran < *a.stop_after)) {
    const auto row = trainer.run_iteration();
    ++ran;
    std::cerr << "iter " << row.iteration << "/" << rc.train.ppo.iterations() << " reward " << row.mean_episode_reward
              << " length " << row.mean_episode_length << "\n";
  }

  {
    auto log = open_out(dir / "train_log.csv");
    write_train_log_header(log);
    for (const auto& r : trainer.log()) write_train_log_row(log, r);
  }
  Checkpoint ck{data.D, trainer.nets(), trainer.init(), data.class_prior, rc.train.max_clips, std::nullopt};
  if (!trainer.done()) ck.trainer_state = trainer.save_state();
  save_checkpoint(ckpt_path.string(), ck);
  std::cout << (trainer.done() ? "finished" : "paused") << " after " << trainer.iteration() << " iterations; checkpoint "
            << ckpt_path.string() << "\n";
  return kOk;
}

// -- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string out_dir;
  std::string checkpoint, ab1, ab2;
  std::string policies;
  std::optional<int> seeds;
  std::optional<std::uint64_t> seed;
  bool fig2 = false;
};

int cmd_eval(const Common& common, const EvalArgs& a) {
  RunConfig rc = resolve(common);
  if (!a.data.empty()) rc.dataset = a.data;
  if (!a.out_dir.empty()) rc.out_dir = a.out_dir;
  if (!a.checkpoint.empty()) rc.checkpoint = a.checkpoint;
  if (!a.ab1.empty()) rc.ab1_checkpoint = a.ab1;
  if (!a.ab2.empty()) rc.ab2_checkpoint = a.ab2;
  if (!a.policies.empty()) set_config_value(rc, "eval.policies", a.policies);
  if (a.seeds) rc.eval.n_seeds = *a.seeds;
  if (a.seed) rc.eval.master_seed = *a.seed;
  if (rc.dataset.empty()) throw ConfigError("eval: a dataset is required (--data or [run] dataset)");

  const auto data = load_dataset(rc.dataset);
  auto wants = [&](const char* p) {
    return std::find(rc.eval.policies.begin(), rc.eval.policies.end(), p) != rc.eval.policies.end();
  };
  std::optional<Checkpoint> ours, ab1, ab2;
  auto load_if = [&](const char* policy, const std::string& path, std::optional<Checkpoint>& slot) {
    if (!wants(policy)) return;
    if (path.empty()) throw ConfigError(std::string("policy '") + policy + "' needs a checkpoint path");
    slot = load_checkpoint(path);
  };
  load_if("ours", rc.checkpoint, ours);
  load_if("ab1", rc.ab1_checkpoint, ab1);
  load_if("ab2", rc.ab2_checkpoint, ab2);
  EvalCheckpoints ck{ours ? &*ours : nullptr, ab1 ? &*ab1 : nullptr, ab2 ? &*ab2 : nullptr};

  const auto reports = evaluate(data, rc.eval, ck);
  const fs::path dir = rc.out_dir;
  fs::create_directories(dir);
  write_snapshot(dir, rc);
  {
    auto os = open_out(dir / "eval_summary.csv");
    write_summary_csv(os, reports);
  }
  {
    auto os = open_out(dir / "traces.csv");
    write_traces_csv(os, data, reports);
  }
  {
    auto os = open_out(dir / "fig3.csv");
    write_fig3_csv(os, data, reports);
  }
  if (a.fig2) {
    auto os = open_out(dir / "fig2.csv");
    write_fig2_csv(os, data, reports);
  }
  std::cout.precision(4);
  std::cout << "policy          AUC     Sens    Spec    Cost%   | uncertain AUC  Cost%\n";
  for (const auto& r : reports) {
    std::cout << r.policy << std::string(16 - std::min<std::size_t>(15, r.policy.size()), ' ') << r.mean_all.auc << "  "
              << r.mean_all.sens << "  " << r.mean_all.spec << "  " << r.mean_all.cost_pct << "   | " << r.mean_uncertain.auc
              << "  " << r.mean_uncertain.cost_pct << "\n";
  }
  return kOk;
}

// -- inspect ----------------------------------------------------------------

int cmd_inspect(const std::string& path) {
  const auto m = load_dataset(path);
  std::array<long, kNumViews> per_view{};
  std::size_t max_clips = 0, min_clips = SIZE_MAX;
  long scored = 0, with_probs = 0;
  for (const auto& s : m.studies) {
    max_clips = std::max(max_clips, s.clips.size());
    min_clips = std::min(min_clips, s.clips.size());
    for (const auto& c : s.clips) {
      ++per_view[static_cast<std::size_t>(view_index(c.view))];
      scored += c.clip_score.has_value();
      with_probs += c.view_probs.has_value();
    }
  }
  const long total = static_cast<long>(m.total_clips());
  std::cout << "studies      " << m.studies.size() << "\n"
            << "D            " << m.D << "\n"
            << "labels       " << m.count_label(0) << " control, " << m.count_label(1) << " disease (p1 = " << m.class_prior.p1
            << ")\n"
            << "clips        " << total << " (per study " << min_clips << ".." << max_clips << ")\n";
  for (int v = 0; v < kNumViews; ++v)
    std::cout << "  " << to_string(kAllViews[static_cast<std::size_t>(v)]) << std::string(11 - to_string(kAllViews[static_cast<std::size_t>(v)]).size(), ' ')
              << per_view[static_cast<std::size_t>(v)] << "\n";
  std::cout << "clip_score   " << scored << "/" << total << "\n"
            << "view_probs   " << with_probs << "/" << total << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clipstop: learning when to stop requesting echo clips"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "INI configuration file");
    sub->add_option("--set", common.sets, "override a config entry (section.key=value)");
  };

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--out", sa.out, "output dataset file")->required();
  synth->add_option("--preset", sa.preset, "informative-a4c or identical-views");
  synth->add_option("--D", sa.D, "embedding dimension");
  synth->add_option("--n-studies", sa.n_studies, "number of studies");
  synth->add_option("--seed", sa.seed, "generator seed");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train an agent");
  add_common(train);
  train->add_option("--data", ta.data, "training dataset");
  train->add_option("--out-dir", ta.out_dir, "run directory");
  train->add_option("--timesteps", ta.timesteps, "total environment steps");
  train->add_option("--mode", ta.mode, "full, AB1 or AB2");
  train->add_option("--seed", ta.seed, "master seed");
  train->add_flag("--resume", ta.resume, "continue the paused run in --out-dir");
  train->add_option("--stop-after-iterations", ta.stop_after, "pause after this many iterations");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate policies and baselines");
  add_common(eval);
  eval->add_option("--data", ea.data, "evaluation dataset");
  eval->add_option("--out-dir", ea.out_dir, "report directory");
  eval->add_option("--checkpoint", ea.checkpoint, "full-mode checkpoint");
  eval->add_option("--ab1", ea.ab1, "AB1 checkpoint");
  eval->add_option("--ab2", ea.ab2, "AB2 checkpoint");
  eval->add_option("--policies", ea.policies, "comma-separated policy names");
  eval->add_option("--seeds", ea.seeds, "number of evaluation seeds");
  eval->add_option("--seed", ea.seed, "master evaluation seed");
  eval->add_flag("--export-fig2", ea.fig2, "also write fig2.csv");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "print dataset statistics");
  inspect->add_option("data", inspect_path, "dataset file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*synth) return cmd_synth(common, sa);
    if (*train) return cmd_train(common, ta);
    if (*eval) return cmd_eval(common, ea);
    if (*inspect) return cmd_inspect(inspect_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const CapabilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCapability;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}
