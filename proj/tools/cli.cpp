#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "render.hpp"
#include "wmdrive/checkpoint.hpp"
#include "wmdrive/config.hpp"
#include "wmdrive/errors.hpp"
#include "wmdrive/eval.hpp"
#include "wmdrive/parallel.hpp"
#include "wmdrive/pipeline.hpp"
#include "wmdrive/scenario_io.hpp"

namespace wmdrive::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_file;
  std::vector<std::string> sets;
  int workers{-1};
};

void apply_user(RunConfig& cfg, const Globals& g) {
  if (!g.config_file.empty()) apply_config_file(cfg, g.config_file);
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (g.workers >= 0) cfg.workers = g.workers;
}

/// Defaults, then the config file, then --set flags.
RunConfig resolve(const Globals& g) {
  RunConfig cfg;
  apply_user(cfg, g);
  cfg.finalize();
  return cfg;
}

/// Starts from a checkpoint's config. Model shape and sensor stay pinned to the weights.
RunConfig resolve_from(const Checkpoint& ck, const Globals& g) {
  RunConfig cfg = ck.config;
  apply_user(cfg, g);
  cfg.model = ck.config.model;
  cfg.scenario.sensor = ck.config.scenario.sensor;
  cfg.scenario.horizon = ck.config.scenario.horizon;
  cfg.finalize();
  return cfg;
}

int workers_of(const RunConfig& cfg) { return cfg.workers > 0 ? cfg.workers : default_workers(); }

std::vector<Scenario> load_matching(const std::string& path, const RunConfig& cfg) {
  auto scs = read_scenarios(path);
  for (const auto& sc : scs) {
    if (!(sc.sensor == cfg.scenario.sensor) || sc.horizon() != cfg.model.horizon)
      throw ConfigError("scenario " + std::to_string(sc.seed) + " in " + path +
                        " was generated with a different sensor or horizon");
  }
  return scs;
}

std::string help_footer() {
  std::string s = "\nConfig file: one key=value per line, '#' comments. --set key=value overrides the file.\nKeys:\n";
  RunConfig def;
  const auto entries = config_entries(def);
  const auto docs = config_keys();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::string line = "  " + docs[i].key;
    line.resize(std::max<std::size_t>(line.size() + 1, 28), ' ');
    s += line + docs[i].help + " (default " + entries[i].second + ")\n";
  }
  s += "\nExit codes: 0 success, 2 usage, 3 I/O, 4 numerical failure.\n";
  return s;
}

int cmd_gen(const Globals& g, std::uint64_t seed, int count, const std::string& out_path, std::ostream& out) {
  if (count < 0) throw UsageError("--count must be non-negative");
  const RunConfig cfg = resolve(g);
  std::vector<Scenario> scs(static_cast<std::size_t>(count));
  parallel_for(scs.size(), workers_of(cfg),
               [&](std::size_t i) { scs[i] = build_scenario(seed + i, cfg.scenario); });
  const auto parent = std::filesystem::path(out_path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
    if (ec) throw IoError("cannot create " + parent.string() + ": " + ec.message());
  }
  write_scenarios(out_path, scs);
  write_config(cfg, out_path + ".config.txt");
  out << "wrote " << count << " scenarios to " << out_path << "\n";
  return kExitOk;
}

struct TrainArgs {
  int stage{0};
  std::string scenarios;
  std::string out_dir;
  std::string init;
  std::string resume;
  std::int64_t steps{-1};
  int checkpoint_every{0};
  bool quiet{false};
};

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  if (a.stage != 1 && a.stage != 2) throw UsageError("--stage must be 1 or 2");
  if (!a.init.empty() && !a.resume.empty()) throw UsageError("--init and --resume are exclusive");
  if (a.stage == 1 && !a.init.empty()) throw UsageError("--init applies to stage 2 only");
  if (a.stage == 2 && a.init.empty() && a.resume.empty())
    throw UsageError("stage 2 requires --init pointing at a stage-1 checkpoint");

  std::optional<Checkpoint> ck;
  RunConfig cfg;
  Model model;
  if (!a.resume.empty()) {
    ck = load_checkpoint(a.resume);
    if (ck->stage != a.stage) throw UsageError("--resume checkpoint is from stage " + std::to_string(ck->stage));
    cfg = resolve_from(*ck, g);
    model = ck->model;
  } else if (!a.init.empty()) {
    auto init = load_checkpoint(a.init);
    if (init.stage != 1) throw UsageError("--init must point at a stage-1 checkpoint");
    cfg = resolve_from(init, g);
    model = std::move(init.model);
  } else {
    cfg = resolve(g);
    model = init_model(cfg.model);
  }

  const auto scenarios = load_matching(a.scenarios, cfg);
  StageRun run;
  run.stage = a.stage;
  run.end_step = a.steps >= 0 ? a.steps : (a.stage == 1 ? cfg.train.stage1_steps : cfg.train.stage2_iters);
  run.out_dir = a.out_dir;
  run.checkpoint_every = a.checkpoint_every;
  run.resume = ck ? &*ck : nullptr;
  run.workers = workers_of(cfg);
  if (!a.quiet) run.progress = [&err](const std::string& row) { err << row << "\n"; };
  const auto step = run_stage(cfg, model, scenarios, run);
  out << "stage " << a.stage << " finished at step " << step << "; checkpoint "
      << checkpoint_path(a.out_dir).string() << "\n";
  return kExitOk;
}

Planner baseline_planner(const std::string& name, const RunConfig& cfg) {
  if (name == "zero" || name == "zero-motion") return zero_planner(cfg.model.horizon);
  if (name == "cv" || name == "constant-velocity") return constant_velocity_planner(cfg.model.horizon, cfg.scenario.frame_dt);
  if (name == "expert") return expert_planner();
  throw UsageError("unknown baseline '" + name + "' (zero, cv, expert)");
}

std::string canonical_baseline(const std::string& name) {
  if (name == "zero-motion") return "zero";
  if (name == "constant-velocity") return "cv";
  return name;
}

int cmd_eval(const Globals& g, const std::string& ckpt, const std::string& scen, const std::string& out_dir,
             const std::string& baseline, std::ostream& out) {
  if (ckpt.empty() == baseline.empty()) throw UsageError("eval needs exactly one of --ckpt or --baseline");
  std::optional<Checkpoint> ck;
  RunConfig cfg;
  if (!ckpt.empty()) {
    ck = load_checkpoint(ckpt);
    cfg = resolve_from(*ck, g);
  } else {
    cfg = resolve(g);
  }
  const auto scenarios = load_matching(scen, cfg);
  EvalReport report;
  if (ck) {
    report = run_suite(model_planner(ck->model, cfg.eval.window, cfg.eval.ode_steps, cfg.eval.seed), scenarios,
                       workers_of(cfg));
    report.planner = "model";
  } else {
    report = run_suite(baseline_planner(baseline, cfg), scenarios, workers_of(cfg));
    report.planner = canonical_baseline(baseline);
  }
  report.config_hash = config_hash(cfg);
  std::filesystem::create_directories(out_dir);
  write_report(report, out_dir);
  write_config(cfg, std::filesystem::path(out_dir) / "config.txt");
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s: %zu scenarios, aggregate %.4f, reward %.4f\n", report.planner.c_str(),
                report.rows.size(), report.mean_aggregate, report.mean_reward);
  out << buf;
  return kExitOk;
}

struct RolloutArgs {
  std::string ckpt;
  std::string scenarios;
  std::string out_dir;
  std::string baseline;
  int index{0};
  bool render{false};
  bool dump_forecasts{false};
};

int cmd_rollout(const Globals& g, const RolloutArgs& a, std::ostream& out) {
  if (a.ckpt.empty() == a.baseline.empty()) throw UsageError("rollout needs exactly one of --ckpt or --baseline");
  if (a.dump_forecasts && a.ckpt.empty()) throw UsageError("--dump-forecasts needs --ckpt");
  std::optional<Checkpoint> ck;
  RunConfig cfg;
  if (!a.ckpt.empty()) {
    ck = load_checkpoint(a.ckpt);
    cfg = resolve_from(*ck, g);
  } else {
    cfg = resolve(g);
  }
  const auto scenarios = load_matching(a.scenarios, cfg);
  if (a.index < 0 || a.index >= static_cast<int>(scenarios.size()))
    throw UsageError("--index " + std::to_string(a.index) + " out of range");
  const Scenario& sc = scenarios[static_cast<std::size_t>(a.index)];
  const Planner planner = ck ? model_planner(ck->model, cfg.eval.window, cfg.eval.ode_steps, cfg.eval.seed)
                             : baseline_planner(a.baseline, cfg);
  const Trajectory plan = planner(sc);
  const RolloutResult r = rollout_controller(sc, plan);
  write_rollout(sc, plan, r, a.out_dir, a.render);
  if (a.dump_forecasts)
    write_forecasts(ck->model, sc, cfg.eval.window, plan, std::filesystem::path(a.out_dir) / "forecasts.csv");
  write_config(cfg, std::filesystem::path(a.out_dir) / "config.txt");
  out << "rollout of scenario " << sc.seed << " written to " << a.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Desk-scale world-model driving planner: data, training, evaluation, rendering."};
  app.footer(help_footer());
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_file, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "override one config key (key=value), repeatable");
  app.add_option("--workers", g.workers, "worker threads (default: available cores)")->check(CLI::NonNegativeNumber);

  std::uint64_t gen_seed = 0;
  int gen_count = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-scenarios", "write seeded scenarios as JSONL");
  gen->add_option("--seed", gen_seed, "first seed");
  gen->add_option("--count", gen_count, "number of scenarios")->required();
  gen->add_option("--out", gen_out, "output JSONL file")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "run stage 1 (pretraining) or stage 2 (GRPO fine-tuning)");
  train->add_option("--stage", ta.stage, "1 or 2")->required();
  train->add_option("--scenarios", ta.scenarios, "training scenario JSONL")->required();
  train->add_option("--out", ta.out_dir, "output directory")->required();
  train->add_option("--init", ta.init, "stage-1 checkpoint to fine-tune (stage 2)");
  train->add_option("--resume", ta.resume, "continue an interrupted run of the same stage");
  train->add_option("--steps", ta.steps, "final step (default: train.stage1_steps / train.stage2_iters)");
  train->add_option("--checkpoint-every", ta.checkpoint_every, "also checkpoint every N steps");
  train->add_flag("--quiet", ta.quiet, "no progress lines on stderr");

  std::string ev_ckpt, ev_scen, ev_out, ev_base;
  auto* ev = app.add_subcommand("eval", "closed-loop evaluation on a scenario suite");
  ev->add_option("--ckpt", ev_ckpt, "model checkpoint");
  ev->add_option("--scenarios", ev_scen, "scenario JSONL")->required();
  ev->add_option("--out", ev_out, "output directory")->required();
  ev->add_option("--baseline", ev_base, "zero (zero-motion), cv (constant-velocity) or expert");

  RolloutArgs ra;
  auto* ro = app.add_subcommand("rollout", "roll one scenario and write its trace");
  ro->add_option("--ckpt", ra.ckpt, "model checkpoint");
  ro->add_option("--baseline", ra.baseline, "zero, cv or expert instead of a model");
  ro->add_option("--scenarios", ra.scenarios, "scenario JSONL")->required();
  ro->add_option("--index", ra.index, "scenario index in the file");
  ro->add_option("--out", ra.out_dir, "output directory")->required();
  ro->add_flag("--render", ra.render, "write one SVG per future frame");
  ro->add_flag("--dump-forecasts", ra.dump_forecasts, "write forecasts.csv");

  for (auto* sub : {gen, train, ev, ro}) sub->fallthrough();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(g, gen_seed, gen_count, gen_out, out);
    if (train->parsed()) return cmd_train(g, ta, out, err);
    if (ev->parsed()) return cmd_eval(g, ev_ckpt, ev_scen, ev_out, ev_base, out);
    if (ro->parsed()) return cmd_rollout(g, ra, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const LoadError& e) {
    err << "load error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitUsage;
}

}  // namespace wmdrive::cli
