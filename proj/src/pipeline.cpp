#include "wmdrive/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "wmdrive/errors.hpp"
#include "wmdrive/parallel.hpp"

namespace wmdrive {

std::filesystem::path checkpoint_path(const std::filesystem::path& dir) { return dir / "checkpoint.bin"; }

std::filesystem::path log_path(const std::filesystem::path& dir, int stage) {
  return dir / (stage == 1 ? "train_stage1.csv" : "train_stage2.csv");
}

namespace {

// Keeps the header and every row whose leading step is <= keep_until.
std::string truncated_log(const std::filesystem::path& path, const char* header, std::int64_t keep_until) {
  std::string out = std::string(header) + "\n";
  std::ifstream f(path);
  if (!f) return out;
  std::string line;
  std::getline(f, line);
  if (line != header) throw LoadError("log " + path.string() + " has an unexpected header");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::int64_t step = std::stoll(line.substr(0, line.find(',')));
    if (step <= keep_until) out += line + "\n";
  }
  return out;
}

void save_atomic(const std::filesystem::path& path, const RunConfig& cfg, const Model& model, int stage,
                 std::int64_t step, const nn::Adam& adam) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  save_checkpoint(tmp, cfg, model, stage, step, &adam);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

}  // namespace

std::int64_t run_stage(const RunConfig& cfg, Model& model, std::span<const Scenario> scenarios, const StageRun& run) {
  if (scenarios.empty()) throw InputError("no training scenarios");
  const int stage = run.stage;
  Trainer trainer(model, cfg.train, stage, run.workers);
  if (run.resume) {
    if (run.resume->stage != stage) throw ConfigError("--resume checkpoint belongs to another stage");
    restore_optimizer(*run.resume, trainer.optimizer());
    trainer.set_step(run.resume->step);
  }

  const bool files = !run.out_dir.empty();
  std::ofstream log;
  if (files) {
    std::filesystem::create_directories(run.out_dir);
    write_config(cfg, run.out_dir / "config.txt");
    const auto lp = log_path(run.out_dir, stage);
    const char* header = stage == 1 ? kStage1LogHeader : kStage2LogHeader;
    const std::string kept = truncated_log(lp, header, run.resume ? trainer.step() : 0);
    log.open(lp, std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot write " + lp.string());
    log << kept;
  }

  std::vector<PreparedStage1> d1(stage == 1 ? scenarios.size() : 0);
  std::vector<PreparedStage2> d2(stage == 2 ? scenarios.size() : 0);
  parallel_for(scenarios.size(), run.workers, [&](std::size_t i) {
    if (stage == 1)
      d1[i] = prepare_stage1(model, make_stage1_sample(scenarios[i], cfg.train.window1, cfg.model.horizon));
    else
      d2[i] = prepare_stage2(model, make_stage2_sample(scenarios[i], cfg.train.window2, cfg.model.traj_scale));
  });

  while (trainer.step() < run.end_step) {
    std::string row;
    std::string note;
    if (stage == 1) {
      const auto l = trainer.stage1_step(d1);
      row = std::to_string(trainer.step()) + "," + format_double(l.traj) + "," + format_double(l.img) + "," +
            format_double(l.depth) + "," + format_double(l.sem) + "," + format_double(l.total);
    } else {
      const auto s = trainer.stage2_step(d2);
      row = std::to_string(trainer.step()) + "," + format_double(s.mean_reward) + "," + format_double(s.reward_std) +
            "," + format_double(s.rl_loss) + "," + format_double(s.il_loss);
    }
    if (files) log << row << "\n";
    if (run.progress && trainer.step() % 100 == 0) run.progress(row);
    if (files && run.checkpoint_every > 0 && trainer.step() % run.checkpoint_every == 0) {
      log.flush();
      save_atomic(checkpoint_path(run.out_dir), cfg, model, stage, trainer.step(), trainer.optimizer());
    }
  }
  if (files) {
    log.flush();
    if (!log) throw IoError("log write failed in " + run.out_dir.string());
    save_atomic(checkpoint_path(run.out_dir), cfg, model, stage, trainer.step(), trainer.optimizer());
  }
  return trainer.step();
}

}  // namespace wmdrive
