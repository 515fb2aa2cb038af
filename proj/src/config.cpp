#include "wmdrive/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "wmdrive/errors.hpp"

namespace wmdrive {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

namespace {

struct Field {
  std::string key;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw ConfigError("config key '" + key + "': '" + value + "' is not " + what);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto r = std::from_chars(value.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) bad_value(key, value, "a valid number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "a boolean (true/false)");
}

template <class M>
Field int_field(std::string key, std::string help, M member) {
  return {key, std::move(help), [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, const std::string& v) { member(c) = parse_number<int>(key, v); }};
}

template <class M>
Field u64_field(std::string key, std::string help, M member) {
  return {key, std::move(help), [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, const std::string& v) { member(c) = parse_number<std::uint64_t>(key, v); }};
}

template <class M>
Field double_field(std::string key, std::string help, M member) {
  return {key, std::move(help), [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, const std::string& v) { member(c) = parse_number<double>(key, v); }};
}

template <class M>
Field bool_field(std::string key, std::string help, M member) {
  return {key, std::move(help),
          [member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [member, key](RunConfig& c, const std::string& v) { member(c) = parse_bool(key, v); }};
}

#define WM_INT(key, help, expr) int_field(key, help, [](RunConfig& c) -> int& { return c.expr; })
#define WM_U64(key, help, expr) u64_field(key, help, [](RunConfig& c) -> std::uint64_t& { return c.expr; })
#define WM_DBL(key, help, expr) double_field(key, help, [](RunConfig& c) -> double& { return c.expr; })
#define WM_BOOL(key, help, expr) bool_field(key, help, [](RunConfig& c) -> bool& { return c.expr; })

std::string templates_to_string(const std::vector<MapTemplate>& ts) {
  std::string s;
  for (std::size_t i = 0; i < ts.size(); ++i) s += (i ? "," : "") + to_string(ts[i]);
  return s;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    // scenario generation
    v.push_back(WM_INT("scenario.num_rays", "range-scan rays K", scenario.sensor.num_rays));
    v.push_back(WM_DBL("scenario.fov_deg", "scan field of view, degrees", scenario.sensor.fov_deg));
    v.push_back(WM_DBL("scenario.max_range", "scan range R_max, meters", scenario.sensor.max_range));
    v.push_back(WM_INT("scenario.history_frames", "logged history frames", scenario.history_frames));
    v.push_back(WM_INT("scenario.horizon", "planning horizon H, frames", scenario.horizon));
    v.push_back(WM_DBL("scenario.frame_dt", "seconds per frame", scenario.frame_dt));
    v.push_back(WM_INT("scenario.substeps", "simulation substeps per frame", scenario.substeps));
    v.push_back({"scenario.templates", "comma list of straight,left,right,s_curve",
                 [](const RunConfig& c) { return templates_to_string(c.scenario.templates); },
                 [](RunConfig& c, const std::string& s) {
                   std::vector<MapTemplate> ts;
                   std::stringstream ss(s);
                   std::string item;
                   while (std::getline(ss, item, ',')) ts.push_back(map_template_from_string(item));
                   c.scenario.templates = ts;
                 }});
    v.push_back(WM_DBL("scenario.road_half_width", "drivable half width, meters", scenario.road_half_width));
    v.push_back(WM_DBL("scenario.min_speed", "lowest initial ego speed, m/s", scenario.min_speed));
    v.push_back(WM_DBL("scenario.max_speed", "highest initial ego speed, m/s", scenario.max_speed));
    v.push_back(WM_DBL("scenario.lead_probability", "chance of a lead vehicle", scenario.lead_probability));
    v.push_back(WM_INT("scenario.max_parked", "most parked vehicles", scenario.max_parked));
    v.push_back(WM_INT("scenario.max_pedestrians", "most pedestrians", scenario.max_pedestrians));
    v.push_back(WM_INT("scenario.max_retries", "generation attempts per seed", scenario.max_retries));
    // model
    v.push_back(WM_INT("model.feature_dim", "encoder output D", model.feature_dim));
    v.push_back(WM_INT("model.width", "backbone width W", model.width));
    v.push_back(WM_INT("model.layers", "backbone blocks L", model.layers));
    v.push_back(WM_INT("model.heads", "attention heads", model.heads));
    v.push_back(WM_INT("model.max_frames", "longest token window N_max", model.max_frames));
    v.push_back(WM_INT("model.ffn_mult", "feedforward expansion", model.ffn_mult));
    v.push_back(WM_INT("model.planner_hidden", "planner hidden width", model.planner_hidden));
    v.push_back(WM_INT("model.head_hidden", "forecast head hidden width", model.head_hidden));
    v.push_back(WM_INT("model.time_dim", "time embedding size", model.time_dim));
    v.push_back(WM_INT("model.embed_dim", "class embedding size E", model.embed_dim));
    v.push_back(WM_DBL("model.c_max", "depth confidence bound", model.c_max));
    v.push_back(WM_DBL("model.lambda_c", "depth confidence weight", model.lambda_c));
    v.push_back(WM_DBL("model.traj_step", "flow-space forward offset per frame, meters", model.traj_scale.step));
    v.push_back(WM_DBL("model.traj_spread", "flow-space forward scale per frame, meters", model.traj_scale.spread));
    v.push_back(WM_DBL("model.traj_lateral", "flow-space lateral scale at the horizon, meters", model.traj_scale.lateral));
    v.push_back(WM_U64("model.encoder_seed", "frozen encoder and class table seed", model.encoder_seed));
    v.push_back(WM_U64("model.init_seed", "trainable weight init seed", model.init_seed));
    // training
    v.push_back(WM_INT("train.stage1_steps", "stage-1 optimizer steps", train.stage1_steps));
    v.push_back(WM_INT("train.stage2_iters", "stage-2 GRPO iterations", train.stage2_iters));
    v.push_back(WM_DBL("train.lr1", "stage-1 learning rate", train.lr1));
    v.push_back(WM_DBL("train.lr2", "stage-2 learning rate", train.lr2));
    v.push_back(WM_INT("train.batch_size", "stage-1 samples per step", train.batch_size));
    v.push_back(WM_INT("train.stage2_batch", "stage-2 scenarios per iteration", train.stage2_batch));
    v.push_back(WM_INT("train.window1", "stage-1 frames per window", train.window1));
    v.push_back(WM_INT("train.window2", "stage-2 frames per window", train.window2));
    v.push_back(WM_DBL("train.t_min", "smallest flow time drawn", train.t_min));
    v.push_back(WM_BOOL("train.use_img", "enable the next-feature loss", train.use_img));
    v.push_back(WM_BOOL("train.use_depth", "enable the depth loss", train.use_depth));
    v.push_back(WM_BOOL("train.use_sem", "enable the semantic loss", train.use_sem));
    v.push_back({"train.depth_target", "future or present",
                 [](const RunConfig& c) {
                   return std::string(c.train.depth_target == DepthTarget::kFuture ? "future" : "present");
                 },
                 [](RunConfig& c, const std::string& s) {
                   if (s == "future")
                     c.train.depth_target = DepthTarget::kFuture;
                   else if (s == "present")
                     c.train.depth_target = DepthTarget::kPresent;
                   else
                     bad_value("train.depth_target", s, "future or present");
                 }});
    v.push_back(WM_INT("train.ode_steps", "ODE steps for held-out planning", train.ode_steps));
    v.push_back(WM_U64("train.seed", "training noise and batch seed", train.seed));
    v.push_back(WM_INT("train.shards", "fixed gradient partitions per batch", train.shards));
    v.push_back(WM_INT("grpo.group_size", "chains per scenario G", train.grpo.group_size));
    v.push_back(WM_DBL("grpo.gamma", "chain discount", train.grpo.gamma));
    v.push_back(WM_DBL("grpo.lambda_il", "imitation weight", train.grpo.lambda_il));
    v.push_back(WM_DBL("grpo.eps_std", "advantage std floor", train.grpo.eps_std));
    v.push_back(WM_INT("grpo.il_states", "imitation states per chain", train.grpo.il_states));
    v.push_back(WM_DBL("grpo.a", "SDE noise level", train.grpo.schedule.a));
    v.push_back(WM_DBL("grpo.t_min", "SDE end time", train.grpo.schedule.t_min));
    v.push_back(WM_DBL("grpo.t_max", "SDE start time", train.grpo.schedule.t_max));
    v.push_back(WM_INT("grpo.steps", "SDE steps T", train.grpo.schedule.steps));
    // evaluation
    v.push_back(WM_U64("eval.seed", "planner noise seed", eval.seed));
    v.push_back(WM_INT("eval.window", "frames given to the planner", eval.window));
    v.push_back(WM_INT("eval.ode_steps", "ODE steps", eval.ode_steps));
    v.push_back(WM_INT("run.workers", "worker threads, 0 = all cores", workers));
    return v;
  }();
  return f;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::finalize() {
  model.num_rays = scenario.sensor.num_rays;
  model.max_range = scenario.sensor.max_range;
  model.horizon = scenario.horizon;
  if (workers < 0) throw ConfigError("run.workers must be non-negative");
  scenario.validate();
  model.backbone().validate();
  model.traj_scale.validate();
  model.heads_config().validate();
  train.validate();
  if (train.window1 > model.max_frames || train.window2 > model.max_frames || eval.window > model.max_frames)
    throw ConfigError("a window is longer than model.max_frames");
  if (train.window1 > scenario.history_frames || train.window2 > scenario.history_frames ||
      eval.window > scenario.history_frames)
    throw ConfigError("a window is longer than the logged history");
  if (eval.ode_steps < 1 || eval.window < 1) throw ConfigError("eval settings must be positive");
}

std::vector<ConfigKeyDoc> config_keys() {
  std::vector<ConfigKeyDoc> out;
  for (const auto& f : fields()) out.push_back({f.key, f.help});
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields())
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(n) + ": expected key=value");
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::string dump_config(const RunConfig& cfg) {
  std::string s;
  for (const auto& [k, v] : config_entries(cfg)) s += k + "=" + v + "\n";
  return s;
}

void write_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << dump_config(cfg);
  if (!f) throw IoError("write failed: " + path.string());
}

std::string config_hash(const RunConfig& cfg) {
  // Worker count never changes results, so it is not part of the identity.
  RunConfig c = cfg;
  c.workers = 0;
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : dump_config(c)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace wmdrive
