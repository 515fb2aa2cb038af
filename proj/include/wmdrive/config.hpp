#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wmdrive/train.hpp"
#include "wmdrive/world_sim.hpp"

namespace wmdrive {

struct EvalConfig {
  std::uint64_t seed{1};
  int window{4};
  int ode_steps{32};
};

/// Everything a command needs, settable from one flat key=value file.
struct RunConfig {
  ScenarioParams scenario;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  int workers{0};  // 0 = all available cores

  /// Copies sensor geometry into the model and validates every section.
  void finalize();
};

struct ConfigKeyDoc {
  std::string key;
  std::string help;
};

std::vector<ConfigKeyDoc> config_keys();

/// Throws ConfigError for unknown keys or malformed values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// '#' starts a comment; blank lines are ignored.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "<text>");
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Ordered key/value view of every setting.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg);
std::string dump_config(const RunConfig& cfg);
void write_config(const RunConfig& cfg, const std::filesystem::path& path);

/// FNV-1a of dump_config, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace wmdrive
