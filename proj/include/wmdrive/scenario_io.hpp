#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wmdrive/world_sim.hpp"

namespace wmdrive {

inline constexpr int kScenarioSchemaVersion = 1;

nlohmann::json scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const nlohmann::json& j);

/// One scenario per line. Doubles are written in shortest round-trip form.
void write_scenarios(const std::filesystem::path& path, std::span<const Scenario> scenarios);
std::vector<Scenario> read_scenarios(const std::filesystem::path& path);

}  // namespace wmdrive
