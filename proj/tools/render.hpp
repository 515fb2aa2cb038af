#pragma once

#include <filesystem>
#include <string>

#include "wmdrive/model.hpp"
#include "wmdrive/world_sim.hpp"

namespace wmdrive::cli {

/// Fixed-precision text shared by the SVG polylines and the CSV trace.
std::string coord(double v);

/// trace.csv plus, when render is set, frame_01.svg .. frame_HH.svg.
void write_rollout(const Scenario& sc, const Trajectory& plan, const RolloutResult& r,
                   const std::filesystem::path& dir, bool render);

/// forecasts.csv: predicted vs target canonical scans and semantic magnitudes for each window frame.
void write_forecasts(const Model& m, const Scenario& sc, int window, const Trajectory& plan,
                     const std::filesystem::path& path);

}  // namespace wmdrive::cli
