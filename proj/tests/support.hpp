#pragma once

#include <string>

#include "objslam/category_model.hpp"
#include "objslam/sim.hpp"

namespace objslam::testing {

/// 250 synthetic chairs, seed 11, default basis selection. Built once per process.
const std::vector<KeypointSet3D>& chairs();
const CategoryModel& chair_model();
/// Same collection with an explicit basis size.
CategoryModel chair_model(int b);

/// Zero-noise, zero-dropout copy of a preset.
ScenarioConfig noiseless(ScenarioConfig cfg);

/// Camera at the configured height and pitch above the world origin, looking along +z.
Pose3 level_robot(const ScenarioConfig& cfg);

/// Fresh, empty directory under the system temp directory.
std::string scratch_dir(const std::string& name);

}  // namespace objslam::testing
