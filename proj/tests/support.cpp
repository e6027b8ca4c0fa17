#include "support.hpp"

#include <filesystem>

namespace objslam::testing {

const std::vector<KeypointSet3D>& chairs() {
  static const std::vector<KeypointSet3D> c = synthesize_chairs(250, 11);
  return c;
}

const CategoryModel& chair_model() {
  static const CategoryModel m = build_category_model(chairs());
  return m;
}

CategoryModel chair_model(int b) {
  ModelBuildOptions o;
  o.basis_size = b;
  return build_category_model(chairs(), o);
}

ScenarioConfig noiseless(ScenarioConfig cfg) {
  cfg.keypoint_sigma = 0.0;
  cfg.dropout = 0.0;
  cfg.outlier_probability = 0.0;
  cfg.odometry_sigma_rot = 0.0;
  cfg.odometry_sigma_trans = 0.0;
  return cfg;
}

Pose3 level_robot(const ScenarioConfig& cfg) {
  return Pose3(rot_x(-cfg.camera_pitch), Vec3(0.0, -cfg.camera_height, 0.0)).inverse();
}

std::string scratch_dir(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path p = fs::temp_directory_path() / ("objslam_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

}  // namespace objslam::testing
