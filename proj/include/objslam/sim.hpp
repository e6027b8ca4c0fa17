#pragma once

// Deterministic synthetic scenes: ground-truth trajectory and objects, noisy odometry and
// noisy, partially dropped 2D keypoints.
//
// World frame: y points down, the floor is y = 0, so a camera at height h sits at y = -h.
// Robot poses map world -> camera (x right, y down, z forward). Objects stand upright on
// the floor with a random yaw about y.
//
// Randomness: every stream is std::mt19937_64 seeded through splitmix64 from the scenario
// seed; normals use the Box-Muller transform on 53-bit uniforms so that the numbers do not
// depend on the standard library's distribution implementations.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "objslam/category_model.hpp"
#include "objslam/fit.hpp"
#include "objslam/geometry.hpp"

namespace objslam {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double sigma) { return sigma * normal(); }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Seed for sub-stream `stream` of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

enum class TrajectoryShape { Loop, StraightAndBack, RotateInPlace, LTurn };
const char* to_string(TrajectoryShape s);
TrajectoryShape trajectory_shape_from_string(const std::string& s);

struct ScenarioConfig {
  std::string name = "custom";
  std::uint64_t seed = 1;
  TrajectoryShape trajectory = TrajectoryShape::Loop;
  int num_poses = 60;
  int num_objects = 7;

  double camera_height = 1.2;    // meters
  double camera_pitch = 0.35;    // radians, downward
  CameraIntrinsics intrinsics{500.0, 500.0, 320.0, 240.0};
  int image_width = 640;
  int image_height = 480;

  double keypoint_sigma = 2.0;          // pixels per axis
  double dropout = 0.0;                 // per keypoint
  double outlier_probability = 0.0;     // per keypoint
  double outlier_magnitude = 30.0;      // pixels, disc radius
  double odometry_sigma_rot = 0.005;    // radians per step and axis
  double odometry_sigma_trans = 0.01;   // meters per step and axis
  double shape_scale = 1.0;

  // Trajectory geometry (meters / radians).
  double leg_length = 7.6;       // loop sides, straight-and-back leg, first L leg
  double second_leg = 4.2;       // second L leg
  double turn_radius = 1.5;      // loop ends, L corner (0 turns in place)
  double object_offset = 1.3;    // lateral distance from the path
  double ring_radius = 2.4;      // rotate-in-place object ring
  /// Placement target; when no candidate satisfies it after the retry budget the last one is kept.
  double min_object_spacing = 1.6;
  double max_range = 6.0;        // objects further away are not observed
  double min_depth = 0.4;

  void validate() const;
};

/// seq1 .. seq4 analogues.
std::vector<ScenarioConfig> scenario_presets();
/// Throws ConfigError for unknown names.
ScenarioConfig scenario_preset(const std::string& name);

struct SimObject {
  Pose3 pose;              // object -> world
  ShapeParams shape;
  KeypointSet3D keypoints; // instantiated, object frame
};

struct SimFrame {
  std::vector<KeypointObservation> observations;
  std::vector<int> labels;           // ground-truth object index per observation
  std::vector<std::vector<Vec2>> exact;  // noiseless projections per observation
};

/// What a pipeline may see.
struct Measurements {
  std::string name;
  std::string category;
  CameraIntrinsics intrinsics;
  int image_width = 0;
  int image_height = 0;
  GroundPlane ground;
  double keypoint_sigma = 0.0;
  double odometry_sigma_rot = 0.0;
  double odometry_sigma_trans = 0.0;
  bool closes_loop = false;     // trajectory returns to its start
  bool zero_parallax = false;   // no translation at all
  Pose3 initial_pose;
  std::vector<Pose3> odometry;  // pose i -> pose i+1, N - 1 entries
  std::vector<std::vector<KeypointObservation>> frames;
};

struct GroundTruth {
  std::vector<Pose3> poses;  // world -> camera
  std::vector<SimObject> objects;
  std::vector<std::vector<int>> labels;  // per frame, per observation
};

struct Scenario {
  ScenarioConfig config;
  std::string category;
  std::vector<Pose3> poses;
  std::vector<SimObject> objects;
  std::vector<Pose3> odometry;
  std::vector<SimFrame> frames;

  Measurements measurements() const;
  GroundTruth ground_truth() const;
};

/// Ground-truth world -> camera poses for the configured trajectory.
std::vector<Pose3> generate_trajectory(const ScenarioConfig& cfg);

Scenario generate(const ScenarioConfig& cfg, const CategoryModel& model);

/// T_hat(i, i+1) = exp(eps) relative_pose(T_i, T_i+1), eps ~ N(0, diag(sigma^2)).
std::vector<Pose3> perturb_odometry(const std::vector<Pose3>& poses, double sigma_rot,
                                    double sigma_trans, std::uint64_t seed);

/// Observations of `objects` from one robot pose. Only objects in range with at least
/// kMinVisibleKeypoints visible in-image keypoints are emitted.
SimFrame render_observations(const ScenarioConfig& cfg, int frame, const Pose3& robot_pose,
                             const std::vector<SimObject>& objects, std::uint64_t seed);

/// Synthetic aligned chair collection: K = 10 keypoints (four leg feet, four seat corners,
/// two backrest top corners), object frame y down with the feet on y = 0.
std::vector<KeypointSet3D> synthesize_chairs(int count, std::uint64_t seed);
std::vector<std::string> chair_keypoint_labels();

/// Camera center in the world frame.
Vec3 camera_center(const Pose3& world_to_camera);

// Structured text (JSON). The measurement-only export omits ground truth.
nlohmann::json scenario_to_json(const Scenario& s);
nlohmann::json measurements_to_json(const Scenario& s);
Measurements measurements_from_json(const nlohmann::json& j);
/// Throws ParseError when the document carries no ground truth.
GroundTruth ground_truth_from_json(const nlohmann::json& j);
bool has_ground_truth(const nlohmann::json& j);

nlohmann::json config_to_json(const ScenarioConfig& cfg);
ScenarioConfig config_from_json(const nlohmann::json& j);

nlohmann::json pose_to_json(const Pose3& p);
Pose3 pose_from_json(const nlohmann::json& j);

}  // namespace objslam
