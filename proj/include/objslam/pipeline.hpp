#pragma once

// Measurements in, trajectory and object map out: per-observation fit, association against
// dead-reckoned poses, then (unless odometry-only) the joint pose graph.

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "objslam/assoc.hpp"
#include "objslam/category_model.hpp"
#include "objslam/fit.hpp"
#include "objslam/graph.hpp"
#include "objslam/sim.hpp"

namespace objslam {

enum class RunMode { Odometry, Batch, Incremental };
const char* to_string(RunMode m);
/// Accepts odo, batch, inc. Throws ConfigError.
RunMode run_mode_from_string(const std::string& s);

enum class ObjectInformation { FromFit, Fixed };

struct PipelineConfig {
  FitConfig fit;
  AssocConfig assoc;
  SolverSettings solver;
  int incremental_solve_every = 1;

  /// FromFit: Schur complement of the fit's Gauss-Newton matrix at the keypoint noise level.
  ObjectInformation object_information = ObjectInformation::FromFit;
  Mat6 fixed_object_information = default_object_information();
  /// Keypoint sigma used for fit information when the measurements claim less.
  double pixel_sigma_floor = 0.5;
  /// Odometry sigmas below these floors are clamped when forming information.
  double odometry_rot_floor = 1e-4;
  double odometry_trans_floor = 1e-4;
  double prior_information = 1e6;
  /// Shape regularizer sigma^2 / mean(eigenvalues) from the measured keypoint sigma, unless
  /// fit.regularizer_weight is set explicitly.
  bool regularizer_from_noise = true;
  /// Observations with fewer visible keypoints are not fitted. 0 derives it from the model:
  /// the pixel equations must outnumber the 6 + B unknowns.
  int min_visible_keypoints = 0;
  /// Fits whose mean cost per visible keypoint exceeds this (pixels^2) are dropped.
  double max_mean_fit_cost = 100.0;
  /// Resolve the fitted object's depth from its ground-contact keypoints.
  bool ground_scale = true;
  double contact_height = 0.02;
  /// A detection is dropped when fewer than half of its track's detections within
  /// `consistency_window` frames agree with it to these tolerances. 0 disables the check.
  int consistency_window = 5;
  double consistency_distance = 0.3;
  double consistency_angle = 0.5;
  /// Tracks with fewer surviving detections stay out of the map.
  int min_track_hits = 2;
  /// After solving, object factors whose chi-square under the solution exceeds this are
  /// removed and the graph is refined once more. The default is the 0.999 quantile for 6
  /// degrees of freedom; 0 disables the gate.
  double object_outlier_chi2 = 22.458;

  void validate() const;
};

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);
/// Missing keys keep their defaults. Throws ConfigError.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

struct DetectionRecord {
  int frame = 0;
  int observation = 0;
  int global_id = -1;
  Pose3 object_to_camera;
  ShapeParams shape;
  double fit_cost = 0.0;
  Mat6 information = Mat6::Identity();
};

struct PipelineResult {
  std::string name;
  RunMode mode = RunMode::Batch;
  bool olc = false;
  std::vector<Pose3> trajectory;        // world -> camera
  std::vector<Pose3> dead_reckoning;    // world -> camera, chained odometry
  std::map<int, Pose3> objects;         // global id -> (object -> world)
  std::map<int, ShapeParams> shapes;
  std::vector<DetectionRecord> detections;
  std::vector<AssocRecord> assoc_log;
  int rejected_fits = 0;
  int inconsistent_detections = 0;
  double graph_error = 0.0;
  int iterations = 0;
  bool converged = true;
};

/// Throws Diverged when the optimizer fails, ConfigError for invalid settings.
PipelineResult run_pipeline(const Measurements& m, const CategoryModel& model, RunMode mode,
                            bool olc, const PipelineConfig& cfg = {});

/// Estimated trajectory and objects as JSON.
nlohmann::json estimates_to_json(const PipelineResult& r);
PipelineResult estimates_from_json(const nlohmann::json& j);

}  // namespace objslam
