#pragma once

// Lifting 2D keypoints to object pose and shape.
//
// The cost of an object hypothesis (pose T mapping object frame to camera frame,
// shape coefficients lambda) against one observation is
//
//   sum_k visible  conf_k * rho(|| project(T (mean_k + V_k lambda)) - s_k ||^2) + w ||lambda||^2
//
// in pixels^2, where rho is the quadratic or Huber kernel. Keypoints behind the camera
// make the cost infinite.
//
// Object frames follow the category-model convention: +y points down (gravity) and the
// ground-contact plane is y = 0, so a keypoint's height above ground is -y.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "objslam/category_model.hpp"
#include "objslam/geometry.hpp"

namespace objslam {

/// Minimum visible keypoints for a 6-DoF pose fit.
inline constexpr int kMinVisibleKeypoints = 4;

struct KeypointObservation {
  int frame = 0;
  std::optional<int> track;
  std::vector<Vec2> keypoints;         // pixels
  std::vector<std::uint8_t> visible;   // 0 or 1
  std::vector<double> confidence;      // [0, 1]

  int size() const { return static_cast<int>(keypoints.size()); }
  int num_visible() const;
};

enum class RobustKernel { Quadratic, Huber };

struct FitConfig {
  /// Weight of the L2 shape regularizer. Unset: 1 / mean(eigenvalues) of the model.
  std::optional<double> regularizer_weight;
  int max_alternations = 10;
  int max_iterations = 30;             // per pose or shape stage
  double tolerance = 1e-6;             // relative cost decrease that ends the alternation
  double stage_tolerance = 1e-12;      // relative cost decrease that ends a stage
  RobustKernel kernel = RobustKernel::Huber;
  double huber_width = 5.0;            // pixels
  int azimuth_seeds = 8;
  /// Joint pose + shape polish after the alternation.
  bool joint_refinement = true;

  double resolved_regularizer(const CategoryModel& model) const;
  void validate() const;
};

struct ObjectEstimate {
  Pose3 pose;                  // object frame -> camera frame
  ShapeParams shape;
  double cost = 0.0;           // pixels^2
  bool converged = false;
  int alternations = 0;
  /// Cost after initialization and after every stage, in order.
  std::vector<double> cost_history;
};

/// Camera mounted at a known height over a flat floor, pitched down by `camera_pitch`
/// (radians) with zero roll.
struct GroundPlane {
  double camera_height = 1.0;
  double camera_pitch = 0.0;

  /// Gravity direction in camera coordinates.
  Vec3 down_in_camera() const;
  /// Rotation from the gravity-aligned frame at the camera to the camera frame.
  Mat3 level_to_camera() const;
};

double kernel_value(double squared_norm, RobustKernel kernel, double width);

double reprojection_cost(const KeypointObservation& obs, const Pose3& pose,
                         const ShapeParams& shape, const CategoryModel& model,
                         const CameraIntrinsics& k, const FitConfig& cfg);
double reprojection_cost(const KeypointObservation& obs, const ObjectEstimate& est,
                         const CategoryModel& model, const CameraIntrinsics& k,
                         const FitConfig& cfg);

/// Residual of one keypoint and its derivatives: d/d(right twist of pose) and d/d lambda.
struct KeypointResidual {
  Vec2 residual;
  Mat26 d_pose;
  Eigen::Matrix<double, 2, Eigen::Dynamic> d_shape;
};
KeypointResidual keypoint_residual(const KeypointObservation& obs, int index, const Pose3& pose,
                                   const ShapeParams& shape, const CategoryModel& model,
                                   const CameraIntrinsics& k);

/// Pose-only stage. Throws Underconstrained, Diverged.
Pose3 fit_pose(const KeypointObservation& obs, const ShapeParams& shape,
               const CategoryModel& model, const CameraIntrinsics& k, const Pose3& init,
               const FitConfig& cfg = {});

/// Shape-only stage (Gauss-Newton in lambda). Throws Diverged.
ShapeParams fit_shape(const KeypointObservation& obs, const Pose3& pose,
                      const CategoryModel& model, const CameraIntrinsics& k,
                      const ShapeParams& init, const FitConfig& cfg = {});

/// Alternating pose / shape minimization. Throws Underconstrained, Diverged.
ObjectEstimate fit_alternating(const KeypointObservation& obs, const CategoryModel& model,
                               const CameraIntrinsics& k, const FitConfig& cfg,
                               const ObjectEstimate& init);

/// Mean shape, upright, translation from backprojecting the lowest visible keypoints onto
/// horizontal planes at their model heights; yaw is the best of cfg.azimuth_seeds.
/// Throws Underconstrained, GroundPlaneDegenerate.
ObjectEstimate initialize_estimate(const KeypointObservation& obs, const CategoryModel& model,
                                   const CameraIntrinsics& k, const GroundPlane& ground,
                                   const FitConfig& cfg = {});

struct MultiFrameEstimate {
  Pose3 anchor_pose;                 // object -> anchor camera
  std::vector<Pose3> frame_poses;    // object -> camera f
  ShapeParams shape;
  double cost = 0.0;
  bool converged = false;
  int alternations = 0;
  std::vector<double> cost_history;
};

/// One shared shape across F frames. anchor_to_frame[f] maps anchor-camera coordinates into
/// camera f (identity for the anchor itself). Throws as fit_alternating.
MultiFrameEstimate fit_multiframe(std::span<const KeypointObservation> observations,
                                  std::span<const Pose3> anchor_to_frame,
                                  const CategoryModel& model, const CameraIntrinsics& k,
                                  const FitConfig& cfg, const ObjectEstimate& init);

/// Information of the fitted object pose (6x6, rot/trans ordering, right-twist coordinates)
/// with shape marginalized, for keypoint noise sigma in pixels.
Mat6 pose_information(const KeypointObservation& obs, const ObjectEstimate& est,
                      const CategoryModel& model, const CameraIntrinsics& k,
                      const FitConfig& cfg, double pixel_sigma);

/// Monocular scale fix: rescales the translation about the camera center so the fitted
/// ground-contact keypoints (model height within `contact_height` of the floor) sit on the
/// ground plane, then refits the shape at that pose. Returns `est` unchanged when no
/// ground-contact keypoint is visible or the rays miss the floor.
ObjectEstimate ground_scale_correction(const KeypointObservation& obs, const ObjectEstimate& est,
                                       const CategoryModel& model, const CameraIntrinsics& k,
                                       const GroundPlane& ground, const FitConfig& cfg,
                                       double contact_height = 0.02);

/// Distance along the pixel's unit ray to the ground plane. Throws GroundPlaneDegenerate.
double ground_ray_distance(const Vec2& pixel, const CameraIntrinsics& k, const GroundPlane& ground);

/// Least-squares factor s with metric_depth ~= s * unscaled_depth over ground-contact
/// pixels, where metric depth comes from the ground plane. Throws GroundPlaneDegenerate.
double recover_scale(std::span<const Vec2> ground_pixels, std::span<const double> unscaled_depths,
                     const CameraIntrinsics& k, const GroundPlane& ground);

}  // namespace objslam
