#include "objslam/fit.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "objslam/error.hpp"
#include "objslam/kernels.hpp"

namespace objslam {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTinyCost = 1e-28;

struct View {
  const KeypointObservation* obs;
  Pose3 anchor_to_frame;
};

void validate_observation(const KeypointObservation& obs, const CategoryModel& model) {
  const std::size_t k = static_cast<std::size_t>(model.num_keypoints);
  if (obs.keypoints.size() != k || obs.visible.size() != k ||
      (!obs.confidence.empty() && obs.confidence.size() != k)) {
    throw Error(ErrorCode::DimensionMismatch, "observation arrays must have length K");
  }
}

double confidence_of(const KeypointObservation& obs, int i) {
  return obs.confidence.empty() ? 1.0 : obs.confidence[i];
}

// d rho / d s for s = squared residual norm.
double kernel_slope(double s, RobustKernel kernel, double width) {
  if (kernel == RobustKernel::Quadratic || s <= width * width) return 1.0;
  return width / std::sqrt(s);
}

class Problem {
 public:
  Problem(std::vector<View> views, const CategoryModel& model, const CameraIntrinsics& k,
          const FitConfig& cfg)
      : views_(std::move(views)), model_(model), k_(k), cfg_(cfg),
        reg_(cfg.resolved_regularizer(model)) {
    const std::size_t n = static_cast<std::size_t>(model.num_keypoints);
    xs_.resize(n);
    ys_.resize(n);
    zs_.resize(n);
    us_.resize(n);
    vs_.resize(n);
    ds_.resize(n);
  }

  int shape_dim() const { return model_.basis_size(); }

  double cost(const Pose3& pose, const Eigen::VectorXd& lambda) const {
    const Eigen::VectorXd flat = instantiate_flat(model_, {lambda});
    const std::size_t n = xs_.size();
    for (std::size_t i = 0; i < n; ++i) {
      xs_[i] = flat[3 * i];
      ys_[i] = flat[3 * i + 1];
      zs_[i] = flat[3 * i + 2];
    }
    double total = 0.0;
    for (const auto& view : views_) {
      const Pose3 composite = view.anchor_to_frame * pose;
      kernels::transform_project(composite.rotation(), composite.translation(), k_,
                                 {xs_, ys_, zs_}, {us_, vs_, ds_});
      const auto& obs = *view.obs;
      for (std::size_t i = 0; i < n; ++i) {
        if (!obs.visible[i]) continue;
        if (!(ds_[i] > kDepthEpsilon)) return kInf;
        const double du = us_[i] - obs.keypoints[i].x();
        const double dv = vs_[i] - obs.keypoints[i].y();
        total += confidence_of(obs, static_cast<int>(i)) *
                 kernel_value(du * du + dv * dv, cfg_.kernel, cfg_.huber_width);
      }
    }
    return total + reg_ * lambda.squaredNorm();
  }

  // Gauss-Newton system over the selected blocks; H = sum w J^T J (+ reg), g = sum w J^T r.
  void linearize(const Pose3& pose, const Eigen::VectorXd& lambda, bool with_pose,
                 bool with_shape, Eigen::MatrixXd& h, Eigen::VectorXd& g) const {
    const int b = shape_dim();
    const int pose_dim = with_pose ? 6 : 0;
    const int dim = pose_dim + (with_shape ? b : 0);
    h.setZero(dim, dim);
    g.setZero(dim);
    const Eigen::VectorXd flat = instantiate_flat(model_, {lambda});
    Eigen::Matrix<double, 2, Eigen::Dynamic> jac(2, dim);
    for (const auto& view : views_) {
      const Pose3 composite = view.anchor_to_frame * pose;
      const Mat3& r = composite.rotation();
      const auto& obs = *view.obs;
      for (int i = 0; i < model_.num_keypoints; ++i) {
        if (!obs.visible[i]) continue;
        const Vec3 x = flat.segment<3>(3 * i);
        const Vec3 p = composite * x;
        if (!(p.z() > kDepthEpsilon)) continue;
        const Mat23 jp = project_jacobian(p, k_);
        const Vec2 res = project(p, k_) - obs.keypoints[i];
        if (with_pose) {
          jac.leftCols<3>() = -jp * r * skew(x);
          jac.middleCols<3>(3) = jp * r;
        }
        if (with_shape) jac.rightCols(b) = jp * r * model_.basis_rows(i);
        const double w = confidence_of(obs, i) *
                         kernel_slope(res.squaredNorm(), cfg_.kernel, cfg_.huber_width);
        h.noalias() += w * jac.transpose() * jac;
        g.noalias() += w * jac.transpose() * res;
      }
    }
    if (with_shape) {
      h.bottomRightCorner(b, b).diagonal().array() += reg_;
      g.tail(b) += reg_ * lambda;
    }
  }

 private:
  std::vector<View> views_;
  const CategoryModel& model_;
  const CameraIntrinsics& k_;
  const FitConfig& cfg_;
  double reg_;
  mutable std::vector<double> xs_, ys_, zs_, us_, vs_, ds_;
};

struct StageState {
  Pose3 pose;
  Eigen::VectorXd lambda;
  double cost = 0.0;
  bool converged = false;  // ended on tolerance rather than the iteration cap
};

// Levenberg-Marquardt over the selected blocks; only cost-decreasing steps are accepted.
StageState run_stage(const Problem& problem, StageState state, bool with_pose, bool with_shape,
                     const FitConfig& cfg) {
  const int b = problem.shape_dim();
  if (!with_shape || b == 0) with_shape = false;
  if (!with_pose && !with_shape) {
    state.converged = true;
    return state;
  }
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
  double mu = -1.0;
  state.converged = false;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    if (state.cost <= kTinyCost) {
      state.converged = true;
      break;
    }
    problem.linearize(state.pose, state.lambda, with_pose, with_shape, h, g);
    const double diag_max = std::max(h.diagonal().maxCoeff(), 1e-300);
    if (mu < 0.0) mu = 1e-6 * diag_max;
    bool accepted = false;
    double rel = 0.0;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::MatrixXd a = h;
      a.diagonal().array() += mu * (h.diagonal().array() + 1e-9 * diag_max);
      const Eigen::VectorXd step = a.ldlt().solve(-g);
      if (!step.allFinite()) {
        mu *= 10.0;
        continue;
      }
      StageState cand = state;
      if (with_pose) cand.pose = state.pose * se3_exp(Twist6::from_vector(step.head<6>()));
      if (with_shape) cand.lambda = state.lambda + step.tail(b);
      cand.cost = problem.cost(cand.pose, cand.lambda);
      if (std::isfinite(cand.cost) && cand.cost < state.cost) {
        rel = (state.cost - cand.cost) / state.cost;
        state.pose = cand.pose;
        state.lambda = cand.lambda;
        state.cost = cand.cost;
        mu = std::max(mu / 3.0, 1e-12 * diag_max);
        accepted = true;
        break;
      }
      mu *= 4.0;
    }
    if (!accepted || rel < cfg.stage_tolerance) {
      state.converged = true;
      break;
    }
  }
  return state;
}

void check_monotone(const std::vector<double>& history) {
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] > history[i - 1]) {
      throw Error(ErrorCode::Diverged, "cost increased during alternation");
    }
  }
}

struct AlternationResult {
  StageState state;
  bool converged = false;
  int alternations = 0;
  std::vector<double> history;
};

AlternationResult alternate(const Problem& problem, StageState state, const FitConfig& cfg) {
  AlternationResult out;
  state.cost = problem.cost(state.pose, state.lambda);
  if (!std::isfinite(state.cost)) {
    throw Error(ErrorCode::Diverged, "initial estimate has non-finite cost");
  }
  out.history.push_back(state.cost);
  for (int a = 1; a <= cfg.max_alternations; ++a) {
    const double before = state.cost;
    state = run_stage(problem, state, true, false, cfg);
    out.history.push_back(state.cost);
    state = run_stage(problem, state, false, true, cfg);
    out.history.push_back(state.cost);
    out.alternations = a;
    if (before <= kTinyCost || (before - state.cost) <= cfg.tolerance * before) {
      out.converged = true;
      break;
    }
  }
  if (cfg.joint_refinement) {
    state = run_stage(problem, state, true, true, cfg);
    out.history.push_back(state.cost);
    out.converged = out.converged || state.converged;
  }
  check_monotone(out.history);
  if (!std::isfinite(state.cost) || !state.pose.translation().allFinite() ||
      !state.lambda.allFinite()) {
    throw Error(ErrorCode::Diverged, "non-finite estimate");
  }
  out.state = std::move(state);
  return out;
}

Eigen::VectorXd initial_lambda(const CategoryModel& model, const ShapeParams& shape) {
  if (shape.size() == model.basis_size()) return shape.lambda;
  if (shape.size() == 0) return Eigen::VectorXd::Zero(model.basis_size());
  throw Error(ErrorCode::DimensionMismatch, "initial shape length differs from B");
}

}  // namespace

int KeypointObservation::num_visible() const {
  return static_cast<int>(std::count_if(visible.begin(), visible.end(),
                                        [](std::uint8_t v) { return v != 0; }));
}

double FitConfig::resolved_regularizer(const CategoryModel& model) const {
  if (regularizer_weight) return *regularizer_weight;
  const double mean_ev = model.mean_eigenvalue();
  return mean_ev > 0.0 ? 1.0 / mean_ev : 0.0;
}

void FitConfig::validate() const {
  if ((regularizer_weight && *regularizer_weight < 0.0) || max_alternations < 1 ||
      max_iterations < 1 || !(tolerance > 0.0) || !(stage_tolerance > 0.0) ||
      !(huber_width > 0.0) || azimuth_seeds < 1) {
    throw Error(ErrorCode::ConfigError, "fit configuration values must be positive");
  }
}

Vec3 GroundPlane::down_in_camera() const {
  return {0.0, std::cos(camera_pitch), std::sin(camera_pitch)};
}

Mat3 GroundPlane::level_to_camera() const { return rot_x(camera_pitch); }

double kernel_value(double s, RobustKernel kernel, double width) {
  if (kernel == RobustKernel::Quadratic || s <= width * width) return s;
  return 2.0 * width * std::sqrt(s) - width * width;
}

double reprojection_cost(const KeypointObservation& obs, const Pose3& pose,
                         const ShapeParams& shape, const CategoryModel& model,
                         const CameraIntrinsics& k, const FitConfig& cfg) {
  validate_observation(obs, model);
  Problem problem({{&obs, Pose3::identity()}}, model, k, cfg);
  return problem.cost(pose, initial_lambda(model, shape));
}

double reprojection_cost(const KeypointObservation& obs, const ObjectEstimate& est,
                         const CategoryModel& model, const CameraIntrinsics& k,
                         const FitConfig& cfg) {
  return reprojection_cost(obs, est.pose, est.shape, model, k, cfg);
}

KeypointResidual keypoint_residual(const KeypointObservation& obs, int index, const Pose3& pose,
                                   const ShapeParams& shape, const CategoryModel& model,
                                   const CameraIntrinsics& k) {
  validate_observation(obs, model);
  const Eigen::VectorXd flat = instantiate_flat(model, shape);
  const Vec3 x = flat.segment<3>(3 * index);
  const Vec3 p = pose * x;
  const Mat23 jp = project_jacobian(p, k);
  KeypointResidual out;
  out.residual = project(p, k) - obs.keypoints[index];
  out.d_pose.leftCols<3>() = -jp * pose.rotation() * skew(x);
  out.d_pose.rightCols<3>() = jp * pose.rotation();
  out.d_shape = jp * pose.rotation() * model.basis_rows(index);
  return out;
}

Pose3 fit_pose(const KeypointObservation& obs, const ShapeParams& shape,
               const CategoryModel& model, const CameraIntrinsics& k, const Pose3& init,
               const FitConfig& cfg) {
  validate_observation(obs, model);
  if (obs.num_visible() < kMinVisibleKeypoints) {
    throw Error(ErrorCode::Underconstrained, "fewer than 4 visible keypoints");
  }
  Problem problem({{&obs, Pose3::identity()}}, model, k, cfg);
  StageState state{init, initial_lambda(model, shape), 0.0, false};
  state.cost = problem.cost(state.pose, state.lambda);
  if (!std::isfinite(state.cost)) throw Error(ErrorCode::Diverged, "non-finite initial cost");
  return run_stage(problem, state, true, false, cfg).pose;
}

ShapeParams fit_shape(const KeypointObservation& obs, const Pose3& pose,
                      const CategoryModel& model, const CameraIntrinsics& k,
                      const ShapeParams& init, const FitConfig& cfg) {
  validate_observation(obs, model);
  Problem problem({{&obs, Pose3::identity()}}, model, k, cfg);
  StageState state{pose, initial_lambda(model, init), 0.0, false};
  state.cost = problem.cost(state.pose, state.lambda);
  if (!std::isfinite(state.cost)) throw Error(ErrorCode::Diverged, "non-finite initial cost");
  return {run_stage(problem, state, false, true, cfg).lambda};
}

ObjectEstimate fit_alternating(const KeypointObservation& obs, const CategoryModel& model,
                               const CameraIntrinsics& k, const FitConfig& cfg,
                               const ObjectEstimate& init) {
  const KeypointObservation* one = &obs;
  const Pose3 identity;
  auto multi = fit_multiframe({one, 1}, {&identity, 1}, model, k, cfg, init);
  ObjectEstimate out;
  out.pose = multi.anchor_pose;
  out.shape = std::move(multi.shape);
  out.cost = multi.cost;
  out.converged = multi.converged;
  out.alternations = multi.alternations;
  out.cost_history = std::move(multi.cost_history);
  return out;
}

MultiFrameEstimate fit_multiframe(std::span<const KeypointObservation> observations,
                                  std::span<const Pose3> anchor_to_frame,
                                  const CategoryModel& model, const CameraIntrinsics& k,
                                  const FitConfig& cfg, const ObjectEstimate& init) {
  cfg.validate();
  if (observations.empty() || observations.size() != anchor_to_frame.size()) {
    throw Error(ErrorCode::DimensionMismatch, "need one relative pose per observation");
  }
  int max_visible = 0;
  std::vector<View> views;
  for (std::size_t f = 0; f < observations.size(); ++f) {
    validate_observation(observations[f], model);
    max_visible = std::max(max_visible, observations[f].num_visible());
    views.push_back({&observations[f], anchor_to_frame[f]});
  }
  if (max_visible < kMinVisibleKeypoints) {
    throw Error(ErrorCode::Underconstrained, "fewer than 4 visible keypoints");
  }
  Problem problem(std::move(views), model, k, cfg);
  auto result = alternate(problem, {init.pose, initial_lambda(model, init.shape), 0.0, false}, cfg);

  MultiFrameEstimate out;
  out.anchor_pose = result.state.pose;
  for (const auto& rel : anchor_to_frame) out.frame_poses.push_back(rel * out.anchor_pose);
  out.shape = {result.state.lambda};
  out.cost = result.state.cost;
  out.converged = result.converged;
  out.alternations = result.alternations;
  out.cost_history = std::move(result.history);
  return out;
}

ObjectEstimate initialize_estimate(const KeypointObservation& obs, const CategoryModel& model,
                                   const CameraIntrinsics& k, const GroundPlane& ground,
                                   const FitConfig& cfg) {
  validate_observation(obs, model);
  if (obs.num_visible() < kMinVisibleKeypoints) {
    throw Error(ErrorCode::Underconstrained, "fewer than 4 visible keypoints");
  }
  if (!(ground.camera_height > 0.0)) {
    throw Error(ErrorCode::GroundPlaneDegenerate, "camera height must be positive");
  }
  const Vec3 down = ground.down_in_camera();

  double lowest = kInf;
  for (int i = 0; i < model.num_keypoints; ++i) {
    if (obs.visible[i]) lowest = std::min(lowest, -model.mean_point(i).y());
  }
  constexpr double kHeightBand = 0.05;
  Vec3 observed_sum = Vec3::Zero();
  Vec3 model_sum = Vec3::Zero();
  int used = 0;
  for (int i = 0; i < model.num_keypoints; ++i) {
    if (!obs.visible[i]) continue;
    const double height = -model.mean_point(i).y();
    if (height > lowest + kHeightBand) continue;
    const double clearance = ground.camera_height - height;
    const Vec3 ray = backproject_ray(obs.keypoints[i], k);
    const double along = ray.dot(down);
    if (clearance <= 0.0 || along <= 1e-6) continue;
    observed_sum += (clearance / along) * ray;
    model_sum += model.mean_point(i);
    ++used;
  }
  if (used == 0) {
    throw Error(ErrorCode::GroundPlaneDegenerate, "no keypoint ray meets its ground plane");
  }
  const Vec3 observed_centroid = observed_sum / used;
  const Vec3 model_centroid = model_sum / used;

  ObjectEstimate best;
  best.shape = ShapeParams::zero(model.basis_size());
  best.cost = kInf;
  const Mat3 level = ground.level_to_camera();
  for (int s = 0; s < cfg.azimuth_seeds; ++s) {
    const double yaw = 2.0 * std::numbers::pi * s / cfg.azimuth_seeds;
    const Mat3 r = level * rot_y(yaw);
    const Pose3 pose(r, observed_centroid - r * model_centroid);
    const double c = reprojection_cost(obs, pose, best.shape, model, k, cfg);
    if (c < best.cost) {
      best.cost = c;
      best.pose = pose;
    }
  }
  if (!std::isfinite(best.cost)) {
    // Every hypothesis put a keypoint behind the camera; keep the first seed.
    best.pose = Pose3(level, observed_centroid - level * model_centroid);
  }
  best.cost_history = {best.cost};
  return best;
}

Mat6 pose_information(const KeypointObservation& obs, const ObjectEstimate& est,
                      const CategoryModel& model, const CameraIntrinsics& k,
                      const FitConfig& cfg, double pixel_sigma) {
  validate_observation(obs, model);
  if (!(pixel_sigma > 0.0)) throw Error(ErrorCode::ConfigError, "pixel sigma must be positive");
  Problem problem({{&obs, Pose3::identity()}}, model, k, cfg);
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
  const int b = model.basis_size();
  problem.linearize(est.pose, initial_lambda(model, est.shape), true, b > 0, h, g);
  Mat6 info = h.topLeftCorner<6, 6>();
  if (b > 0) {
    const Eigen::MatrixXd hss = h.bottomRightCorner(b, b);
    const Eigen::MatrixXd hps = h.topRightCorner(6, b);
    info -= hps * hss.completeOrthogonalDecomposition().solve(hps.transpose());
  }
  const Mat6 sym = 0.5 * (info + info.transpose());
  info = sym / (pixel_sigma * pixel_sigma);
  return info;
}

ObjectEstimate ground_scale_correction(const KeypointObservation& obs, const ObjectEstimate& est,
                                       const CategoryModel& model, const CameraIntrinsics& k,
                                       const GroundPlane& ground, const FitConfig& cfg,
                                       double contact_height) {
  validate_observation(obs, model);
  const Eigen::VectorXd flat = instantiate_flat(model, est.shape);
  std::vector<Vec2> pixels;
  std::vector<double> depths;
  for (int i = 0; i < model.num_keypoints; ++i) {
    if (!obs.visible[i] || -model.mean_point(i).y() > contact_height) continue;
    const Vec3 p = est.pose * Vec3(flat.segment<3>(3 * i));
    if (!(p.z() > kDepthEpsilon)) continue;
    pixels.push_back(project(p, k));
    depths.push_back(p.norm());
  }
  if (pixels.empty()) return est;
  double scale;
  try {
    scale = recover_scale(pixels, depths, k, ground);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::GroundPlaneDegenerate) return est;
    throw;
  }
  if (!std::isfinite(scale) || !(scale > 0.0)) return est;
  // Scaling the whole object about the camera center leaves every projection in place.
  ObjectEstimate out = est;
  out.pose = Pose3(est.pose.rotation(), scale * est.pose.translation());
  const ShapeParams projected =
      fit_params(model, KeypointSet3D::from_flat(scale * flat, {}, model.category));
  out.shape = fit_shape(obs, out.pose, model, k, projected, cfg);
  out.cost = reprojection_cost(obs, out, model, k, cfg);
  out.cost_history.push_back(out.cost);
  return out;
}

double ground_ray_distance(const Vec2& pixel, const CameraIntrinsics& k,
                           const GroundPlane& ground) {
  if (!(ground.camera_height > 0.0)) {
    throw Error(ErrorCode::GroundPlaneDegenerate, "camera height must be positive");
  }
  const Vec3 ray = backproject_ray(pixel, k).normalized();
  const double along = ray.dot(ground.down_in_camera());
  if (along <= 1e-6) {
    throw Error(ErrorCode::GroundPlaneDegenerate, "ray does not meet the ground plane");
  }
  return ground.camera_height / along;
}

double recover_scale(std::span<const Vec2> ground_pixels, std::span<const double> unscaled_depths,
                     const CameraIntrinsics& k, const GroundPlane& ground) {
  if (ground_pixels.empty() || ground_pixels.size() != unscaled_depths.size()) {
    throw Error(ErrorCode::GroundPlaneDegenerate, "need matching ground-contact depths");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < ground_pixels.size(); ++i) {
    const double metric = ground_ray_distance(ground_pixels[i], k, ground);
    num += metric * unscaled_depths[i];
    den += unscaled_depths[i] * unscaled_depths[i];
  }
  if (!(den > 0.0)) throw Error(ErrorCode::GroundPlaneDegenerate, "zero unscaled depth");
  return num / den;
}

}  // namespace objslam
