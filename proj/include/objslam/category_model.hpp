#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "objslam/geometry.hpp"

namespace objslam {

/// K ordered keypoints of one object instance, in its object frame (meters).
struct KeypointSet3D {
  std::string id;
  std::string category;
  std::vector<Vec3> points;

  /// x1 y1 z1 x2 ... (3K).
  Eigen::VectorXd flat() const;
  static KeypointSet3D from_flat(const Eigen::VectorXd& flat, std::string id = {},
                                 std::string category = {});
};

/// Deformation coefficients, one per basis vector.
struct ShapeParams {
  Eigen::VectorXd lambda;

  static ShapeParams zero(int b) { return {Eigen::VectorXd::Zero(b)}; }
  int size() const { return static_cast<int>(lambda.size()); }
};

/// Linear subspace model: S = mean + basis * lambda.
struct CategoryModel {
  std::string category;
  int num_keypoints = 0;              // K
  Eigen::VectorXd mean;               // 3K
  Eigen::MatrixXd basis;              // 3K x B, orthonormal columns
  Eigen::VectorXd eigenvalues;        // B, descending
  double total_variance = 0.0;        // trace of the sample covariance
  std::vector<std::string> labels;    // optional keypoint names, size K when present

  int basis_size() const { return static_cast<int>(basis.cols()); }
  double explained_variance_ratio() const;
  double mean_eigenvalue() const;
  /// Mean-shape keypoint k.
  Vec3 mean_point(int k) const { return mean.segment<3>(3 * k); }
  /// Rows 3k..3k+2 of the basis.
  Eigen::Matrix<double, 3, Eigen::Dynamic> basis_rows(int k) const {
    return basis.middleRows<3>(3 * k);
  }
};

struct ModelBuildOptions {
  /// Explicit B. When unset, the smallest B reaching the explained-variance floor.
  std::optional<int> basis_size;
  double explained_variance_floor = 0.95;
};

/// PCA over pre-aligned instances. Throws InsufficientInstances, InconsistentK.
CategoryModel build_category_model(std::span<const KeypointSet3D> instances,
                                   const ModelBuildOptions& options = {});

/// mean + basis * lambda as a flat 3K vector. Throws DimensionMismatch.
Eigen::VectorXd instantiate_flat(const CategoryModel& model, const ShapeParams& params);
KeypointSet3D instantiate_shape(const CategoryModel& model, const ShapeParams& params);

/// Orthogonal projection onto the basis. Throws DimensionMismatch.
ShapeParams fit_params(const CategoryModel& model, const KeypointSet3D& shape);

/// Versioned text model file.
void write_model(std::ostream& out, const CategoryModel& model);
CategoryModel read_model(std::istream& in);
void save_model(const std::string& path, const CategoryModel& model);
CategoryModel load_model(const std::string& path);

/// Keypoint collection: header with category, K and labels, then one line per instance:
/// `<id> x1 y1 z1 ... xK yK zK`.
void write_keypoint_collection(std::ostream& out, std::span<const KeypointSet3D> instances,
                               const std::vector<std::string>& labels);
std::vector<KeypointSet3D> read_keypoint_collection(std::istream& in,
                                                    std::vector<std::string>* labels = nullptr);

}  // namespace objslam
