#pragma once

// Pose graph over robot poses and object poses.
//
// Robot variables T_i map world coordinates into camera i. Object variables T_o map object
// coordinates into the world. Residuals, all in (rot, trans) twist coordinates:
//
//   prior      Log(Z^-1 T)
//   relative   Log(Z^-1 T_j T_i^-1)      Z = measured T_j T_i^-1 (camera i -> camera j)
//   object     Log(Z^-1 T_i T_o)         Z = measured object -> camera i
//
// Each contributes r^T Omega r to the total error. Updates are right-multiplicative,
// T <- T exp(delta).

#include <compare>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "objslam/geometry.hpp"

namespace objslam {

enum class VariableKind { RobotPose, ObjectPose };

struct VariableId {
  VariableKind kind = VariableKind::RobotPose;
  int index = 0;

  static VariableId robot(int i) { return {VariableKind::RobotPose, i}; }
  static VariableId object(int i) { return {VariableKind::ObjectPose, i}; }

  auto operator<=>(const VariableId&) const = default;
  std::string str() const;
};

struct PriorFactor {
  VariableId var;
  Pose3 measurement;
  Mat6 information = Mat6::Identity();
};

struct RelPoseFactor {
  VariableId from;
  VariableId to;
  Pose3 measurement;
  Mat6 information = Mat6::Identity();
};

struct ObjectFactor {
  VariableId robot;
  VariableId object;
  Pose3 measurement;  // object -> camera
  Mat6 information;
};

/// diag(10, 10, 10, 4, 4, 4) in (rot, trans) order.
Mat6 default_object_information();

using Assignment = std::map<VariableId, Pose3>;

class FactorGraph {
 public:
  /// Throws DuplicateId.
  void add_variable(VariableId id);
  bool has_variable(VariableId id) const;

  /// Throw UnknownVariable for missing endpoints and ConfigError for non-SPD information.
  void add_prior(VariableId var, const Pose3& measurement, const Mat6& information = Mat6::Identity());
  void add_rel_pose_factor(VariableId from, VariableId to, const Pose3& measurement,
                           const Mat6& information = Mat6::Identity());
  void add_object_factor(VariableId robot, VariableId object, const Pose3& measurement,
                         const Mat6& information = default_object_information());

  /// In insertion order.
  const std::vector<VariableId>& variables() const { return variables_; }
  const std::vector<PriorFactor>& priors() const { return priors_; }
  const std::vector<RelPoseFactor>& rel_factors() const { return rel_factors_; }
  const std::vector<ObjectFactor>& object_factors() const { return object_factors_; }

  /// Multiplies every information matrix by `factor`.
  void scale_information(double factor);

 private:
  void require(VariableId id) const;

  std::vector<VariableId> variables_;
  std::map<VariableId, std::size_t> lookup_;
  std::vector<PriorFactor> priors_;
  std::vector<RelPoseFactor> rel_factors_;
  std::vector<ObjectFactor> object_factors_;
};

Vec6 prior_residual(const PriorFactor& f, const Pose3& t);
Vec6 rel_residual(const RelPoseFactor& f, const Pose3& from, const Pose3& to);
Vec6 object_residual(const ObjectFactor& f, const Pose3& robot, const Pose3& object);

/// Jacobians of the residuals with respect to right twists of each endpoint.
Mat6 prior_jacobian(const PriorFactor& f, const Pose3& t);
std::pair<Mat6, Mat6> rel_jacobians(const RelPoseFactor& f, const Pose3& from, const Pose3& to);
std::pair<Mat6, Mat6> object_jacobians(const ObjectFactor& f, const Pose3& robot,
                                       const Pose3& object);

struct ErrorTerms {
  double pose = 0.0;    // relative factors
  double object = 0.0;  // object factors
  double prior = 0.0;
  double total() const { return pose + object + prior; }
};

/// Throws UnknownVariable when the assignment misses a variable.
ErrorTerms error_terms(const FactorGraph& graph, const Assignment& assignment);
/// Sum of all factor terms, priors included.
double total_error(const FactorGraph& graph, const Assignment& assignment);

/// Initial values by composing measurements outward from the priors, sweeping factors in
/// insertion order (odometry chaining for a pose chain). Throws DisconnectedGraph.
Assignment chain_init(const FactorGraph& graph, const Assignment& known = {});

/// Relaxed linear rotation solve projected to SO(3), then a linear translation solve.
/// Throws DisconnectedGraph.
Assignment chordal_init(const FactorGraph& graph);

struct SolverSettings {
  int max_iterations = 100;
  double relative_tolerance = 1e-12;
  double absolute_tolerance = 1e-24;
  double initial_damping = 1e-5;
};

struct GraphSolution {
  Assignment poses;
  ErrorTerms terms;
  double error = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Total error after initialization and after every step that lowered it.
  std::vector<double> error_history;
};

/// Levenberg-Marquardt on the full graph. Throws GaugeUnfixed, Diverged, UnknownVariable.
GraphSolution optimize_batch(const FactorGraph& graph, const Assignment& init,
                             const SolverSettings& settings = {});

/// Factors and variables arriving with one frame.
struct GraphIncrement {
  std::vector<VariableId> variables;
  std::vector<PriorFactor> priors;
  std::vector<RelPoseFactor> rel_factors;
  std::vector<ObjectFactor> object_factors;
};

/// Warm-started full re-linearization as increments arrive.
class IncrementalOptimizer {
 public:
  explicit IncrementalOptimizer(SolverSettings settings = {}, int solve_every = 1);

  /// Adds the increment, initializes new variables from the current estimate and, every
  /// `solve_every` calls, re-solves. Returns the current solution.
  const GraphSolution& add(const GraphIncrement& increment);
  /// Forces a solve of everything added so far.
  const GraphSolution& solve();

  const FactorGraph& graph() const { return graph_; }
  const GraphSolution& solution() const { return solution_; }

 private:
  SolverSettings settings_;
  int solve_every_;
  int pending_ = 0;
  FactorGraph graph_;
  GraphSolution solution_;
};

std::vector<GraphSolution> optimize_incremental(std::span<const GraphIncrement> stream,
                                                const SolverSettings& settings = {},
                                                int solve_every = 1);

/// Line-oriented text format (see docs/formats.md).
void write_graph(std::ostream& out, const FactorGraph& graph);
FactorGraph read_graph(std::istream& in);

/// 21 upper-triangular entries, row-major.
std::vector<double> information_upper(const Mat6& info);
Mat6 information_from_upper(std::span<const double> upper);

}  // namespace objslam
