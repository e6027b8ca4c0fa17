#include "objslam/graph.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <queue>
#include <set>

#include "objslam/error.hpp"
#include "objslam/text_io.hpp"

namespace objslam {

namespace {

void check_information(const Mat6& info) {
  if (!info.allFinite() || (info - info.transpose()).cwiseAbs().maxCoeff() >
                               1e-9 * std::max(1.0, info.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::ConfigError, "information matrix must be symmetric");
  }
  Eigen::LLT<Mat6> llt(info);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::ConfigError, "information matrix must be positive definite");
  }
}

const Pose3& lookup(const Assignment& a, VariableId id) {
  auto it = a.find(id);
  if (it == a.end()) throw Error(ErrorCode::UnknownVariable, "assignment misses " + id.str());
  return it->second;
}

// Every variable reached from a prior through factors, in BFS order.
std::set<VariableId> reachable_from_priors(const FactorGraph& graph) {
  std::map<VariableId, std::vector<VariableId>> adj;
  for (const auto& f : graph.rel_factors()) {
    adj[f.from].push_back(f.to);
    adj[f.to].push_back(f.from);
  }
  for (const auto& f : graph.object_factors()) {
    adj[f.robot].push_back(f.object);
    adj[f.object].push_back(f.robot);
  }
  std::set<VariableId> seen;
  std::queue<VariableId> q;
  for (const auto& p : graph.priors()) {
    if (seen.insert(p.var).second) q.push(p.var);
  }
  while (!q.empty()) {
    VariableId v = q.front();
    q.pop();
    for (VariableId n : adj[v]) {
      if (seen.insert(n).second) q.push(n);
    }
  }
  return seen;
}

void require_connected(const FactorGraph& graph) {
  const auto seen = reachable_from_priors(graph);
  for (VariableId v : graph.variables()) {
    if (!seen.count(v)) {
      throw Error(ErrorCode::DisconnectedGraph, v.str() + " is not connected to a prior");
    }
  }
}

// "Local frame -> world" form used by the chordal relaxation: robots invert, objects don't.
// Every factor then reads X_child = X_parent * Z.
struct ChordalEdge {
  std::size_t child;
  std::size_t parent;
  Pose3 z;
  double rot_weight;
  double trans_weight;
};

double block_weight(const Mat6& info, int offset) {
  return std::max(info.block<3, 3>(offset, offset).trace() / 3.0, 1e-12);
}

Eigen::MatrixXd solve_normal(const std::vector<Eigen::Triplet<double>>& triplets,
                             const Eigen::MatrixXd& rhs, Eigen::Index n) {
  Eigen::SparseMatrix<double> h(n, n);
  h.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(h);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::DisconnectedGraph, "linear initialization system is singular");
  }
  Eigen::MatrixXd x = solver.solve(rhs);
  if (solver.info() != Eigen::Success || !x.allFinite()) {
    throw Error(ErrorCode::DisconnectedGraph, "linear initialization solve failed");
  }
  return x;
}

}  // namespace

std::string VariableId::str() const {
  return (kind == VariableKind::RobotPose ? "robot:" : "object:") + std::to_string(index);
}

Mat6 default_object_information() {
  Vec6 d;
  d << 10.0, 10.0, 10.0, 4.0, 4.0, 4.0;
  return d.asDiagonal();
}

void FactorGraph::add_variable(VariableId id) {
  if (lookup_.count(id)) throw Error(ErrorCode::DuplicateId, id.str() + " already exists");
  lookup_.emplace(id, variables_.size());
  variables_.push_back(id);
}

bool FactorGraph::has_variable(VariableId id) const { return lookup_.count(id) != 0; }

void FactorGraph::require(VariableId id) const {
  if (!has_variable(id)) throw Error(ErrorCode::UnknownVariable, id.str() + " does not exist");
}

void FactorGraph::add_prior(VariableId var, const Pose3& measurement, const Mat6& information) {
  require(var);
  check_information(information);
  priors_.push_back({var, measurement, information});
}

void FactorGraph::add_rel_pose_factor(VariableId from, VariableId to, const Pose3& measurement,
                                      const Mat6& information) {
  require(from);
  require(to);
  check_information(information);
  rel_factors_.push_back({from, to, measurement, information});
}

void FactorGraph::add_object_factor(VariableId robot, VariableId object, const Pose3& measurement,
                                    const Mat6& information) {
  require(robot);
  require(object);
  if (robot.kind != VariableKind::RobotPose || object.kind != VariableKind::ObjectPose) {
    throw Error(ErrorCode::UnknownVariable, "object factor needs a robot and an object pose");
  }
  check_information(information);
  object_factors_.push_back({robot, object, measurement, information});
}

void FactorGraph::scale_information(double factor) {
  for (auto& f : priors_) f.information *= factor;
  for (auto& f : rel_factors_) f.information *= factor;
  for (auto& f : object_factors_) f.information *= factor;
}

Vec6 prior_residual(const PriorFactor& f, const Pose3& t) {
  return se3_log(f.measurement.inverse() * t).vector();
}

Vec6 rel_residual(const RelPoseFactor& f, const Pose3& from, const Pose3& to) {
  return se3_log(f.measurement.inverse() * to * from.inverse()).vector();
}

Vec6 object_residual(const ObjectFactor& f, const Pose3& robot, const Pose3& object) {
  return se3_log(f.measurement.inverse() * robot * object).vector();
}

Mat6 prior_jacobian(const PriorFactor& f, const Pose3& t) {
  return se3_right_jacobian_inverse(Twist6::from_vector(prior_residual(f, t)));
}

std::pair<Mat6, Mat6> rel_jacobians(const RelPoseFactor& f, const Pose3& from, const Pose3& to) {
  const Mat6 jr_inv = se3_right_jacobian_inverse(Twist6::from_vector(rel_residual(f, from, to)));
  const Mat6 j_to = jr_inv * adjoint(from);
  return {-j_to, j_to};
}

std::pair<Mat6, Mat6> object_jacobians(const ObjectFactor& f, const Pose3& robot,
                                       const Pose3& object) {
  const Mat6 jr_inv =
      se3_right_jacobian_inverse(Twist6::from_vector(object_residual(f, robot, object)));
  return {jr_inv * adjoint(object.inverse()), jr_inv};
}

ErrorTerms error_terms(const FactorGraph& graph, const Assignment& assignment) {
  ErrorTerms e;
  for (const auto& f : graph.priors()) {
    Vec6 r = prior_residual(f, lookup(assignment, f.var));
    e.prior += r.dot(f.information * r);
  }
  for (const auto& f : graph.rel_factors()) {
    Vec6 r = rel_residual(f, lookup(assignment, f.from), lookup(assignment, f.to));
    e.pose += r.dot(f.information * r);
  }
  for (const auto& f : graph.object_factors()) {
    Vec6 r = object_residual(f, lookup(assignment, f.robot), lookup(assignment, f.object));
    e.object += r.dot(f.information * r);
  }
  return e;
}

double total_error(const FactorGraph& graph, const Assignment& assignment) {
  return error_terms(graph, assignment).total();
}

Assignment chain_init(const FactorGraph& graph, const Assignment& known) {
  Assignment out;
  for (VariableId v : graph.variables()) {
    auto it = known.find(v);
    if (it != known.end()) out.emplace(v, it->second);
  }
  for (const auto& p : graph.priors()) out.emplace(p.var, p.measurement);

  bool progress = true;
  while (progress && out.size() < graph.variables().size()) {
    progress = false;
    for (const auto& f : graph.rel_factors()) {
      const bool has_from = out.count(f.from) != 0;
      const bool has_to = out.count(f.to) != 0;
      if (has_from && !has_to) {
        out.emplace(f.to, f.measurement * out.at(f.from));
        progress = true;
      } else if (!has_from && has_to) {
        out.emplace(f.from, (f.measurement.inverse() * out.at(f.to)).inverse());
        progress = true;
      }
    }
    for (const auto& f : graph.object_factors()) {
      const bool has_robot = out.count(f.robot) != 0;
      const bool has_object = out.count(f.object) != 0;
      if (has_robot && !has_object) {
        out.emplace(f.object, out.at(f.robot).inverse() * f.measurement);
        progress = true;
      } else if (!has_robot && has_object) {
        out.emplace(f.robot, f.measurement * out.at(f.object).inverse());
        progress = true;
      }
    }
  }
  for (VariableId v : graph.variables()) {
    if (!out.count(v)) {
      throw Error(ErrorCode::DisconnectedGraph, v.str() + " is not connected to a prior");
    }
  }
  return out;
}

Assignment chordal_init(const FactorGraph& graph) {
  require_connected(graph);
  const auto& vars = graph.variables();
  const std::size_t n = vars.size();
  std::map<VariableId, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[vars[i]] = i;

  auto to_local = [](VariableId v, const Pose3& t) {
    return v.kind == VariableKind::RobotPose ? t.inverse() : t;
  };

  std::vector<ChordalEdge> edges;
  for (const auto& f : graph.rel_factors()) {
    // X_from = X_to * Z
    edges.push_back({index[f.from], index[f.to], f.measurement, block_weight(f.information, 0),
                     block_weight(f.information, 3)});
  }
  for (const auto& f : graph.object_factors()) {
    // X_object = X_robot * Z
    edges.push_back({index[f.object], index[f.robot], f.measurement,
                     block_weight(f.information, 0), block_weight(f.information, 3)});
  }

  // Rotations: unknown M_v = R_v^T (3x3); each edge gives M_child = Rz^T M_parent, which is
  // the same linear system for each of the three columns of M.
  const Eigen::Index dim = static_cast<Eigen::Index>(3 * n);
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(dim, 3);
  auto add_block = [&trip](std::size_t r, std::size_t c, const Mat3& m) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (m(i, j) != 0.0) trip.emplace_back(3 * r + i, 3 * c + j, m(i, j));
  };
  for (const auto& e : edges) {
    // Residual M_c - A M_p with A = Rz^T; normal blocks: [I, -A; -A^T, A^T A].
    const Mat3 a = e.z.rotation().transpose();
    add_block(e.child, e.child, e.rot_weight * Mat3::Identity());
    add_block(e.child, e.parent, -e.rot_weight * a);
    add_block(e.parent, e.child, -e.rot_weight * a.transpose());
    add_block(e.parent, e.parent, e.rot_weight * (a.transpose() * a));
  }
  for (const auto& p : graph.priors()) {
    const std::size_t v = index[p.var];
    const double w = block_weight(p.information, 0);
    add_block(v, v, w * Mat3::Identity());
    rhs.middleRows<3>(3 * v) += w * to_local(p.var, p.measurement).rotation().transpose();
  }
  const Eigen::MatrixXd m = solve_normal(trip, rhs, dim);
  std::vector<Mat3> rot(n);
  for (std::size_t v = 0; v < n; ++v) {
    rot[v] = project_to_so3(m.middleRows<3>(3 * v).transpose());
  }

  // Translations with rotations fixed: t_child - t_parent = R_parent t_z.
  trip.clear();
  Eigen::MatrixXd trhs = Eigen::MatrixXd::Zero(dim, 1);
  for (const auto& e : edges) {
    const Mat3 i3 = e.trans_weight * Mat3::Identity();
    add_block(e.child, e.child, i3);
    add_block(e.child, e.parent, -i3);
    add_block(e.parent, e.child, -i3);
    add_block(e.parent, e.parent, i3);
    const Vec3 d = rot[e.parent] * e.z.translation();
    trhs.middleRows<3>(3 * e.child) += e.trans_weight * d;
    trhs.middleRows<3>(3 * e.parent) -= e.trans_weight * d;
  }
  for (const auto& p : graph.priors()) {
    const std::size_t v = index[p.var];
    const double w = block_weight(p.information, 3);
    add_block(v, v, w * Mat3::Identity());
    trhs.middleRows<3>(3 * v) += w * to_local(p.var, p.measurement).translation();
  }
  const Eigen::MatrixXd t = solve_normal(trip, trhs, dim);

  Assignment out;
  for (std::size_t v = 0; v < n; ++v) {
    const Pose3 local(rot[v], t.middleRows<3>(3 * v));
    out.emplace(vars[v], to_local(vars[v], local));
  }
  return out;
}

GraphSolution optimize_batch(const FactorGraph& graph, const Assignment& init,
                             const SolverSettings& settings) {
  if (graph.priors().empty()) throw Error(ErrorCode::GaugeUnfixed, "graph has no prior");
  const auto& vars = graph.variables();
  std::map<VariableId, Eigen::Index> index;
  for (std::size_t i = 0; i < vars.size(); ++i) index[vars[i]] = static_cast<Eigen::Index>(6 * i);
  const Eigen::Index dim = static_cast<Eigen::Index>(6 * vars.size());

  GraphSolution sol;
  for (VariableId v : vars) sol.poses.emplace(v, lookup(init, v));
  sol.terms = error_terms(graph, sol.poses);
  sol.error = sol.terms.total();
  if (!std::isfinite(sol.error)) throw Error(ErrorCode::Diverged, "initial error is not finite");
  sol.error_history.push_back(sol.error);

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd g(dim);
  auto add_block = [&trip](Eigen::Index r, Eigen::Index c, const Mat6& m) {
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) trip.emplace_back(r + i, c + j, m(i, j));
  };

  double mu = -1.0;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool pattern_ready = false;
  for (int it = 0; it < settings.max_iterations; ++it) {
    if (sol.error <= settings.absolute_tolerance) {
      sol.converged = true;
      break;
    }
    trip.clear();
    g.setZero();
    const Assignment& x = sol.poses;
    for (const auto& f : graph.priors()) {
      const Pose3& t = x.at(f.var);
      const Vec6 r = prior_residual(f, t);
      const Mat6 j = prior_jacobian(f, t);
      const Eigen::Index a = index[f.var];
      add_block(a, a, j.transpose() * f.information * j);
      g.segment<6>(a) += j.transpose() * f.information * r;
    }
    for (const auto& f : graph.rel_factors()) {
      const Pose3& ti = x.at(f.from);
      const Pose3& tj = x.at(f.to);
      const Vec6 r = rel_residual(f, ti, tj);
      const auto [ji, jj] = rel_jacobians(f, ti, tj);
      const Eigen::Index a = index[f.from];
      const Eigen::Index b = index[f.to];
      add_block(a, a, ji.transpose() * f.information * ji);
      add_block(a, b, ji.transpose() * f.information * jj);
      add_block(b, a, jj.transpose() * f.information * ji);
      add_block(b, b, jj.transpose() * f.information * jj);
      g.segment<6>(a) += ji.transpose() * f.information * r;
      g.segment<6>(b) += jj.transpose() * f.information * r;
    }
    for (const auto& f : graph.object_factors()) {
      const Pose3& tr = x.at(f.robot);
      const Pose3& to = x.at(f.object);
      const Vec6 r = object_residual(f, tr, to);
      const auto [jr, jo] = object_jacobians(f, tr, to);
      const Eigen::Index a = index[f.robot];
      const Eigen::Index b = index[f.object];
      add_block(a, a, jr.transpose() * f.information * jr);
      add_block(a, b, jr.transpose() * f.information * jo);
      add_block(b, a, jo.transpose() * f.information * jr);
      add_block(b, b, jo.transpose() * f.information * jo);
      g.segment<6>(a) += jr.transpose() * f.information * r;
      g.segment<6>(b) += jo.transpose() * f.information * r;
    }
    Eigen::SparseMatrix<double> h(dim, dim);
    h.setFromTriplets(trip.begin(), trip.end());
    const Eigen::VectorXd diag = h.diagonal();
    const double diag_max = std::max(diag.maxCoeff(), 1e-300);
    if (mu < 0.0) mu = settings.initial_damping;

    bool accepted = false;
    double rel = 0.0;
    for (int attempt = 0; attempt < 20; ++attempt) {
      Eigen::SparseMatrix<double> a = h;
      for (Eigen::Index i = 0; i < dim; ++i) {
        a.coeffRef(i, i) += mu * (diag[i] + 1e-9 * diag_max);
      }
      if (!pattern_ready) {
        solver.analyzePattern(a);
        pattern_ready = true;
      }
      solver.factorize(a);
      if (solver.info() != Eigen::Success) {
        mu *= 10.0;
        continue;
      }
      const Eigen::VectorXd step = solver.solve(-g);
      if (!step.allFinite()) {
        mu *= 10.0;
        continue;
      }
      Assignment cand;
      for (VariableId v : vars) {
        cand.emplace(v, x.at(v) * se3_exp(Twist6::from_vector(step.segment<6>(index[v]))));
      }
      const ErrorTerms terms = error_terms(graph, cand);
      const double err = terms.total();
      // Near the minimum the cost stops resolving the argmin; take small steps that keep it level.
      const bool polish = step.lpNorm<Eigen::Infinity>() < 1e-6 && err <= sol.error * (1.0 + 1e-12);
      if (std::isfinite(err) && (err < sol.error || polish)) {
        rel = std::max(0.0, (sol.error - err) / sol.error);
        sol.poses = std::move(cand);
        sol.terms = terms;
        if (err < sol.error) sol.error_history.push_back(err);
        sol.error = err;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        break;
      }
      mu *= 4.0;
    }
    sol.iterations = it + 1;
    if (!accepted || rel < settings.relative_tolerance) {
      sol.converged = true;
      break;
    }
  }
  if (!std::isfinite(sol.error)) throw Error(ErrorCode::Diverged, "non-finite graph error");
  return sol;
}

IncrementalOptimizer::IncrementalOptimizer(SolverSettings settings, int solve_every)
    : settings_(settings), solve_every_(std::max(1, solve_every)) {}

const GraphSolution& IncrementalOptimizer::add(const GraphIncrement& increment) {
  for (VariableId v : increment.variables) graph_.add_variable(v);
  for (const auto& f : increment.priors) graph_.add_prior(f.var, f.measurement, f.information);
  for (const auto& f : increment.rel_factors) {
    graph_.add_rel_pose_factor(f.from, f.to, f.measurement, f.information);
  }
  for (const auto& f : increment.object_factors) {
    graph_.add_object_factor(f.robot, f.object, f.measurement, f.information);
  }
  solution_.poses = chain_init(graph_, solution_.poses);
  if (++pending_ >= solve_every_) return solve();
  solution_.terms = error_terms(graph_, solution_.poses);
  solution_.error = solution_.terms.total();
  return solution_;
}

const GraphSolution& IncrementalOptimizer::solve() {
  pending_ = 0;
  solution_ = optimize_batch(graph_, solution_.poses, settings_);
  return solution_;
}

std::vector<GraphSolution> optimize_incremental(std::span<const GraphIncrement> stream,
                                                const SolverSettings& settings, int solve_every) {
  IncrementalOptimizer opt(settings, solve_every);
  std::vector<GraphSolution> out;
  out.reserve(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    opt.add(stream[i]);
    if (i + 1 == stream.size()) opt.solve();
    out.push_back(opt.solution());
  }
  return out;
}

std::vector<double> information_upper(const Mat6& info) {
  std::vector<double> out;
  out.reserve(21);
  for (int i = 0; i < 6; ++i)
    for (int j = i; j < 6; ++j) out.push_back(info(i, j));
  return out;
}

Mat6 information_from_upper(std::span<const double> upper) {
  if (upper.size() != 21) throw Error(ErrorCode::ParseError, "information needs 21 entries");
  Mat6 m;
  std::size_t k = 0;
  for (int i = 0; i < 6; ++i) {
    for (int j = i; j < 6; ++j) {
      m(i, j) = upper[k];
      m(j, i) = upper[k];
      ++k;
    }
  }
  return m;
}

namespace {

void write_pose_info(std::ostream& out, const Pose3& pose, const Mat6& info) {
  const Eigen::Quaterniond q = pose.quaternion();
  const Vec3& t = pose.translation();
  for (double v : {t.x(), t.y(), t.z(), q.w(), q.x(), q.y(), q.z()}) out << ' ' << format_double(v);
  for (double v : information_upper(info)) out << ' ' << format_double(v);
  out << '\n';
}

std::pair<Pose3, Mat6> parse_pose_info(const std::vector<std::string>& tok, std::size_t first) {
  if (tok.size() != first + 28) throw Error(ErrorCode::ParseError, tok[0] + " needs 28 numbers");
  double v[28];
  for (std::size_t i = 0; i < 28; ++i) v[i] = parse_double(tok[first + i]);
  Pose3 pose = Pose3::from_quaternion(v[3], v[4], v[5], v[6], Vec3(v[0], v[1], v[2]));
  return {pose, information_from_upper({v + 7, 21})};
}

int parse_index(const std::string& s) { return static_cast<int>(parse_int(s)); }

}  // namespace

void write_graph(std::ostream& out, const FactorGraph& graph) {
  for (VariableId v : graph.variables()) {
    out << "VAR " << (v.kind == VariableKind::RobotPose ? "ROBOT" : "OBJECT") << ' ' << v.index
        << '\n';
  }
  for (const auto& f : graph.priors()) {
    out << (f.var.kind == VariableKind::RobotPose ? "PRIOR " : "PRIOR_OBJ ") << f.var.index;
    write_pose_info(out, f.measurement, f.information);
  }
  for (const auto& f : graph.rel_factors()) {
    out << "REL " << f.from.index << ' ' << f.to.index;
    write_pose_info(out, f.measurement, f.information);
  }
  for (const auto& f : graph.object_factors()) {
    out << "OBJ " << f.robot.index << ' ' << f.object.index;
    write_pose_info(out, f.measurement, f.information);
  }
}

FactorGraph read_graph(std::istream& in) {
  FactorGraph graph;
  std::string line;
  while (next_content_line(in, line)) {
    const auto tok = split_tokens(line);
    const std::string& kind = tok[0];
    if (kind == "VAR") {
      if (tok.size() != 3) throw Error(ErrorCode::ParseError, "VAR needs kind and id");
      if (tok[1] == "ROBOT") {
        graph.add_variable(VariableId::robot(parse_index(tok[2])));
      } else if (tok[1] == "OBJECT") {
        graph.add_variable(VariableId::object(parse_index(tok[2])));
      } else {
        throw Error(ErrorCode::ParseError, "unknown variable kind " + tok[1]);
      }
    } else if (kind == "PRIOR" || kind == "PRIOR_OBJ") {
      if (tok.size() < 2) throw Error(ErrorCode::ParseError, "PRIOR needs an id");
      auto [pose, info] = parse_pose_info(tok, 2);
      const int id = parse_index(tok[1]);
      graph.add_prior(kind == "PRIOR" ? VariableId::robot(id) : VariableId::object(id), pose, info);
    } else if (kind == "REL") {
      if (tok.size() < 3) throw Error(ErrorCode::ParseError, "REL needs two ids");
      auto [pose, info] = parse_pose_info(tok, 3);
      graph.add_rel_pose_factor(VariableId::robot(parse_index(tok[1])),
                                VariableId::robot(parse_index(tok[2])), pose, info);
    } else if (kind == "OBJ") {
      if (tok.size() < 3) throw Error(ErrorCode::ParseError, "OBJ needs two ids");
      auto [pose, info] = parse_pose_info(tok, 3);
      graph.add_object_factor(VariableId::robot(parse_index(tok[1])),
                              VariableId::object(parse_index(tok[2])), pose, info);
    } else {
      throw Error(ErrorCode::ParseError, "unknown record " + kind);
    }
  }
  return graph;
}

}  // namespace objslam
