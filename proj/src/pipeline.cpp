#include "objslam/pipeline.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "objslam/error.hpp"

namespace objslam {

using nlohmann::json;

namespace {

Mat6 odometry_information(const Measurements& m, const PipelineConfig& cfg) {
  const double sr = std::max(m.odometry_sigma_rot, cfg.odometry_rot_floor);
  const double st = std::max(m.odometry_sigma_trans, cfg.odometry_trans_floor);
  Vec6 d;
  d << Vec3::Constant(1.0 / (sr * sr)), Vec3::Constant(1.0 / (st * st));
  return d.asDiagonal();
}

FitConfig effective_fit_config(const Measurements& m, const CategoryModel& model,
                               const PipelineConfig& cfg) {
  FitConfig fit = cfg.fit;
  if (!fit.regularizer_weight && cfg.regularizer_from_noise) {
    const double ev = model.mean_eigenvalue();
    fit.regularizer_weight = ev > 0.0 ? m.keypoint_sigma * m.keypoint_sigma / ev : 0.0;
  }
  return fit;
}

// Fits every observation; failed or implausible fits are counted and skipped.
std::vector<std::vector<DetectionRecord>> fit_all(const Measurements& m,
                                                  const CategoryModel& model,
                                                  const PipelineConfig& cfg, int& rejected) {
  const FitConfig fit = effective_fit_config(m, model, cfg);
  const double pixel_sigma = std::max(m.keypoint_sigma, cfg.pixel_sigma_floor);
  const int min_visible = cfg.min_visible_keypoints > 0 ? cfg.min_visible_keypoints
                                                        : (6 + model.basis_size()) / 2 + 1;
  std::vector<std::vector<DetectionRecord>> out(m.frames.size());
  for (std::size_t f = 0; f < m.frames.size(); ++f) {
    for (std::size_t i = 0; i < m.frames[f].size(); ++i) {
      const KeypointObservation& obs = m.frames[f][i];
      if (obs.num_visible() < min_visible) {
        ++rejected;
        continue;
      }
      try {
        const ObjectEstimate init = initialize_estimate(obs, model, m.intrinsics, m.ground, fit);
        ObjectEstimate est = fit_alternating(obs, model, m.intrinsics, fit, init);
        if (cfg.ground_scale) {
          est = ground_scale_correction(obs, est, model, m.intrinsics, m.ground, fit,
                                        cfg.contact_height);
        }
        const double reg = fit.resolved_regularizer(model) * est.shape.lambda.squaredNorm();
        if ((est.cost - reg) / obs.num_visible() > cfg.max_mean_fit_cost) {
          ++rejected;
          continue;
        }
        DetectionRecord d;
        d.frame = static_cast<int>(f);
        d.observation = static_cast<int>(i);
        d.object_to_camera = est.pose;
        d.shape = est.shape;
        d.fit_cost = est.cost;
        d.information = cfg.object_information == ObjectInformation::FromFit
                            ? pose_information(obs, est, model, m.intrinsics, fit, pixel_sigma)
                            : cfg.fixed_object_information;
        Eigen::LLT<Mat6> llt(d.information);
        if (llt.info() != Eigen::Success) d.information = cfg.fixed_object_information;
        out[f].push_back(std::move(d));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigError || e.code() == ErrorCode::DimensionMismatch) throw;
        ++rejected;
      }
    }
  }
  return out;
}

std::vector<Pose3> dead_reckon(const Measurements& m) {
  std::vector<Pose3> poses{m.initial_pose};
  for (const auto& z : m.odometry) poses.push_back(z * poses.back());
  return poses;
}

GraphIncrement frame_increment(int f, const Measurements& m, const PipelineConfig& cfg,
                               const std::vector<DetectionRecord>& dets,
                               std::map<int, bool>& known_objects, const Mat6& odo_info) {
  GraphIncrement inc;
  const VariableId robot = VariableId::robot(f);
  inc.variables.push_back(robot);
  if (f == 0) {
    inc.priors.push_back({robot, m.initial_pose, cfg.prior_information * Mat6::Identity()});
  } else {
    inc.rel_factors.push_back({VariableId::robot(f - 1), robot, m.odometry[f - 1], odo_info});
  }
  for (const auto& d : dets) {
    const VariableId obj = VariableId::object(d.global_id);
    if (!known_objects[d.global_id]) {
      known_objects[d.global_id] = true;
      inc.variables.push_back(obj);
    }
    inc.object_factors.push_back({robot, obj, d.object_to_camera, d.information});
  }
  return inc;
}

// Shapes: mean over each track's detections. Returns detections per track.
std::map<int, int> average_shapes(PipelineResult& r) {
  std::map<int, int> counts;
  r.shapes.clear();
  for (const auto& d : r.detections) {
    auto [it, fresh] = r.shapes.emplace(d.global_id, d.shape);
    if (!fresh) it->second.lambda += d.shape.lambda;
    ++counts[d.global_id];
  }
  for (auto& [id, s] : r.shapes) s.lambda /= counts[id];
  return counts;
}

FactorGraph batch_graph(const std::vector<GraphIncrement>& stream) {
  FactorGraph graph;
  for (const auto& inc : stream) {
    for (auto v : inc.variables) graph.add_variable(v);
    for (const auto& p : inc.priors) graph.add_prior(p.var, p.measurement, p.information);
    for (const auto& f : inc.rel_factors) graph.add_rel_pose_factor(f.from, f.to, f.measurement, f.information);
    for (const auto& f : inc.object_factors) {
      graph.add_object_factor(f.robot, f.object, f.measurement, f.information);
    }
  }
  return graph;
}

double object_chi2(const DetectionRecord& d, const Assignment& x) {
  const ObjectFactor f{VariableId::robot(d.frame), VariableId::object(d.global_id), d.object_to_camera,
                       d.information};
  const Vec6 e = object_residual(f, x.at(f.robot), x.at(f.object));
  return e.dot(d.information * e);
}

}  // namespace

const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::Odometry: return "odo";
    case RunMode::Batch: return "batch";
    case RunMode::Incremental: return "inc";
  }
  return "?";
}

RunMode run_mode_from_string(const std::string& s) {
  if (s == "odo") return RunMode::Odometry;
  if (s == "batch") return RunMode::Batch;
  if (s == "inc") return RunMode::Incremental;
  throw Error(ErrorCode::ConfigError, "mode must be odo, batch or inc");
}

void PipelineConfig::validate() const {
  fit.validate();
  assoc.validate();
  if (incremental_solve_every < 1 || !(pixel_sigma_floor > 0.0) || !(odometry_rot_floor > 0.0) ||
      !(odometry_trans_floor > 0.0) || !(prior_information > 0.0) ||
      !(max_mean_fit_cost > 0.0) || !(contact_height >= 0.0) || consistency_window < 0 || min_track_hits < 1 ||
      !(object_outlier_chi2 >= 0.0) ||
      min_visible_keypoints < 0 ||
      !(consistency_distance > 0.0) || !(consistency_angle > 0.0) || solver.max_iterations < 1) {
    throw Error(ErrorCode::ConfigError, "pipeline configuration values must be positive");
  }
  Eigen::LLT<Mat6> llt(fixed_object_information);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::ConfigError, "fixed object information must be positive definite");
  }
}

json pipeline_config_to_json(const PipelineConfig& c) {
  json fit = {
      {"regularizer_weight", c.fit.regularizer_weight ? json(*c.fit.regularizer_weight) : json()},
      {"max_alternations", c.fit.max_alternations},
      {"max_iterations", c.fit.max_iterations},
      {"tolerance", c.fit.tolerance},
      {"stage_tolerance", c.fit.stage_tolerance},
      {"kernel", c.fit.kernel == RobustKernel::Huber ? "huber" : "quadratic"},
      {"huber_width", c.fit.huber_width},
      {"azimuth_seeds", c.fit.azimuth_seeds},
      {"joint_refinement", c.fit.joint_refinement},
  };
  json assoc = {
      {"position_gate", c.assoc.position_gate},
      {"pose_weight", c.assoc.pose_weight},
      {"shape_weight", c.assoc.shape_weight},
      {"orientation_weight", c.assoc.orientation_weight},
      {"loop_gate", c.assoc.loop_gate},
      {"miss_tolerance", c.assoc.miss_tolerance},
  };
  json diag = json::array();
  for (int i = 0; i < 6; ++i) diag.push_back(c.fixed_object_information(i, i));
  json graph = {
      {"max_iterations", c.solver.max_iterations},
      {"relative_tolerance", c.solver.relative_tolerance},
      {"absolute_tolerance", c.solver.absolute_tolerance},
      {"initial_damping", c.solver.initial_damping},
      {"incremental_solve_every", c.incremental_solve_every},
      {"object_information",
       c.object_information == ObjectInformation::FromFit ? "fit" : "fixed"},
      {"fixed_object_information_diagonal", diag},
      {"pixel_sigma_floor", c.pixel_sigma_floor},
      {"odometry_rot_floor", c.odometry_rot_floor},
      {"odometry_trans_floor", c.odometry_trans_floor},
      {"prior_information", c.prior_information},
  };
  json pipeline = {
      {"regularizer_from_noise", c.regularizer_from_noise},
      {"max_mean_fit_cost", c.max_mean_fit_cost},
      {"min_visible_keypoints", c.min_visible_keypoints},
      {"ground_scale", c.ground_scale},
      {"contact_height", c.contact_height},
      {"consistency_window", c.consistency_window},
      {"consistency_distance", c.consistency_distance},
      {"consistency_angle", c.consistency_angle},
      {"min_track_hits", c.min_track_hits},
      {"object_outlier_chi2", c.object_outlier_chi2},
  };
  return {{"fit", fit}, {"assoc", assoc}, {"graph", graph}, {"pipeline", pipeline}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c;
  try {
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
    auto get = [](const json& sec, const char* key, auto& field) {
      if (sec.contains(key)) field = sec.at(key).get<std::decay_t<decltype(field)>>();
    };
    for (const auto& [key, _] : j.items()) {
      if (key != "fit" && key != "assoc" && key != "graph" && key != "pipeline") {
        throw Error(ErrorCode::ConfigError, "unknown config section " + key);
      }
    }
    if (j.contains("fit")) {
      const json& f = j.at("fit");
      if (f.contains("regularizer_weight") && !f.at("regularizer_weight").is_null()) {
        c.fit.regularizer_weight = f.at("regularizer_weight").get<double>();
      }
      get(f, "max_alternations", c.fit.max_alternations);
      get(f, "max_iterations", c.fit.max_iterations);
      get(f, "tolerance", c.fit.tolerance);
      get(f, "stage_tolerance", c.fit.stage_tolerance);
      if (f.contains("kernel")) {
        const auto k = f.at("kernel").get<std::string>();
        if (k == "huber") {
          c.fit.kernel = RobustKernel::Huber;
        } else if (k == "quadratic") {
          c.fit.kernel = RobustKernel::Quadratic;
        } else {
          throw Error(ErrorCode::ConfigError, "kernel must be huber or quadratic");
        }
      }
      get(f, "huber_width", c.fit.huber_width);
      get(f, "azimuth_seeds", c.fit.azimuth_seeds);
      get(f, "joint_refinement", c.fit.joint_refinement);
    }
    if (j.contains("assoc")) {
      const json& a = j.at("assoc");
      get(a, "position_gate", c.assoc.position_gate);
      get(a, "pose_weight", c.assoc.pose_weight);
      get(a, "shape_weight", c.assoc.shape_weight);
      get(a, "orientation_weight", c.assoc.orientation_weight);
      get(a, "loop_gate", c.assoc.loop_gate);
      get(a, "miss_tolerance", c.assoc.miss_tolerance);
    }
    if (j.contains("graph")) {
      const json& g = j.at("graph");
      get(g, "max_iterations", c.solver.max_iterations);
      get(g, "relative_tolerance", c.solver.relative_tolerance);
      get(g, "absolute_tolerance", c.solver.absolute_tolerance);
      get(g, "initial_damping", c.solver.initial_damping);
      get(g, "incremental_solve_every", c.incremental_solve_every);
      if (g.contains("object_information")) {
        const auto s = g.at("object_information").get<std::string>();
        if (s == "fit") {
          c.object_information = ObjectInformation::FromFit;
        } else if (s == "fixed") {
          c.object_information = ObjectInformation::Fixed;
        } else {
          throw Error(ErrorCode::ConfigError, "object_information must be fit or fixed");
        }
      }
      if (g.contains("fixed_object_information_diagonal")) {
        const auto d = g.at("fixed_object_information_diagonal").get<std::vector<double>>();
        if (d.size() != 6) throw Error(ErrorCode::ConfigError, "information diagonal needs 6");
        c.fixed_object_information = Vec6(d.data()).asDiagonal();
      }
      get(g, "pixel_sigma_floor", c.pixel_sigma_floor);
      get(g, "odometry_rot_floor", c.odometry_rot_floor);
      get(g, "odometry_trans_floor", c.odometry_trans_floor);
      get(g, "prior_information", c.prior_information);
    }
    if (j.contains("pipeline")) {
      const json& p = j.at("pipeline");
      get(p, "regularizer_from_noise", c.regularizer_from_noise);
      get(p, "max_mean_fit_cost", c.max_mean_fit_cost);
      get(p, "min_visible_keypoints", c.min_visible_keypoints);
      get(p, "ground_scale", c.ground_scale);
      get(p, "contact_height", c.contact_height);
      get(p, "consistency_window", c.consistency_window);
      get(p, "consistency_distance", c.consistency_distance);
      get(p, "consistency_angle", c.consistency_angle);
      get(p, "min_track_hits", c.min_track_hits);
      get(p, "object_outlier_chi2", c.object_outlier_chi2);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  c.validate();
  return c;
}

namespace {

// Single-frame fits occasionally land on the front/back mirror of the object; those disagree
// with the same track's neighbours in time.
int drop_inconsistent(std::vector<std::vector<DetectionRecord>>& detections,
                      const std::vector<Pose3>& dead_reckoning, const PipelineConfig& cfg) {
  struct Item {
    int frame;
    Pose3 world;
  };
  std::map<int, std::vector<Item>> by_track;
  for (std::size_t f = 0; f < detections.size(); ++f) {
    for (const auto& d : detections[f]) {
      by_track[d.global_id].push_back({d.frame, dead_reckoning[f].inverse() * d.object_to_camera});
    }
  }
  auto agree = [&](const Pose3& a, const Pose3& b) {
    return (a.translation() - b.translation()).norm() <= cfg.consistency_distance &&
           rotation_angle(a.rotation().transpose() * b.rotation()) <= cfg.consistency_angle;
  };
  int dropped = 0;
  for (std::size_t f = 0; f < detections.size(); ++f) {
    auto& frame = detections[f];
    std::vector<DetectionRecord> kept;
    for (auto& d : frame) {
      const Pose3 world = dead_reckoning[f].inverse() * d.object_to_camera;
      int neighbours = 0;
      int agreeing = 0;
      for (const auto& it : by_track[d.global_id]) {
        if (it.frame == d.frame || std::abs(it.frame - d.frame) > cfg.consistency_window) continue;
        ++neighbours;
        if (agree(world, it.world)) ++agreeing;
      }
      if (neighbours >= 2 && 2 * agreeing < neighbours) {
        ++dropped;
        continue;
      }
      kept.push_back(std::move(d));
    }
    frame = std::move(kept);
  }
  return dropped;
}

}  // namespace

PipelineResult run_pipeline(const Measurements& m, const CategoryModel& model, RunMode mode,
                            bool olc, const PipelineConfig& cfg) {
  cfg.validate();
  if (m.frames.empty() || m.frames.size() != m.odometry.size() + 1) {
    throw Error(ErrorCode::ParseError, "need one more frame than odometry steps");
  }
  if (!m.intrinsics.is_valid()) throw Error(ErrorCode::ParseError, "invalid intrinsics");
  PipelineResult r;
  r.name = m.name;
  r.mode = mode;
  r.olc = olc;
  r.dead_reckoning = dead_reckon(m);

  auto detections = fit_all(m, model, cfg, r.rejected_fits);

  // Association runs on dead-reckoned poses in every mode so that all modes see one map.
  TrackStore store;
  for (std::size_t f = 0; f < detections.size(); ++f) {
    const Pose3 cam_to_world = r.dead_reckoning[f].inverse();
    std::vector<WorldDetection> world;
    for (const auto& d : detections[f]) world.push_back({cam_to_world * d.object_to_camera, d.shape});
    auto records = associate_frame(store, static_cast<int>(f), world, cfg.assoc, olc);
    for (std::size_t i = 0; i < records.size(); ++i) {
      detections[f][i].global_id = records[i].global_id;
      r.assoc_log.push_back(records[i]);
    }
  }
  if (cfg.consistency_window > 0) {
    r.inconsistent_detections = drop_inconsistent(detections, r.dead_reckoning, cfg);
  }
  std::map<int, int> hits;
  for (const auto& frame : detections) {
    for (const auto& d : frame) ++hits[d.global_id];
  }
  for (auto& frame : detections) {
    std::erase_if(frame, [&](const DetectionRecord& d) {
      if (hits[d.global_id] >= cfg.min_track_hits) return false;
      ++r.inconsistent_detections;
      return true;
    });
    for (auto& d : frame) r.detections.push_back(d);
  }

  std::map<int, int> counts = average_shapes(r);

  if (mode == RunMode::Odometry) {
    r.trajectory = r.dead_reckoning;
    std::map<int, Vec3> sums;
    for (const auto& d : r.detections) {
      const Pose3 world = r.dead_reckoning[d.frame].inverse() * d.object_to_camera;
      r.objects.emplace(d.global_id, world);
      sums.emplace(d.global_id, Vec3::Zero()).first->second += world.translation();
    }
    for (auto& [id, pose] : r.objects) {
      pose = Pose3(pose.rotation(), sums[id] / counts[id]);
    }
    return r;
  }

  const Mat6 odo_info = odometry_information(m, cfg);
  std::map<int, bool> known;
  auto build_stream = [&] {
    known.clear();
    std::vector<std::vector<DetectionRecord>> per_frame(m.frames.size());
    for (const auto& d : r.detections) per_frame[d.frame].push_back(d);
    std::vector<GraphIncrement> stream;
    for (std::size_t f = 0; f < per_frame.size(); ++f) {
      stream.push_back(frame_increment(static_cast<int>(f), m, cfg, per_frame[f], known, odo_info));
    }
    return stream;
  };
  const std::vector<GraphIncrement> stream = build_stream();

  GraphSolution sol;
  if (mode == RunMode::Batch) {
    const FactorGraph graph = batch_graph(stream);
    sol = optimize_batch(graph, chordal_init(graph), cfg.solver);
  } else {
    IncrementalOptimizer opt(cfg.solver, cfg.incremental_solve_every);
    for (const auto& inc : stream) opt.add(inc);
    sol = opt.solve();
  }

  if (cfg.object_outlier_chi2 > 0.0) {
    const auto before = r.detections.size();
    std::erase_if(r.detections, [&](const DetectionRecord& d) {
      return object_chi2(d, sol.poses) > cfg.object_outlier_chi2;
    });
    if (r.detections.size() != before) {
      r.inconsistent_detections += static_cast<int>(before - r.detections.size());
      average_shapes(r);
      const FactorGraph graph = batch_graph(build_stream());
      Assignment init;
      for (auto v : graph.variables()) init.emplace(v, sol.poses.at(v));
      sol = optimize_batch(graph, init, cfg.solver);
    }
  }
  r.graph_error = sol.error;
  r.iterations = sol.iterations;
  r.converged = sol.converged;
  for (std::size_t f = 0; f < m.frames.size(); ++f) {
    r.trajectory.push_back(sol.poses.at(VariableId::robot(static_cast<int>(f))));
  }
  for (const auto& [id, _] : known) r.objects[id] = sol.poses.at(VariableId::object(id));
  return r;
}

json estimates_to_json(const PipelineResult& r) {
  json traj = json::array();
  for (const auto& p : r.trajectory) traj.push_back(pose_to_json(p));
  json objects = json::array();
  for (const auto& [id, pose] : r.objects) {
    json shape = json::array();
    if (auto it = r.shapes.find(id); it != r.shapes.end()) {
      for (Eigen::Index i = 0; i < it->second.lambda.size(); ++i) shape.push_back(it->second.lambda[i]);
    }
    objects.push_back({{"id", id}, {"pose", pose_to_json(pose)}, {"shape", shape}});
  }
  json dets = json::array();
  for (const auto& d : r.detections) {
    dets.push_back({{"frame", d.frame}, {"observation", d.observation}, {"global_id", d.global_id}});
  }
  return {{"format", "objslam-estimates"},
          {"version", 1},
          {"name", r.name},
          {"mode", to_string(r.mode)},
          {"olc", r.olc},
          {"trajectory", traj},
          {"objects", objects},
          {"detections", dets},
          {"rejected_fits", r.rejected_fits},
          {"inconsistent_detections", r.inconsistent_detections},
          {"graph_error", r.graph_error},
          {"iterations", r.iterations},
          {"converged", r.converged}};
}

PipelineResult estimates_from_json(const json& j) {
  try {
    if (j.value("format", "") != "objslam-estimates") {
      throw Error(ErrorCode::ParseError, "not an objslam estimates document");
    }
    PipelineResult r;
    r.name = j.at("name").get<std::string>();
    r.mode = run_mode_from_string(j.at("mode").get<std::string>());
    r.olc = j.at("olc").get<bool>();
    for (const auto& p : j.at("trajectory")) r.trajectory.push_back(pose_from_json(p));
    for (const auto& o : j.at("objects")) {
      const int id = o.at("id").get<int>();
      r.objects[id] = pose_from_json(o.at("pose"));
      const auto s = o.at("shape").get<std::vector<double>>();
      r.shapes[id] = {Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()))};
    }
    for (const auto& d : j.at("detections")) {
      DetectionRecord rec;
      rec.frame = d.at("frame").get<int>();
      rec.observation = d.at("observation").get<int>();
      rec.global_id = d.at("global_id").get<int>();
      r.detections.push_back(rec);
    }
    r.rejected_fits = j.at("rejected_fits").get<int>();
    r.inconsistent_detections = j.value("inconsistent_detections", 0);
    r.graph_error = j.at("graph_error").get<double>();
    r.iterations = j.at("iterations").get<int>();
    r.converged = j.at("converged").get<bool>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw Error(ErrorCode::ParseError, e.what());
    throw;
  }
}

}  // namespace objslam
