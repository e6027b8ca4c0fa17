#include "objslam/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "objslam/error.hpp"

namespace objslam {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

// Seed streams.
constexpr std::uint64_t kOdometryStream = 2;
constexpr std::uint64_t kLayoutStream = 3;
constexpr std::uint64_t kShapeStream = 4;
constexpr std::uint64_t kFrameStreamBase = 1000;

struct Segment {
  double length = 0.0;  // straight part
  double angle = 0.0;   // signed heading change; negative turns left
  double radius = 0.0;

  double progress() const {
    return angle == 0.0 ? length : std::abs(angle) * std::max(radius, 0.5);
  }
};

struct PathPoint {
  Vec3 position;  // on the floor
  double heading;
};

Vec3 forward_dir(double heading) { return {std::sin(heading), 0.0, std::cos(heading)}; }
Vec3 right_dir(double heading) { return {std::cos(heading), 0.0, -std::sin(heading)}; }

std::vector<Segment> path_segments(const ScenarioConfig& cfg) {
  switch (cfg.trajectory) {
    case TrajectoryShape::Loop:
      return {{cfg.leg_length, 0.0, 0.0}, {0.0, -kPi, cfg.turn_radius},
              {cfg.leg_length, 0.0, 0.0}, {0.0, -kPi, cfg.turn_radius}};
    case TrajectoryShape::StraightAndBack:
      return {{cfg.leg_length, 0.0, 0.0}, {0.0, -kPi, 0.0}, {cfg.leg_length, 0.0, 0.0}};
    case TrajectoryShape::RotateInPlace:
      return {{0.0, -2.0 * kPi, 0.0}};
    case TrajectoryShape::LTurn:
      return {{cfg.leg_length, 0.0, 0.0}, {0.0, -0.5 * kPi, cfg.turn_radius},
              {cfg.second_leg, 0.0, 0.0}};
  }
  return {};
}

double total_progress(const std::vector<Segment>& segs) {
  double total = 0.0;
  for (const auto& s : segs) total += s.progress();
  return total;
}

PathPoint path_at(const std::vector<Segment>& segs, double u) {
  Vec3 p = Vec3::Zero();
  double heading = 0.0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const Segment& s = segs[i];
    const double len = s.progress();
    const bool last = i + 1 == segs.size();
    const double f = (u >= len && !last) ? 1.0 : std::clamp(u / len, 0.0, 1.0);
    if (s.angle == 0.0) {
      p += f * s.length * forward_dir(heading);
    } else {
      const double sign = s.angle > 0.0 ? 1.0 : -1.0;
      const Vec3 center = p + sign * s.radius * right_dir(heading);
      heading += f * s.angle;
      p = center - sign * s.radius * right_dir(heading);
    }
    if (u < len || last) break;
    u -= len;
  }
  return {p, heading};
}

Pose3 camera_pose(const PathPoint& pp, const ScenarioConfig& cfg) {
  const Mat3 r_wc = rot_y(pp.heading) * rot_x(-cfg.camera_pitch);
  const Vec3 center = pp.position + Vec3(0.0, -cfg.camera_height, 0.0);
  return Pose3(r_wc, center).inverse();
}

std::vector<Vec3> object_positions(const ScenarioConfig& cfg, Rng& rng) {
  std::vector<Vec3> out;
  const int m = cfg.num_objects;
  if (m == 0) return out;
  auto far_enough = [&](const Vec3& c) {
    for (const auto& o : out) {
      if ((o - c).norm() < cfg.min_object_spacing) return false;
    }
    return true;
  };

  if (cfg.trajectory == TrajectoryShape::RotateInPlace) {
    for (int i = 0; i < m; ++i) {
      Vec3 c;
      for (int attempt = 0; attempt < 100; ++attempt) {
        const double phi = 2.0 * kPi * (i + 0.5) / m + rng.uniform(-0.1, 0.1);
        const double r = cfg.ring_radius + rng.uniform(-0.3, 0.3);
        c = Vec3(r * std::sin(phi), 0.0, r * std::cos(phi));
        if (far_enough(c)) break;
      }
      out.push_back(c);
    }
    return out;
  }

  const auto segs = path_segments(cfg);
  const double total = total_progress(segs);
  std::vector<Vec3> samples;
  for (int i = 0; i <= 200; ++i) samples.push_back(path_at(segs, total * i / 200.0).position);
  auto clear_of_path = [&](const Vec3& c) {
    for (const auto& s : samples) {
      if ((s - c).norm() < 0.8) return false;
    }
    return true;
  };
  for (int i = 0; i < m; ++i) {
    // Loops keep every object outside the loop; other paths alternate sides.
    const double side = (cfg.trajectory == TrajectoryShape::Loop || i % 2 == 0) ? 1.0 : -1.0;
    Vec3 c;
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double u = total * (i + 0.5) / m + rng.uniform(-0.3, 0.3) + 0.05 * attempt * side;
      const PathPoint pp = path_at(segs, std::clamp(u, 0.0, total));
      const double lateral = cfg.object_offset + rng.uniform(-0.2, 0.2);
      c = pp.position + side * lateral * right_dir(pp.heading);
      if (far_enough(c) && clear_of_path(c)) break;
    }
    out.push_back(c);
  }
  return out;
}

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

json observation_to_json(const KeypointObservation& o) {
  json uv = json::array();
  json vis = json::array();
  for (std::size_t i = 0; i < o.keypoints.size(); ++i) {
    uv.push_back(o.keypoints[i].x());
    uv.push_back(o.keypoints[i].y());
    vis.push_back(static_cast<int>(o.visible[i]));
  }
  return {{"frame", o.frame}, {"uv", uv}, {"visible", vis}, {"confidence", o.confidence}};
}

KeypointObservation observation_from_json(const json& j) {
  KeypointObservation o;
  o.frame = j.at("frame").get<int>();
  const auto& uv = j.at("uv");
  const auto& vis = j.at("visible");
  if (uv.size() != 2 * vis.size()) throw Error(ErrorCode::ParseError, "uv / visible mismatch");
  for (std::size_t i = 0; i < vis.size(); ++i) {
    o.keypoints.emplace_back(uv[2 * i].get<double>(), uv[2 * i + 1].get<double>());
    o.visible.push_back(static_cast<std::uint8_t>(vis[i].get<int>() != 0));
  }
  o.confidence = j.at("confidence").get<std::vector<double>>();
  return o;
}

json measurements_body(const Scenario& s) {
  const Measurements m = s.measurements();
  json frames = json::array();
  for (const auto& f : m.frames) {
    json obs = json::array();
    for (const auto& o : f) obs.push_back(observation_to_json(o));
    frames.push_back(obs);
  }
  json odo = json::array();
  for (const auto& p : m.odometry) odo.push_back(pose_to_json(p));
  return {
      {"name", m.name},
      {"category", m.category},
      {"intrinsics", {m.intrinsics.fx, m.intrinsics.fy, m.intrinsics.cx, m.intrinsics.cy}},
      {"image_size", {m.image_width, m.image_height}},
      {"camera_height", m.ground.camera_height},
      {"camera_pitch", m.ground.camera_pitch},
      {"keypoint_sigma", m.keypoint_sigma},
      {"odometry_sigma_rot", m.odometry_sigma_rot},
      {"odometry_sigma_trans", m.odometry_sigma_trans},
      {"closes_loop", m.closes_loop},
      {"zero_parallax", m.zero_parallax},
      {"initial_pose", pose_to_json(m.initial_pose)},
      {"odometry", odo},
      {"frames", frames},
  };
}

template <typename F>
auto parse_guard(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

}  // namespace

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * kPi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * kPi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

const char* to_string(TrajectoryShape s) {
  switch (s) {
    case TrajectoryShape::Loop: return "loop";
    case TrajectoryShape::StraightAndBack: return "straight-and-back";
    case TrajectoryShape::RotateInPlace: return "rotate-in-place";
    case TrajectoryShape::LTurn: return "l-turn";
  }
  return "?";
}

TrajectoryShape trajectory_shape_from_string(const std::string& s) {
  for (auto t : {TrajectoryShape::Loop, TrajectoryShape::StraightAndBack,
                 TrajectoryShape::RotateInPlace, TrajectoryShape::LTurn}) {
    if (s == to_string(t)) return t;
  }
  throw Error(ErrorCode::ConfigError, "unknown trajectory shape " + s);
}

void ScenarioConfig::validate() const {
  const bool ok = num_poses >= 2 && num_objects >= 0 && camera_height > 0.0 &&
                  intrinsics.is_valid() && image_width > 0 && image_height > 0 &&
                  keypoint_sigma >= 0.0 && dropout >= 0.0 && dropout <= 1.0 &&
                  outlier_probability >= 0.0 && outlier_probability <= 1.0 &&
                  outlier_magnitude >= 0.0 && odometry_sigma_rot >= 0.0 &&
                  odometry_sigma_trans >= 0.0 && shape_scale >= 0.0 && leg_length >= 0.0 &&
                  second_leg >= 0.0 && turn_radius >= 0.0 && max_range > 0.0 && min_depth > 0.0;
  if (!ok) throw Error(ErrorCode::ConfigError, "invalid scenario configuration");
}

std::vector<ScenarioConfig> scenario_presets() {
  ScenarioConfig base;
  base.keypoint_sigma = 2.0;
  base.dropout = 0.05;
  base.outlier_probability = 0.01;

  ScenarioConfig seq1 = base;
  seq1.name = "seq1";
  seq1.trajectory = TrajectoryShape::Loop;
  seq1.leg_length = 7.6;
  seq1.turn_radius = 1.5;
  seq1.num_poses = 124;
  seq1.num_objects = 11;

  ScenarioConfig seq2 = base;
  seq2.name = "seq2";
  seq2.trajectory = TrajectoryShape::Loop;
  seq2.leg_length = 2.0;
  seq2.turn_radius = 1.6;
  seq2.num_poses = 72;
  seq2.num_objects = 7;

  ScenarioConfig seq3 = base;
  seq3.name = "seq3";
  seq3.trajectory = TrajectoryShape::RotateInPlace;
  seq3.num_poses = 73;
  seq3.num_objects = 9;
  seq3.odometry_sigma_trans = 0.0;

  ScenarioConfig seq4 = base;
  seq4.name = "seq4";
  seq4.trajectory = TrajectoryShape::LTurn;
  seq4.leg_length = 2.0;
  seq4.second_leg = 4.2;
  seq4.turn_radius = 0.3;
  seq4.num_poses = 50;
  seq4.num_objects = 7;

  return {seq1, seq2, seq3, seq4};
}

ScenarioConfig scenario_preset(const std::string& name) {
  for (auto& p : scenario_presets()) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::ConfigError, "unknown preset " + name);
}

Vec3 camera_center(const Pose3& world_to_camera) {
  return -world_to_camera.rotation().transpose() * world_to_camera.translation();
}

std::vector<Pose3> generate_trajectory(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto segs = path_segments(cfg);
  const double total = total_progress(segs);
  std::vector<Pose3> poses;
  poses.reserve(cfg.num_poses);
  for (int i = 0; i < cfg.num_poses; ++i) {
    const double u = total * i / (cfg.num_poses - 1);
    poses.push_back(camera_pose(path_at(segs, u), cfg));
  }
  return poses;
}

std::vector<Pose3> perturb_odometry(const std::vector<Pose3>& poses, double sigma_rot,
                                    double sigma_trans, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Pose3> out;
  for (std::size_t i = 0; i + 1 < poses.size(); ++i) {
    Twist6 eps;
    for (int a = 0; a < 3; ++a) eps.rot[a] = rng.normal(sigma_rot);
    for (int a = 0; a < 3; ++a) eps.trans[a] = rng.normal(sigma_trans);
    out.push_back(se3_exp(eps) * relative_pose(poses[i], poses[i + 1]));
  }
  return out;
}

SimFrame render_observations(const ScenarioConfig& cfg, int frame, const Pose3& robot_pose,
                             const std::vector<SimObject>& objects, std::uint64_t seed) {
  Rng rng(seed);
  SimFrame out;
  for (std::size_t m = 0; m < objects.size(); ++m) {
    const SimObject& obj = objects[m];
    const Pose3 to_cam = robot_pose * obj.pose;
    const std::size_t k = obj.keypoints.points.size();
    KeypointObservation o;
    o.frame = frame;
    o.keypoints.assign(k, Vec2::Zero());
    o.visible.assign(k, 0);
    o.confidence.assign(k, 0.0);
    std::vector<Vec2> exact(k, Vec2::Zero());
    const bool in_range = to_cam.translation().norm() <= cfg.max_range;
    for (std::size_t i = 0; i < k; ++i) {
      // Fixed draw count per keypoint keeps the stream aligned across objects.
      const double drop = rng.uniform();
      const double nu = rng.normal(cfg.keypoint_sigma);
      const double nv = rng.normal(cfg.keypoint_sigma);
      const double out_draw = rng.uniform();
      const double out_r = cfg.outlier_magnitude * std::sqrt(rng.uniform());
      const double out_a = 2.0 * kPi * rng.uniform();
      const Vec3 p = to_cam * obj.keypoints.points[i];
      if (!in_range || p.z() < cfg.min_depth) continue;
      const Vec2 px = project(p, cfg.intrinsics);
      auto inside = [&](const Vec2& q) {
        return q.x() >= 0.0 && q.y() >= 0.0 && q.x() < cfg.image_width && q.y() < cfg.image_height;
      };
      if (!inside(px) || drop < cfg.dropout) continue;
      Vec2 noisy = px + Vec2(nu, nv);
      if (out_draw < cfg.outlier_probability) {
        noisy = px + out_r * Vec2(std::cos(out_a), std::sin(out_a));
      }
      if (!inside(noisy)) continue;
      exact[i] = px;
      o.keypoints[i] = noisy;
      o.visible[i] = 1;
      o.confidence[i] = 1.0;
    }
    if (o.num_visible() < kMinVisibleKeypoints) continue;
    out.observations.push_back(std::move(o));
    out.labels.push_back(static_cast<int>(m));
    out.exact.push_back(std::move(exact));
  }
  return out;
}

Scenario generate(const ScenarioConfig& cfg, const CategoryModel& model) {
  cfg.validate();
  Scenario s;
  s.config = cfg;
  s.category = model.category;
  s.poses = generate_trajectory(cfg);

  Rng layout(derive_seed(cfg.seed, kLayoutStream));
  Rng shapes(derive_seed(cfg.seed, kShapeStream));
  for (const Vec3& c : object_positions(cfg, layout)) {
    SimObject obj;
    obj.pose = Pose3(rot_y(layout.uniform(0.0, 2.0 * kPi)), c);
    obj.shape = ShapeParams::zero(model.basis_size());
    for (int b = 0; b < model.basis_size(); ++b) {
      obj.shape.lambda[b] = shapes.normal(cfg.shape_scale * std::sqrt(model.eigenvalues[b]));
    }
    obj.keypoints = instantiate_shape(model, obj.shape);
    s.objects.push_back(std::move(obj));
  }

  s.odometry = perturb_odometry(s.poses, cfg.odometry_sigma_rot, cfg.odometry_sigma_trans,
                                derive_seed(cfg.seed, kOdometryStream));
  for (int f = 0; f < cfg.num_poses; ++f) {
    s.frames.push_back(render_observations(cfg, f, s.poses[f], s.objects,
                                           derive_seed(cfg.seed, kFrameStreamBase + f)));
  }
  return s;
}

Measurements Scenario::measurements() const {
  Measurements m;
  m.name = config.name;
  m.category = category;
  m.intrinsics = config.intrinsics;
  m.image_width = config.image_width;
  m.image_height = config.image_height;
  m.ground = {config.camera_height, config.camera_pitch};
  m.keypoint_sigma = config.keypoint_sigma;
  m.odometry_sigma_rot = config.odometry_sigma_rot;
  m.odometry_sigma_trans = config.odometry_sigma_trans;
  m.closes_loop = (camera_center(poses.front()) - camera_center(poses.back())).norm() < 1e-6;
  m.zero_parallax = config.trajectory == TrajectoryShape::RotateInPlace;
  m.initial_pose = poses.front();
  m.odometry = odometry;
  for (const auto& f : frames) m.frames.push_back(f.observations);
  return m;
}

GroundTruth Scenario::ground_truth() const {
  GroundTruth g;
  g.poses = poses;
  g.objects = objects;
  for (const auto& f : frames) g.labels.push_back(f.labels);
  return g;
}

std::vector<std::string> chair_keypoint_labels() {
  return {"foot_front_left",  "foot_front_right", "foot_back_left", "foot_back_right",
          "seat_front_left",  "seat_front_right", "seat_back_left", "seat_back_right",
          "back_top_left",    "back_top_right"};
}

std::vector<KeypointSet3D> synthesize_chairs(int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<KeypointSet3D> out;
  for (int n = 0; n < count; ++n) {
    const double w = rng.uniform(0.40, 0.56);
    const double d = rng.uniform(0.38, 0.52);
    const double hs = rng.uniform(0.40, 0.50);
    const double hb = rng.uniform(0.30, 0.50);
    const double splay = rng.uniform(0.0, 0.05);
    const double tilt = rng.uniform(0.0, 0.12);
    const double back_w = w * rng.uniform(0.85, 1.0);
    const double fw = 0.5 * w + splay;
    const double fd = 0.5 * d + splay;
    KeypointSet3D s;
    s.id = "chair_" + std::to_string(n);
    s.category = "chair";
    s.points = {{-fw, 0.0, fd},          {fw, 0.0, fd},
                {-fw, 0.0, -fd},         {fw, 0.0, -fd},
                {-0.5 * w, -hs, 0.5 * d}, {0.5 * w, -hs, 0.5 * d},
                {-0.5 * w, -hs, -0.5 * d}, {0.5 * w, -hs, -0.5 * d},
                {-0.5 * back_w, -(hs + hb), -0.5 * d - tilt},
                {0.5 * back_w, -(hs + hb), -0.5 * d - tilt}};
    // Annotation jitter on the raised points; feet stay on the floor.
    for (std::size_t k = 4; k < s.points.size(); ++k) {
      for (int a = 0; a < 3; ++a) s.points[k][a] += rng.normal(0.003);
    }
    out.push_back(std::move(s));
  }
  return out;
}

json pose_to_json(const Pose3& p) {
  const Eigen::Quaterniond q = p.quaternion();
  const Vec3& t = p.translation();
  return json::array({t.x(), t.y(), t.z(), q.w(), q.x(), q.y(), q.z()});
}

Pose3 pose_from_json(const json& j) {
  if (!j.is_array() || j.size() != 7) throw Error(ErrorCode::ParseError, "pose needs 7 numbers");
  double v[7];
  for (int i = 0; i < 7; ++i) v[i] = j[i].get<double>();
  return Pose3::from_quaternion(v[3], v[4], v[5], v[6], Vec3(v[0], v[1], v[2]));
}

json config_to_json(const ScenarioConfig& c) {
  return {
      {"name", c.name},
      {"seed", c.seed},
      {"trajectory", to_string(c.trajectory)},
      {"num_poses", c.num_poses},
      {"num_objects", c.num_objects},
      {"camera_height", c.camera_height},
      {"camera_pitch", c.camera_pitch},
      {"intrinsics", {c.intrinsics.fx, c.intrinsics.fy, c.intrinsics.cx, c.intrinsics.cy}},
      {"image_size", {c.image_width, c.image_height}},
      {"keypoint_sigma", c.keypoint_sigma},
      {"dropout", c.dropout},
      {"outlier_probability", c.outlier_probability},
      {"outlier_magnitude", c.outlier_magnitude},
      {"odometry_sigma_rot", c.odometry_sigma_rot},
      {"odometry_sigma_trans", c.odometry_sigma_trans},
      {"shape_scale", c.shape_scale},
      {"leg_length", c.leg_length},
      {"second_leg", c.second_leg},
      {"turn_radius", c.turn_radius},
      {"object_offset", c.object_offset},
      {"ring_radius", c.ring_radius},
      {"min_object_spacing", c.min_object_spacing},
      {"max_range", c.max_range},
      {"min_depth", c.min_depth},
  };
}

ScenarioConfig config_from_json(const json& j) {
  return parse_guard([&] {
    ScenarioConfig c;
    if (j.contains("preset")) c = scenario_preset(j.at("preset").get<std::string>());
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("name", c.name);
    get("seed", c.seed);
    if (j.contains("trajectory")) {
      c.trajectory = trajectory_shape_from_string(j.at("trajectory").get<std::string>());
    }
    get("num_poses", c.num_poses);
    get("num_objects", c.num_objects);
    get("camera_height", c.camera_height);
    get("camera_pitch", c.camera_pitch);
    if (j.contains("intrinsics")) {
      const auto v = j.at("intrinsics").get<std::vector<double>>();
      if (v.size() != 4) throw Error(ErrorCode::ConfigError, "intrinsics needs fx fy cx cy");
      c.intrinsics = {v[0], v[1], v[2], v[3]};
    }
    if (j.contains("image_size")) {
      const auto v = j.at("image_size").get<std::vector<int>>();
      if (v.size() != 2) throw Error(ErrorCode::ConfigError, "image_size needs width height");
      c.image_width = v[0];
      c.image_height = v[1];
    }
    get("keypoint_sigma", c.keypoint_sigma);
    get("dropout", c.dropout);
    get("outlier_probability", c.outlier_probability);
    get("outlier_magnitude", c.outlier_magnitude);
    get("odometry_sigma_rot", c.odometry_sigma_rot);
    get("odometry_sigma_trans", c.odometry_sigma_trans);
    get("shape_scale", c.shape_scale);
    get("leg_length", c.leg_length);
    get("second_leg", c.second_leg);
    get("turn_radius", c.turn_radius);
    get("object_offset", c.object_offset);
    get("ring_radius", c.ring_radius);
    get("min_object_spacing", c.min_object_spacing);
    get("max_range", c.max_range);
    get("min_depth", c.min_depth);
    c.validate();
    return c;
  });
}

json measurements_to_json(const Scenario& s) {
  return {{"format", "objslam-scenario"}, {"version", 1}, {"measurements", measurements_body(s)}};
}

json scenario_to_json(const Scenario& s) {
  json j = measurements_to_json(s);
  j["config"] = config_to_json(s.config);
  json poses = json::array();
  for (const auto& p : s.poses) poses.push_back(pose_to_json(p));
  json objects = json::array();
  for (const auto& o : s.objects) {
    json pts = json::array();
    for (const auto& p : o.keypoints.points) pts.push_back({p.x(), p.y(), p.z()});
    objects.push_back({{"pose", pose_to_json(o.pose)},
                       {"shape", vec_to_json(o.shape.lambda)},
                       {"keypoints", pts}});
  }
  json labels = json::array();
  for (const auto& f : s.frames) labels.push_back(f.labels);
  j["ground_truth"] = {{"poses", poses}, {"objects", objects}, {"labels", labels}};
  return j;
}

bool has_ground_truth(const json& j) { return j.contains("ground_truth"); }

Measurements measurements_from_json(const json& doc) {
  return parse_guard([&] {
    if (doc.value("format", "") != "objslam-scenario") {
      throw Error(ErrorCode::ParseError, "not an objslam scenario document");
    }
    const json& j = doc.at("measurements");
    Measurements m;
    m.name = j.at("name").get<std::string>();
    m.category = j.at("category").get<std::string>();
    const auto k = j.at("intrinsics").get<std::vector<double>>();
    if (k.size() != 4) throw Error(ErrorCode::ParseError, "intrinsics needs 4 numbers");
    m.intrinsics = {k[0], k[1], k[2], k[3]};
    const auto size = j.at("image_size").get<std::vector<int>>();
    if (size.size() != 2) throw Error(ErrorCode::ParseError, "image_size needs 2 numbers");
    m.image_width = size[0];
    m.image_height = size[1];
    m.ground = {j.at("camera_height").get<double>(), j.at("camera_pitch").get<double>()};
    m.keypoint_sigma = j.at("keypoint_sigma").get<double>();
    m.odometry_sigma_rot = j.at("odometry_sigma_rot").get<double>();
    m.odometry_sigma_trans = j.at("odometry_sigma_trans").get<double>();
    m.closes_loop = j.at("closes_loop").get<bool>();
    m.zero_parallax = j.at("zero_parallax").get<bool>();
    m.initial_pose = pose_from_json(j.at("initial_pose"));
    for (const auto& p : j.at("odometry")) m.odometry.push_back(pose_from_json(p));
    for (const auto& f : j.at("frames")) {
      std::vector<KeypointObservation> obs;
      for (const auto& o : f) obs.push_back(observation_from_json(o));
      m.frames.push_back(std::move(obs));
    }
    if (m.frames.size() != m.odometry.size() + 1) {
      throw Error(ErrorCode::ParseError, "need one more frame than odometry steps");
    }
    return m;
  });
}

GroundTruth ground_truth_from_json(const json& doc) {
  if (!has_ground_truth(doc)) throw Error(ErrorCode::ParseError, "document has no ground truth");
  return parse_guard([&] {
    const json& j = doc.at("ground_truth");
    GroundTruth g;
    for (const auto& p : j.at("poses")) g.poses.push_back(pose_from_json(p));
    for (const auto& o : j.at("objects")) {
      SimObject obj;
      obj.pose = pose_from_json(o.at("pose"));
      obj.shape = {vec_from_json(o.at("shape"))};
      for (const auto& p : o.at("keypoints")) {
        obj.keypoints.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(),
                                          p.at(2).get<double>());
      }
      g.objects.push_back(std::move(obj));
    }
    g.labels = j.at("labels").get<std::vector<std::vector<int>>>();
    return g;
  });
}

}  // namespace objslam
