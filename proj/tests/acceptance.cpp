// Acceptance run: one PASS/FAIL line per criterion, each within its runtime budget.
// Exit status is non-zero when any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "graph_fixture.hpp"
#include "objslam/assoc.hpp"
#include "objslam/category_model.hpp"
#include "objslam/error.hpp"
#include "objslam/eval.hpp"
#include "objslam/fit.hpp"
#include "objslam/graph.hpp"
#include "objslam/pipeline.hpp"
#include "objslam/retrieval.hpp"
#include "objslam/sim.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace objslam;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Pose3 right_perturbed(const Pose3& p, const Eigen::VectorXd& d) {
  return p * se3_exp(Twist6::from_vector(d));
}

// 1. Lie group
Outcome lie_group() {
  const CameraIntrinsics cam{500.0, 500.0, 320.0, 240.0};
  std::uint64_t s = 1001;
  double round_trip = 0.0, assoc = 0.0, jac = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const Pose3 a = oracle::random_pose(s, 3.0, 5.0);
    const Pose3 b = oracle::random_pose(s, 3.0, 5.0);
    const Pose3 c = oracle::random_pose(s, 3.0, 5.0);
    round_trip = std::max(round_trip, (se3_exp(se3_log(a)).matrix() - a.matrix()).norm());
    assoc = std::max(assoc, (compose(compose(a, b), c).matrix() - compose(a, compose(b, c)).matrix()).norm());
    const Vec3 p(oracle::uniform(s, -2, 2), oracle::uniform(s, -2, 2), oracle::uniform(s, 0.5, 8));
    auto f = [&](const Eigen::VectorXd& q) -> Eigen::VectorXd { return project(Vec3(q), cam); };
    jac = std::max(jac, oracle::relative_error(oracle::numeric_jacobian(f, p), project_jacobian(p, cam)));
  }
  return {round_trip < 1e-9 && assoc < 1e-9 && jac < 1e-5,
          fmt("exp/log %.1e, associativity %.1e, projection jacobian %.1e", round_trip, assoc, jac)};
}

// 2. PCA oracle
Outcome pca() {
  const auto& chairs = testing::chairs();
  double worst = 0.0;
  for (int b : {testing::chair_model().basis_size(), 7}) {
    const CategoryModel m = testing::chair_model(b);
    const oracle::DensePca o = oracle::dense_pca(chairs, b);
    worst = std::max(worst, (m.mean - o.mean).cwiseAbs().maxCoeff());
    for (int c = 0; c < b; ++c) {
      worst = std::max(worst, std::abs(m.eigenvalues(c) - o.eigenvalues(c)));
      const double sign = m.basis.col(c).dot(o.basis.col(c)) < 0 ? -1.0 : 1.0;
      worst = std::max(worst, (m.basis.col(c) - sign * o.basis.col(c)).cwiseAbs().maxCoeff());
    }
  }
  bool monotone = true;
  double previous = std::numeric_limits<double>::infinity();
  const int max_b = 3 * testing::chair_model().num_keypoints;
  for (int b = 1; b <= max_b; ++b) {
    const CategoryModel m = testing::chair_model(b);
    double e = 0.0;
    for (const auto& s : chairs) e += (instantiate_flat(m, fit_params(m, s)) - s.flat()).squaredNorm();
    monotone = monotone && e <= previous + 1e-12;
    previous = e;
  }
  return {worst < 1e-8 && monotone,
          fmt("max deviation from dense oracle %.1e, reconstruction non-increasing B=1..%d: %s", worst, max_b,
              monotone ? "yes" : "no")};
}

struct PlacedObject {
  SimObject object;
  Pose3 robot;
  KeypointObservation obs;
  Pose3 truth;  // object -> camera
};

// Upright object on the floor in front of a level robot, rendered by the simulator.
PlacedObject place(const ScenarioConfig& cfg, Rng& rng, double min_range, double max_range,
                   const KeypointSet3D& keypoints, const ShapeParams& shape, std::uint64_t seed) {
  PlacedObject p;
  p.robot = testing::level_robot(cfg);
  const double range = rng.uniform(min_range, max_range);
  const double bearing = rng.uniform(-0.3, 0.3);
  p.object.pose = Pose3(rot_y(rng.uniform(0.0, 2.0 * std::numbers::pi)),
                        Vec3(range * std::sin(bearing), 0.0, range * std::cos(bearing)));
  p.object.shape = shape;
  p.object.keypoints = keypoints;
  const SimFrame fr = render_observations(cfg, 0, p.robot, {p.object}, seed);
  if (fr.observations.size() == 1) p.obs = fr.observations[0];
  p.truth = p.robot * p.object.pose;
  return p;
}

ShapeParams random_shape(const CategoryModel& m, Rng& rng) {
  ShapeParams s = ShapeParams::zero(m.basis_size());
  for (int b = 0; b < m.basis_size(); ++b) s.lambda(b) = rng.normal(std::sqrt(m.eigenvalues(b)));
  return s;
}

ScenarioConfig clean_camera(double sigma) {
  ScenarioConfig cfg;
  cfg.keypoint_sigma = sigma;
  cfg.dropout = 0.0;
  cfg.outlier_probability = 0.0;
  return cfg;
}

// 3. Noiseless fit recovery
Outcome fit_recovery() {
  const CategoryModel& m = testing::chair_model();
  const ScenarioConfig cfg = clean_camera(0.0);
  const GroundPlane ground{cfg.camera_height, cfg.camera_pitch};
  FitConfig fc;
  fc.regularizer_weight = 0.0;
  int recovered = 0, monotone = 0;
  double max_pos = 0, max_rot = 0, max_shape = 0, max_jac = 0;
  for (int t = 0; t < 100; ++t) {
    Rng rng(derive_seed(3000, t));
    const ShapeParams shape = random_shape(m, rng);
    const PlacedObject p = place(cfg, rng, 2.0, 3.0, instantiate_shape(m, shape), shape, derive_seed(3001, t));
    if (p.obs.keypoints.empty()) continue;
    const ObjectEstimate est = fit_alternating(p.obs, m, cfg.intrinsics, fc,
                                               initialize_estimate(p.obs, m, cfg.intrinsics, ground, fc));
    const double pe = (est.pose.translation() - p.truth.translation()).norm();
    const double re = rotation_angle(est.pose.rotation().transpose() * p.truth.rotation());
    const double se = (est.shape.lambda - shape.lambda).cwiseAbs().maxCoeff();
    max_pos = std::max(max_pos, pe);
    max_rot = std::max(max_rot, re);
    max_shape = std::max(max_shape, se);
    recovered += pe < 1e-3 && re < 1e-3 && se < 1e-3;
    bool mono = true;
    for (std::size_t i = 1; i < est.cost_history.size(); ++i) mono = mono && est.cost_history[i] <= est.cost_history[i - 1];
    monotone += mono;

    // Residual derivatives at a point away from the optimum.
    const Pose3 off = right_perturbed(p.truth, Eigen::VectorXd::Constant(6, 0.02));
    for (int k = 0; k < m.num_keypoints; ++k) {
      if (!p.obs.visible[k]) continue;
      const KeypointResidual r = keypoint_residual(p.obs, k, off, shape, m, cfg.intrinsics);
      auto by_pose = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
        return keypoint_residual(p.obs, k, right_perturbed(off, d), shape, m, cfg.intrinsics).residual;
      };
      auto by_shape = [&](const Eigen::VectorXd& l) -> Eigen::VectorXd {
        return keypoint_residual(p.obs, k, off, {l}, m, cfg.intrinsics).residual;
      };
      max_jac = std::max(max_jac, oracle::relative_error(oracle::numeric_jacobian(by_pose, Eigen::VectorXd::Zero(6)), r.d_pose));
      max_jac = std::max(max_jac, oracle::relative_error(oracle::numeric_jacobian(by_shape, shape.lambda), r.d_shape));
    }
  }
  return {recovered == 100 && monotone == 100 && max_jac < 1e-5,
          fmt("%d/100 recovered (max %.1e m, %.1e rad, shape %.1e), %d/100 monotone, jacobians %.1e", recovered,
              max_pos, max_rot, max_shape, monotone, max_jac)};
}

// Measured median of criterion 4, reported next to the seq3 bound.
double noise_floor_median = 0.0;

// 4. Noise robustness
Outcome noise_robustness() {
  const CategoryModel& m = testing::chair_model();
  const double sigma = 2.0;
  const ScenarioConfig cfg = clean_camera(sigma);
  const GroundPlane ground{cfg.camera_height, cfg.camera_pitch};
  FitConfig fc;
  fc.regularizer_weight = sigma * sigma / m.mean_eigenvalue();
  std::vector<double> errors;
  for (int t = 0; errors.size() < 100; ++t) {
    Rng rng(derive_seed(4000, t));
    const ShapeParams shape = random_shape(m, rng);
    const PlacedObject p = place(cfg, rng, 1.5, 3.0, instantiate_shape(m, shape), shape, derive_seed(4001, t));
    if (p.obs.num_visible() != m.num_keypoints) continue;
    ObjectEstimate est = fit_alternating(p.obs, m, cfg.intrinsics, fc,
                                         initialize_estimate(p.obs, m, cfg.intrinsics, ground, fc));
    est = ground_scale_correction(p.obs, est, m, cfg.intrinsics, ground, fc);
    errors.push_back((est.pose.translation() - p.truth.translation()).norm());
  }
  const double med = median(errors);
  noise_floor_median = med;
  return {med < 0.05, fmt("median position error %.4f m over 100 objects at 1.5-3 m, sigma 2 px", med)};
}

// 5. Hungarian
Outcome hungarian() {
  std::uint64_t s = 5001;
  int equal = 0;
  const int cases = 10000;
  for (int t = 0; t < cases; ++t) {
    const int r = 1 + static_cast<int>(oracle::uniform(s, 0, 7));
    const int c = 1 + static_cast<int>(oracle::uniform(s, 0, 7));
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) m(i, j) = std::floor(oracle::uniform(s, 0, 20));
    }
    equal += hungarian_assign(m).total == oracle::brute_force_assignment(m);
  }
  return {equal == cases, fmt("%d/%d random integer matrices up to 7x7 equal the enumeration optimum", equal, cases)};
}

double max_pose_error(const FactorGraph& g, const Assignment& a, const Assignment& b) {
  double e = 0.0;
  for (auto v : g.variables()) {
    e = std::max(e, (a.at(v).translation() - b.at(v).translation()).norm());
    e = std::max(e, rotation_angle(a.at(v).rotation().transpose() * b.at(v).rotation()));
  }
  return e;
}

// 6. Graph
Outcome graph() {
  double exact = 0.0;
  for (bool loop : {false, true}) {
    testing::GraphSceneOptions o;
    o.loop = loop;
    const auto scene = testing::make_graph_scene(o, 6001);
    const FactorGraph g = scene.graph();
    exact = std::max(exact, max_pose_error(g, chordal_init(g), scene.truth()));
    exact = std::max(exact, max_pose_error(g, optimize_batch(g, chordal_init(g)).poses, scene.truth()));
  }

  int chordal_wins = 0;
  for (int t = 0; t < 20; ++t) {
    testing::GraphSceneOptions o;
    o.sigma_rot = 0.05;
    o.sigma_trans = 0.02;
    o.object_sigma_rot = 0.02;
    o.object_sigma_trans = 0.05;
    const FactorGraph g = testing::make_graph_scene(o, 6100 + t).graph();
    chordal_wins += total_error(g, chordal_init(g)) < total_error(g, chain_init(g));
  }

  double inc_gap = 0.0;
  for (int t = 0; t < 10; ++t) {
    testing::GraphSceneOptions o;
    o.sigma_rot = 0.01;
    o.sigma_trans = 0.03;
    o.object_sigma_rot = 0.05;
    o.object_sigma_trans = 0.08;
    const auto scene = testing::make_graph_scene(o, 6200 + t);
    const FactorGraph g = scene.graph();
    const auto inc = optimize_incremental(scene.stream);
    inc_gap = std::max(inc_gap, max_pose_error(g, inc.back().poses, optimize_batch(g, chordal_init(g)).poses));
  }

  testing::GraphSceneOptions o;
  o.sigma_rot = 0.02;
  o.sigma_trans = 0.05;
  o.object_sigma_rot = 0.05;
  o.object_sigma_trans = 0.1;
  FactorGraph g = testing::make_graph_scene(o, 6300).graph();
  SolverSettings tight;
  tight.relative_tolerance = 1e-16;
  tight.max_iterations = 200;
  const GraphSolution base = optimize_batch(g, chordal_init(g), tight);
  g.scale_information(37.5);
  const double scaling = max_pose_error(g, base.poses, optimize_batch(g, chordal_init(g), tight).poses);

  return {exact < 1e-9 && chordal_wins == 20 && inc_gap < 1e-4 && scaling < 1e-8,
          fmt("noiseless %.1e, chordal better %d/20, incremental vs batch %.1e, scaling %.1e", exact, chordal_wins,
              inc_gap, scaling)};
}

// 7. Directional reproduction on the presets
Outcome presets() {
  const CategoryModel& model = testing::chair_model();
  std::string detail;
  bool ok = true;
  for (const char* name : {"seq1", "seq2", "seq4"}) {
    int slam_better = 0;
    double odo_sum = 0.0, slam_sum = 0.0;
    double on_x = 0.0, on_z = 0.0, off_x = 0.0, off_z = 0.0;
    int axis_holds = 0, loop_runs = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      ScenarioConfig cfg = scenario_preset(name);
      cfg.seed = seed;
      const Scenario sc = generate(cfg, model);
      const Measurements m = sc.measurements();
      const GroundTruth gt = sc.ground_truth();
      const RunReport on = evaluate(run_pipeline(m, model, RunMode::Batch, true), &gt, m, {});
      const RunReport odo = evaluate(run_pipeline(m, model, RunMode::Odometry, true), &gt, m, {});
      slam_better += on.objects->average < odo.objects->average;
      slam_sum += on.objects->average;
      odo_sum += odo.objects->average;
      if (m.closes_loop) {
        const RunReport off = evaluate(run_pipeline(m, model, RunMode::Batch, false), &gt, m, {});
        ++loop_runs;
        on_x += on.drift->x;
        on_z += on.drift->z;
        off_x += off.drift->x;
        off_z += off.drift->z;
        axis_holds += (on.drift->x <= off.drift->x) + (on.drift->z <= off.drift->z);
      }
    }
    ok = ok && slam_better == 20;
    detail += fmt("%s (a) %d/20 slam %.3f < odo %.3f", name, slam_better, slam_sum / 20, odo_sum / 20);
    if (loop_runs > 0) {
      const bool b = on_x <= off_x && on_z <= off_z;
      ok = ok && b;
      detail += fmt(", (b) mean drift on (%.3f, %.3f) vs off (%.3f, %.3f), per seed-axis %d/%d", on_x / 20,
                    on_z / 20, off_x / 20, off_z / 20, axis_holds, 2 * loop_runs);
    }
    detail += "; ";
  }

  // Rotation in place. The bound is three times the criterion 4 threshold; the count against
  // three times its measured median is printed alongside.
  const double bound = 3.0 * 0.05;
  const double measured_bound = 3.0 * noise_floor_median;
  int localized = 0;
  int within_measured = 0;
  int not_applicable = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ScenarioConfig cfg = scenario_preset("seq3");
    cfg.seed = seed;
    const Scenario sc = generate(cfg, model);
    const Measurements m = sc.measurements();
    const GroundTruth gt = sc.ground_truth();
    const RunReport on = evaluate(run_pipeline(m, model, RunMode::Batch, true), &gt, m, {});
    const RunReport odo = evaluate(run_pipeline(m, model, RunMode::Odometry, true), &gt, m, {});
    const double w = on.objects ? on.objects->worst : std::numeric_limits<double>::infinity();
    worst = std::max(worst, w);
    localized += on.localized_objects == on.true_objects && w < bound;
    within_measured += on.localized_objects == on.true_objects && w < measured_bound;
    not_applicable += !odo.applicable;
  }
  ok = ok && localized == 20 && not_applicable == 20;
  detail += fmt("seq3 (c) %d/20 all objects within %.2f m (worst %.3f; %d/20 within 3x measured median %.3f), "
                "odometry-only N/A %d/20",
                localized, bound, worst, within_measured, measured_bound, not_applicable);
  return {ok, detail};
}

// 8. Retrieval through the fit
Outcome retrieval() {
  const auto& chairs = testing::chairs();
  const CategoryModel m = testing::chair_model(7);
  const InstanceIndex index = InstanceIndex::build(m, chairs, "synthetic");
  std::vector<std::pair<std::string, Eigen::VectorXd>> entries;
  for (const auto& e : index.entries()) entries.emplace_back(e.id, e.params.lambda);

  const ScenarioConfig cfg = clean_camera(0.0);
  const GroundPlane ground{cfg.camera_height, cfg.camera_pitch};
  FitConfig fc;
  fc.regularizer_weight = 0.0;
  int hits = 0, oracle_equal = 0;
  for (std::size_t i = 0; i < chairs.size(); ++i) {
    Rng rng(derive_seed(8000, i));
    const PlacedObject p = place(cfg, rng, 2.0, 3.0, chairs[i], fit_params(m, chairs[i]), derive_seed(8001, i));
    ShapeParams q = ShapeParams::zero(m.basis_size());
    try {
      ObjectEstimate est = fit_alternating(p.obs, m, cfg.intrinsics, fc,
                                           initialize_estimate(p.obs, m, cfg.intrinsics, ground, fc));
      est = ground_scale_correction(p.obs, est, m, cfg.intrinsics, ground, fc);
      q = est.shape;
    } catch (const Error&) {
      continue;
    }
    const auto ranked = knn_retrieve(index, q, static_cast<int>(index.size()));
    hits += ranked.front().id == chairs[i].id;
    const auto scan = oracle::linear_scan(entries, q.lambda, nullptr);
    bool same = ranked.size() == scan.size();
    for (std::size_t r = 0; same && r < scan.size(); ++r) {
      same = ranked[r].id == scan[r].id && std::abs(ranked[r].distance - scan[r].distance) <= 1e-12;
    }
    oracle_equal += same;
  }
  const double rate = static_cast<double>(hits) / chairs.size();
  return {rate >= 0.9 && oracle_equal == static_cast<int>(chairs.size()),
          fmt("rank-1 self retrieval %d/%zu (%.1f%%) with B=7, scan oracle equal on %d/%zu queries", hits,
              chairs.size(), 100.0 * rate, oracle_equal, chairs.size())};
}

// 9. CLI determinism
int shell(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const char* env = std::getenv("OBJSLAM_CLI");
  const std::string cli = env ? env : OBJSLAM_CLI_PATH;
  const fs::path root = testing::scratch_dir("acceptance_cli");
  if (shell(cli + " build-model --out " + (root / "model").string()) != 0) return {false, "build-model failed"};
  const std::string model = (root / "model" / "model.txt").string();
  int compared = 0, identical = 0;
  for (const char* preset : {"seq1", "seq2", "seq3", "seq4"}) {
    const fs::path sa = root / (std::string(preset) + "_a"), sb = root / (std::string(preset) + "_b");
    for (const auto& dir : {sa, sb}) {
      if (shell(cli + " gen-scenario --model " + model + " --preset " + preset + " --seed 9 --out " + dir.string()) != 0) {
        return {false, std::string("gen-scenario failed for ") + preset};
      }
    }
    ++compared;
    identical += slurp(sa / "scenario.json") == slurp(sb / "scenario.json");
    for (const char* mode : {"odo", "batch", "inc"}) {
      for (const char* olc : {"on", "off"}) {
        fs::path out[2];
        for (int k = 0; k < 2; ++k) {
          out[k] = root / fmt("%s_%s_%s_%d", preset, mode, olc, k);
          const std::string cmd = cli + " run --scenario " + (sa / "scenario.json").string() + " --model " + model +
                                  " --mode " + mode + " --olc " + olc + " --out " + out[k].string();
          if (shell(cmd) != 0) return {false, "run failed: " + cmd};
        }
        for (const char* f : {"report.txt", "estimates.json", "assoc.log", "plot.svg"}) {
          ++compared;
          identical += slurp(out[0] / f) == slurp(out[1] / f) && !slurp(out[0] / f).empty();
        }
      }
    }
  }
  return {identical == compared, fmt("%d/%d artifact pairs byte-identical across 4 presets x 3 modes x OLC on/off",
                                     identical, compared)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0: none stated
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "Lie group", 5, lie_group},
      {2, "PCA oracle", 10, pca},
      {3, "fit recovery", 60, fit_recovery},
      {4, "noise robustness", 120, noise_robustness},
      {5, "Hungarian oracle", 30, hungarian},
      {6, "graph correctness", 60, graph},
      {7, "preset orderings", 600, presets},
      {8, "retrieval", 60, retrieval},
      {9, "determinism", 0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.budget_seconds <= 0 || seconds <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::string budget = c.budget_seconds > 0 ? fmt("%.2fs / %.0fs", seconds, c.budget_seconds) : fmt("%.2fs", seconds);
    std::printf("criterion %d %s  %-18s %s  [%s]%s\n", c.id, pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                budget.c_str(), in_time ? "" : " over budget");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
