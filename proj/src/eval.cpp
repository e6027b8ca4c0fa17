#include "objslam/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "objslam/error.hpp"
#include "objslam/text_io.hpp"

namespace objslam {

using nlohmann::json;

LocalizationError object_localization_error(const std::map<int, Vec3>& estimated,
                                            std::span<const Vec3> truth,
                                            const std::map<int, int>& correspondence) {
  if (estimated.empty()) throw Error(ErrorCode::MissingCorrespondence, "no estimated objects");
  LocalizationError e;
  e.best = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const auto& [id, p] : estimated) {
    auto it = correspondence.find(id);
    if (it == correspondence.end() || it->second < 0 ||
        it->second >= static_cast<int>(truth.size())) {
      throw Error(ErrorCode::MissingCorrespondence, "object " + std::to_string(id));
    }
    const double d = (p - truth[it->second]).norm();
    e.best = std::min(e.best, d);
    e.worst = std::max(e.worst, d);
    sum += d;
  }
  e.average = sum / static_cast<double>(estimated.size());
  return e;
}

EndpointDrift endpoint_drift(std::span<const Vec3> estimated, std::span<const Vec3> truth,
                             bool returns_to_start) {
  if (!returns_to_start) {
    throw Error(ErrorCode::NotApplicable, "trajectory does not return to its start");
  }
  if (estimated.empty() || truth.empty()) {
    throw Error(ErrorCode::NotApplicable, "empty trajectory");
  }
  const Vec3 d = estimated.back() - truth.back();
  return {std::abs(d.x()), std::abs(d.z())};
}

std::map<int, int> correspondence_from_labels(const std::vector<DetectionRecord>& detections,
                                              const std::vector<std::vector<int>>& labels) {
  std::map<int, std::map<int, int>> votes;
  for (const auto& d : detections) {
    if (d.frame < 0 || d.frame >= static_cast<int>(labels.size()) || d.observation < 0 ||
        d.observation >= static_cast<int>(labels[d.frame].size())) {
      throw Error(ErrorCode::MissingCorrespondence, "detection without a label");
    }
    ++votes[d.global_id][labels[d.frame][d.observation]];
  }
  std::map<int, int> out;
  for (const auto& [id, v] : votes) {
    int best = -1;
    int best_count = -1;
    for (const auto& [gt, count] : v) {
      if (count > best_count) {
        best = gt;
        best_count = count;
      }
    }
    out[id] = best;
  }
  return out;
}

std::vector<Vec3> trajectory_positions(const std::vector<Pose3>& world_to_camera) {
  std::vector<Vec3> out;
  out.reserve(world_to_camera.size());
  for (const auto& p : world_to_camera) out.push_back(camera_center(p));
  return out;
}

RunReport evaluate(const PipelineResult& result, const GroundTruth* truth_ptr,
                   const Measurements& m, const json& config) {
  RunReport r;
  r.name = result.name;
  r.mode = result.mode;
  r.olc = result.olc;
  r.frames = static_cast<int>(result.trajectory.size());
  r.estimated_objects = static_cast<int>(result.objects.size());
  r.detections = static_cast<int>(result.detections.size());
  r.rejected_fits = result.rejected_fits;
  r.dropped_detections = result.inconsistent_detections;
  r.graph_error = result.graph_error;
  r.iterations = result.iterations;
  r.converged = result.converged;
  r.config = config;
  if (!truth_ptr) {
    r.note = "scenario carries no ground truth";
    return r;
  }
  const GroundTruth& truth = *truth_ptr;
  r.true_objects = static_cast<int>(truth.objects.size());

  const auto corr = correspondence_from_labels(result.detections, truth.labels);
  std::vector<char> seen(truth.objects.size(), 0);
  for (const auto& [id, gt] : corr) {
    if (result.objects.count(id)) seen[gt] = 1;
  }
  r.localized_objects = static_cast<int>(std::count(seen.begin(), seen.end(), 1));

  if (result.mode == RunMode::Odometry && m.zero_parallax) {
    r.applicable = false;
    r.note = "odometry-only has no parallax to localize from on this trajectory";
    return r;
  }

  std::vector<Vec3> truth_positions;
  for (const auto& o : truth.objects) truth_positions.push_back(o.pose.translation());
  std::map<int, Vec3> est;
  for (const auto& [id, pose] : result.objects) est[id] = pose.translation();
  if (!est.empty()) {
    r.objects = object_localization_error(est, truth_positions, corr);
    if (!(r.objects->best <= r.objects->average + 1e-12 &&
          r.objects->average <= r.objects->worst + 1e-12)) {
      throw Error(ErrorCode::Diverged, "localization error ordering violated");
    }
  }
  if (m.closes_loop) {
    r.drift = endpoint_drift(trajectory_positions(result.trajectory),
                             trajectory_positions(truth.poses), true);
  }
  return r;
}

json report_to_json(const RunReport& r) {
  json j = {{"name", r.name},
            {"mode", to_string(r.mode)},
            {"olc", r.olc},
            {"frames", r.frames},
            {"true_objects", r.true_objects},
            {"estimated_objects", r.estimated_objects},
            {"localized_objects", r.localized_objects},
            {"detections", r.detections},
            {"rejected_fits", r.rejected_fits},
            {"dropped_detections", r.dropped_detections},
            {"applicable", r.applicable},
            {"graph_error", r.graph_error},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"config", r.config}};
  if (!r.note.empty()) j["note"] = r.note;
  j["object_error"] = r.objects ? json{{"best", r.objects->best},
                                       {"worst", r.objects->worst},
                                       {"average", r.objects->average}}
                                : json();
  j["drift"] = r.drift ? json{{"x", r.drift->x}, {"z", r.drift->z}} : json();
  return j;
}

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void write_report(std::ostream& out, const RunReport& r) {
  const char* na = "N/A";
  out << "objslam run report\n";
  out << "scenario             " << r.name << '\n';
  out << "mode                 " << to_string(r.mode) << '\n';
  out << "object loop closure  " << (r.olc ? "on" : "off") << '\n';
  out << "frames               " << r.frames << '\n';
  out << "objects (true/est)   " << r.true_objects << " / " << r.estimated_objects << '\n';
  out << "objects localized    " << r.localized_objects << '\n';
  out << "detections           " << r.detections << " (" << r.rejected_fits << " fits rejected, " << r.dropped_detections
      << " dropped)\n";
  if (!r.note.empty()) out << "note                 " << r.note << '\n';
  out << '\n';
  out << "metric                       value (m)\n";
  out << "object error best            " << (r.objects ? fixed(r.objects->best) : na) << '\n';
  out << "object error worst           " << (r.objects ? fixed(r.objects->worst) : na) << '\n';
  out << "object error average         " << (r.objects ? fixed(r.objects->average) : na) << '\n';
  out << "endpoint drift X             " << (r.drift ? fixed(r.drift->x) : na) << '\n';
  out << "endpoint drift Z             " << (r.drift ? fixed(r.drift->z) : na) << '\n';
  out << '\n';
  out << "graph error " << format_double(r.graph_error) << ", iterations " << r.iterations
      << ", converged " << (r.converged ? "yes" : "no") << '\n';
  out << "\n--- json ---\n";
  out << report_to_json(r).dump(2) << '\n';
}

void write_plot_svg(std::ostream& out, const PipelineResult& result, const GroundTruth* truth) {
  std::vector<Vec3> est = trajectory_positions(result.trajectory);
  std::vector<Vec3> gt = truth ? trajectory_positions(truth->poses) : std::vector<Vec3>{};
  double min_x = 0.0, max_x = 0.0, min_z = 0.0, max_z = 0.0;
  bool first = true;
  auto grow = [&](const Vec3& p) {
    if (first) {
      min_x = max_x = p.x();
      min_z = max_z = p.z();
      first = false;
    }
    min_x = std::min(min_x, p.x());
    max_x = std::max(max_x, p.x());
    min_z = std::min(min_z, p.z());
    max_z = std::max(max_z, p.z());
  };
  for (const auto& p : est) grow(p);
  for (const auto& p : gt) grow(p);
  for (const auto& [id, pose] : result.objects) grow(pose.translation());
  if (truth) {
    for (const auto& o : truth->objects) grow(o.pose.translation());
  }
  const double margin = 0.5;
  min_x -= margin;
  min_z -= margin;
  max_x += margin;
  max_z += margin;
  const double scale = 600.0 / std::max({max_x - min_x, max_z - min_z, 1e-6});
  const double width = (max_x - min_x) * scale;
  const double height = (max_z - min_z) * scale;
  // Z grows upward on the page.
  auto sx = [&](double x) { return fixed((x - min_x) * scale, 2); };
  auto sz = [&](double z) { return fixed((max_z - z) * scale, 2); };
  auto polyline = [&](const std::vector<Vec3>& pts, const char* color, const char* dash) {
    if (pts.empty()) return;
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"";
    if (dash) out << " stroke-dasharray=\"" << dash << "\"";
    out << " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      out << (i ? " " : "") << sx(pts[i].x()) << ',' << sz(pts[i].z());
    }
    out << "\"/>\n";
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0) << "\" height=\""
      << fixed(height, 0) << "\" viewBox=\"0 0 " << fixed(width, 2) << ' ' << fixed(height, 2)
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  polyline(gt, "#888888", "6,4");
  polyline(est, "#1f77b4", nullptr);
  if (truth) {
    for (const auto& o : truth->objects) {
      const Vec3& p = o.pose.translation();
      out << "<rect x=\"" << fixed((p.x() - min_x) * scale - 5.0, 2) << "\" y=\""
          << fixed((max_z - p.z()) * scale - 5.0, 2)
          << "\" width=\"10\" height=\"10\" fill=\"none\" stroke=\"#888888\"/>\n";
    }
  }
  for (const auto& [id, pose] : result.objects) {
    const Vec3& p = pose.translation();
    out << "<circle cx=\"" << sx(p.x()) << "\" cy=\"" << sz(p.z())
        << "\" r=\"4\" fill=\"#d62728\"/>\n";
    out << "<text x=\"" << fixed((p.x() - min_x) * scale + 6.0, 2) << "\" y=\""
        << fixed((max_z - p.z()) * scale - 6.0, 2) << "\" font-size=\"10\">" << id << "</text>\n";
  }
  out << "<text x=\"8\" y=\"16\" font-size=\"12\">" << result.name << " "
      << to_string(result.mode) << " olc " << (result.olc ? "on" : "off")
      << " (top-down X-Z)</text>\n";
  out << "</svg>\n";
}

}  // namespace objslam
