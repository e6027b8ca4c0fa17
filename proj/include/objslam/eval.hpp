#pragma once

// Accuracy metrics, the run report and the top-down plot.

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "objslam/geometry.hpp"
#include "objslam/pipeline.hpp"
#include "objslam/sim.hpp"

namespace objslam {

struct LocalizationError {
  double best = 0.0;
  double worst = 0.0;
  double average = 0.0;
};

/// Distances between estimated objects and their ground-truth counterparts.
/// `correspondence` maps estimated id -> ground-truth index. Throws MissingCorrespondence.
LocalizationError object_localization_error(const std::map<int, Vec3>& estimated,
                                            std::span<const Vec3> truth,
                                            const std::map<int, int>& correspondence);

struct EndpointDrift {
  double x = 0.0;
  double z = 0.0;
};

/// Per-axis |final estimated position - final true position|. Throws NotApplicable when
/// the true trajectory does not return to its start, or either trajectory is empty.
EndpointDrift endpoint_drift(std::span<const Vec3> estimated, std::span<const Vec3> truth,
                             bool returns_to_start);

/// Estimated id -> ground-truth object by majority over the detections' labels (ties to
/// the lower index).
std::map<int, int> correspondence_from_labels(const std::vector<DetectionRecord>& detections,
                                              const std::vector<std::vector<int>>& labels);

std::vector<Vec3> trajectory_positions(const std::vector<Pose3>& world_to_camera);

struct RunReport {
  std::string name;
  RunMode mode = RunMode::Batch;
  bool olc = false;
  int frames = 0;
  int true_objects = 0;
  int estimated_objects = 0;
  int localized_objects = 0;  // ground-truth objects with at least one estimate
  int detections = 0;
  int rejected_fits = 0;
  int dropped_detections = 0;  // inconsistent with their track or on a too-short track
  /// False for odometry-only runs on zero-parallax trajectories.
  bool applicable = true;
  std::string note;
  std::optional<LocalizationError> objects;
  std::optional<EndpointDrift> drift;
  double graph_error = 0.0;
  int iterations = 0;
  bool converged = true;
  nlohmann::json config;
  /// Wall time; kept out of the report file so reports stay byte-identical.
  double seconds = 0.0;
};

/// Without ground truth only the counts are filled in.
RunReport evaluate(const PipelineResult& result, const GroundTruth* truth, const Measurements& m,
                   const nlohmann::json& config);

nlohmann::json report_to_json(const RunReport& r);
/// Human-readable table followed by the JSON form.
void write_report(std::ostream& out, const RunReport& r);

/// Top-down (X-Z) SVG of the estimated trajectory and objects, plus ground truth when given.
void write_plot_svg(std::ostream& out, const PipelineResult& result, const GroundTruth* truth);

}  // namespace objslam
