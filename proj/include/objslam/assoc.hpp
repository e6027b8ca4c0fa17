#pragma once

// Object tracks and the detection -> global object id mapping.

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "objslam/category_model.hpp"
#include "objslam/geometry.hpp"

namespace objslam {

/// Cost entries at or above this value are disallowed pairings. Rectangular problems are
/// padded to square with it.
inline constexpr double kForbiddenCost = 1e9;

struct HungarianResult {
  std::vector<int> row_to_col;  // -1 when unassigned
  std::vector<int> col_to_row;  // -1 when unassigned
  double total = 0.0;           // over assigned pairs only
};

/// Minimum-cost one-to-one assignment of an R x C matrix. Pairs that would land on a
/// forbidden entry are reported unassigned.
HungarianResult hungarian_assign(const Eigen::MatrixXd& cost);

struct AssocConfig {
  double position_gate = 0.5;        // meters
  double pose_weight = 1.0;          // per meter
  double shape_weight = 0.5;         // per unit of ||delta lambda||
  double orientation_weight = 0.0;   // per radian
  double loop_gate = 1.0;            // meters
  int miss_tolerance = 5;            // frames

  void validate() const;
};

/// A detected object expressed in the world frame.
struct WorldDetection {
  Pose3 pose;  // object -> world
  ShapeParams shape;
};

struct Track {
  int id = 0;
  int first_frame = 0;
  int last_frame = 0;
  Pose3 pose;           // object -> world, latest detection
  ShapeParams shape;    // running mean over hits
  int hits = 0;
  bool dormant = false;
  /// Positions of the last few detections, oldest first.
  std::vector<Vec3> recent;

  static constexpr int kRecent = 3;
};

/// Distance from the detection to the nearest of the track's recent positions, so one bad
/// detection does not drag the gate away from the object.
double track_distance(const Track& track, const WorldDetection& det);

enum class AssocDecision { Match, New, Olc };
const char* to_string(AssocDecision d);

struct AssocRecord {
  int frame = 0;
  int detection = 0;
  int global_id = 0;
  double cost = 0.0;
  AssocDecision decision = AssocDecision::New;
};

double association_cost(const Track& track, const WorldDetection& det, const AssocConfig& cfg);

class TrackStore {
 public:
  const std::vector<Track>& tracks() const { return tracks_; }
  const Track* find(int id) const;
  int next_id() const { return next_id_; }

  /// Opens a track with a fresh id.
  int open(int frame, const WorldDetection& det);
  void update(int id, int frame, const WorldDetection& det);
  /// Tracks unseen for more than `miss_tolerance` frames go dormant.
  void age(int frame, int miss_tolerance);

 private:
  Track& at(int id);

  std::vector<Track> tracks_;
  int next_id_ = 0;
};

/// Matches live tracks against the frame's detections, then (with `olc`) dormant tracks
/// against what is left; the rest open new tracks. Returns one record per detection.
std::vector<AssocRecord> associate_frame(TrackStore& store, int frame,
                                         std::span<const WorldDetection> detections,
                                         const AssocConfig& cfg, bool olc);

/// Minimum-cost dormant track within the loop gate; ties go to the lowest id.
std::optional<int> detect_object_loop_closure(const TrackStore& store,
                                              const WorldDetection& detection,
                                              const AssocConfig& cfg);

/// One line per record: `<frame> <detection> <global id> <cost> <MATCH|NEW|OLC>`.
void write_assoc_log(std::ostream& out, std::span<const AssocRecord> records);

}  // namespace objslam
