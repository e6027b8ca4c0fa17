#include "objslam/assoc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "objslam/error.hpp"
#include "objslam/text_io.hpp"

namespace objslam {

HungarianResult hungarian_assign(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  HungarianResult out;
  out.row_to_col.assign(rows, -1);
  out.col_to_row.assign(cols, -1);
  const int n = std::max(rows, cols);
  if (n == 0) return out;

  auto c = [&](int i, int j) {
    if (i >= rows || j >= cols) return kForbiddenCost;
    return std::min(cost(i, j), kForbiddenCost);
  };

  // Shortest augmenting paths with row/column potentials, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= n; ++j) {
    const int i = p[j] - 1;
    const int col = j - 1;
    if (i >= rows || col >= cols || cost(i, col) >= kForbiddenCost) continue;
    out.row_to_col[i] = col;
    out.col_to_row[col] = i;
    out.total += cost(i, col);
  }
  return out;
}

void AssocConfig::validate() const {
  if (!(position_gate > 0.0) || !(loop_gate > 0.0) || pose_weight < 0.0 || shape_weight < 0.0 ||
      orientation_weight < 0.0 || miss_tolerance < 0) {
    throw Error(ErrorCode::ConfigError, "association gates must be positive");
  }
}

const char* to_string(AssocDecision d) {
  switch (d) {
    case AssocDecision::Match: return "MATCH";
    case AssocDecision::New: return "NEW";
    case AssocDecision::Olc: return "OLC";
  }
  return "?";
}

double track_distance(const Track& track, const WorldDetection& det) {
  double d = (track.pose.translation() - det.pose.translation()).norm();
  for (const auto& p : track.recent) d = std::min(d, (p - det.pose.translation()).norm());
  return d;
}

double association_cost(const Track& track, const WorldDetection& det, const AssocConfig& cfg) {
  double c = cfg.pose_weight * track_distance(track, det);
  if (track.shape.size() == det.shape.size()) {
    c += cfg.shape_weight * (track.shape.lambda - det.shape.lambda).norm();
  }
  if (cfg.orientation_weight > 0.0) {
    c += cfg.orientation_weight *
         rotation_angle(track.pose.rotation().transpose() * det.pose.rotation());
  }
  return c;
}

const Track* TrackStore::find(int id) const {
  for (const auto& t : tracks_) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

Track& TrackStore::at(int id) {
  for (auto& t : tracks_) {
    if (t.id == id) return t;
  }
  throw Error(ErrorCode::UnknownVariable, "no track " + std::to_string(id));
}

int TrackStore::open(int frame, const WorldDetection& det) {
  Track t;
  t.id = next_id_++;
  t.first_frame = frame;
  t.last_frame = frame;
  t.pose = det.pose;
  t.shape = det.shape;
  t.hits = 1;
  t.recent.push_back(det.pose.translation());
  tracks_.push_back(std::move(t));
  return tracks_.back().id;
}

void TrackStore::update(int id, int frame, const WorldDetection& det) {
  Track& t = at(id);
  t.last_frame = frame;
  t.pose = det.pose;
  if (t.shape.size() == det.shape.size()) {
    t.shape.lambda += (det.shape.lambda - t.shape.lambda) / (t.hits + 1);
  } else {
    t.shape = det.shape;
  }
  ++t.hits;
  t.dormant = false;
  t.recent.push_back(det.pose.translation());
  if (static_cast<int>(t.recent.size()) > Track::kRecent) t.recent.erase(t.recent.begin());
}

void TrackStore::age(int frame, int miss_tolerance) {
  for (auto& t : tracks_) {
    if (frame - t.last_frame > miss_tolerance) t.dormant = true;
  }
}

namespace {

// Order used to mint ids, independent of the order detections arrive in.
bool spatially_before(const WorldDetection& a, const WorldDetection& b) {
  const Vec3& pa = a.pose.translation();
  const Vec3& pb = b.pose.translation();
  if (pa.x() != pb.x()) return pa.x() < pb.x();
  if (pa.z() != pb.z()) return pa.z() < pb.z();
  return pa.y() < pb.y();
}

}  // namespace

std::vector<AssocRecord> associate_frame(TrackStore& store, int frame,
                                         std::span<const WorldDetection> detections,
                                         const AssocConfig& cfg, bool olc) {
  cfg.validate();
  const int n = static_cast<int>(detections.size());
  std::vector<AssocRecord> records(n);
  std::vector<char> done(n, 0);
  for (int d = 0; d < n; ++d) {
    records[d].frame = frame;
    records[d].detection = d;
  }

  auto match_against = [&](const std::vector<int>& track_ids, double gate,
                           AssocDecision decision) {
    std::vector<int> open;
    for (int d = 0; d < n; ++d) {
      if (!done[d]) open.push_back(d);
    }
    if (track_ids.empty() || open.empty()) return;
    Eigen::MatrixXd cost(track_ids.size(), open.size());
    for (std::size_t r = 0; r < track_ids.size(); ++r) {
      const Track& t = *store.find(track_ids[r]);
      for (std::size_t c = 0; c < open.size(); ++c) {
        const WorldDetection& det = detections[open[c]];
        cost(r, c) = track_distance(t, det) > gate ? kForbiddenCost : association_cost(t, det, cfg);
      }
    }
    const HungarianResult h = hungarian_assign(cost);
    for (std::size_t c = 0; c < open.size(); ++c) {
      const int r = h.col_to_row[c];
      if (r < 0) continue;
      const int d = open[c];
      records[d].global_id = track_ids[r];
      records[d].cost = cost(r, c);
      records[d].decision = decision;
      done[d] = 1;
    }
  };

  std::vector<int> live;
  std::vector<int> dormant;
  for (const auto& t : store.tracks()) (t.dormant ? dormant : live).push_back(t.id);
  match_against(live, cfg.position_gate, AssocDecision::Match);
  if (olc) match_against(dormant, cfg.loop_gate, AssocDecision::Olc);

  for (int d = 0; d < n; ++d) {
    if (done[d]) store.update(records[d].global_id, frame, detections[d]);
  }
  std::vector<int> fresh;
  for (int d = 0; d < n; ++d) {
    if (!done[d]) fresh.push_back(d);
  }
  std::stable_sort(fresh.begin(), fresh.end(), [&](int a, int b) {
    return spatially_before(detections[a], detections[b]);
  });
  for (int d : fresh) {
    records[d].global_id = store.open(frame, detections[d]);
    records[d].cost = 0.0;
    records[d].decision = AssocDecision::New;
  }
  store.age(frame, cfg.miss_tolerance);
  return records;
}

std::optional<int> detect_object_loop_closure(const TrackStore& store,
                                              const WorldDetection& detection,
                                              const AssocConfig& cfg) {
  std::optional<int> best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& t : store.tracks()) {
    if (!t.dormant) continue;
    if (track_distance(t, detection) > cfg.loop_gate) continue;
    const double c = association_cost(t, detection, cfg);
    if (c < best_cost || (c == best_cost && best && t.id < *best)) {
      best_cost = c;
      best = t.id;
    }
  }
  return best;
}

void write_assoc_log(std::ostream& out, std::span<const AssocRecord> records) {
  out << "# frame detection global_id cost decision\n";
  for (const auto& r : records) {
    out << r.frame << ' ' << r.detection << ' ' << r.global_id << ' ' << format_double(r.cost)
        << ' ' << to_string(r.decision) << '\n';
  }
}

}  // namespace objslam
