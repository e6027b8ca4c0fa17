#include "doctest.h"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "objslam/assoc.hpp"
#include "objslam/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace objslam;
using doctest::Approx;

namespace {

WorldDetection at(double x, double z, ShapeParams shape = ShapeParams(Eigen::VectorXd::Zero(3))) {
  return {Pose3::from_translation(Vec3(x, 0.0, z)), std::move(shape)};
}

ShapeParams shape_of(double a, double b, double c) {
  Eigen::VectorXd v(3);
  v << a, b, c;
  return ShapeParams(v);
}

}  // namespace

TEST_CASE("hungarian examples") {
  Eigen::MatrixXd c(3, 3);
  c << 0, 5, 5, 5, 0, 5, 5, 5, 0;
  HungarianResult h = hungarian_assign(c);
  CHECK(h.row_to_col == std::vector<int>{0, 1, 2});
  CHECK(h.total == 0.0);

  Eigen::MatrixXd d(2, 2);
  d << 1, 2, 2, 1;
  h = hungarian_assign(d);
  CHECK(h.row_to_col == std::vector<int>{0, 1});
  CHECK(h.col_to_row == std::vector<int>{0, 1});
  CHECK(h.total == 2.0);

  CHECK(hungarian_assign(Eigen::MatrixXd(0, 3)).col_to_row == std::vector<int>{-1, -1, -1});
}

TEST_CASE("hungarian: rectangular and forbidden entries") {
  Eigen::MatrixXd c(2, 3);
  c << 4, 1, 3, 2, 0, 5;
  HungarianResult h = hungarian_assign(c);
  CHECK(h.total == 3.0);
  CHECK(h.row_to_col == std::vector<int>{1, 0});
  CHECK(h.col_to_row == std::vector<int>{1, 0, -1});

  Eigen::MatrixXd f(2, 2);
  f << 1, kForbiddenCost, kForbiddenCost, kForbiddenCost;
  h = hungarian_assign(f);
  CHECK(h.row_to_col == std::vector<int>{0, -1});
  CHECK(h.col_to_row == std::vector<int>{0, -1});
  CHECK(h.total == 1.0);
}

TEST_CASE("hungarian matches exhaustive enumeration up to 7x7") {
  std::uint64_t s = 71;
  int checked = 0;
  for (int r = 1; r <= 7; ++r) {
    for (int c = 1; c <= 7; ++c) {
      const int trials = (r == 7 && c == 7) ? 30 : 20;
      for (int t = 0; t < trials; ++t) {
        Eigen::MatrixXd m(r, c);
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) m(i, j) = std::floor(oracle::uniform(s, 0.0, 10.0));
        }
        const HungarianResult h = hungarian_assign(m);
        CHECK(h.total == oracle::brute_force_assignment(m));
        // One-to-one and the right number of pairs.
        int pairs = 0;
        for (int i = 0; i < r; ++i) {
          if (h.row_to_col[i] < 0) continue;
          ++pairs;
          CHECK(h.col_to_row[h.row_to_col[i]] == i);
        }
        CHECK(pairs == std::min(r, c));
        ++checked;
      }
    }
  }
  CHECK(checked == 49 * 20 + 10);
}

TEST_CASE("association examples") {
  AssocConfig cfg;
  TrackStore store;
  std::vector<WorldDetection> first{at(1.0, 2.0)};
  auto rec = associate_frame(store, 0, first, cfg, false);
  REQUIRE(rec.size() == 1);
  CHECK(rec[0].decision == AssocDecision::New);
  const int id = rec[0].global_id;

  std::vector<WorldDetection> near{at(1.05, 2.0)};
  rec = associate_frame(store, 1, near, cfg, false);
  CHECK(rec[0].decision == AssocDecision::Match);
  CHECK(rec[0].global_id == id);
  CHECK(rec[0].cost == Approx(0.05));

  std::vector<WorldDetection> far{at(6.0, 2.0)};
  rec = associate_frame(store, 2, far, cfg, false);
  CHECK(rec[0].decision == AssocDecision::New);
  CHECK(rec[0].global_id != id);
  CHECK(store.tracks().size() == 2);
}

TEST_CASE("association cost combines position and shape") {
  AssocConfig cfg;
  cfg.pose_weight = 2.0;
  cfg.shape_weight = 0.5;
  TrackStore store;
  store.open(0, at(0.0, 0.0, shape_of(1, 0, 0)));
  const Track& t = store.tracks()[0];
  CHECK(association_cost(t, at(0.3, 0.4, shape_of(1, 3, 4)), cfg) == Approx(2.0 * 0.5 + 0.5 * 5.0));
  cfg.orientation_weight = 1.0;
  WorldDetection turned{Pose3(rot_y(0.25), Vec3::Zero()), shape_of(1, 0, 0)};
  CHECK(association_cost(t, turned, cfg) == Approx(0.25));
}

TEST_CASE("tracks go dormant and are revived by loop closure") {
  AssocConfig cfg;
  cfg.miss_tolerance = 2;
  TrackStore store;
  std::vector<WorldDetection> d0{at(0.0, 0.0, shape_of(1, 1, 0))};
  const int id = associate_frame(store, 0, d0, cfg, true)[0].global_id;
  for (int f = 1; f <= 3; ++f) associate_frame(store, f, {}, cfg, true);
  REQUIRE(store.find(id)->dormant);

  SUBCASE("revisit at the same place with the same shape") {
    auto rec = associate_frame(store, 10, d0, cfg, true);
    CHECK(rec[0].decision == AssocDecision::Olc);
    CHECK(rec[0].global_id == id);
    CHECK_FALSE(store.find(id)->dormant);
    CHECK(store.find(id)->hits == 2);
  }
  SUBCASE("drifted 0.4 m inside a 1 m loop gate") {
    const auto hit = detect_object_loop_closure(store, at(0.4, 0.0, shape_of(1, 1, 0)), cfg);
    REQUIRE(hit);
    CHECK(*hit == id);
    std::vector<WorldDetection> drifted{at(0.0, 0.4, shape_of(1, 1, 0))};
    CHECK(associate_frame(store, 10, drifted, cfg, true)[0].global_id == id);
  }
  SUBCASE("without loop closure a revisit opens a new track") {
    auto rec = associate_frame(store, 10, d0, cfg, false);
    CHECK(rec[0].decision == AssocDecision::New);
    CHECK(rec[0].global_id != id);
  }
  SUBCASE("outside the loop gate") {
    CHECK_FALSE(detect_object_loop_closure(store, at(1.5, 0.0), cfg));
  }
}

TEST_CASE("loop closure picks the cheapest dormant track, then the lowest id") {
  AssocConfig cfg;
  cfg.miss_tolerance = 0;
  TrackStore store;
  store.open(0, at(-0.3, 0.0, shape_of(0, 0, 0)));
  store.open(0, at(0.3, 0.0, shape_of(1, 0, 0)));
  store.age(5, cfg.miss_tolerance);
  // Equidistant; the second track's shape is closer.
  CHECK(*detect_object_loop_closure(store, at(0.0, 0.0, shape_of(0.9, 0, 0)), cfg) == 1);
  CHECK(*detect_object_loop_closure(store, at(0.0, 0.0, shape_of(0.1, 0, 0)), cfg) == 0);
  // Equal cost: lowest id.
  CHECK(*detect_object_loop_closure(store, at(0.0, 0.0, shape_of(0.5, 0, 0)), cfg) == 0);
  // Live tracks are not candidates.
  TrackStore live;
  live.open(0, at(0.0, 0.0));
  CHECK_FALSE(detect_object_loop_closure(live, at(0.0, 0.0), cfg));
}

TEST_CASE("association does not depend on detection order") {
  AssocConfig cfg;
  std::uint64_t s = 72;
  for (int t = 0; t < 50; ++t) {
    TrackStore base;
    for (int k = 0; k < 5; ++k) {
      base.open(0, at(oracle::uniform(s, -4, 4), oracle::uniform(s, -4, 4),
                      shape_of(oracle::uniform(s, -1, 1), 0, 0)));
    }
    std::vector<WorldDetection> dets;
    for (int k = 0; k < 7; ++k) {
      const Track& tr = base.tracks()[k % 5];
      dets.push_back(k < 5 ? WorldDetection{tr.pose * Pose3::from_translation(Vec3(oracle::uniform(s, -0.3, 0.3), 0, 0)),
                                            tr.shape}
                           : at(oracle::uniform(s, -4, 4), oracle::uniform(s, -4, 4)));
    }
    TrackStore a = base;
    const auto ra = associate_frame(a, 1, dets, cfg, true);
    std::vector<int> perm(dets.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (int p = 0; p < 5; ++p) {
      for (std::size_t i = perm.size() - 1; i > 0; --i) {
        std::swap(perm[i], perm[static_cast<std::size_t>(oracle::uniform(s, 0, static_cast<double>(i + 1)))]);
      }
      std::vector<WorldDetection> shuffled;
      for (int i : perm) shuffled.push_back(dets[i]);
      TrackStore b = base;
      const auto rb = associate_frame(b, 1, shuffled, cfg, true);
      for (std::size_t i = 0; i < perm.size(); ++i) CHECK(rb[i].global_id == ra[perm[i]].global_id);
    }
  }
}

TEST_CASE("noiseless scenario: every detection maps to its true object") {
  for (const auto& preset : scenario_presets()) {
    const ScenarioConfig cfg = testing::noiseless(preset);
    const Scenario sc = generate(cfg, testing::chair_model());
    TrackStore store;
    AssocConfig ac;
    std::map<int, std::set<int>> id_to_truth;
    std::map<int, std::set<int>> truth_to_id;
    for (std::size_t f = 0; f < sc.frames.size(); ++f) {
      std::vector<WorldDetection> dets;
      for (int label : sc.frames[f].labels) dets.push_back({sc.objects[label].pose, sc.objects[label].shape});
      const auto rec = associate_frame(store, static_cast<int>(f), dets, ac, true);
      std::set<int> ids;
      for (std::size_t d = 0; d < rec.size(); ++d) {
        id_to_truth[rec[d].global_id].insert(sc.frames[f].labels[d]);
        truth_to_id[sc.frames[f].labels[d]].insert(rec[d].global_id);
        ids.insert(rec[d].global_id);
      }
      CHECK(ids.size() == rec.size());
    }
    INFO(preset.name);
    for (const auto& [id, truths] : id_to_truth) CHECK(truths.size() == 1);
    for (const auto& [gt, ids] : truth_to_id) CHECK(ids.size() == 1);
  }
}

TEST_CASE("association log format") {
  std::vector<AssocRecord> recs{{0, 0, 3, 0.0, AssocDecision::New},
                                {4, 1, 3, 0.125, AssocDecision::Match},
                                {9, 0, 3, 0.5, AssocDecision::Olc}};
  std::ostringstream out;
  write_assoc_log(out, recs);
  CHECK(out.str() == "# frame detection global_id cost decision\n0 0 3 0 NEW\n4 1 3 0.125 MATCH\n9 0 3 0.5 OLC\n");
}

TEST_CASE("association config validation") {
  AssocConfig cfg;
  cfg.position_gate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.loop_gate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.miss_tolerance = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
