#include "doctest.h"

#include <sstream>

#include "objslam/error.hpp"
#include "objslam/eval.hpp"

using namespace objslam;
using doctest::Approx;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ConfigError;
}

}  // namespace

TEST_CASE("object localization error") {
  const std::vector<Vec3> truth{{0, 0, 0}, {1, 0, 0}, {0, 0, 2}};
  SUBCASE("exact estimates") {
    const std::map<int, Vec3> est{{4, truth[0]}, {7, truth[1]}, {9, truth[2]}};
    const auto e = object_localization_error(est, truth, {{4, 0}, {7, 1}, {9, 2}});
    CHECK(e.best == 0.0);
    CHECK(e.worst == 0.0);
    CHECK(e.average == 0.0);
  }
  SUBCASE("single object 0.5 m off") {
    const auto e = object_localization_error({{0, Vec3(0.3, 0, 0.4)}}, truth, {{0, 0}});
    CHECK(e.best == Approx(0.5));
    CHECK(e.worst == Approx(0.5));
    CHECK(e.average == Approx(0.5));
  }
  SUBCASE("offsets 0.1, 0.2, 0.6") {
    const std::map<int, Vec3> est{{0, truth[0] + Vec3(0.1, 0, 0)},
                                  {1, truth[1] + Vec3(0, 0.2, 0)},
                                  {2, truth[2] + Vec3(0, 0, -0.6)}};
    const auto e = object_localization_error(est, truth, {{0, 0}, {1, 1}, {2, 2}});
    CHECK(e.best == Approx(0.1));
    CHECK(e.worst == Approx(0.6));
    CHECK(e.average == Approx(0.3));
  }
  SUBCASE("missing correspondence") {
    CHECK(code_of([&] { object_localization_error({{0, Vec3::Zero()}, {1, Vec3::Zero()}}, truth, {{0, 0}}); }) ==
          ErrorCode::MissingCorrespondence);
    CHECK(code_of([&] { object_localization_error({{0, Vec3::Zero()}}, truth, {{0, 5}}); }) ==
          ErrorCode::MissingCorrespondence);
  }
}

TEST_CASE("endpoint drift") {
  const std::vector<Vec3> truth{{0, 0, 0}, {1, 0, 0}, {0, 0, 0}};
  std::vector<Vec3> est = truth;
  auto d = endpoint_drift(est, truth, true);
  CHECK(d.x == 0.0);
  CHECK(d.z == 0.0);
  est.back() = Vec3(0.2, 0.0, -0.3);
  d = endpoint_drift(est, truth, true);
  CHECK(d.x == Approx(0.2));
  CHECK(d.z == Approx(0.3));
  CHECK(code_of([&] { endpoint_drift(est, truth, false); }) == ErrorCode::NotApplicable);
  CHECK(code_of([&] { endpoint_drift({}, truth, true); }) == ErrorCode::NotApplicable);
}

TEST_CASE("correspondence by majority of labels") {
  const std::vector<std::vector<int>> labels{{2, 0}, {2}, {0, 1}};
  std::vector<DetectionRecord> dets(5);
  dets[0] = {0, 0, 10};
  dets[1] = {1, 0, 10};
  dets[2] = {2, 1, 10};  // one vote for object 1 against two for object 2
  dets[3] = {0, 1, 11};
  dets[4] = {2, 0, 11};
  const auto c = correspondence_from_labels(dets, labels);
  CHECK(c.at(10) == 2);
  CHECK(c.at(11) == 0);
  dets[0].observation = 5;
  CHECK(code_of([&] { correspondence_from_labels(dets, labels); }) == ErrorCode::MissingCorrespondence);
}

TEST_CASE("report table and json") {
  RunReport r;
  r.name = "seq1";
  r.mode = RunMode::Incremental;
  r.olc = true;
  r.frames = 124;
  r.true_objects = 11;
  r.estimated_objects = 11;
  r.localized_objects = 11;
  r.objects = LocalizationError{0.01, 0.2, 0.05};
  r.drift = EndpointDrift{0.1, 0.02};
  r.seconds = 12.5;
  std::ostringstream out;
  write_report(out, r);
  const std::string text = out.str();
  CHECK(text.find("mode                 inc") != std::string::npos);
  CHECK(text.find("object loop closure  on") != std::string::npos);
  CHECK(text.find("object error average         0.0500") != std::string::npos);
  CHECK(text.find("endpoint drift Z             0.0200") != std::string::npos);
  const auto j = nlohmann::json::parse(text.substr(text.find("--- json ---") + 12));
  CHECK(j["object_error"]["worst"] == 0.2);
  CHECK(j["drift"]["x"] == 0.1);
  CHECK_FALSE(j.contains("seconds"));

  r.drift.reset();
  r.objects.reset();
  r.applicable = false;
  std::ostringstream na;
  write_report(na, r);
  CHECK(na.str().find("endpoint drift X             N/A") != std::string::npos);
  CHECK(na.str().find("object error best            N/A") != std::string::npos);
  CHECK(report_to_json(r)["drift"].is_null());
}

TEST_CASE("plot is a standalone svg") {
  PipelineResult res;
  res.name = "demo";
  res.trajectory = {Pose3(), Pose3::from_translation(Vec3(-1, 0, -2))};
  res.objects[0] = Pose3::from_translation(Vec3(0.5, 0, 1));
  std::ostringstream a, b;
  write_plot_svg(a, res, nullptr);
  write_plot_svg(b, res, nullptr);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("<svg", 0) == 0);
  CHECK(a.str().find("<polyline") != std::string::npos);
  CHECK(a.str().find("<circle") != std::string::npos);
  CHECK(a.str().find("</svg>") != std::string::npos);
}
