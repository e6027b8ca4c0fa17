#include "doctest.h"

#include <cmath>
#include <numbers>

#include "objslam/error.hpp"
#include "objslam/geometry.hpp"
#include "oracles.hpp"

using namespace objslam;
using doctest::Approx;

namespace {

bool near(const Pose3& a, const Pose3& b, double tol) {
  return (a.rotation() - b.rotation()).norm() < tol &&
         (a.translation() - b.translation()).norm() < tol;
}

const CameraIntrinsics kCam{500.0, 500.0, 320.0, 240.0};

}  // namespace

TEST_CASE("compose and inverse") {
  const Pose3 i;
  CHECK(near(compose(i, i), i, 1e-15));
  std::uint64_t s = 1;
  for (int n = 0; n < 50; ++n) {
    const Pose3 t = oracle::random_pose(s, 3.0, 5.0);
    CHECK(near(compose(t, inverse(t)), i, 1e-9));
    CHECK(near(inverse(inverse(t)), t, 1e-12));
  }
  const Pose3 r90(rot_z(std::numbers::pi / 2), Vec3::Zero());
  CHECK(near(compose(r90, r90), Pose3(rot_z(std::numbers::pi), Vec3::Zero()), 1e-12));
  const Pose3 tr = inverse(Pose3::from_translation(Vec3(1, 2, 3)));
  CHECK(tr.translation().isApprox(Vec3(-1, -2, -3)));

  // a after b
  const Pose3 a = oracle::random_pose(s, 1.0, 1.0), b = oracle::random_pose(s, 1.0, 1.0);
  const Vec3 p(0.3, -0.2, 0.7);
  CHECK((compose(a, b) * p - a * (b * p)).norm() < 1e-12);
}

TEST_CASE("relative pose") {
  std::uint64_t s = 2;
  const Pose3 a = oracle::random_pose(s, 2.0, 3.0), b = oracle::random_pose(s, 2.0, 3.0);
  CHECK(near(relative_pose(a, a), Pose3(), 1e-12));
  CHECK(near(relative_pose(Pose3(), b), b, 1e-12));
  CHECK(near(compose(relative_pose(a, b), a), b, 1e-9));
}

TEST_CASE("log and exp closed forms") {
  const Twist6 z = se3_log(Pose3());
  CHECK(z.vector().norm() == 0.0);
  const Twist6 d = se3_log(Pose3::from_translation(Vec3(0.4, -1, 2)));
  CHECK(d.rot.norm() < 1e-15);
  CHECK((d.trans - Vec3(0.4, -1, 2)).norm() < 1e-15);
  const Twist6 r = se3_log(Pose3(rot_z(0.5), Vec3::Zero()));
  CHECK((r.rot - Vec3(0, 0, 0.5)).norm() < 1e-14);
  CHECK(near(se3_exp(Twist6{}), Pose3(), 1e-300));

  const Vec3 w(1e-4, -2e-4, 3e-4);
  const Pose3 e = se3_exp({w, Vec3::Zero()});
  CHECK((e.rotation() - (Mat3::Identity() + skew(w))).norm() < 1e-7);
}

TEST_CASE("exp and log against matrix functions") {
  std::uint64_t s = 3;
  for (int n = 0; n < 200; ++n) {
    Vec6 x;
    for (int i = 0; i < 6; ++i) x(i) = oracle::uniform(s, -1.5, 1.5);
    const Pose3 t = se3_exp(Twist6::from_vector(x));
    const Mat4 m = oracle::se3_exp_matrix(x);
    CHECK((t.rotation() - m.topLeftCorner<3, 3>()).norm() < 1e-10);
    CHECK((t.translation() - m.topRightCorner<3, 1>()).norm() < 1e-10);
    CHECK((se3_log(t).vector() - oracle::se3_log_matrix(t)).norm() < 1e-8);
  }
}

TEST_CASE("small angle branch agrees with the closed form") {
  for (double a : {1e-3, 1e-6, 1e-9, 1e-12}) {
    Vec6 x;
    x << a, -2 * a, 0.5 * a, 0.1, 0.2, -0.3;
    const Pose3 t = se3_exp(Twist6::from_vector(x));
    CHECK((se3_log(t).vector() - x).norm() < 1e-10);
    CHECK((t.rotation() - oracle::se3_exp_matrix(x).topLeftCorner<3, 3>()).norm() < 1e-12);
  }
}

TEST_CASE("log near pi is refused") {
  CHECK_THROWS_AS(se3_log(Pose3(rot_x(std::numbers::pi), Vec3::Zero())), Error);
  try {
    so3_log(rot_y(std::numbers::pi - 1e-8));
    FAIL("expected AngleAtPi");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AngleAtPi);
  }
  CHECK_NOTHROW(so3_log(rot_y(std::numbers::pi - 1e-3)));
}

TEST_CASE("adjoint identity") {
  std::uint64_t s = 4;
  for (int n = 0; n < 20; ++n) {
    const Pose3 t = oracle::random_pose(s, 2.5, 2.0);
    Vec6 x;
    for (int i = 0; i < 6; ++i) x(i) = oracle::uniform(s, -0.5, 0.5);
    const Pose3 lhs = t * se3_exp(Twist6::from_vector(x)) * t.inverse();
    const Pose3 rhs = se3_exp(Twist6::from_vector(adjoint(t) * x));
    CHECK(near(lhs, rhs, 1e-10));
  }
}

TEST_CASE("right jacobian inverse linearizes log") {
  std::uint64_t s = 5;
  for (int n = 0; n < 20; ++n) {
    Vec6 x;
    for (int i = 0; i < 6; ++i) x(i) = oracle::uniform(s, -1.0, 1.0);
    const Pose3 base = se3_exp(Twist6::from_vector(x));
    auto f = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
      return se3_log(base * se3_exp(Twist6::from_vector(d))).vector();
    };
    const Eigen::MatrixXd num = oracle::numeric_jacobian(f, Eigen::VectorXd::Zero(6));
    CHECK(oracle::relative_error(num, se3_right_jacobian_inverse(Twist6::from_vector(x))) < 1e-6);
  }
}

TEST_CASE("left jacobian and its inverse") {
  std::uint64_t s = 6;
  for (int n = 0; n < 20; ++n) {
    Vec6 x;
    for (int i = 0; i < 6; ++i) x(i) = oracle::uniform(s, -1.0, 1.0);
    const Twist6 t = Twist6::from_vector(x);
    CHECK((se3_left_jacobian(t) * se3_left_jacobian_inverse(t) - Mat6::Identity()).norm() < 1e-10);
    const Vec3 w = x.head<3>();
    CHECK((so3_left_jacobian(w) * so3_left_jacobian_inverse(w) - Mat3::Identity()).norm() < 1e-10);
  }
}

TEST_CASE("projection") {
  CHECK(project(Vec3(0, 0, 2), kCam).isApprox(Vec2(320, 240)));
  CHECK(project(Vec3(1, 0, 1), kCam).isApprox(Vec2(820, 240)));
  CHECK(project(Vec3(0.5, -0.5, 2), kCam).isApprox(Vec2(445, 115)));
  const Vec3 p(0.3, -0.7, 3.1);
  CHECK((project(3.7 * p, kCam) - project(p, kCam)).norm() < 1e-12);
  CHECK_THROWS_AS(project(Vec3(0, 0, 1e-7), kCam), Error);
  CHECK_THROWS_AS(project(Vec3(0, 0, -1), kCam), Error);
  const Vec3 ray = backproject_ray(project(p, kCam), kCam);
  CHECK((ray * p.z() - p).norm() < 1e-12);
}

TEST_CASE("projection jacobian matches finite differences") {
  std::uint64_t s = 7;
  for (int n = 0; n < 100; ++n) {
    const Vec3 p(oracle::uniform(s, -2, 2), oracle::uniform(s, -2, 2), oracle::uniform(s, 0.5, 8));
    auto f = [&](const Eigen::VectorXd& q) -> Eigen::VectorXd { return project(Vec3(q), kCam); };
    const Eigen::MatrixXd num = oracle::numeric_jacobian(f, p);
    CHECK(oracle::relative_error(num, project_jacobian(p, kCam)) < 1e-5);
  }
}

TEST_CASE("project_to_so3 and validity") {
  std::uint64_t s = 8;
  const Mat3 r = oracle::random_rotation(s, 3.0);
  Mat3 noisy = r;
  noisy(0, 1) += 1e-3;
  const Mat3 q = project_to_so3(noisy);
  CHECK(Pose3(q, Vec3::Zero()).is_valid());
  CHECK((q - r).norm() < 2e-3);
  CHECK_FALSE(Pose3(noisy, Vec3::Zero()).is_valid());
  CHECK(project_to_so3(-Mat3::Identity()).determinant() == Approx(1.0));
}

TEST_CASE("quaternion round trip") {
  std::uint64_t s = 9;
  for (int n = 0; n < 20; ++n) {
    const Pose3 t = oracle::random_pose(s, 3.0, 1.0);
    const Eigen::Quaterniond q = t.quaternion();
    CHECK(q.w() >= 0.0);
    CHECK(near(Pose3::from_quaternion(q.w(), q.x(), q.y(), q.z(), t.translation()), t, 1e-12));
  }
}
