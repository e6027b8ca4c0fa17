#include "objslam/geometry.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "objslam/error.hpp"

namespace objslam {

namespace {

// Series cutoffs. Below these the closed forms lose precision to cancellation.
constexpr double kSmallAngle = 1e-4;
constexpr double kSmallAngleCubic = 1e-3;

// (1 - cos t) / t^2
double coeff_b(double theta) {
  if (theta < kSmallAngle) {
    double t2 = theta * theta;
    return 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  }
  double s = std::sin(0.5 * theta);
  return 2.0 * s * s / (theta * theta);
}

// (t - sin t) / t^3
double coeff_c(double theta) {
  if (theta < kSmallAngleCubic) {
    double t2 = theta * theta;
    return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  }
  return (theta - std::sin(theta)) / (theta * theta * theta);
}

// sin t / t
double coeff_a(double theta) {
  if (theta < kSmallAngle) {
    double t2 = theta * theta;
    return 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
  }
  return std::sin(theta) / theta;
}

// Q block of the SE(3) left Jacobian (rotation omega, translation rho).
Mat3 se3_q_block(const Vec3& omega, const Vec3& rho) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  const Mat3 r = skew(rho);
  const Mat3 wr = w * r;
  const Mat3 rw = r * w;
  const Mat3 wrw = wr * w;

  double c1;
  double c2;
  double c3;
  if (theta < kSmallAngleCubic) {
    double t2 = theta * theta;
    c1 = 1.0 / 6.0 - t2 / 120.0;
    c2 = 1.0 / 24.0 - t2 / 720.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0;
  } else {
    double t2 = theta * theta;
    double s = std::sin(theta);
    double c = std::cos(theta);
    c1 = (theta - s) / (t2 * theta);
    c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta);
  }
  return 0.5 * r + c1 * (wr + rw + wrw) + c2 * (w * wr + rw * w - 3.0 * wrw) +
         c3 * (wrw * w + w * wrw);
}

}  // namespace

Pose3 Pose3::from_quaternion(double qw, double qx, double qy, double qz, const Vec3& t) {
  Eigen::Quaterniond q(qw, qx, qy, qz);
  q.normalize();
  return {q.toRotationMatrix(), t};
}

Mat4 Pose3::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Eigen::Quaterniond Pose3::quaternion() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

bool Pose3::is_valid(double tol) const {
  if (!rotation_.allFinite() || !translation_.allFinite()) return false;
  double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).norm();
  return ortho <= tol && std::abs(rotation_.determinant() - 1.0) <= tol;
}

Pose3 compose(const Pose3& a, const Pose3& b) { return a * b; }

Pose3 inverse(const Pose3& t) { return t.inverse(); }

Pose3 relative_pose(const Pose3& i, const Pose3& j) { return j * i.inverse(); }

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  return Mat3::Identity() + coeff_a(theta) * w + coeff_b(theta) * w * w;
}

double rotation_angle(const Mat3& rotation) {
  Vec3 axis_sin(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
                rotation(1, 0) - rotation(0, 1));
  double s = 0.5 * axis_sin.norm();
  double c = 0.5 * (rotation.trace() - 1.0);
  return std::atan2(s, c);
}

Vec3 so3_log(const Mat3& rotation) {
  const double theta = rotation_angle(rotation);
  if (std::numbers::pi - theta < kAngleAtPiTolerance) {
    throw Error(ErrorCode::AngleAtPi, "rotation angle within tolerance of pi");
  }
  const Vec3 vee(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
                 rotation(1, 0) - rotation(0, 1));
  const double c = std::cos(theta);
  if (c > -0.9) {
    // vee = 2 sin(theta) axis
    return vee / (2.0 * coeff_a(theta));
  }
  // Near pi the antisymmetric part vanishes; recover the axis from the symmetric part.
  Mat3 sym = 0.5 * (rotation + rotation.transpose()) - c * Mat3::Identity();
  sym /= (1.0 - c);
  int col = 0;
  sym.diagonal().maxCoeff(&col);
  Vec3 axis = sym.col(col) / std::sqrt(sym(col, col));
  axis.normalize();
  if (axis.dot(vee) < 0.0) axis = -axis;
  return theta * axis;
}

Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  return Mat3::Identity() + coeff_b(theta) * w + coeff_c(theta) * w * w;
}

Mat3 so3_left_jacobian_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  double d;
  if (theta < kSmallAngleCubic) {
    double t2 = theta * theta;
    d = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    d = (1.0 - 0.5 * theta * std::sin(theta) / (1.0 - std::cos(theta))) / (theta * theta);
  }
  return Mat3::Identity() - 0.5 * w + d * w * w;
}

Pose3 se3_exp(const Twist6& x) {
  return {so3_exp(x.rot), so3_left_jacobian(x.rot) * x.trans};
}

Twist6 se3_log(const Pose3& t) {
  Vec3 omega = so3_log(t.rotation());
  return {omega, so3_left_jacobian_inverse(omega) * t.translation()};
}

Mat6 adjoint(const Pose3& t) {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = t.rotation();
  ad.bottomRightCorner<3, 3>() = t.rotation();
  ad.bottomLeftCorner<3, 3>() = skew(t.translation()) * t.rotation();
  return ad;
}

Mat6 se3_left_jacobian(const Twist6& x) {
  Mat6 j = Mat6::Zero();
  Mat3 jl = so3_left_jacobian(x.rot);
  j.topLeftCorner<3, 3>() = jl;
  j.bottomRightCorner<3, 3>() = jl;
  j.bottomLeftCorner<3, 3>() = se3_q_block(x.rot, x.trans);
  return j;
}

Mat6 se3_left_jacobian_inverse(const Twist6& x) {
  Mat6 j = Mat6::Zero();
  Mat3 jl_inv = so3_left_jacobian_inverse(x.rot);
  j.topLeftCorner<3, 3>() = jl_inv;
  j.bottomRightCorner<3, 3>() = jl_inv;
  j.bottomLeftCorner<3, 3>() = -jl_inv * se3_q_block(x.rot, x.trans) * jl_inv;
  return j;
}

Mat6 se3_right_jacobian_inverse(const Twist6& x) {
  return se3_left_jacobian_inverse({-x.rot, -x.trans});
}

Mat3 rot_x(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix();
}

Mat3 rot_y(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix();
}

Mat3 rot_z(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

Vec2 project(const Vec3& p_cam, const CameraIntrinsics& k) {
  if (!(p_cam.z() > kDepthEpsilon)) {
    throw Error(ErrorCode::BehindCamera, "point depth below epsilon");
  }
  const double inv_z = 1.0 / p_cam.z();
  return {k.fx * p_cam.x() * inv_z + k.cx, k.fy * p_cam.y() * inv_z + k.cy};
}

Mat23 project_jacobian(const Vec3& p_cam, const CameraIntrinsics& k) {
  const double inv_z = 1.0 / p_cam.z();
  const double inv_z2 = inv_z * inv_z;
  Mat23 j;
  j << k.fx * inv_z, 0.0, -k.fx * p_cam.x() * inv_z2,
       0.0, k.fy * inv_z, -k.fy * p_cam.y() * inv_z2;
  return j;
}

Vec3 backproject_ray(const Vec2& pixel, const CameraIntrinsics& k) {
  return {(pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0};
}

Mat3 project_to_so3(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace objslam
