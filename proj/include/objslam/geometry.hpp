#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace objslam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;

/// Element of se(3). Stacked as (rot, trans) wherever a 6-vector is needed.
struct Twist6 {
  Vec3 rot = Vec3::Zero();
  Vec3 trans = Vec3::Zero();

  Vec6 vector() const {
    Vec6 v;
    v << rot, trans;
    return v;
  }
  static Twist6 from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
};

/// Rigid transform x -> R x + t.
class Pose3 {
 public:
  Pose3() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose3(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose3 identity() { return {}; }
  static Pose3 from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  /// Expects a unit quaternion (w, x, y, z).
  static Pose3 from_quaternion(double qw, double qx, double qy, double qz, const Vec3& t);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }
  Pose3 operator*(const Pose3& other) const {
    return {rotation_ * other.rotation_, rotation_ * other.translation_ + translation_};
  }
  Pose3 inverse() const {
    Mat3 rt = rotation_.transpose();
    return {rt, -rt * translation_};
  }

  Mat4 matrix() const;
  /// Unit quaternion with non-negative w.
  Eigen::Quaterniond quaternion() const;

  /// Orthonormality and det = +1 within tol.
  bool is_valid(double tol = 1e-9) const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  bool is_valid() const { return fx > 0.0 && fy > 0.0; }
};

/// Points closer than this along the optical axis cannot be projected.
inline constexpr double kDepthEpsilon = 1e-6;
/// se3_log refuses rotations this close to pi.
inline constexpr double kAngleAtPiTolerance = 1e-6;

Pose3 compose(const Pose3& a, const Pose3& b);
Pose3 inverse(const Pose3& t);
/// T_j * T_i^-1.
Pose3 relative_pose(const Pose3& i, const Pose3& j);

Mat3 skew(const Vec3& v);
Mat3 so3_exp(const Vec3& omega);
/// Throws AngleAtPi within kAngleAtPiTolerance of pi.
Vec3 so3_log(const Mat3& rotation);
Mat3 so3_left_jacobian(const Vec3& omega);
Mat3 so3_left_jacobian_inverse(const Vec3& omega);

Pose3 se3_exp(const Twist6& x);
Twist6 se3_log(const Pose3& t);

/// Ad_T in (rot, trans) ordering: T exp(x) T^-1 = exp(Ad_T x).
Mat6 adjoint(const Pose3& t);
/// Left Jacobian of SE(3) in (rot, trans) ordering.
Mat6 se3_left_jacobian(const Twist6& x);
Mat6 se3_left_jacobian_inverse(const Twist6& x);
/// Log(exp(x) exp(d)) ~= x + Jr^-1(x) d.
Mat6 se3_right_jacobian_inverse(const Twist6& x);

/// Rotation angle in [0, pi].
double rotation_angle(const Mat3& rotation);

Mat3 rot_x(double angle);
Mat3 rot_y(double angle);
Mat3 rot_z(double angle);

/// Pinhole projection of a camera-frame point. Throws BehindCamera when z <= kDepthEpsilon.
Vec2 project(const Vec3& p_cam, const CameraIntrinsics& k);
/// d project / d p_cam.
Mat23 project_jacobian(const Vec3& p_cam, const CameraIntrinsics& k);
/// Unit-depth ray (x, y, 1) through a pixel.
Vec3 backproject_ray(const Vec2& pixel, const CameraIntrinsics& k);

/// Nearest rotation in the Frobenius sense (orthogonal Procrustes, det +1).
Mat3 project_to_so3(const Mat3& m);

}  // namespace objslam
