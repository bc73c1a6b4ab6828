#pragma once

// Rigid-transform math on SE(3): quaternion + translation poses, the
// exponential / logarithm maps and geodesic interpolation.
//
// Conventions
//   - Quaternions are Hamilton (w, x, y, z) and kept canonical (w >= 0).
//   - A Twist is ordered (angular; linear), matching Jacobian rows.
//   - compose(a, b) applies b expressed in a's frame: p -> a * (b * p).

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>

namespace otv {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Quat = Eigen::Quaterniond;

/// Thrown by log() when the rotation angle reaches the cut locus.
class AngleNearPi : public std::domain_error {
public:
    explicit AngleNearPi(double angle);
    double angle() const noexcept { return angle_; }

private:
    double angle_;
};

/// Largest rotation angle log() accepts.
inline constexpr double kLogAngleLimit = 3.14159265358979323846 - 1e-6;

struct Pose {
    Quat rotation = Quat::Identity();
    Vec3 translation = Vec3::Zero();

    Pose() = default;
    Pose(const Quat& q, const Vec3& t);

    static Pose identity() { return {}; }
    static Pose from_translation(const Vec3& t) { return {Quat::Identity(), t}; }
    static Pose from_rotation(const Quat& q) { return {q, Vec3::Zero()}; }
    static Pose from_matrix(const Mat4& m);

    Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
    Mat4 matrix() const;

    Vec3 transform_point(const Vec3& p) const { return rotation * p + translation; }
};

struct Twist {
    Vec3 angular = Vec3::Zero();
    Vec3 linear = Vec3::Zero();

    Vec6 vector() const;
    static Twist from_vector(const Vec6& v);
    double norm() const { return vector().norm(); }
};

/// Unit-norm, w >= 0 representative of q.
Quat canonical(const Quat& q);

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& t);
inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

Twist log(const Pose& t);
Pose exp(const Twist& v);

Vec3 so3_log(const Quat& q);
Quat so3_exp(const Vec3& w);

/// a * exp(t * log(a^-1 * b)). t outside [0, 1] throws std::invalid_argument.
Pose interpolate(const Pose& a, const Pose& b, double t);

/// ||log(a^-1 b)||, the distance used by the interpolation and filter checks.
double log_distance(const Pose& a, const Pose& b);

/// Equality up to quaternion sign with absolute tolerances on both parts.
bool approx_equal(const Pose& a, const Pose& b, double tol = 1e-9);

double rotation_angle(const Quat& q);

/// URDF-style fixed-axis roll/pitch/yaw: R = Rz(yaw) * Ry(pitch) * Rx(roll).
Quat quat_from_rpy(double roll, double pitch, double yaw);
Quat quat_from_axis_angle(const Vec3& axis, double angle);

Mat3 skew(const Vec3& v);

}  // namespace otv
