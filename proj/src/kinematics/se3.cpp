#include "otv/se3.hpp"

#include <cmath>
#include <string>

namespace otv {

namespace {

constexpr double kSmallAngle = 1e-4;
// Below this the V / V^-1 coefficients switch to their Taylor series.
constexpr double kSeriesAngle = 0.05;

}  // namespace

AngleNearPi::AngleNearPi(double angle)
    : std::domain_error("rotation angle " + std::to_string(angle) + " too close to pi for log"),
      angle_(angle) {}

Quat canonical(const Quat& q) {
    Quat out = q;
    const double n = out.norm();
    out.coeffs() /= n;
    if (out.w() < 0.0) out.coeffs() = -out.coeffs();
    return out;
}

Pose::Pose(const Quat& q, const Vec3& t) : rotation(canonical(q)), translation(t) {}

Pose Pose::from_matrix(const Mat4& m) {
    Mat3 r = m.block<3, 3>(0, 0);
    return {Quat(r), m.block<3, 1>(0, 3)};
}

Mat4 Pose::matrix() const {
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = rotation_matrix();
    m.block<3, 1>(0, 3) = translation;
    return m;
}

Vec6 Twist::vector() const {
    Vec6 v;
    v << angular, linear;
    return v;
}

Twist Twist::from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }

Mat3 skew(const Vec3& v) {
    Mat3 s;
    s << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
        -v.y(), v.x(), 0.0;
    return s;
}

Pose compose(const Pose& a, const Pose& b) {
    return {a.rotation * b.rotation, a.translation + a.rotation * b.translation};
}

Pose inverse(const Pose& t) {
    const Quat qi = t.rotation.conjugate();
    return {qi, -(qi * t.translation)};
}

double rotation_angle(const Quat& q) {
    const Quat c = canonical(q);
    return 2.0 * std::atan2(c.vec().norm(), c.w());
}

Vec3 so3_log(const Quat& q) {
    const Quat c = canonical(q);
    const double n = c.vec().norm();
    const double w = c.w();
    double factor;
    if (n < 1e-8) {
        factor = 2.0 / w * (1.0 - n * n / (3.0 * w * w));
    } else {
        factor = 2.0 * std::atan2(n, w) / n;
    }
    return factor * c.vec();
}

Quat so3_exp(const Vec3& w) {
    const double theta = w.norm();
    double s;
    if (theta < kSmallAngle) {
        s = 0.5 - theta * theta / 48.0;
    } else {
        s = std::sin(0.5 * theta) / theta;
    }
    Quat q(std::cos(0.5 * theta), s * w.x(), s * w.y(), s * w.z());
    return canonical(q);
}

Twist log(const Pose& t) {
    const double theta = rotation_angle(t.rotation);
    if (theta >= kLogAngleLimit) throw AngleNearPi(theta);
    const Vec3 w = so3_log(t.rotation);
    const Mat3 W = skew(w);
    double c;
    if (theta < kSeriesAngle) {
        const double t2 = theta * theta;
        c = 1.0 / 12.0 + t2 * (1.0 / 720.0 + t2 * (1.0 / 30240.0 + t2 / 1209600.0));
    } else {
        c = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / (theta * theta);
    }
    const Mat3 v_inv = Mat3::Identity() - 0.5 * W + c * W * W;
    return {w, v_inv * t.translation};
}

Pose exp(const Twist& v) {
    const double theta = v.angular.norm();
    const Mat3 W = skew(v.angular);
    double a;
    double b;
    if (theta < kSeriesAngle) {
        const double t2 = theta * theta;
        a = 0.5 - t2 * (1.0 / 24.0 - t2 * (1.0 / 720.0 - t2 / 40320.0));
        b = 1.0 / 6.0 - t2 * (1.0 / 120.0 - t2 * (1.0 / 5040.0 - t2 / 362880.0));
    } else {
        const double s = std::sin(0.5 * theta);
        a = 2.0 * s * s / (theta * theta);
        b = (theta - std::sin(theta)) / (theta * theta * theta);
    }
    const Mat3 V = Mat3::Identity() + a * W + b * W * W;
    return {so3_exp(v.angular), V * v.linear};
}

Pose interpolate(const Pose& a, const Pose& b, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("interpolation fraction outside [0, 1]");
    if (t == 0.0) return a;
    if (t == 1.0) return b;
    Twist d = log(compose(inverse(a), b));
    d.angular *= t;
    d.linear *= t;
    return compose(a, exp(d));
}

double log_distance(const Pose& a, const Pose& b) { return log(compose(inverse(a), b)).norm(); }

bool approx_equal(const Pose& a, const Pose& b, double tol) {
    if ((a.translation - b.translation).cwiseAbs().maxCoeff() > tol) return false;
    const double same = (a.rotation.coeffs() - b.rotation.coeffs()).cwiseAbs().maxCoeff();
    const double flipped = (a.rotation.coeffs() + b.rotation.coeffs()).cwiseAbs().maxCoeff();
    return std::min(same, flipped) <= tol;
}

Quat quat_from_rpy(double roll, double pitch, double yaw) {
    const Quat q = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())) *
                   Quat(Eigen::AngleAxisd(pitch, Vec3::UnitY())) *
                   Quat(Eigen::AngleAxisd(roll, Vec3::UnitX()));
    return canonical(q);
}

Quat quat_from_axis_angle(const Vec3& axis, double angle) {
    return canonical(Quat(Eigen::AngleAxisd(angle, axis.normalized())));
}

}  // namespace otv
