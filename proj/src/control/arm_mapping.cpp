#include "otv/arm_control.hpp"

#include <algorithm>
#include <cmath>

namespace otv {

bool HandKeypoints::plausible() const {
    for (const Vec3& p : points)
        if (!p.allFinite()) return false;
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j)
            if ((points[i] - points[j]).norm() >= 0.4) return false;
    return true;
}

double heading(const Quat& r) {
    const Vec3 forward = r * Vec3::UnitX();
    return std::atan2(forward.y(), forward.x());
}

CalibrationState calibrate(const OperatorFrame& frame) {
    if (!frame.has(valid::all)) throw MissingComponent("calibration needs head, both wrists and both hands");
    CalibrationState cal;
    cal.head = frame.head;
    cal.alignment = quat_from_axis_angle(Vec3::UnitZ(), -heading(frame.head.rotation));
    return cal;
}

ArmTargets map_operator_to_targets(const OperatorFrame& frame, const CalibrationState& cal,
                                   const Pose& head_pose_robot, const Eigen::AlignedBox3d& reach_box) {
    ArmTargets out;
    if (!frame.has(valid::head)) return out;
    for (Side s : kSides) {
        if (!frame.has(wrist_bit(side_index(s)))) continue;
        const Pose& wrist = frame.wrists[side_index(s)];
        EndEffectorTarget t;
        t.side = s;
        const Vec3 raw = head_pose_robot.translation + cal.alignment * (wrist.translation - frame.head.translation);
        t.position = raw.cwiseMax(reach_box.min()).cwiseMin(reach_box.max());
        t.clamped = t.position != raw;
        t.orientation = canonical(cal.alignment * wrist.rotation);
        (s == Side::left ? out.left : out.right) = t;
    }
    return out;
}

PoseFilter::PoseFilter(double lambda) : lambda_(lambda) {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("filter lambda must lie in (0, 1]");
}

Pose PoseFilter::filter(const Pose& target) {
    if (!last_) {
        last_ = target;
        return target;
    }
    try {
        last_ = interpolate(*last_, target, lambda_);
    } catch (const AngleNearPi&) {
        // Half-turn flips have no unique geodesic; follow the target.
        last_ = target;
    }
    return *last_;
}

NeckAngles zyx_angles(const Quat& r) {
    const Mat3 m = r.toRotationMatrix();
    NeckAngles a;
    a.yaw = std::atan2(m(1, 0), m(0, 0));
    a.pitch = std::atan2(-m(2, 0), std::hypot(m(0, 0), m(1, 0)));
    a.roll = std::atan2(m(2, 1), m(2, 2));
    return a;
}

JointVector map_head(const Pose& head, const CalibrationState& cal, const RobotModel& model,
                     const NeckProfile& neck, JointVector q) {
    const NeckAngles a = zyx_angles(cal.head.rotation.conjugate() * head.rotation);
    const auto set = [&](int dof, double value) {
        if (dof < 0) return;
        q[dof] = std::clamp(value, model.lower_limits()[dof], model.upper_limits()[dof]);
    };
    set(neck.yaw, a.yaw);
    set(neck.pitch, a.pitch);
    set(neck.roll, a.roll);
    return q;
}

}  // namespace otv
