#pragma once

// Operator head/wrist poses -> neck angles and arm joint targets.

#include "otv/kinematics.hpp"
#include "otv/operator_frame.hpp"
#include "otv/robot_profile.hpp"

#include <optional>
#include <stdexcept>
#include <string>

namespace otv {

class MissingComponent : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CalibrationState {
    Pose head;        // operator head at calibration, operator world
    Quat alignment;   // operator world -> robot base, a pure yaw
};

/// Requires every component of the frame to be valid.
CalibrationState calibrate(const OperatorFrame& frame);

/// Heading of the +x axis of `r` projected on the horizontal plane.
double heading(const Quat& r);

struct EndEffectorTarget {
    Side side = Side::left;
    Vec3 position = Vec3::Zero();   // robot base frame
    Quat orientation = Quat::Identity();
    bool clamped = false;           // position was pulled into the reach box

    Pose pose() const { return {orientation, position}; }
};

struct ArmTargets {
    std::optional<EndEffectorTarget> left;
    std::optional<EndEffectorTarget> right;

    const std::optional<EndEffectorTarget>& operator[](Side s) const { return s == Side::left ? left : right; }
};

/// Head-relative wrist positions reproduced around the robot head, absolute
/// wrist orientations carried over through the yaw alignment. Sides with an
/// invalid wrist or head are omitted.
ArmTargets map_operator_to_targets(const OperatorFrame& frame, const CalibrationState& cal,
                                   const Pose& head_pose_robot, const Eigen::AlignedBox3d& reach_box);

/// SE(3) exponential smoothing: out = interpolate(prev, target, lambda).
class PoseFilter {
public:
    explicit PoseFilter(double lambda = 0.6);

    Pose filter(const Pose& target);
    void reset() { last_.reset(); }
    double lambda() const noexcept { return lambda_; }
    const std::optional<Pose>& last() const noexcept { return last_; }

private:
    double lambda_;
    std::optional<Pose> last_;
};

struct IkConfig {
    double damping = 1e-2;
    double step_clamp = 0.2;
    double gain = 1.0;
    int max_iterations = 3;
    double position_tolerance = 1e-4;
    double rotation_tolerance = 1e-3;
    double manipulability_threshold = 1e-3;
    double nullspace_gain = 0.1;

    void validate() const;
};

/// One controlled chain: an end-effector frame and the dofs that move it.
struct ArmChain {
    int frame = -1;
    std::vector<int> dofs;

    static ArmChain of(const RobotModel& model, const ArmProfile& arm);
};

struct PoseError {
    double position = 0.0;   // m
    double rotation = 0.0;   // rad
};

PoseError pose_error(const Pose& current, const Pose& target);

/// Damped least-squares step towards `target`, full-dof, zero off the chain.
JointVector clik_step(const RobotModel& model, const JointVector& q, const ArmChain& chain, const Pose& target,
                      const IkConfig& cfg);

/// Pull towards q_ref projected onto the null space of `j` (chain columns),
/// active only while manipulability(j) < threshold. Full-dof result.
JointVector nullspace_correction(const RobotModel& model, const JointVector& q, const JointVector& q_ref,
                                 const ArmChain& chain, const Jacobian& j, const IkConfig& cfg);

struct ArmSolution {
    JointVector q;
    bool converged = false;
    int iterations = 0;
    PoseError error;
    int nullspace_steps = 0;
    PoseError worst_nullspace_penalty;   // largest error increase caused by the nullspace term
};

ArmSolution solve_arm(const RobotModel& model, const JointVector& q0, const ArmChain& chain, const Pose& target,
                      const IkConfig& cfg, const JointVector& q_ref);

struct NeckAngles {
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;
};

/// Intrinsic Z-Y-X angles with R = Rz(yaw) * Ry(pitch) * Rx(roll).
NeckAngles zyx_angles(const Quat& r);

/// q with its neck dofs set from the head orientation relative to
/// calibration, clamped to the joint limits. A neck without a roll joint
/// drops the roll angle.
JointVector map_head(const Pose& head, const CalibrationState& cal, const RobotModel& model,
                     const NeckProfile& neck, JointVector q);

}  // namespace otv
