#pragma once

// Semantic roles of a parsed model: which dofs form the neck, each arm and
// each hand, plus the reference postures the controllers use.
//
// Roles come from naming conventions of the bundled models:
//   neck_yaw / neck_pitch / neck_roll, <side>_ee end-effector frames,
//   <side>_palm grasp frames, <side>_<finger>_tip fingertip frames or
//   <side>_gripper_upper / <side>_gripper_lower jaw frames, and head / camera.

#include "otv/kinematics.hpp"
#include "otv/robot_model.hpp"

#include <Eigen/Geometry>

#include <array>
#include <string>
#include <vector>

namespace otv {

enum class Side { left = 0, right = 1 };
inline constexpr std::array<Side, 2> kSides{Side::left, Side::right};
const char* side_name(Side s);
inline std::size_t side_index(Side s) { return static_cast<std::size_t>(s); }

enum class HandKind { dexterous, gripper };

struct ArmProfile {
    std::string ee_frame;
    std::vector<int> dofs;   // shoulder to wrist
};

struct HandProfile {
    HandKind kind = HandKind::dexterous;
    std::string root_frame;   // wrist-local frame the retargeting vectors are expressed in
    std::string palm_frame;   // grasp reference point
    std::vector<int> dofs;    // independent hand dofs, action-layout order
    Eigen::VectorXd open;     // per hand dof
    Eigen::VectorXd closed;

    /// Mean normalized closure in [0, 1] over the hand dofs of q.
    double closure(const JointVector& q) const;
};

struct NeckProfile {
    int yaw = -1;
    int pitch = -1;
    int roll = -1;   // -1 on the two-axis gimbal
};

struct RobotProfile {
    std::array<ArmProfile, 2> arms;
    std::array<HandProfile, 2> hands;
    NeckProfile neck;
    std::string head_frame = "head";
    std::string camera_frame = "camera";
    Eigen::AlignedBox3d reach_box;   // robot base frame
    JointVector home;                // initial / neutral posture
    JointVector reference;           // mid-range posture for nullspace pulls
    JointVector end_gesture;         // arms-raised completion posture
    std::vector<int> end_gesture_dofs;

    const ArmProfile& arm(Side s) const { return arms[side_index(s)]; }
    const HandProfile& hand(Side s) const { return hands[side_index(s)]; }
};

/// Throws ModelError when a required role is missing.
RobotProfile derive_profile(const RobotModel& model);

/// Full-dof vector -> command vector in action-layout order, and back.
Eigen::VectorXd to_action(const RobotModel& model, const JointVector& q);
JointVector from_action(const RobotModel& model, const Eigen::VectorXd& action, const JointVector& base);

}  // namespace otv
