#pragma once

#include "test_support.hpp"

#include "otv/arm_control.hpp"
#include "otv/hand_retargeting.hpp"

#include <random>

namespace otv::testing {

/// Human keypoints whose scaled wrist-local vectors equal the robot hand's
/// vectors at q, held at an arbitrary wrist pose.
inline HandKeypoints keypoints_from_robot(const RobotModel& m, Side side, const JointVector& q, const Pose& wrist,
                                          double alpha) {
    const KinematicState ks(m, q);
    const std::string s = side_name(side);
    const Pose ee_inv = inverse(ks.frame_pose(m.frame_index(s + "_ee")));
    const auto local = [&](const std::string& name) {
        return (ee_inv * ks.frame_pose(m.frame_index(name))).translation;
    };
    HandKeypoints h;
    const bool gripper = m.find_frame(s + "_gripper_upper").has_value();
    const auto place = [&](Keypoint k, const Vec3& rel) { h[k] = wrist.transform_point(rel / alpha); };
    place(Keypoint::wrist, Vec3::Zero());
    if (gripper) {
        place(Keypoint::thumb_tip, local(s + "_gripper_upper"));
        place(Keypoint::index_tip, local(s + "_gripper_lower"));
        place(Keypoint::middle_tip, local(s + "_gripper_lower"));
        place(Keypoint::ring_tip, local(s + "_gripper_lower"));
        place(Keypoint::pinky_tip, local(s + "_gripper_lower"));
    } else {
        place(Keypoint::thumb_tip, local(s + "_thumb_tip"));
        place(Keypoint::index_tip, local(s + "_index_tip"));
        place(Keypoint::middle_tip, local(s + "_middle_tip"));
        place(Keypoint::ring_tip, local(s + "_ring_tip"));
        place(Keypoint::pinky_tip, local(s + "_pinky_tip"));
    }
    return h;
}

/// Random hand configuration inside the limits of `chain`.
inline Eigen::VectorXd random_hand(const HandChain& chain, std::mt19937_64& rng, double margin = 1e-3) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd q(chain.size());
    for (int i = 0; i < chain.size(); ++i) {
        const double lo = chain.lower()[i] + margin;
        const double hi = chain.upper()[i] - margin;
        q[i] = lo + u(rng) * (hi - lo);
    }
    return q;
}

/// Arm configuration drawn uniformly from the chain's limits, shrunk by `margin`.
inline JointVector random_arm(const RobotModel& m, const ArmChain& chain, const JointVector& base,
                              std::mt19937_64& rng, double margin) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    JointVector q = base;
    for (int d : chain.dofs) {
        const double lo = m.lower_limits()[d] + margin;
        const double hi = m.upper_limits()[d] - margin;
        q[d] = lo + u(rng) * (hi - lo);
    }
    return q;
}

}  // namespace otv::testing
