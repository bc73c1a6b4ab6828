#pragma once

// Forward kinematics, body-frame geometric Jacobians and manipulability.

#include "otv/robot_model.hpp"
#include "otv/se3.hpp"

#include <Eigen/Core>

#include <string_view>
#include <vector>

namespace otv {

/// 6 x n body-frame Jacobian; rows are (angular; linear).
using Jacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// q clamped to limits with every coupled joint overwritten by ratio * driver.
/// Sets *clamped when any entry had to be moved into its limits.
JointVector effective_configuration(const RobotModel& model, const JointVector& q, bool* clamped = nullptr);

/// World poses of every joint frame and child link for one configuration.
/// Built once and queried for many frames.
class KinematicState {
public:
    KinematicState(const RobotModel& model, const JointVector& q);

    const RobotModel& model() const noexcept { return *model_; }
    const JointVector& q() const noexcept { return q_; }
    bool clamped() const noexcept { return clamped_; }

    Pose frame_pose(int frame) const;
    Pose link_pose_of_joint(int joint) const { return links_[static_cast<std::size_t>(joint)]; }

    /// Body Jacobian of `frame` over all dofs. Coupled joints fold their
    /// motion into the driver column; driven columns are zero.
    Jacobian jacobian(int frame) const;

    /// World-aligned d(frame position)/dq over all dofs, 3 x dof.
    Eigen::Matrix<double, 3, Eigen::Dynamic> position_jacobian(int frame) const;

private:
    const RobotModel* model_;
    bool clamped_ = false;
    JointVector q_;
    std::vector<Pose> joint_frames_;   // after origin, before joint motion
    std::vector<Pose> links_;          // child link poses
};

Pose forward_kinematics(const RobotModel& model, const JointVector& q, std::string_view frame);
Jacobian jacobian(const RobotModel& model, const JointVector& q, std::string_view frame);

/// Columns of `j` restricted to `dofs`, in the given order.
Jacobian select_columns(const Jacobian& j, const std::vector<int>& dofs);

/// Independent dofs that move `frame`: actuated or passive joints on the
/// frame's chain, with coupled joints replaced by their drivers.
std::vector<int> chain_dofs(const RobotModel& model, std::string_view frame);

/// sqrt(det(J J^T)); rotation rows in rad, translation rows in m. Zero for
/// chains with fewer than six dofs.
double manipulability(const Eigen::Ref<const Eigen::MatrixXd>& j);

}  // namespace otv
