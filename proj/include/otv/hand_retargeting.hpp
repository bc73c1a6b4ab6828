#pragma once

// Keypoint-vector retargeting of human hands onto robot hands and grippers:
//
//   min_q  sum_i |t_i - f_i(q)|^2 + beta |q - q_prev|^2
//
// t_i are the scaled wrist-local human vectors, f_i(q) the matching robot
// vectors expressed in the end-effector frame. Solved by projected
// Levenberg-Marquardt on the stacked residual.

#include "otv/kinematics.hpp"
#include "otv/operator_frame.hpp"
#include "otv/robot_profile.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace otv {

class MissingKeypoint : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct VectorDef {
    Keypoint human_from;
    Keypoint human_to;
    std::string robot_from;
    std::string robot_to;
};

using VectorSpec = std::vector<VectorDef>;

/// wrist->five tips, thumb->index, thumb->middle.
VectorSpec dexterous_spec(Side side);
/// thumb->index against gripper_upper->gripper_lower.
VectorSpec gripper_spec(Side side);
VectorSpec spec_for(const HandProfile& hand, Side side);

struct RetargetingConfig {
    double alpha = 1.1;
    double beta = 0.1;
    int max_iterations = 16;
    double step_tolerance = 1e-6;
    double damping = 1e-3;
    double step_clamp = 0.3;   // per-iteration infinity-norm bound on the update

    static RetargetingConfig for_hand(HandKind kind);
    void validate() const;
};

/// alpha * R_wrist^T (p_to - p_from) for each vector of the spec.
std::vector<Vec3> compute_human_vectors(const HandKeypoints& hand, const Pose& wrist, const VectorSpec& spec,
                                        double alpha);

/// The robot side of one hand: its independent dofs and the spec's frames.
class HandChain {
public:
    HandChain(const RobotModel& model, const HandProfile& hand, VectorSpec spec);

    const RobotModel& model() const noexcept { return *model_; }
    const VectorSpec& spec() const noexcept { return spec_; }
    const std::vector<int>& dofs() const noexcept { return dofs_; }
    int size() const noexcept { return static_cast<int>(dofs_.size()); }
    const Eigen::VectorXd& lower() const noexcept { return lower_; }
    const Eigen::VectorXd& upper() const noexcept { return upper_; }

    /// Robot vectors f_i(q_hand), end-effector frame.
    std::vector<Vec3> vectors(const Eigen::VectorXd& q_hand) const;
    /// Stacked 3N x n derivative of the robot vectors.
    Eigen::MatrixXd vector_jacobian(const Eigen::VectorXd& q_hand) const;

    Eigen::VectorXd gather(const JointVector& q) const;
    void scatter(const Eigen::VectorXd& q_hand, JointVector& q) const;

private:
    JointVector full(const Eigen::VectorXd& q_hand) const;

    const RobotModel* model_;
    VectorSpec spec_;
    std::vector<int> dofs_;
    int root_frame_;
    std::vector<std::pair<int, int>> frames_;
    Eigen::VectorXd lower_;
    Eigen::VectorXd upper_;
};

struct RetargetingProblem {
    const HandChain* chain = nullptr;
    std::vector<Vec3> targets;
    Eigen::VectorXd q_prev;
};

double objective(const Eigen::VectorXd& q, const RetargetingProblem& prob, const RetargetingConfig& cfg);

/// sqrt of the vector part of the objective.
double vector_residual(const Eigen::VectorXd& q, const RetargetingProblem& prob);

struct RetargetResult {
    Eigen::VectorXd q;
    int iterations = 0;
    double objective = 0.0;
    bool numerical_failure = false;   // q is q_prev
};

RetargetResult retarget_step(const RetargetingProblem& prob, const RetargetingConfig& cfg);

/// Folds retarget_step over a stream, threading q_prev from `q_initial`.
std::vector<Eigen::VectorXd> retarget_sequence(const HandChain& chain, const std::vector<HandKeypoints>& hands,
                                               const std::vector<Pose>& wrists, const RetargetingConfig& cfg,
                                               const Eigen::VectorXd& q_initial);

}  // namespace otv
