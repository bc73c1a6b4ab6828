#include "otv/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace otv {

namespace {

Pose joint_motion(const Joint& j, double value) {
    switch (j.type) {
        case JointType::revolute:
            return {Quat(Eigen::AngleAxisd(value, j.axis)), Vec3::Zero()};
        case JointType::prismatic:
            return {Quat::Identity(), j.axis * value};
        case JointType::fixed:
            break;
    }
    return {};
}

}  // namespace

JointVector effective_configuration(const RobotModel& model, const JointVector& q, bool* clamped) {
    if (q.size() != model.dof()) throw std::invalid_argument("joint vector length does not match model dof");
    JointVector out = q.cwiseMax(model.lower_limits()).cwiseMin(model.upper_limits());
    bool moved = false;
    for (int d = 0; d < model.dof(); ++d) {
        if (model.is_coupled(d)) continue;
        if (!(out[d] == q[d])) moved = true;
    }
    for (const auto& c : model.couplings()) {
        const double v = c.ratio * out[c.driver_dof];
        out[c.driven_dof] = std::clamp(v, model.lower_limits()[c.driven_dof], model.upper_limits()[c.driven_dof]);
    }
    if (clamped) *clamped = moved;
    return out;
}

KinematicState::KinematicState(const RobotModel& model, const JointVector& q)
    : model_(&model), q_(effective_configuration(model, q, &clamped_)) {
    const auto& joints = model.joints();
    joint_frames_.resize(joints.size());
    links_.resize(joints.size());
    for (int ji : model.topological_order()) {
        const Joint& j = joints[static_cast<std::size_t>(ji)];
        const Pose parent = j.parent_joint < 0 ? Pose::identity() : links_[static_cast<std::size_t>(j.parent_joint)];
        joint_frames_[static_cast<std::size_t>(ji)] = compose(parent, j.origin);
        links_[static_cast<std::size_t>(ji)] =
            j.dof < 0 ? joint_frames_[static_cast<std::size_t>(ji)]
                      : compose(joint_frames_[static_cast<std::size_t>(ji)], joint_motion(j, q_[j.dof]));
    }
}

Pose KinematicState::frame_pose(int frame) const {
    const Frame& f = model_->frames().at(static_cast<std::size_t>(frame));
    if (f.parent_joint < 0) return f.offset;
    return compose(links_[static_cast<std::size_t>(f.parent_joint)], f.offset);
}

Jacobian KinematicState::jacobian(int frame) const {
    const Pose tf = frame_pose(frame);
    const Mat3 rt = tf.rotation_matrix().transpose();
    Jacobian jac = Jacobian::Zero(6, model_->dof());
    const auto position_cols = position_jacobian(frame);
    for (int ji : model_->frame_chain(frame)) {
        const Joint& j = model_->joints()[static_cast<std::size_t>(ji)];
        if (j.dof < 0) continue;
        if (j.type == JointType::revolute) {
            const Vec3 w = joint_frames_[static_cast<std::size_t>(ji)].rotation * j.axis;
            int col = j.dof;
            double scale = 1.0;
            for (const auto& c : model_->couplings())
                if (c.driven_dof == j.dof) {
                    col = c.driver_dof;
                    scale = c.ratio;
                }
            jac.block<3, 1>(0, col) += scale * (rt * w);
        }
    }
    jac.bottomRows<3>() = rt * position_cols;
    return jac;
}

Eigen::Matrix<double, 3, Eigen::Dynamic> KinematicState::position_jacobian(int frame) const {
    const Vec3 p = frame_pose(frame).translation;
    Eigen::Matrix<double, 3, Eigen::Dynamic> jac = Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, model_->dof());
    for (int ji : model_->frame_chain(frame)) {
        const Joint& j = model_->joints()[static_cast<std::size_t>(ji)];
        if (j.dof < 0) continue;
        const Pose& jf = joint_frames_[static_cast<std::size_t>(ji)];
        const Vec3 w = jf.rotation * j.axis;
        Vec3 col = j.type == JointType::revolute ? Vec3(w.cross(p - jf.translation)) : w;
        int target = j.dof;
        for (const auto& c : model_->couplings())
            if (c.driven_dof == j.dof) {
                target = c.driver_dof;
                col *= c.ratio;
            }
        jac.col(target) += col;
    }
    return jac;
}

Pose forward_kinematics(const RobotModel& model, const JointVector& q, std::string_view frame) {
    const int f = model.frame_index(frame);
    return KinematicState(model, q).frame_pose(f);
}

Jacobian jacobian(const RobotModel& model, const JointVector& q, std::string_view frame) {
    const int f = model.frame_index(frame);
    return KinematicState(model, q).jacobian(f);
}

Jacobian select_columns(const Jacobian& j, const std::vector<int>& dofs) {
    Jacobian out(6, static_cast<Eigen::Index>(dofs.size()));
    for (std::size_t i = 0; i < dofs.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = j.col(dofs[i]);
    return out;
}

std::vector<int> chain_dofs(const RobotModel& model, std::string_view frame) {
    const int f = model.frame_index(frame);
    std::vector<int> out;
    for (int ji : model.frame_chain(f)) {
        const Joint& j = model.joints()[static_cast<std::size_t>(ji)];
        if (j.dof < 0) continue;
        int d = j.dof;
        for (const auto& c : model.couplings())
            if (c.driven_dof == d) d = c.driver_dof;
        if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
    }
    return out;
}

double manipulability(const Eigen::Ref<const Eigen::MatrixXd>& j) {
    if (j.size() == 0) return 0.0;
    const Eigen::MatrixXd gram = j * j.transpose();
    const double det = gram.determinant();
    return det > 0.0 ? std::sqrt(det) : 0.0;
}

}  // namespace otv
