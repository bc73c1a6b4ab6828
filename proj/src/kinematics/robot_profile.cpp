#include "otv/robot_profile.hpp"

#include <algorithm>
#include <numbers>

namespace otv {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool descends_from(const RobotModel& model, int joint, int ancestor) {
    for (int cur = model.joints()[static_cast<std::size_t>(joint)].parent_joint; cur >= 0;
         cur = model.joints()[static_cast<std::size_t>(cur)].parent_joint)
        if (cur == ancestor) return true;
    return false;
}

int optional_dof(const RobotModel& model, std::string_view name) {
    const auto j = model.find_joint(name);
    if (!j) return -1;
    return model.joints()[static_cast<std::size_t>(*j)].dof;
}

}  // namespace

const char* side_name(Side s) { return s == Side::left ? "left" : "right"; }

double HandProfile::closure(const JointVector& q) const {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < dofs.size(); ++i) {
        const double span = closed[static_cast<Eigen::Index>(i)] - open[static_cast<Eigen::Index>(i)];
        if (span == 0.0) continue;
        sum += std::clamp((q[dofs[i]] - open[static_cast<Eigen::Index>(i)]) / span, 0.0, 1.0);
        ++count;
    }
    return count == 0 ? 0.0 : sum / count;
}

RobotProfile derive_profile(const RobotModel& model) {
    RobotProfile p;
    p.neck.yaw = optional_dof(model, "neck_yaw");
    p.neck.pitch = optional_dof(model, "neck_pitch");
    p.neck.roll = optional_dof(model, "neck_roll");
    if (p.neck.yaw < 0 || p.neck.pitch < 0) throw ModelError("model lacks neck_yaw / neck_pitch joints");
    model.frame_index(p.head_frame);
    model.frame_index(p.camera_frame);

    const auto& layout = model.action_layout();
    for (Side s : kSides) {
        const std::string prefix = side_name(s);
        ArmProfile& arm = p.arms[side_index(s)];
        arm.ee_frame = prefix + "_ee";
        arm.dofs = chain_dofs(model, arm.ee_frame);

        HandProfile& hand = p.hands[side_index(s)];
        hand.root_frame = arm.ee_frame;
        hand.palm_frame = prefix + "_palm";
        model.frame_index(hand.palm_frame);
        if (model.find_frame(prefix + "_gripper_upper")) hand.kind = HandKind::gripper;
        else if (model.find_frame(prefix + "_thumb_tip")) hand.kind = HandKind::dexterous;
        else throw ModelError("model has neither fingertip nor gripper frames for the " + prefix + " hand");

        const int root_joint = model.frames()[static_cast<std::size_t>(model.frame_index(arm.ee_frame))].parent_joint;
        for (int d : layout) {
            const int ji = *model.find_joint(model.dof_joint(d).name);
            if (descends_from(model, ji, root_joint)) hand.dofs.push_back(d);
        }
        hand.open.resize(static_cast<Eigen::Index>(hand.dofs.size()));
        hand.closed.resize(static_cast<Eigen::Index>(hand.dofs.size()));
        for (std::size_t i = 0; i < hand.dofs.size(); ++i) {
            const Joint& j = model.dof_joint(hand.dofs[i]);
            // Fingers open at their lower limit; jaws open at their upper one.
            const bool gripper = hand.kind == HandKind::gripper;
            hand.open[static_cast<Eigen::Index>(i)] = gripper ? j.upper : j.lower;
            hand.closed[static_cast<Eigen::Index>(i)] = gripper ? j.lower : j.upper;
        }
    }

    p.reach_box = Eigen::AlignedBox3d(Vec3(0.0, -0.6, -0.25), Vec3(0.6, 0.6, 0.7));

    p.home = JointVector::Zero(model.dof());
    p.end_gesture = JointVector::Zero(model.dof());
    for (int d = 0; d < model.dof(); ++d) {
        const std::string& name = model.dof_joint(d).name;
        if (ends_with(name, "_elbow")) p.home[d] = -std::numbers::pi / 2.0;
        if (ends_with(name, "_shoulder_pitch")) p.end_gesture[d] = -2.5;
        if (ends_with(name, "_elbow")) p.end_gesture[d] = -0.4;
    }
    for (Side s : kSides) {
        const HandProfile& hand = p.hand(s);
        for (std::size_t i = 0; i < hand.dofs.size(); ++i) {
            p.home[hand.dofs[i]] = hand.open[static_cast<Eigen::Index>(i)];
            p.end_gesture[hand.dofs[i]] = hand.open[static_cast<Eigen::Index>(i)];
        }
        for (int d : p.arm(s).dofs) p.end_gesture_dofs.push_back(d);
    }
    p.home = effective_configuration(model, p.home);
    p.end_gesture = effective_configuration(model, p.end_gesture);
    p.reference = effective_configuration(model, 0.5 * (model.lower_limits() + model.upper_limits()));
    return p;
}

Eigen::VectorXd to_action(const RobotModel& model, const JointVector& q) {
    const auto& layout = model.action_layout();
    Eigen::VectorXd a(static_cast<Eigen::Index>(layout.size()));
    for (std::size_t i = 0; i < layout.size(); ++i) a[static_cast<Eigen::Index>(i)] = q[layout[i]];
    return a;
}

JointVector from_action(const RobotModel& model, const Eigen::VectorXd& action, const JointVector& base) {
    const auto& layout = model.action_layout();
    if (action.size() != static_cast<Eigen::Index>(layout.size()))
        throw std::invalid_argument("action length does not match the model's action layout");
    JointVector q = base;
    for (std::size_t i = 0; i < layout.size(); ++i) q[layout[i]] = action[static_cast<Eigen::Index>(i)];
    return effective_configuration(model, q);
}

}  // namespace otv
