#include "otv/sim_world.hpp"

#include <cmath>
#include <limits>

namespace otv {

namespace {

void follow_palms(SimState& s) {
    bool any = false;
    for (const auto& a : s.attachments) any = any || a.has_value();
    if (!any) return;
    const KinematicState ks(*s.model, s.q_measured);
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
        if (!s.attachments[i]) continue;
        const Pose palm = ks.frame_pose(s.model->frame_index(s.profile.hand(s.attachments[i]->side).palm_frame));
        s.objects[i].pose = palm * s.attachments[i]->relative;
    }
}

void settle(SimState& s, std::size_t index) {
    SceneObject& obj = s.objects[index];
    const double x = obj.pose.translation.x();
    const double y = obj.pose.translation.y();
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
        const SceneObject& support = s.objects[i];
        if (i == index || support.graspable || s.attachments[i]) continue;
        if (!support.covers(x, y)) continue;
        const double top = support.top();
        if (top <= obj.pose.translation.z() && top > best) best = top;
    }
    if (std::isfinite(best)) obj.pose.translation.z() = best + obj.half_height();
}

}  // namespace

Pose SimState::palm_pose(Side s) const { return forward_kinematics(*model, q_measured, profile.hand(s).palm_frame); }

std::optional<std::size_t> SimState::held_by(Side s) const {
    for (std::size_t i = 0; i < attachments.size(); ++i)
        if (attachments[i] && attachments[i]->side == s) return i;
    return std::nullopt;
}

void step_sim(SimState& s, const Eigen::VectorXd& command, double dt, const SimConfig& cfg) {
    const RobotModel& model = *s.model;
    const auto& layout = model.action_layout();
    if (command.size() != static_cast<Eigen::Index>(layout.size()))
        throw DimensionMismatch("command has " + std::to_string(command.size()) + " entries, layout has " +
                                std::to_string(layout.size()));
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const double v = command[static_cast<Eigen::Index>(i)];
        if (std::isfinite(v)) s.q_target[layout[i]] = v;
    }
    s.q_target = effective_configuration(model, s.q_target);

    const double max_step = cfg.v_max * dt;
    JointVector q = s.q_measured;
    for (int d = 0; d < model.dof(); ++d) {
        if (model.is_coupled(d)) continue;
        const double delta = s.q_target[d] - q[d];
        if (std::abs(delta) <= max_step + 1e-12) q[d] = s.q_target[d];
        else q[d] += std::copysign(max_step, delta);
    }
    s.q_measured = effective_configuration(model, q);
    ++s.tick;
    follow_palms(s);
}

void update_grasp(SimState& s, const SimConfig& cfg) {
    for (Side side : kSides) {
        const double closure = s.profile.hand(side).closure(s.q_measured);
        if (auto held = s.held_by(side)) {
            if (closure < cfg.c_release) {
                s.attachments[*held].reset();
                settle(s, *held);
            }
            continue;
        }
        if (!(closure > cfg.c_grasp)) continue;
        const Pose palm = s.palm_pose(side);
        std::optional<std::size_t> nearest;
        double nearest_d = cfg.r_grasp;
        for (std::size_t i = 0; i < s.objects.size(); ++i) {
            if (!s.objects[i].graspable || s.attachments[i]) continue;
            const double d = (s.objects[i].pose.translation - palm.translation).norm();
            if (d <= nearest_d) {
                nearest = i;
                nearest_d = d;
            }
        }
        if (nearest) s.attachments[*nearest] = Attachment{side, inverse(palm) * s.objects[*nearest].pose};
    }
}

SimObservation observe(const SimState& s) {
    SimObservation o;
    o.tick = s.tick;
    o.q_measured = s.q_measured;
    o.objects = s.objects;
    o.attached.reserve(s.attachments.size());
    for (const auto& a : s.attachments) o.attached.push_back(a.has_value());
    return o;
}

}  // namespace otv
