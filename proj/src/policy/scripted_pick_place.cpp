#include "otv/scripted_pick_place.hpp"

#include <algorithm>
#include <cmath>

namespace otv {

ScriptedPickPlace::ScriptedPickPlace(const RobotModel& model, const RobotProfile& profile, PickPlaceConfig cfg)
    : model_(&model), profile_(profile), cfg_(std::move(cfg)) {
    cfg_.ik.validate();
    if (cfg_.chunk_size < 1 || !(cfg_.rate_hz > 0.0) || !(cfg_.joint_speed > 0.0) || cfg_.grip_ticks < 1)
        throw std::invalid_argument("pick-place config needs positive chunk size, rate, speed and grip ticks");
    const KinematicState home(model, profile.home);
    for (Side s : kSides) {
        const std::size_t i = side_index(s);
        chains_[i] = ArmChain::of(model, profile.arm(s));
        const Pose ee = home.frame_pose(chains_[i].frame);
        palm_in_ee_[i] = inverse(ee) * home.frame_pose(model.frame_index(profile.hand(s).palm_frame));
        ee_rotation_[i] = ee.rotation;
    }
}

JointVector ScriptedPickPlace::with_hand(JointVector q, Side side, double closure) const {
    const HandProfile& hand = profile_.hand(side);
    for (std::size_t i = 0; i < hand.dofs.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        q[hand.dofs[i]] = hand.open[k] + closure * (hand.closed[k] - hand.open[k]);
    }
    return effective_configuration(*model_, q);
}

JointVector ScriptedPickPlace::solve(Side side, const Vec3& palm_position, const JointVector& seed) const {
    const std::size_t i = side_index(side);
    const Quat r = ee_rotation_[i];
    const Pose target(r, palm_position - r * palm_in_ee_[i].translation);
    const ArmSolution sol = solve_arm(*model_, seed, chains_[i], target, cfg_.ik, profile_.reference);
    if (!sol.converged)
        throw NoTarget(std::string("no ") + side_name(side) + " arm posture puts the palm at (" +
                       std::to_string(palm_position.x()) + ", " + std::to_string(palm_position.y()) + ", " +
                       std::to_string(palm_position.z()) + ")");
    return sol.q;
}

void ScriptedPickPlace::ramp_to(const JointVector& goal) {
    const JointVector from = plan_.back();
    const double per_tick = cfg_.joint_speed / cfg_.rate_hz;
    const double span = (goal - from).cwiseAbs().maxCoeff();
    const int ticks = std::max(cfg_.min_ramp_ticks, static_cast<int>(std::ceil(span / per_tick)));
    for (int t = 1; t < ticks; ++t) plan_.push_back(from + (goal - from) * (static_cast<double>(t) / ticks));
    plan_.push_back(goal);
}

void ScriptedPickPlace::start(const SimObservation& obs, std::int64_t tick) {
    started_ = true;
    origin_ = tick;
    plan_.assign(1, obs.q_measured);
    planned_object_.assign(obs.objects.size(), false);
}

JointVector ScriptedPickPlace::looking_down(JointVector q) const {
    q[profile_.neck.yaw] = 0.0;
    if (profile_.neck.roll >= 0) q[profile_.neck.roll] = 0.0;
    q[profile_.neck.pitch] = cfg_.look_down;
    return effective_configuration(*model_, q);
}

void ScriptedPickPlace::plan_object(const SimObservation& obs, std::size_t index) {
    const SceneObject& obj = obs.objects[index];
    const auto dest_it = std::find_if(obs.objects.begin(), obs.objects.end(),
                                      [&](const SceneObject& o) { return o.name == obj.target; });
    if (dest_it == obs.objects.end()) throw NoTarget("destination '" + obj.target + "' of '" + obj.name + "' is missing");
    const SceneObject& dest = *dest_it;

    // The arm whose palm starts nearer the destination carries the object.
    const KinematicState home(*model_, profile_.home);
    Side side = Side::left;
    double best = 1e300;
    for (Side s : kSides) {
        const Vec3 palm = home.frame_pose(model_->frame_index(profile_.hand(s).palm_frame)).translation;
        const double d = (palm - dest.pose.translation).head<2>().norm();
        if (d < best) {
            best = d;
            side = s;
        }
    }

    const Vec3 p = obj.pose.translation;
    const double place_z = dest.top() + obj.half_height() + cfg_.place_clearance;
    const Vec3 place(dest.pose.translation.x(), dest.pose.translation.y(), place_z);
    const double carry_z = std::max(p.z() + cfg_.lift_height, place_z + cfg_.approach_height);

    const Vec3 up(0, 0, 1);
    JointVector q = solve(side, p + cfg_.approach_height * up, looking_down(plan_.back()));
    ramp_to(with_hand(q, side, 0.0));
    q = solve(side, p, plan_.back());
    ramp_to(with_hand(q, side, 0.0));

    events_.push_back({PlanEvent::Kind::grasp, origin_ + static_cast<std::int64_t>(plan_.size()) - 1, index, side});
    for (int t = 1; t <= cfg_.grip_ticks; ++t)
        plan_.push_back(with_hand(plan_.back(), side, static_cast<double>(t) / cfg_.grip_ticks));

    for (const Vec3& palm : {Vec3(p.x(), p.y(), p.z() + cfg_.lift_height), Vec3(place.x(), place.y(), carry_z), place}) {
        q = solve(side, palm, plan_.back());
        ramp_to(with_hand(q, side, 1.0));
    }

    events_.push_back({PlanEvent::Kind::release, origin_ + static_cast<std::int64_t>(plan_.size()) - 1, index, side});
    for (int t = 1; t <= cfg_.grip_ticks; ++t)
        plan_.push_back(with_hand(plan_.back(), side, 1.0 - static_cast<double>(t) / cfg_.grip_ticks));

    q = solve(side, place + cfg_.approach_height * up, plan_.back());
    ramp_to(with_hand(q, side, 0.0));
    planned_object_[index] = true;
}

void ScriptedPickPlace::plan_gesture() {
    JointVector q = plan_.back();
    for (int d : profile_.end_gesture_dofs) q[d] = profile_.end_gesture[d];
    for (Side s : kSides) q = with_hand(q, s, 0.0);
    ramp_to(q);
    events_.push_back({PlanEvent::Kind::gesture, origin_ + static_cast<std::int64_t>(plan_.size()) - 1, 0, Side::left});
    gesture_planned_ = true;
}

void ScriptedPickPlace::extend(const SimObservation& obs) {
    const auto pending = [&](std::size_t i) {
        const SceneObject& o = obs.objects[i];
        if (!o.graspable || o.target.empty() || planned_object_[i] || obs.attached[i]) return false;
        for (const SceneObject& d : obs.objects)
            if (d.name == o.target && d.covers(o.pose.translation.x(), o.pose.translation.y())) return false;
        return true;
    };
    std::size_t next = 0;
    while (next < obs.objects.size() && !pending(next)) ++next;
    if (next < obs.objects.size()) plan_object(obs, next);
    else plan_gesture();
}

ActionChunk ScriptedPickPlace::next_chunk(const SimObservation& obs, std::int64_t tick) {
    if (obs.q_measured.size() != model_->dof()) throw DimensionMismatch("observation does not match the model");
    if (!started_) start(obs, tick);
    if (planned_object_.size() != obs.objects.size()) throw NoTarget("scene changed under the running plan");
    while (!gesture_planned_ && origin_ + static_cast<std::int64_t>(plan_.size()) < tick + cfg_.chunk_size) extend(obs);

    ActionChunk c;
    c.start_tick = tick;
    c.actions.resize(cfg_.chunk_size, static_cast<Eigen::Index>(model_->action_layout().size()));
    for (int r = 0; r < cfg_.chunk_size; ++r) c.actions.row(r) = to_action(*model_, planned(tick + r)).transpose();
    return c;
}

JointVector ScriptedPickPlace::planned(std::int64_t tick) const {
    if (plan_.empty()) throw std::logic_error("plan not started");
    const std::int64_t i = std::clamp<std::int64_t>(tick - origin_, 0, static_cast<std::int64_t>(plan_.size()) - 1);
    return plan_[static_cast<std::size_t>(i)];
}

}  // namespace otv
