#pragma once

// Scripted stand-in for a learned policy: sorts every graspable object with a
// destination ("bin") into that destination, one at a time, then raises the
// arms into the ending gesture.
//
// Per object the palm visits pre-grasp (above), grasp (object centre), the
// hand closes, lift, over the destination, place, the hand opens, retreat.
// Waypoints are solved offline with solve_arm and joined by joint-space
// ramps, so the plan is a fixed per-tick trajectory sliced into chunks.

#include "otv/arm_control.hpp"
#include "otv/policy.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace otv {

class NoTarget : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PickPlaceConfig {
    int chunk_size = 60;
    double rate_hz = 60.0;
    double joint_speed = 1.5;      // rad/s (m/s for prismatic) along every ramp
    int min_ramp_ticks = 6;
    int grip_ticks = 30;
    double approach_height = 0.10;
    double lift_height = 0.15;
    double place_clearance = 0.01;   // object bottom above the destination top
    double look_down = 0.85;         // neck pitch while working
    IkConfig ik = [] {
        IkConfig c;
        c.max_iterations = 300;
        return c;
    }();
};

struct PlanEvent {
    enum class Kind { grasp, release, gesture };
    Kind kind;
    std::int64_t tick;       // first tick of the hand closing/opening or of the gesture hold
    std::size_t object;      // observation index, unused for gesture
    Side side;
};

class ScriptedPickPlace {
public:
    ScriptedPickPlace(const RobotModel& model, const RobotProfile& profile, PickPlaceConfig cfg = {});

    /// Rows [tick, tick + chunk_size) of the plan, extending it from `obs`
    /// as needed. NoTarget when a destination is missing or a waypoint
    /// cannot be reached.
    ActionChunk next_chunk(const SimObservation& obs, std::int64_t tick);

    /// Stored plan row as a full-dof posture.
    JointVector planned(std::int64_t tick) const;
    const std::vector<PlanEvent>& events() const noexcept { return events_; }
    /// All objects planned and the gesture appended.
    bool complete() const noexcept { return gesture_planned_; }
    const PickPlaceConfig& config() const noexcept { return cfg_; }

private:
    void start(const SimObservation& obs, std::int64_t tick);
    void extend(const SimObservation& obs);
    void plan_object(const SimObservation& obs, std::size_t index);
    void plan_gesture();
    void ramp_to(const JointVector& goal);
    JointVector solve(Side side, const Vec3& palm_position, const JointVector& seed) const;
    JointVector with_hand(JointVector q, Side side, double closure) const;
    JointVector looking_down(JointVector q) const;

    const RobotModel* model_;
    RobotProfile profile_;
    PickPlaceConfig cfg_;
    std::array<ArmChain, 2> chains_;
    std::array<Pose, 2> palm_in_ee_;
    std::array<Quat, 2> ee_rotation_;

    bool started_ = false;
    bool gesture_planned_ = false;
    std::int64_t origin_ = 0;
    std::vector<JointVector> plan_;   // full-dof postures per tick from origin_
    std::vector<bool> planned_object_;
    std::vector<PlanEvent> events_;
};

}  // namespace otv
