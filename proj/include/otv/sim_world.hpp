#pragma once

// Kinematic stand-in for the robot and its tabletop scene. Joints chase
// their commanded targets under a velocity limit; grasping is reduced to a
// closure threshold plus a distance test against the palm frame, after which
// the object rides rigidly with the hand until the hand opens again.

#include "otv/robot_profile.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace otv {

class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class BadSpec : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Shape : std::uint8_t { box = 0, cylinder = 1 };

struct SceneObject {
    std::uint32_t id = 0;
    std::string name;
    std::string role;     // "can", "bin", "table", ... free-form
    std::string target;   // destination bin name for graspable objects
    Shape shape = Shape::box;
    Vec3 dims = Vec3::Ones();   // box: full extents; cylinder: diameter x, diameter y, height
    Pose pose;
    std::array<std::uint8_t, 4> color{200, 200, 200, 255};
    bool graspable = false;

    /// Half extent of the object along world z in its current pose.
    double half_height() const;
    /// True when the world xy point lies over the object's footprint.
    bool covers(double x, double y) const;
    double top() const { return pose.translation.z() + half_height(); }
};

/// Lattice of candidate placements; `origin` is the lattice centre.
struct GridSpec {
    int rows = 4;
    int cols = 4;
    double pitch = 0.03;
    Vec3 origin = Vec3::Zero();

    Vec3 cell(int row, int col) const;
};

struct SceneSpec {
    std::string name;
    std::vector<SceneObject> objects;
    std::vector<bool> on_grid;   // parallel to objects
    std::optional<GridSpec> grid;
};

/// JSON scene document; BadSpec on any structural or value error.
SceneSpec parse_scene(std::string_view text);
SceneSpec load_scene(const std::filesystem::path& path);

struct SimConfig {
    double v_max = 3.0;      // rad/s or m/s, every dof
    double c_grasp = 0.6;
    double c_release = 0.4;
    double r_grasp = 0.08;
};

struct Attachment {
    Side side = Side::left;
    Pose relative;   // palm^-1 * object at grasp time
};

struct SimState {
    const RobotModel* model = nullptr;
    RobotProfile profile;
    JointVector q_measured;
    JointVector q_target;
    std::vector<SceneObject> objects;
    std::vector<std::optional<Attachment>> attachments;   // parallel to objects
    std::uint64_t tick = 0;
    std::uint64_t seed = 0;

    Pose palm_pose(Side s) const;
    /// Index of the object held by `s`, if any.
    std::optional<std::size_t> held_by(Side s) const;
};

/// Places the spec's objects, drawing grid cells from a generator seeded
/// with `seed`. Grid objects never overlap in footprint; BadSpec when the
/// lattice cannot hold them all.
SimState reset_scene(const RobotModel& model, const RobotProfile& profile, const SceneSpec& spec,
                     std::uint64_t seed, const std::optional<JointVector>& q_initial = std::nullopt);

/// One tick of joint tracking toward `command` (action layout), then the
/// held objects follow their palms.
void step_sim(SimState& state, const Eigen::VectorXd& command, double dt, const SimConfig& cfg = {});

/// Attach / detach against the closure thresholds. A released object drops
/// straight down onto the highest non-graspable object under its centre.
void update_grasp(SimState& state, const SimConfig& cfg = {});

struct SimObservation {
    std::uint64_t tick = 0;
    JointVector q_measured;
    std::vector<SceneObject> objects;
    std::vector<bool> attached;
};

SimObservation observe(const SimState& state);

}  // namespace otv
