#pragma once

// Kinematic tree description and its plain-text model format.
//
// The format is line oriented; '#' starts a comment:
//
//   robot <name>
//   joint <name> <revolute|prismatic|fixed> parent=<link> child=<link>
//         xyz=<x,y,z> rpy=<r,p,y> axis=<x,y,z> limits=<lo,hi> [actuated]
//   frame <name> link=<link> xyz=<x,y,z> rpy=<r,p,y>
//   couple driven=<joint> driver=<joint> [ratio=<f>]
//   action_layout <joint,joint,...>
//
// The tree is rooted at the link "base". Every movable joint owns one entry
// in a JointVector (its dof index, in declaration order).

#include "otv/se3.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace otv {

using JointVector = Eigen::VectorXd;

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public ModelError {
public:
    ParseError(int line, std::string reason);
    int line() const noexcept { return line_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    int line_;
    std::string reason_;
};

class CycleError : public ModelError {
public:
    using ModelError::ModelError;
};

class UnknownFrame : public ModelError {
public:
    explicit UnknownFrame(std::string_view name);
};

class BadCoupling : public ModelError {
public:
    using ModelError::ModelError;
};

enum class JointType { revolute, prismatic, fixed };

struct Joint {
    std::string name;
    JointType type = JointType::fixed;
    std::string parent_link;
    std::string child_link;
    Pose origin;
    Vec3 axis = Vec3::UnitZ();
    double lower = 0.0;
    double upper = 0.0;
    bool actuated = false;

    int dof = -1;            // index into JointVector, -1 for fixed joints
    int parent_joint = -1;   // joint whose child link is our parent link, -1 at base
};

struct Frame {
    std::string name;
    std::string link;
    Pose offset;
    int parent_joint = -1;   // -1 when attached to base
};

struct Coupling {
    std::string driven;
    std::string driver;
    double ratio = 1.0;
    int driven_dof = -1;
    int driver_dof = -1;
};

class RobotModel {
public:
    const std::string& name() const noexcept { return name_; }
    const std::vector<Joint>& joints() const noexcept { return joints_; }
    const std::vector<Frame>& frames() const noexcept { return frames_; }
    const std::vector<Coupling>& couplings() const noexcept { return couplings_; }

    /// Dof indices in command-vector order.
    const std::vector<int>& action_layout() const noexcept { return action_layout_; }
    std::vector<std::string> action_names() const;

    int dof() const noexcept { return static_cast<int>(dof_joint_.size()); }
    const Joint& dof_joint(int dof) const { return joints_.at(static_cast<std::size_t>(dof_joint_.at(static_cast<std::size_t>(dof)))); }

    std::optional<int> find_joint(std::string_view name) const;
    std::optional<int> find_frame(std::string_view name) const;
    /// Dof index of a movable joint; throws UnknownFrame if missing or fixed.
    int dof_index(std::string_view joint_name) const;
    int frame_index(std::string_view frame_name) const;

    /// Joint indices from the root down to the frame's parent joint.
    const std::vector<int>& frame_chain(int frame) const { return frame_chains_.at(static_cast<std::size_t>(frame)); }
    /// Joints sorted so that parents precede children.
    const std::vector<int>& topological_order() const noexcept { return topo_order_; }

    const JointVector& lower_limits() const noexcept { return lower_; }
    const JointVector& upper_limits() const noexcept { return upper_; }
    bool is_coupled(int dof) const;

    /// The document the model was parsed from.
    const std::string& source() const noexcept { return source_; }

private:
    friend RobotModel parse_robot_model(std::string_view text);

    std::string name_;
    std::vector<Joint> joints_;
    std::vector<Frame> frames_;
    std::vector<Coupling> couplings_;
    std::vector<int> action_layout_;
    std::vector<int> dof_joint_;
    std::vector<int> topo_order_;
    std::vector<std::vector<int>> frame_chains_;
    JointVector lower_;
    JointVector upper_;
    std::string source_;
};

/// Parses and validates a model document. Never crashes on arbitrary input;
/// every failure is a ModelError subclass.
RobotModel parse_robot_model(std::string_view text);
RobotModel load_robot_model(const std::filesystem::path& path);

}  // namespace otv
