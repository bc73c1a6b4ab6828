#pragma once

// One robot session: the 60 Hz tick that turns operator frames (teleop) or
// policy chunks (autonomous) into joint commands, steps the simulator and
// produces the outbound messages.
//
// Threading: submit() may be called from any thread. Everything else
// belongs to the tick thread. Between two ticks only the newest submitted
// frame is seen; older ones count as dropped.

#include "otv/config.hpp"
#include "otv/hand_retargeting.hpp"
#include "otv/loop_stats.hpp"
#include "otv/policy.hpp"
#include "otv/protocol.hpp"
#include "otv/scripted_pick_place.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>

namespace otv {

enum class Mode { idle, teleop, autonomous };
const char* mode_name(Mode m);
std::optional<Mode> parse_mode(std::string_view s);

/// Source of action chunks while autonomous.
class ChunkProducer {
public:
    virtual ~ChunkProducer() = default;
    virtual ActionChunk next(const SimObservation& obs, std::int64_t tick) = 0;
};

class ScriptedProducer : public ChunkProducer {
public:
    ScriptedProducer(const RobotModel& model, const RobotProfile& profile, PickPlaceConfig cfg);
    ActionChunk next(const SimObservation& obs, std::int64_t tick) override { return policy_.next_chunk(obs, tick); }

private:
    ScriptedPickPlace policy_;
};

/// Recorded commands replayed from the tick the producer was created at.
class EpisodeProducer : public ChunkProducer {
public:
    EpisodeProducer(const Episode& episode, int chunk_size, std::int64_t start_tick);
    /// EndOfEpisode past the last recorded step.
    ActionChunk next(const SimObservation& obs, std::int64_t tick) override;

private:
    ReplayProducer replay_;
    std::int64_t start_;
};

using ProducerFactory = std::function<std::unique_ptr<ChunkProducer>(std::int64_t start_tick)>;

struct TickResult {
    std::int64_t tick = 0;
    Mode mode = Mode::idle;
    Eigen::VectorXd command;   // action layout
    std::vector<Message> outbound;
};

class Session {
public:
    Session(const RobotModel& model, SessionConfig cfg, SceneSpec scene);
    ~Session();
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    /// Replace-on-write mailbox. Thread-safe.
    void submit(const OperatorFrame& frame);

    /// Applies a CONTROL command and returns the reply body. Commands:
    /// set_mode {mode}, calibrate, reset_scene {seed?}, start_recording
    /// {task?, frames?}, stop_recording, ping {t?}, stats, debug {enabled}.
    nlohmann::json control(const nlohmann::json& cmd);

    TickResult tick(double now);

    /// Autonomous chunks come from this factory instead of the scripted
    /// pick-and-place policy.
    void set_producer_factory(ProducerFactory f) { factory_ = std::move(f); }
    /// Finishes any recording.
    void shutdown();

    Mode mode() const noexcept { return mode_; }
    std::int64_t tick_count() const noexcept { return tick_; }
    bool calibrated() const noexcept { return calibration_.has_value(); }
    bool recording() const noexcept { return recorder_ != nullptr; }
    /// Directory of the current or most recent recording.
    const std::filesystem::path& last_episode() const noexcept { return last_episode_; }
    const Eigen::VectorXd& last_command() const noexcept { return command_; }
    const SimState& sim() const noexcept { return sim_; }
    const LoopStats& stats() const noexcept { return stats_; }
    const RobotModel& model() const noexcept { return *model_; }
    const RobotProfile& profile() const noexcept { return profile_; }
    const SessionConfig& config() const noexcept { return cfg_; }
    bool end_gesture_detected() const noexcept { return detector_.detected(); }

    nlohmann::json stats_body() const;

private:
    struct HandSlot {
        HandChain chain;
        RetargetingConfig cfg;
    };

    JointVector teleop_step(const OperatorFrame& f, JointVector q);
    Eigen::VectorXd autonomous_step(const SimObservation& obs);
    void set_mode(Mode m);
    void start_recording(const nlohmann::json& cmd);
    nlohmann::json stop_recording();
    void reset(std::uint64_t seed);
    void event(std::vector<Message>& out, nlohmann::json body);

    const RobotModel* model_;
    RobotProfile profile_;
    SessionConfig cfg_;
    SceneSpec scene_;
    double dt_;
    CameraRig rig_;

    std::mutex mailbox_mutex_;
    std::optional<OperatorFrame> mailbox_;
    std::uint64_t mailbox_received_ = 0;   // guarded by mailbox_mutex_
    std::uint64_t mailbox_dropped_ = 0;

    Mode mode_ = Mode::idle;
    std::int64_t tick_ = 0;
    SimState sim_;
    JointVector command_q_;    // full-dof view of command_
    Eigen::VectorXd command_;
    std::optional<OperatorFrame> frame_;   // newest consumed, sanitized
    std::optional<CalibrationState> calibration_;
    Pose head_home_;
    std::array<ArmChain, 2> arms_;
    std::array<PoseFilter, 2> filters_;
    std::vector<HandSlot> hands_;   // left, right

    TemporalAggregator aggregator_;
    ProducerFactory factory_;
    std::unique_ptr<ChunkProducer> producer_;
    EndGestureDetector detector_;
    bool gesture_reported_ = false;

    std::unique_ptr<EpisodeWriter> recorder_;
    std::filesystem::path last_episode_;
    std::string record_task_;
    int episode_counter_ = 0;

    LoopStats stats_;
    bool debug_ = false;
};

/// Frame with invalid bits cleared for non-finite or non-unit components and
/// valid poses canonicalized.
OperatorFrame sanitize_frame(const OperatorFrame& f);

/// Wire views of the sim state.
JointStateMsg joint_state_message(double now, const RobotModel& model, const Eigen::VectorXd& command,
                                  const JointVector& q_measured);
SceneStateMsg scene_state_message(const SimState& state);
StereoFrameMsg stereo_frame_message(const StereoImage& img);

/// "h1", "gr1" or a model file path.
std::filesystem::path robot_model_path(const std::string& robot);

}  // namespace otv
