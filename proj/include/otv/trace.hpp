#pragma once

// Scripted operator sessions: timestamped operator frames and CONTROL
// commands replayed against a Session on a virtual 60 Hz clock. Replaying a
// trace records an episode whose steps.bin is the regression artifact.
//
// File layout:
//
//   {"format": "otv-trace", "version": 1, "robot": "h1",
//    "scene": "scenes/can_sorting.json", "seed": 0, "rate_hz": 60, "ticks": 600,
//    "events": [{"t": 0.0083, "frame": {"validity": 31, "head": [qw,qx,qy,qz,x,y,z],
//                 "left_wrist": [...], "right_wrist": [...],
//                 "left_hand": [18 floats], "right_hand": [...]}},
//               {"t": 0.0083, "control": {"cmd": "calibrate"}}, ...]}

#include "otv/session.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace otv {

class TraceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TraceEvent {
    double t = 0.0;
    std::optional<OperatorFrame> frame;
    nlohmann::json control;   // null unless a CONTROL command
};

struct Trace {
    std::string robot = "h1";
    std::filesystem::path scene = "scenes/can_sorting.json";
    std::uint64_t seed = 0;
    double rate_hz = 60.0;
    std::int64_t ticks = 0;
    std::vector<TraceEvent> events;   // non-decreasing t
};

nlohmann::json trace_to_json(const Trace& trace);
/// Relative scene paths resolve against base_dir, then the data directory.
Trace parse_trace(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
Trace load_trace(const std::filesystem::path& path);
void save_trace(const Trace& trace, const std::filesystem::path& path);

/// Ten seconds of head sweeps, wrist waves and pinching, calibrated at the
/// start and switched to autonomous at t = 8 s. Keypoints are derived from
/// the robot's own hand so retargeting has an exact answer.
Trace synthesize_wave_trace(const RobotModel& model, const std::string& robot = "h1", double duration_s = 10.0);

struct TraceRun {
    std::filesystem::path episode;   // last recording
    std::string steps_bin;           // its steps.bin
    std::vector<Eigen::VectorXd> commands;
    std::vector<Mode> modes;
    double max_switch_jump = 0.0;    // infinity norm at teleop -> autonomous switches
    int switches = 0;
    std::uint64_t nonfinite_commands = 0;
    double mean_tick_ms = 0.0;
    double p99_tick_ms = 0.0;
    std::uint64_t errors = 0;
};

/// Replays the trace against a fresh session built from `cfg` with the
/// trace's scene and seed; recordings go under `work_dir`.
TraceRun run_trace(const Trace& trace, const RobotModel& model, SessionConfig cfg,
                   const std::filesystem::path& work_dir);

}  // namespace otv
