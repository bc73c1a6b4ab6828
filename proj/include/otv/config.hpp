#pragma once

// Server/session configuration, read from JSON:
//
//   {
//     "robot_model": "models/h1-like.model",
//     "scene": "scenes/can_sorting.json",
//     "host": "127.0.0.1", "port": 8080,
//     "ik": {"damping": 0.01, "max_iterations": 3, ...},
//     "retargeting": {"alpha": 1.1, "beta": 0.1, ...},
//     "aggregator": {"chunk_size": 60, "m": 0.01},
//     "filter": {"lambda": 0.6},
//     "render": {"width": 128, "height": 96, "stride": 2},
//     "latency": {"delay_ms": 0, "jitter_ms": 0, "seed": 1},
//     "sim": {"v_max": 3.0, "seed": 0},
//     "record": {"dir": "", "frames": false, "task": "teleop"}
//   }
//
// Every key is optional. Relative paths resolve against the config file's
// directory first and the bundled data directory second. Unknown keys are
// rejected so that typos do not silently fall back to defaults.

#include "otv/arm_control.hpp"
#include "otv/hand_retargeting.hpp"
#include "otv/render.hpp"
#include "otv/sim_world.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace otv {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Directory of the bundled models, scenes and traces.
std::filesystem::path data_dir();

struct RetargetOverrides {
    std::optional<double> alpha, beta, step_tolerance, damping, step_clamp;
    std::optional<int> max_iterations;

    RetargetingConfig apply(RetargetingConfig base) const;
};

struct LatencyConfig {
    double delay_ms = 0.0;
    double jitter_ms = 0.0;
    std::uint64_t seed = 1;
};

struct SessionConfig {
    std::filesystem::path robot_model = "models/h1-like.model";
    std::filesystem::path scene = "scenes/can_sorting.json";
    std::string host = "127.0.0.1";
    std::uint16_t port = 8080;
    double rate_hz = 60.0;

    IkConfig ik;   // three iterations per tick by default
    RetargetOverrides retargeting;
    int chunk_size = 60;
    double aggregation_m = 0.01;
    double filter_lambda = 0.6;

    int render_width = 128;
    int render_height = 96;
    int frame_stride = 2;   // 0 disables STEREO_FRAME

    LatencyConfig latency;
    SimConfig sim;
    std::uint64_t scene_seed = 0;

    std::filesystem::path record_dir;   // empty: recording disabled
    bool record_frames = false;
    std::string task = "teleop";
    std::string created;   // meta.json label; empty means wall-clock UTC

    void validate() const;
};

/// ConfigError on wrong types, unknown keys or invalid values.
SessionConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
SessionConfig load_config(const std::filesystem::path& path);

/// `p` if absolute or present under base_dir, otherwise under data_dir().
std::filesystem::path resolve_path(const std::filesystem::path& p, const std::filesystem::path& base_dir);

}  // namespace otv
