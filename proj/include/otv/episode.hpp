#pragma once

// Episode directories:
//
//   meta.json                   robot, action_dim, rate_hz, num_steps, task, created, flags
//   steps.bin                   "OTVE", u16 version, u16 flags, then fixed-length records
//   frames/NNNNNN_left.ppm      binary P6, when frame recording is on
//   frames/NNNNNN_right.ppm
//
// A record is u64 tick, f64 time, n f32 observed, n f32 commanded, then
// (flags bit0) u8 validity + 57 f32 operator block and (flags bit1) u32
// frame index. Everything little-endian. The record length follows from
// meta.json's action_dim and the header flags.

#include "otv/operator_frame.hpp"
#include "otv/render.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace otv {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CorruptEpisode : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint16_t kEpisodeVersion = 1;

namespace episode_flags {
inline constexpr std::uint16_t operator_block = 1u << 0;
inline constexpr std::uint16_t frame_index = 1u << 1;
}  // namespace episode_flags

struct EpisodeMeta {
    std::string robot;
    int action_dim = 0;
    double rate_hz = 60.0;
    std::uint64_t num_steps = 0;
    std::string task;
    std::string created;

    bool operator==(const EpisodeMeta&) const = default;
};

/// Head, both wrists (qw qx qy qz tx ty tz each) and both hands (6 x xyz),
/// stored as f32.
struct OperatorBlock {
    static constexpr int kFloats = 3 * 7 + 2 * kKeypointCount * 3;
    std::uint8_t validity = 0;
    std::array<float, kFloats> values{};

    static OperatorBlock from_frame(const OperatorFrame& f);
    OperatorFrame to_frame(double timestamp) const;
    bool operator==(const OperatorBlock&) const = default;
};

struct StepRecord {
    std::uint64_t tick = 0;
    double time = 0.0;
    std::vector<float> observed;
    std::vector<float> commanded;
    std::optional<OperatorBlock> operator_block;
    std::optional<std::uint32_t> frame;

    bool operator==(const StepRecord&) const = default;
};

std::size_t record_size(int action_dim, std::uint16_t flags);

struct Episode {
    EpisodeMeta meta;
    std::uint16_t flags = 0;
    std::vector<StepRecord> steps;
};

class EpisodeWriter {
public:
    /// Creates `dir` (and frames/ when frame indices are recorded).
    EpisodeWriter(std::filesystem::path dir, EpisodeMeta meta, std::uint16_t flags);
    ~EpisodeWriter();
    EpisodeWriter(const EpisodeWriter&) = delete;
    EpisodeWriter& operator=(const EpisodeWriter&) = delete;

    /// IoError when the record does not match the header's layout.
    void record(const StepRecord& step);
    void write_frame(std::uint32_t index, const StereoImage& frame);
    /// Writes meta.json and closes steps.bin. Idempotent.
    void finalize();

    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::uint64_t steps() const noexcept { return meta_.num_steps; }
    std::uint16_t flags() const noexcept { return flags_; }

private:
    std::filesystem::path dir_;
    EpisodeMeta meta_;
    std::uint16_t flags_;
    std::ofstream steps_;
    bool finalized_ = false;
};

/// CorruptEpisode on bad magic, version, lengths or meta; IoError when the
/// files cannot be read.
Episode load_episode(const std::filesystem::path& dir);

std::string frame_file_name(std::uint32_t index, bool left);

}  // namespace otv
