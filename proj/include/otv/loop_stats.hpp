#pragma once

// Per-session counters behind the STATS message.

#include <json.hpp>

#include <cstdint>
#include <deque>
#include <map>
#include <string>

namespace otv {

class LoopStats {
public:
    /// Tick durations kept for the percentile; the mean covers every tick.
    static constexpr std::size_t kWindow = 3600;

    void record_tick(double ms, bool command_finite);
    void frame_received() { ++frames_received_; }
    void frame_dropped() { ++frames_dropped_; }
    void ik_attempt(bool converged, int iterations);
    void retarget(int iterations);
    void error(const std::string& stage, const std::string& what);

    std::uint64_t ticks() const noexcept { return ticks_; }
    double mean_tick_ms() const noexcept { return ticks_ ? total_ms_ / static_cast<double>(ticks_) : 0.0; }
    /// Nearest-rank 99th percentile over the window.
    double p99_tick_ms() const;
    double max_tick_ms() const noexcept { return max_ms_; }
    std::uint64_t frames_received() const noexcept { return frames_received_; }
    std::uint64_t frames_dropped() const noexcept { return frames_dropped_; }
    std::uint64_t nonfinite_commands() const noexcept { return nonfinite_; }
    double ik_convergence_rate() const noexcept;
    double mean_retarget_iterations() const noexcept;
    std::uint64_t error_count() const noexcept;
    const std::map<std::string, std::uint64_t>& errors() const noexcept { return errors_; }

    /// STATS payload.
    nlohmann::json to_json() const;

private:
    std::uint64_t ticks_ = 0;
    double total_ms_ = 0.0;
    double max_ms_ = 0.0;
    std::deque<double> window_;
    std::uint64_t frames_received_ = 0;
    std::uint64_t frames_dropped_ = 0;
    std::uint64_t nonfinite_ = 0;
    std::uint64_t ik_attempts_ = 0;
    std::uint64_t ik_converged_ = 0;
    std::uint64_t ik_iterations_ = 0;
    std::uint64_t retarget_calls_ = 0;
    std::uint64_t retarget_iterations_ = 0;
    std::map<std::string, std::uint64_t> errors_;
    std::string last_error_;
};

}  // namespace otv
