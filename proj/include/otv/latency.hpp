#pragma once

// One-way network delay emulation. Each message becomes deliverable at
// enqueue + delay + U(0, jitter) and leaves strictly in enqueue order, so a
// late jitter sample also holds back everything queued behind it.

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

namespace otv {

class LatencyHarness {
public:
    explicit LatencyHarness(double delay_ms = 0.0, double jitter_ms = 0.0, std::uint64_t seed = 1);

    /// `now` in seconds; times must not decrease.
    void push(std::string message, double now);
    /// Every message due at `now`, oldest first.
    std::vector<std::string> drain(double now);

    std::size_t pending() const noexcept { return queue_.size(); }
    double delay_ms() const noexcept { return delay_ms_; }
    double jitter_ms() const noexcept { return jitter_ms_; }

private:
    struct Entry {
        double due;
        std::string message;
    };

    double delay_ms_;
    double jitter_ms_;
    std::mt19937_64 rng_;
    std::deque<Entry> queue_;
};

}  // namespace otv
