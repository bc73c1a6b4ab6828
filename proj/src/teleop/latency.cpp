#include "otv/latency.hpp"

#include <stdexcept>

namespace otv {

LatencyHarness::LatencyHarness(double delay_ms, double jitter_ms, std::uint64_t seed)
    : delay_ms_(delay_ms), jitter_ms_(jitter_ms), rng_(seed) {
    if (!(delay_ms >= 0.0) || !(jitter_ms >= 0.0)) throw std::invalid_argument("delay and jitter must be non-negative");
}

void LatencyHarness::push(std::string message, double now) {
    double jitter = 0.0;
    if (jitter_ms_ > 0.0) {
        // 53 random bits -> [0, 1); spelled out so the schedule is identical
        // across standard libraries.
        const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        jitter = u * jitter_ms_;
    }
    queue_.push_back({now + (delay_ms_ + jitter) * 1e-3, std::move(message)});
}

std::vector<std::string> LatencyHarness::drain(double now) {
    std::vector<std::string> out;
    while (!queue_.empty() && queue_.front().due <= now) {
        out.push_back(std::move(queue_.front().message));
        queue_.pop_front();
    }
    return out;
}

}  // namespace otv
