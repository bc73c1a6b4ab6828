#include "otv/loop_stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace otv {

void LoopStats::record_tick(double ms, bool command_finite) {
    ++ticks_;
    total_ms_ += ms;
    max_ms_ = std::max(max_ms_, ms);
    window_.push_back(ms);
    if (window_.size() > kWindow) window_.pop_front();
    if (!command_finite) ++nonfinite_;
}

void LoopStats::ik_attempt(bool converged, int iterations) {
    ++ik_attempts_;
    if (converged) ++ik_converged_;
    ik_iterations_ += static_cast<std::uint64_t>(std::max(iterations, 0));
}

void LoopStats::retarget(int iterations) {
    ++retarget_calls_;
    retarget_iterations_ += static_cast<std::uint64_t>(std::max(iterations, 0));
}

void LoopStats::error(const std::string& stage, const std::string& what) {
    ++errors_[stage];
    last_error_ = stage + ": " + what;
}

double LoopStats::p99_tick_ms() const {
    if (window_.empty()) return 0.0;
    std::vector<double> v(window_.begin(), window_.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(v.size())));
    const auto k = std::max<std::size_t>(rank, 1) - 1;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

double LoopStats::ik_convergence_rate() const noexcept {
    return ik_attempts_ ? static_cast<double>(ik_converged_) / static_cast<double>(ik_attempts_) : 1.0;
}

double LoopStats::mean_retarget_iterations() const noexcept {
    return retarget_calls_ ? static_cast<double>(retarget_iterations_) / static_cast<double>(retarget_calls_) : 0.0;
}

std::uint64_t LoopStats::error_count() const noexcept {
    std::uint64_t n = 0;
    for (const auto& [_, c] : errors_) n += c;
    return n;
}

nlohmann::json LoopStats::to_json() const {
    nlohmann::json j;
    j["ticks"] = ticks_;
    j["tick_ms_mean"] = mean_tick_ms();
    j["tick_ms_p99"] = p99_tick_ms();
    j["tick_ms_max"] = max_ms_;
    j["frames_received"] = frames_received_;
    j["frames_dropped"] = frames_dropped_;
    j["nonfinite_commands"] = nonfinite_;
    j["ik_attempts"] = ik_attempts_;
    j["ik_convergence_rate"] = ik_convergence_rate();
    j["retarget_calls"] = retarget_calls_;
    j["retarget_iterations_mean"] = mean_retarget_iterations();
    j["errors"] = errors_;
    if (!last_error_.empty()) j["last_error"] = last_error_;
    return j;
}

}  // namespace otv
