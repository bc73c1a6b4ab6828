#include "otv/policy.hpp"

#include <cmath>
#include <string>

namespace otv {

ActionChunk ActionChunk::constant(std::int64_t start_tick, const Eigen::VectorXd& action, int k) {
    ActionChunk c;
    c.start_tick = start_tick;
    c.actions = action.transpose().replicate(k, 1);
    return c;
}

TemporalAggregator::TemporalAggregator(int action_dim, int chunk_size, double m)
    : n_(action_dim), k_(chunk_size), m_(m) {
    if (n_ < 1) throw std::invalid_argument("action dimension must be positive");
    if (k_ < 1) throw std::invalid_argument("chunk size must be positive");
    if (!(m_ >= 0.0) || !std::isfinite(m_)) throw std::invalid_argument("temporal weight m must be finite and >= 0");
}

void TemporalAggregator::push(ActionChunk chunk) {
    if (chunk.actions.cols() != n_)
        throw DimensionMismatch("chunk has " + std::to_string(chunk.actions.cols()) + " columns, expected " +
                                std::to_string(n_));
    if (chunk.actions.rows() < 1 || chunk.actions.rows() > k_)
        throw DimensionMismatch("chunk has " + std::to_string(chunk.actions.rows()) + " rows, expected 1.." +
                                std::to_string(k_));
    if (!chunks_.empty() && chunk.start_tick < chunks_.back().start_tick)
        throw std::invalid_argument("chunk start ticks must not decrease");
    std::erase_if(chunks_, [&](const ActionChunk& c) { return c.end_tick() <= chunk.start_tick; });
    chunks_.push_back(std::move(chunk));
    while (chunks_.size() > static_cast<std::size_t>(k_)) chunks_.pop_front();
}

Eigen::VectorXd TemporalAggregator::aggregate(std::int64_t tick) const {
    const ActionChunk* first = nullptr;
    double total = 0.0;
    int i = 0;
    for (const ActionChunk& c : chunks_) {
        if (!c.covers(tick)) continue;
        if (!first) first = &c;
        total += std::exp(-m_ * i);
        ++i;
    }
    if (!first) throw NoChunkCoversTick("no chunk covers tick " + std::to_string(tick));
    const Eigen::VectorXd a0 = first->at(tick);
    Eigen::VectorXd out = a0;
    i = 0;
    for (const ActionChunk& c : chunks_) {
        if (!c.covers(tick)) continue;
        if (i > 0) out += (std::exp(-m_ * i) / total) * (c.at(tick) - a0);
        ++i;
    }
    return out;
}

void TemporalAggregator::seed(std::int64_t start_tick, const Eigen::VectorXd& action) {
    if (action.size() != n_) throw DimensionMismatch("seed action has the wrong width");
    chunks_.clear();
    chunks_.push_back(ActionChunk::constant(start_tick, action, k_));
}

}  // namespace otv
