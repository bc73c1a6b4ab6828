#pragma once

// Action chunks, their temporal aggregation, the ending-gesture detector and
// the episode replay producer.
//
// Aggregation over the chunks covering a tick, ordered oldest first:
//
//   a = sum_i w_i a_i / sum_i w_i,   w_i = exp(-m i)
//
// evaluated as a_0 + sum_i (w_i / W)(a_i - a_0) so that identical
// contributions reproduce their value exactly.

#include "otv/episode.hpp"
#include "otv/robot_model.hpp"
#include "otv/sim_world.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

namespace otv {

class NoChunkCoversTick : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class EndOfEpisode : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

struct ActionChunk {
    std::int64_t start_tick = 0;
    Eigen::MatrixXd actions;   // rows = ticks from start_tick, cols = action layout

    std::int64_t size() const noexcept { return actions.rows(); }
    std::int64_t end_tick() const noexcept { return start_tick + actions.rows(); }
    bool covers(std::int64_t tick) const noexcept { return tick >= start_tick && tick < end_tick(); }
    Eigen::VectorXd at(std::int64_t tick) const { return actions.row(tick - start_tick).transpose(); }

    /// k copies of one action starting at `start_tick`.
    static ActionChunk constant(std::int64_t start_tick, const Eigen::VectorXd& action, int k);
};

class TemporalAggregator {
public:
    TemporalAggregator(int action_dim, int chunk_size = 60, double m = 0.01);

    /// Evicts chunks whose window ended before `chunk.start_tick`, then the
    /// oldest ones while more than chunk_size remain. Start ticks must not
    /// decrease. DimensionMismatch on wrong width or more than chunk_size rows.
    void push(ActionChunk chunk);
    /// NoChunkCoversTick when no stored chunk covers `tick`.
    Eigen::VectorXd aggregate(std::int64_t tick) const;
    /// Drops everything and stores one constant chunk (producer switches).
    void seed(std::int64_t start_tick, const Eigen::VectorXd& action);
    void clear() { chunks_.clear(); }

    int action_dim() const noexcept { return n_; }
    int chunk_size() const noexcept { return k_; }
    double temporal_weight() const noexcept { return m_; }
    std::size_t stored() const noexcept { return chunks_.size(); }

private:
    int n_;
    int k_;
    double m_;
    std::deque<ActionChunk> chunks_;
};

struct EndGesture {
    std::vector<int> dofs;   // full-dof indices
    JointVector reference;
    double tolerance = 0.05;   // rad
    int hold_ticks = 30;

    static EndGesture from_profile(const RobotProfile& profile);
};

class EndGestureDetector {
public:
    explicit EndGestureDetector(EndGesture g);

    /// True once the subset has stayed within tolerance for hold_ticks
    /// consecutive updates; any excursion resets the count.
    bool update(const JointVector& q);
    bool matches(const JointVector& q) const;
    int held() const noexcept { return held_; }
    bool detected() const noexcept { return held_ >= gesture_.hold_ticks; }
    void reset() noexcept { held_ = 0; }
    const EndGesture& gesture() const noexcept { return gesture_; }

private:
    EndGesture gesture_;
    int held_ = 0;
};

/// Recorded commands served back as chunks.
class ReplayProducer {
public:
    ReplayProducer(const Episode& episode, int chunk_size);

    /// The next chunk_size commands from `tick` (truncated at the end);
    /// EndOfEpisode once tick reaches num_steps.
    ActionChunk chunk_at(std::int64_t tick) const;
    std::int64_t num_steps() const noexcept { return commands_.rows(); }

private:
    Eigen::MatrixXd commands_;
    int k_;
};

}  // namespace otv
