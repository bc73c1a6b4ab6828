#include "otv/policy.hpp"

#include <algorithm>
#include <string>

namespace otv {

ReplayProducer::ReplayProducer(const Episode& episode, int chunk_size) : k_(chunk_size) {
    if (k_ < 1) throw std::invalid_argument("chunk size must be positive");
    const auto n = static_cast<Eigen::Index>(episode.meta.action_dim);
    commands_.resize(static_cast<Eigen::Index>(episode.steps.size()), n);
    for (std::size_t t = 0; t < episode.steps.size(); ++t)
        for (Eigen::Index j = 0; j < n; ++j)
            commands_(static_cast<Eigen::Index>(t), j) = episode.steps[t].commanded[static_cast<std::size_t>(j)];
}

ActionChunk ReplayProducer::chunk_at(std::int64_t tick) const {
    if (tick < 0 || tick >= num_steps())
        throw EndOfEpisode("tick " + std::to_string(tick) + " is past the episode's " + std::to_string(num_steps()) +
                           " steps");
    ActionChunk c;
    c.start_tick = tick;
    c.actions = commands_.middleRows(tick, std::min<std::int64_t>(k_, num_steps() - tick));
    return c;
}

}  // namespace otv
