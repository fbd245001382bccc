#include "lexipse/momentum.hpp"

#include "lexipse/log.hpp"

namespace lexipse {

EmaTracker::EmaTracker(std::vector<double> initial, double decay) : shadow_(std::move(initial)), decay_(decay) {
    if (!(decay_ >= 0.0 && decay_ < 1.0)) throw InvalidArgument("EMA decay must lie in [0, 1)");
}

void EmaTracker::update(std::span<const double> live) {
    if (live.size() != shadow_.size()) {
        throw ShapeError("EMA tracks " + std::to_string(shadow_.size()) + " parameters, got " +
                         std::to_string(live.size()));
    }
    const double keep = decay_;
    const double take = 1.0 - decay_;
    for (std::size_t i = 0; i < shadow_.size(); ++i) shadow_[i] = keep * shadow_[i] + take * live[i];
}

EmaTracker ema_update(EmaTracker tracker, std::span<const double> live) {
    tracker.update(live);
    return tracker;
}

void warn_queue_overflow(std::size_t batch, std::size_t capacity) {
    spdlog::warn("pushed {} items into a queue of capacity {}; keeping the newest {}", batch, capacity, capacity);
}

}  // namespace lexipse
