#pragma once

#include "lexipse/errors.hpp"

#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

namespace lexipse {

/// Exponential moving average over a flat parameter vector.
class EmaTracker {
  public:
    /// The shadow starts as a copy of the live parameters.
    EmaTracker(std::vector<double> initial, double decay);

    /// shadow <- decay * shadow + (1 - decay) * live
    void update(std::span<const double> live);

    const std::vector<double>& shadow() const noexcept { return shadow_; }
    double decay() const noexcept { return decay_; }

  private:
    std::vector<double> shadow_;
    double decay_;
};

/// Functional form of EmaTracker::update.
EmaTracker ema_update(EmaTracker tracker, std::span<const double> live);

/// Fixed-capacity FIFO of negatives; oldest entries are evicted first.
template <typename T>
class NegativeQueue {
  public:
    explicit NegativeQueue(std::size_t capacity) : capacity_(capacity) {
        if (capacity_ == 0) throw InvalidArgument("queue capacity must be >= 1");
    }

    /// Appends the batch in order. Returns false when the batch alone exceeds
    /// the capacity, in which case only its newest `capacity` items remain.
    bool push(std::span<const T> batch) {
        const bool fits = batch.size() <= capacity_;
        const auto skip = fits ? std::size_t{0} : batch.size() - capacity_;
        for (std::size_t i = skip; i < batch.size(); ++i) {
            if (entries_.size() == capacity_) entries_.pop_front();
            entries_.push_back(batch[i]);
        }
        return fits;
    }

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    bool empty() const noexcept { return entries_.empty(); }
    const std::deque<T>& entries() const noexcept { return entries_; }
    std::vector<T> snapshot() const { return {entries_.begin(), entries_.end()}; }

  private:
    std::size_t capacity_;
    std::deque<T> entries_;
};

/// Push that logs a warning when the batch overflows the queue.
template <typename T>
NegativeQueue<T> queue_push(NegativeQueue<T> queue, std::span<const T> batch);

void warn_queue_overflow(std::size_t batch, std::size_t capacity);

template <typename T>
NegativeQueue<T> queue_push(NegativeQueue<T> queue, std::span<const T> batch) {
    if (!queue.push(batch)) warn_queue_overflow(batch.size(), queue.capacity());
    return queue;
}

}  // namespace lexipse
