// Synthetic rater: assigns rating classes from ground-truth segment returns by
// equal partition of a configurable maximum reward (a proxy for human
// strictness).
#pragma once

#include "rbrl/envs.hpp"
#include "rbrl/reward_learning.hpp"
#include "rbrl/rng.hpp"

namespace rbrl {

struct RaterConfig {
    int n_classes = 2;
    double max_reward = 50.0;
    int budget = 200;

    void validate() const;
    bool operator==(const RaterConfig&) const = default;
};

// label = clamp(floor(true_return * n / max_reward), 0, n-1); returns exactly
// on a boundary go to the upper class, returns >= max_reward to the top class,
// negative returns to class 0.
int rate_segment(double true_return, const RaterConfig& cfg);

// Rates `budget` segments sampled uniformly without replacement from the
// buffer; labels derive solely from the stored true returns.
RatingDataset rate_buffer(const SegmentBuffer& buffer, const RaterConfig& cfg, int budget, Rng& rng);

}  // namespace rbrl
