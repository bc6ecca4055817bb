#include "rbrl/rater.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rbrl {

void RaterConfig::validate() const {
    if (n_classes < 2) throw std::invalid_argument("RaterConfig: n_classes must be >= 2");
    if (!(max_reward > 0.0)) throw std::invalid_argument("RaterConfig: max_reward must be > 0");
    if (budget < 1) throw std::invalid_argument("RaterConfig: budget must be >= 1");
}

int rate_segment(double true_return, const RaterConfig& cfg) {
    cfg.validate();
    if (!std::isfinite(true_return)) throw std::invalid_argument("rate_segment: non-finite return");
    const double raw = std::floor(true_return * cfg.n_classes / cfg.max_reward);
    return static_cast<int>(std::clamp(raw, 0.0, static_cast<double>(cfg.n_classes - 1)));
}

RatingDataset rate_buffer(const SegmentBuffer& buffer, const RaterConfig& cfg, int budget, Rng& rng) {
    cfg.validate();
    if (budget < 1) throw std::invalid_argument("rate_buffer: budget must be >= 1");
    if (buffer.size() < static_cast<std::size_t>(budget)) {
        throw std::invalid_argument("rate_buffer: buffer smaller than rating budget");
    }

    // Partial Fisher-Yates: the first `budget` entries are a uniform sample
    // without replacement.
    std::vector<std::size_t> idx(buffer.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < budget; ++i) {
        const std::size_t j = i + rng.uniform_int(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }

    RatingDataset ds;
    ds.n_classes = cfg.n_classes;
    ds.segments.reserve(budget);
    ds.labels.reserve(budget);
    for (int i = 0; i < budget; ++i) {
        ds.segments.push_back(buffer.segment(idx[i]));
        ds.labels.push_back(rate_segment(buffer.true_return(idx[i]), cfg));
    }
    ds.validate();
    return ds;
}

}  // namespace rbrl
