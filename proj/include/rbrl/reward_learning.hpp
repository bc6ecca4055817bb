// Rating-based reward learning: segment returns, per-batch min/max
// normalization, count-matched class bounds, the two class-probability
// functions (distance-to-interval and distance-to-midpoint), cross-entropy
// loss with gradients through the whole pipeline (bounds frozen), and the
// reward-model training loop.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rbrl/mlp.hpp"
#include "rbrl/optim.hpp"

namespace rbrl {

// Fixed-length run of (state, action) pairs; the unit that receives a rating.
struct Segment {
    std::vector<std::vector<double>> states;
    std::vector<std::vector<double>> actions;

    std::size_t length() const { return states.size(); }
    void validate() const;
};

struct RatingDataset {
    std::vector<Segment> segments;
    std::vector<int> labels;  // class of each segment, in {0, ..., n_classes-1}
    int n_classes = 2;

    std::size_t size() const { return segments.size(); }
    std::vector<int> class_counts() const;
    int state_dim() const;
    int action_dim() const;
    void validate() const;

    // JSON-lines, versioned: first line is a header record
    //   {"type":"header","version":1,"n_classes":..,"segment_length":..,
    //    "state_dim":..,"action_dim":..}
    // then one record per segment: {"states":[[..]..],"actions":[[..]..],"label":..}
    void save_jsonl(const std::string& path) const;
    static RatingDataset load_jsonl(const std::string& path);
};

// Normalized return thresholds [R0..Rn], R0 = 0, Rn = 1, non-decreasing.
// Class i owns [bounds[i], bounds[i+1]) with the last interval closed.
struct ClassBounds {
    std::vector<double> bounds;

    int n_classes() const { return static_cast<int>(bounds.size()) - 1; }
    double lower(int i) const { return bounds[i]; }
    double upper(int i) const { return bounds[i + 1]; }
    double midpoint(int i) const { return 0.5 * (bounds[i] + bounds[i + 1]); }
    void validate() const;
};

enum class QVariant { Original, Midpoint };

std::string to_string(QVariant v);
QVariant q_variant_from_string(const std::string& s);

struct QConfig {
    QVariant variant = QVariant::Original;
    double k = 1.0;  // confidence index

    void validate() const;
    bool operator==(const QConfig&) const = default;
};

struct RewardTrainerConfig {
    int batch_size = 50;
    int epochs = 30;
    OptimizerConfig optimizer;
    QConfig q;
    MlpSpec mlp;

    void validate() const;
};

// Cumulative predicted reward of a segment (evaluation mode, no dropout).
double segment_return(const Mlp& model, const Segment& segment);
// Training-mode variant: one dropout mask per step.
double segment_return(const Mlp& model, const Segment& segment,
                      const std::vector<DropoutMask>& step_masks);

// Min/max normalization to [0,1]; an all-equal batch maps to all 0.5.
std::vector<double> normalize_batch(std::span<const double> returns);

// Bounds such that per-class sample counts are reproduced: interior bound i is
// the midpoint between the c_i-th and (c_i+1)-th smallest normalized returns
// (c_i = cumulative count of classes below i). Empty classes yield coincident
// bounds.
ClassBounds estimate_bounds(std::span<const double> normalized_returns, std::span<const int> labels,
                            int n_classes);

// Softmax class probabilities, computed in log space with max subtraction.
// Original: logits -k*(r - R_i)*(r - R_{i+1}); Midpoint: -k*(r - mid_i)^2.
std::vector<double> class_probabilities(double r_tilde, const ClassBounds& bounds, const QConfig& q);

// Half-open value binning [R_i, R_{i+1}), last interval closed.
std::vector<int> bin_counts(std::span<const double> values, const ClassBounds& bounds);
// Order-respecting recount: true iff the sorted values split into consecutive
// runs of the target sizes with run i inside the closed interval
// [bounds[i], bounds[i+1]]. Equivalent to bin_counts(..) == target when no
// value sits exactly on an interior bound; ties straddling a bound (which
// coincides with the tied value by construction) may settle on either side.
bool counts_reproducible(std::span<const double> values, const ClassBounds& bounds,
                         std::span<const int> target_counts);

struct CrossEntropyResult {
    double loss = 0.0;                  // -sum_sigma log Q_sigma(label)
    std::vector<double> grad;           // d loss / d model params, flat
    std::vector<double> returns;        // raw segment returns
    std::vector<double> normalized;     // normalized returns
    std::vector<double> label_probs;    // Q_sigma(label) per segment
};

// Loss and gradient over a batch. Bounds are treated as constants
// (stop-gradient); the gradient flows through Q, through the batch
// normalization (min/max indices fixed), into the per-step rewards.
// masks, when given, holds one mask per step per segment (training mode).
CrossEntropyResult cross_entropy_loss(std::span<const Segment> batch, std::span<const int> labels,
                                      const Mlp& model, const ClassBounds& bounds, const QConfig& q,
                                      const std::vector<std::vector<DropoutMask>>* masks = nullptr);

struct RewardTrainResult {
    Mlp model;
    std::vector<double> loss_history;  // mean cross-entropy per segment, per epoch
};

// Per-batch protocol: draw masks, compute returns, normalize, estimate bounds
// from this batch's counts, then take one optimizer step on the mean loss.
// Throws on divergence (non-finite loss).
RewardTrainResult train_reward_model(const RatingDataset& dataset, const RewardTrainerConfig& cfg,
                                     std::uint64_t seed);

}  // namespace rbrl
