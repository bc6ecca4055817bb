#include "rbrl/reward_learning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rbrl {

namespace {

std::vector<double> concat_step(const std::vector<double>& state, const std::vector<double>& action) {
    std::vector<double> x;
    x.reserve(state.size() + action.size());
    x.insert(x.end(), state.begin(), state.end());
    x.insert(x.end(), action.begin(), action.end());
    return x;
}

// Per-class logits of Eq-style probability functions and their derivative in
// the normalized return.
void q_logits(double r, const ClassBounds& bounds, const QConfig& q, std::vector<double>& logits,
              std::vector<double>* dlogits_dr) {
    const int n = bounds.n_classes();
    logits.resize(n);
    if (dlogits_dr != nullptr) dlogits_dr->resize(n);
    for (int i = 0; i < n; ++i) {
        const double lo = bounds.lower(i);
        const double hi = bounds.upper(i);
        if (q.variant == QVariant::Original) {
            logits[i] = -q.k * (r - lo) * (r - hi);
            if (dlogits_dr != nullptr) (*dlogits_dr)[i] = -q.k * (2.0 * r - lo - hi);
        } else {
            const double d = r - 0.5 * (lo + hi);
            logits[i] = -q.k * d * d;
            if (dlogits_dr != nullptr) (*dlogits_dr)[i] = -2.0 * q.k * d;
        }
    }
}

// Max-subtracted softmax; returns log-sum-exp of the shifted logits plus max.
double softmax_from_logits(const std::vector<double>& logits, std::vector<double>& probs) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    probs.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return mx + std::log(sum);
}

}  // namespace

void Segment::validate() const {
    if (states.empty()) throw std::invalid_argument("Segment: empty");
    if (actions.size() != states.size()) {
        throw std::invalid_argument("Segment: states/actions length mismatch");
    }
    for (std::size_t t = 0; t < states.size(); ++t) {
        if (states[t].size() != states[0].size() || actions[t].size() != actions[0].size()) {
            throw std::invalid_argument("Segment: inconsistent step dimensions");
        }
    }
}

std::vector<int> RatingDataset::class_counts() const {
    std::vector<int> counts(n_classes, 0);
    for (int label : labels) counts.at(label) += 1;
    return counts;
}

int RatingDataset::state_dim() const {
    return segments.empty() ? 0 : static_cast<int>(segments[0].states[0].size());
}

int RatingDataset::action_dim() const {
    return segments.empty() ? 0 : static_cast<int>(segments[0].actions[0].size());
}

void RatingDataset::validate() const {
    if (n_classes < 2) throw std::invalid_argument("RatingDataset: n_classes must be >= 2");
    if (labels.size() != segments.size()) {
        throw std::invalid_argument("RatingDataset: labels/segments size mismatch");
    }
    for (int label : labels) {
        if (label < 0 || label >= n_classes) throw std::invalid_argument("RatingDataset: label out of range");
    }
    for (const Segment& s : segments) {
        s.validate();
        if (s.length() != segments[0].length() || s.states[0].size() != segments[0].states[0].size() ||
            s.actions[0].size() != segments[0].actions[0].size()) {
            throw std::invalid_argument("RatingDataset: segments must share length and dims");
        }
    }
}

void RatingDataset::save_jsonl(const std::string& path) const {
    validate();
    std::ofstream f(path);
    if (!f) throw std::runtime_error("RatingDataset::save_jsonl: cannot open " + path);
    nlohmann::json header = {{"type", "header"},
                             {"version", 1},
                             {"n_classes", n_classes},
                             {"segment_length", segments.empty() ? 0 : static_cast<int>(segments[0].length())},
                             {"state_dim", state_dim()},
                             {"action_dim", action_dim()}};
    f << header.dump() << "\n";
    for (std::size_t i = 0; i < segments.size(); ++i) {
        nlohmann::json rec = {{"states", segments[i].states},
                              {"actions", segments[i].actions},
                              {"label", labels[i]}};
        f << rec.dump() << "\n";
    }
}

RatingDataset RatingDataset::load_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("RatingDataset::load_jsonl: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("RatingDataset::load_jsonl: empty file");
    const nlohmann::json header = nlohmann::json::parse(line);
    if (header.value("type", "") != "header" || header.value("version", 0) != 1) {
        throw std::runtime_error("RatingDataset::load_jsonl: unsupported format");
    }
    RatingDataset ds;
    ds.n_classes = header.at("n_classes").get<int>();
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const nlohmann::json rec = nlohmann::json::parse(line);
        Segment seg;
        seg.states = rec.at("states").get<std::vector<std::vector<double>>>();
        seg.actions = rec.at("actions").get<std::vector<std::vector<double>>>();
        ds.segments.push_back(std::move(seg));
        ds.labels.push_back(rec.at("label").get<int>());
    }
    ds.validate();
    return ds;
}

void ClassBounds::validate() const {
    if (bounds.size() < 3) throw std::invalid_argument("ClassBounds: need at least 2 classes");
    if (bounds.front() != 0.0 || bounds.back() != 1.0) {
        throw std::invalid_argument("ClassBounds: must start at 0 and end at 1");
    }
    for (std::size_t i = 1; i < bounds.size(); ++i) {
        if (!(bounds[i] >= bounds[i - 1])) throw std::invalid_argument("ClassBounds: must be non-decreasing");
    }
}

std::string to_string(QVariant v) {
    return v == QVariant::Original ? "original" : "midpoint";
}

QVariant q_variant_from_string(const std::string& s) {
    if (s == "original") return QVariant::Original;
    if (s == "midpoint") return QVariant::Midpoint;
    throw std::invalid_argument("unknown q variant: " + s);
}

void QConfig::validate() const {
    if (!(k > 0.0)) throw std::invalid_argument("QConfig: k must be > 0");
}

void RewardTrainerConfig::validate() const {
    if (batch_size < 2) throw std::invalid_argument("RewardTrainerConfig: batch_size must be >= 2");
    if (epochs < 0) throw std::invalid_argument("RewardTrainerConfig: epochs must be >= 0");
    optimizer.validate();
    q.validate();
    mlp.validate();
}

double segment_return(const Mlp& model, const Segment& segment) {
    segment.validate();
    double total = 0.0;
    for (std::size_t t = 0; t < segment.length(); ++t) {
        total += model.forward(concat_step(segment.states[t], segment.actions[t]));
    }
    return total;
}

double segment_return(const Mlp& model, const Segment& segment,
                      const std::vector<DropoutMask>& step_masks) {
    segment.validate();
    if (step_masks.size() != segment.length()) {
        throw std::invalid_argument("segment_return: one dropout mask per step required");
    }
    double total = 0.0;
    for (std::size_t t = 0; t < segment.length(); ++t) {
        total += model.forward(concat_step(segment.states[t], segment.actions[t]), &step_masks[t]);
    }
    return total;
}

std::vector<double> normalize_batch(std::span<const double> returns) {
    if (returns.empty()) throw std::invalid_argument("normalize_batch: empty batch");
    for (double r : returns) {
        if (!std::isfinite(r)) throw std::invalid_argument("normalize_batch: non-finite return");
    }
    const auto [mn_it, mx_it] = std::minmax_element(returns.begin(), returns.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<double> out(returns.size());
    if (mx == mn) {
        std::fill(out.begin(), out.end(), 0.5);
        return out;
    }
    // Divide by the range directly so min maps to exactly 0, max to exactly 1,
    // and already-normalized input is a fixed point.
    const double range = mx - mn;
    for (std::size_t i = 0; i < returns.size(); ++i) out[i] = (returns[i] - mn) / range;
    return out;
}

ClassBounds estimate_bounds(std::span<const double> normalized_returns, std::span<const int> labels,
                            int n_classes) {
    if (n_classes < 2) throw std::invalid_argument("estimate_bounds: n_classes must be >= 2");
    if (normalized_returns.size() != labels.size() || normalized_returns.empty()) {
        throw std::invalid_argument("estimate_bounds: inputs must be aligned and non-empty");
    }
    std::vector<int> counts(n_classes, 0);
    for (int label : labels) {
        if (label < 0 || label >= n_classes) throw std::invalid_argument("estimate_bounds: label out of range");
        counts[label] += 1;
    }
    std::vector<double> sorted(normalized_returns.begin(), normalized_returns.end());
    for (double r : sorted) {
        if (!(r >= 0.0 && r <= 1.0)) {
            throw std::invalid_argument("estimate_bounds: returns must be normalized to [0, 1]");
        }
    }
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();

    ClassBounds cb;
    cb.bounds.assign(n_classes + 1, 0.0);
    cb.bounds[n_classes] = 1.0;
    std::size_t cum = 0;
    for (int i = 1; i < n_classes; ++i) {
        cum += counts[i - 1];
        const double lo = cum == 0 ? 0.0 : sorted[cum - 1];
        const double hi = cum == m ? 1.0 : sorted[cum];
        cb.bounds[i] = 0.5 * (lo + hi);
    }
    cb.validate();
    return cb;
}

std::vector<double> class_probabilities(double r_tilde, const ClassBounds& bounds, const QConfig& q) {
    bounds.validate();
    q.validate();
    if (!std::isfinite(r_tilde)) throw std::invalid_argument("class_probabilities: non-finite input");
    std::vector<double> logits, probs;
    q_logits(r_tilde, bounds, q, logits, nullptr);
    softmax_from_logits(logits, probs);
    return probs;
}

std::vector<int> bin_counts(std::span<const double> values, const ClassBounds& bounds) {
    bounds.validate();
    const int n = bounds.n_classes();
    std::vector<int> counts(n, 0);
    for (double v : values) {
        int cls = n - 1;
        for (int i = 0; i < n - 1; ++i) {
            if (v < bounds.bounds[i + 1]) {
                cls = i;
                break;
            }
        }
        counts[cls] += 1;
    }
    return counts;
}

bool counts_reproducible(std::span<const double> values, const ClassBounds& bounds,
                         std::span<const int> target_counts) {
    bounds.validate();
    const int n = bounds.n_classes();
    if (static_cast<int>(target_counts.size()) != n) return false;
    std::size_t total = 0;
    for (int c : target_counts) {
        if (c < 0) return false;
        total += static_cast<std::size_t>(c);
    }
    if (total != values.size()) return false;

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::size_t idx = 0;
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < target_counts[i]; ++c, ++idx) {
            const double v = sorted[idx];
            if (v < bounds.lower(i) || v > bounds.upper(i)) return false;
        }
    }
    return true;
}

CrossEntropyResult cross_entropy_loss(std::span<const Segment> batch, std::span<const int> labels,
                                      const Mlp& model, const ClassBounds& bounds, const QConfig& q,
                                      const std::vector<std::vector<DropoutMask>>* masks) {
    bounds.validate();
    q.validate();
    const std::size_t B = batch.size();
    if (B < 2) throw std::invalid_argument("cross_entropy_loss: batch must have >= 2 segments");
    if (labels.size() != B) throw std::invalid_argument("cross_entropy_loss: labels size mismatch");
    if (masks != nullptr && masks->size() != B) {
        throw std::invalid_argument("cross_entropy_loss: masks size mismatch");
    }
    const int n = bounds.n_classes();
    for (int label : labels) {
        if (label < 0 || label >= n) throw std::invalid_argument("cross_entropy_loss: label out of range");
    }

    CrossEntropyResult res;
    res.returns.resize(B);
    res.label_probs.resize(B);
    res.grad.assign(model.param_count(), 0.0);

    // Forward every step, keeping caches for the backward pass.
    std::vector<std::vector<ForwardCache>> caches(B);
    for (std::size_t s = 0; s < B; ++s) {
        const Segment& seg = batch[s];
        seg.validate();
        if (masks != nullptr && (*masks)[s].size() != seg.length()) {
            throw std::invalid_argument("cross_entropy_loss: one mask per step required");
        }
        caches[s].resize(seg.length());
        double total = 0.0;
        for (std::size_t t = 0; t < seg.length(); ++t) {
            const DropoutMask* mask = masks != nullptr ? &(*masks)[s][t] : nullptr;
            total += model.forward(concat_step(seg.states[t], seg.actions[t]), mask, &caches[s][t]);
        }
        res.returns[s] = total;
    }

    // Normalize across the batch; min/max indices are fixed for the backward
    // pass (piecewise-linear subgradient).
    const auto [mn_it, mx_it] = std::minmax_element(res.returns.begin(), res.returns.end());
    const std::size_t argmin = static_cast<std::size_t>(mn_it - res.returns.begin());
    const std::size_t argmax = static_cast<std::size_t>(mx_it - res.returns.begin());
    const double range = *mx_it - *mn_it;
    res.normalized = normalize_batch(res.returns);

    // Loss and dL/dR~ per segment; bounds are constants here.
    std::vector<double> g(B, 0.0);
    std::vector<double> logits, probs, dlogits;
    for (std::size_t s = 0; s < B; ++s) {
        q_logits(res.normalized[s], bounds, q, logits, &dlogits);
        const double lse = softmax_from_logits(logits, probs);
        res.loss += lse - logits[labels[s]];
        res.label_probs[s] = probs[labels[s]];
        double gs = 0.0;
        for (int j = 0; j < n; ++j) {
            const double dlogit = probs[j] - (j == labels[s] ? 1.0 : 0.0);
            gs += dlogit * dlogits[j];
        }
        g[s] = gs;
    }

    // dL/dR_hat through the normalization. For R~ = (R - R_p) / (R_q - R_p):
    //   dL/dR_tau = [g_tau - 1{tau=p}(S - W) - 1{tau=q} W] / range,
    // with S = sum g_s and W = sum g_s R~_s. A degenerate batch (range 0) is
    // constant under normalization, so the gradient is zero.
    std::vector<double> upstream(B, 0.0);
    if (range > 0.0) {
        double S = 0.0, W = 0.0;
        for (std::size_t s = 0; s < B; ++s) {
            S += g[s];
            W += g[s] * res.normalized[s];
        }
        for (std::size_t s = 0; s < B; ++s) {
            double u = g[s];
            if (s == argmin) u -= S - W;
            if (s == argmax) u -= W;
            upstream[s] = u / range;
        }
    }

    for (std::size_t s = 0; s < B; ++s) {
        if (upstream[s] == 0.0) continue;
        const double u[1] = {upstream[s]};
        for (std::size_t t = 0; t < caches[s].size(); ++t) {
            model.backward_into(caches[s][t], std::span<const double>(u, 1), res.grad);
        }
    }
    return res;
}

RewardTrainResult train_reward_model(const RatingDataset& dataset, const RewardTrainerConfig& cfg,
                                     std::uint64_t seed) {
    dataset.validate();
    cfg.validate();
    if (dataset.size() == 0) throw std::invalid_argument("train_reward_model: empty dataset");
    if (static_cast<std::size_t>(cfg.batch_size) > dataset.size()) {
        throw std::invalid_argument("train_reward_model: batch_size exceeds dataset size");
    }
    MlpSpec mlp_spec = cfg.mlp;
    const int expected_input = dataset.state_dim() + dataset.action_dim();
    if (mlp_spec.input_dim != expected_input) {
        throw std::invalid_argument("train_reward_model: mlp input_dim != state_dim + action_dim");
    }
    if (mlp_spec.output_dim != 1) {
        throw std::invalid_argument("train_reward_model: reward model must have output_dim 1");
    }

    RewardTrainResult result;
    result.model = Mlp(mlp_spec, split_seed(seed, 0));
    Rng shuffle_rng(split_seed(seed, 1));
    Rng mask_rng(split_seed(seed, 2));
    OptimizerState opt_state(result.model.param_count());

    const std::size_t N = dataset.size();
    const bool use_dropout = mlp_spec.dropout_rate > 0.0;
    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the dedicated stream.
        for (std::size_t i = N - 1; i > 0; --i) {
            const std::size_t j = shuffle_rng.uniform_int(i + 1);
            std::swap(perm[i], perm[j]);
        }
        double epoch_loss = 0.0;
        std::size_t epoch_segments = 0;
        for (std::size_t start = 0; start < N; start += cfg.batch_size) {
            const std::size_t end = std::min(N, start + static_cast<std::size_t>(cfg.batch_size));
            const std::size_t B = end - start;
            if (B < 2) break;  // tail too small to normalize

            std::vector<Segment> batch(B);
            std::vector<int> labels(B);
            for (std::size_t i = 0; i < B; ++i) {
                batch[i] = dataset.segments[perm[start + i]];
                labels[i] = dataset.labels[perm[start + i]];
            }

            std::vector<std::vector<DropoutMask>> masks;
            const std::vector<std::vector<DropoutMask>>* masks_ptr = nullptr;
            if (use_dropout) {
                masks.resize(B);
                for (std::size_t i = 0; i < B; ++i) {
                    masks[i].resize(batch[i].length());
                    for (auto& m : masks[i]) m = draw_dropout_mask(mlp_spec, mask_rng);
                }
                masks_ptr = &masks;
            }

            // Bounds from this batch's normalized returns (same masks), then
            // one step on the mean loss.
            std::vector<double> returns(B);
            for (std::size_t i = 0; i < B; ++i) {
                returns[i] = use_dropout ? segment_return(result.model, batch[i], masks[i])
                                         : segment_return(result.model, batch[i]);
            }
            const ClassBounds bounds =
                estimate_bounds(normalize_batch(returns), labels, dataset.n_classes);

            CrossEntropyResult ce =
                cross_entropy_loss(batch, labels, result.model, bounds, cfg.q, masks_ptr);
            if (!std::isfinite(ce.loss)) {
                throw std::runtime_error("train_reward_model: diverged (non-finite loss) at epoch " +
                                         std::to_string(epoch));
            }
            const double scale = 1.0 / static_cast<double>(B);
            for (double& gv : ce.grad) gv *= scale;
            optimizer_step(result.model.mutable_params(), ce.grad, cfg.optimizer, opt_state);

            epoch_loss += ce.loss;
            epoch_segments += B;
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(epoch_segments));
    }
    return result;
}

}  // namespace rbrl
