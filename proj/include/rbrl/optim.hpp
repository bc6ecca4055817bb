// Adam and AdamW over flat parameter vectors. AdamW applies the decoupled
// decay term -lr*weight_decay*theta directly to the parameters; the decay is
// never added to the gradient.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rbrl {

enum class OptimizerKind { Adam, AdamW };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& s);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;

    void validate() const;

    bool operator==(const OptimizerConfig&) const = default;
};

OptimizerConfig make_adam(double learning_rate);
// Canonical AdamW default weight_decay = 1e-2.
OptimizerConfig make_adamw(double learning_rate);

struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;

    OptimizerState() = default;
    explicit OptimizerState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected update step. Rejects non-finite gradients before touching
// params or state.
void optimizer_step(std::vector<double>& params, std::span<const double> grads,
                    const OptimizerConfig& config, OptimizerState& state);

}  // namespace rbrl
