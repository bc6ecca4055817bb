#include "rbrl/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rbrl {

std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::Adam ? "adam" : "adamw";
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "adamw") return OptimizerKind::AdamW;
    throw std::invalid_argument("unknown optimizer kind: " + s);
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("OptimizerConfig: learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("OptimizerConfig: beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("OptimizerConfig: beta2 must be in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("OptimizerConfig: epsilon must be > 0");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("OptimizerConfig: weight_decay must be >= 0");
}

OptimizerConfig make_adam(double learning_rate) {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::Adam;
    cfg.learning_rate = learning_rate;
    cfg.weight_decay = 0.0;
    return cfg;
}

OptimizerConfig make_adamw(double learning_rate) {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::AdamW;
    cfg.learning_rate = learning_rate;
    cfg.weight_decay = 1e-2;
    return cfg;
}

void optimizer_step(std::vector<double>& params, std::span<const double> grads,
                    const OptimizerConfig& config, OptimizerState& state) {
    config.validate();
    const std::size_t n = params.size();
    if (grads.size() != n) throw std::invalid_argument("optimizer_step: gradient size mismatch");
    if (state.m.size() != n || state.v.size() != n) {
        throw std::invalid_argument("optimizer_step: state size mismatch");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) {
            throw std::invalid_argument("optimizer_step: non-finite gradient, step rejected");
        }
    }

    state.t += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
    const double lr = config.learning_rate;
    const bool decoupled = config.kind == OptimizerKind::AdamW && config.weight_decay > 0.0;

    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        double update = lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
        if (decoupled) update += lr * config.weight_decay * params[i];
        params[i] -= update;
    }
}

}  // namespace rbrl
