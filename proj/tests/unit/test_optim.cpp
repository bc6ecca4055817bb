#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rbrl/optim.hpp"
#include "rbrl/rng.hpp"

using namespace rbrl;

TEST_CASE("one Adam step on a scalar matches the hand computation") {
    // theta=1, grad=1, lr=0.001, defaults: m_hat = v_hat = 1 after bias
    // correction, so theta' = 1 - 0.001 * 1/(1 + 1e-8).
    std::vector<double> theta{1.0};
    OptimizerState state(1);
    optimizer_step(theta, std::vector<double>{1.0}, make_adam(0.001), state);
    CHECK(theta[0] == doctest::Approx(0.99900).epsilon(1e-5));
    CHECK(theta[0] == doctest::Approx(1.0 - 0.001 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(state.t == 1);
}

TEST_CASE("one AdamW step adds the decoupled decay term") {
    std::vector<double> theta{1.0};
    OptimizerConfig cfg = make_adamw(0.001);
    cfg.weight_decay = 0.01;
    OptimizerState state(1);
    optimizer_step(theta, std::vector<double>{1.0}, cfg, state);
    CHECK(theta[0] == doctest::Approx(0.99899).epsilon(1e-5));
    CHECK(theta[0] == doctest::Approx(1.0 - 0.001 / (1.0 + 1e-8) - 0.001 * 0.01 * 1.0).epsilon(1e-15));
}

TEST_CASE("AdamW with zero weight decay tracks Adam over 1000 steps") {
    OptimizerConfig adam = make_adam(0.01);
    OptimizerConfig adamw = make_adamw(0.01);
    adamw.weight_decay = 0.0;

    std::vector<double> a(8, 0.5), b(8, 0.5);
    OptimizerState sa(8), sb(8);
    Rng rng(42);
    std::vector<double> grad(8);
    for (int step = 0; step < 1000; ++step) {
        for (double& g : grad) g = rng.uniform(-1, 1);
        optimizer_step(a, grad, adam, sa);
        optimizer_step(b, grad, adamw, sb);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    }
}

TEST_CASE("non-finite gradients reject the step and leave everything unchanged") {
    std::vector<double> theta{1.0, 2.0};
    OptimizerState state(2);
    optimizer_step(theta, std::vector<double>{0.1, 0.1}, make_adam(0.01), state);
    const std::vector<double> theta_before = theta;
    const std::vector<double> m_before = state.m;
    const auto t_before = state.t;

    const std::vector<double> bad{0.1, std::nan("")};
    CHECK_THROWS_AS(optimizer_step(theta, bad, make_adam(0.01), state), std::invalid_argument);
    CHECK(theta == theta_before);
    CHECK(state.m == m_before);
    CHECK(state.t == t_before);

    const std::vector<double> inf_grad{std::numeric_limits<double>::infinity(), 0.0};
    CHECK_THROWS_AS(optimizer_step(theta, inf_grad, make_adam(0.01), state), std::invalid_argument);
    CHECK(theta == theta_before);
}

TEST_CASE("optimizer config validation") {
    OptimizerConfig cfg = make_adam(0.0);
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = make_adam(1e-3);
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = make_adam(1e-3);
    cfg.weight_decay = -0.1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK(make_adamw(1e-3).weight_decay == doctest::Approx(1e-2));
}

TEST_CASE("step counter increments by exactly one per call") {
    std::vector<double> theta{0.0};
    OptimizerState state(1);
    for (int i = 1; i <= 5; ++i) {
        optimizer_step(theta, std::vector<double>{0.3}, make_adam(0.001), state);
        CHECK(state.t == i);
    }
}
