#include "rbrl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rbrl/experiment.hpp"

namespace rbrl {

namespace {

void check_finite_vec(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + " is non-finite");
    }
}

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

// Point mass on a 2-D plane reaching the origin. Drag is strong enough that a
// random policy lingers near its start, so start-position diversity spreads
// segment returns over the whole range, and the slow velocity response keeps
// trained policies inside the state region random collection covers.
//   state  = [px, py, vx, vy], action = [ax, ay] in [-1, 1]^2
//   v' = v + dt * (accel * a - drag * v), each component clamped to [-1, 1]
//   p' = p + dt * v',                     each component clamped to [-2, 2]
//   dt = 0.1, accel = 0.5, drag = 2
//   reward = 1 - min(1, ||p'||)
//   reset: p ~ init_noise * U(-1, 1)^2, v = 0
class PointMassEnv final : public Env {
public:
    explicit PointMassEnv(double init_noise)
        : Env({.name = "point_mass",
               .state_dim = 4,
               .action_dim = 2,
               .horizon = 200,
               .action_low = {-1.0, -1.0},
               .action_high = {1.0, 1.0},
               .init_noise = init_noise}) {}

    std::vector<double> reset(Rng& rng) const override {
        const double s = spec_.init_noise;
        return {s * rng.uniform(-1.0, 1.0), s * rng.uniform(-1.0, 1.0), 0.0, 0.0};
    }

protected:
    Transition do_step(std::span<const double> state, std::span<const double> action,
                       Rng& /*rng*/) const override {
        constexpr double dt = 0.1, accel = 0.5, drag = 2.0;
        Transition tr;
        tr.next_state.resize(4);
        for (int d = 0; d < 2; ++d) {
            const double v =
                clampd(state[2 + d] + dt * (accel * action[d] - drag * state[2 + d]), -1.0, 1.0);
            tr.next_state[2 + d] = v;
            tr.next_state[d] = clampd(state[d] + dt * v, -2.0, 2.0);
        }
        const double dist = std::hypot(tr.next_state[0], tr.next_state[1]);
        tr.true_reward = 1.0 - std::min(1.0, dist);
        return tr;
    }
};

// Pole swing-up. Angle theta is measured from upright (theta = pi hangs down).
//   state  = [cos(theta), sin(theta), omega], action = [u] in [-1, 1]
//   omega' = clamp(omega + dt * (1.5 * g / l * sin(theta) + 3 / (m l^2) * torque * u), -8, 8)
//   theta' = theta + dt * omega'
//   reward = (1 + cos(theta')) / 2
//   reset: theta = pi + init_noise * U(-0.5, 0.5), omega = init_noise * U(-0.5, 0.5)
class CartSwingEnv final : public Env {
public:
    explicit CartSwingEnv(double init_noise)
        : Env({.name = "cart_swing",
               .state_dim = 3,
               .action_dim = 1,
               .horizon = 200,
               .action_low = {-1.0},
               .action_high = {1.0},
               .init_noise = init_noise}) {}

    std::vector<double> reset(Rng& rng) const override {
        const double s = spec_.init_noise;
        const double theta = 3.14159265358979323846 + s * rng.uniform(-0.5, 0.5);
        const double omega = s * rng.uniform(-0.5, 0.5);
        return {std::cos(theta), std::sin(theta), omega};
    }

protected:
    Transition do_step(std::span<const double> state, std::span<const double> action,
                       Rng& /*rng*/) const override {
        constexpr double dt = 0.05, g = 10.0, torque = 2.0;
        const double theta = std::atan2(state[1], state[0]);
        const double omega = clampd(state[2] + dt * (1.5 * g * std::sin(theta) + 3.0 * torque * action[0]),
                                    -8.0, 8.0);
        const double theta_next = theta + dt * omega;
        Transition tr;
        tr.next_state = {std::cos(theta_next), std::sin(theta_next), omega};
        tr.true_reward = 0.5 * (1.0 + std::cos(theta_next));
        return tr;
    }
};

// Velocity tracking on a line.
//   state  = [v, v_target], action = [a] in [-1, 1]
//   v' = clamp(v + dt * (accel * a - drag * v), -4, 4)
//   reward = 1 - min(1, |v' - v_target|)
//   reset: v = init_noise * U(-0.5, 0.5), v_target = 1 + init_noise * U(-0.5, 0.5)
class LineRunnerEnv final : public Env {
public:
    explicit LineRunnerEnv(double init_noise)
        : Env({.name = "line_runner",
               .state_dim = 2,
               .action_dim = 1,
               .horizon = 200,
               .action_low = {-1.0},
               .action_high = {1.0},
               .init_noise = init_noise}) {}

    std::vector<double> reset(Rng& rng) const override {
        const double s = spec_.init_noise;
        return {s * rng.uniform(-0.5, 0.5), 1.0 + s * rng.uniform(-0.5, 0.5)};
    }

protected:
    Transition do_step(std::span<const double> state, std::span<const double> action,
                       Rng& /*rng*/) const override {
        constexpr double dt = 0.1, accel = 2.0, drag = 0.5;
        Transition tr;
        const double v = clampd(state[0] + dt * (accel * action[0] - drag * state[0]), -4.0, 4.0);
        tr.next_state = {v, state[1]};
        tr.true_reward = 1.0 - std::min(1.0, std::abs(v - state[1]));
        return tr;
    }
};

}  // namespace

Transition Env::step(std::span<const double> state, std::span<const double> action, Rng& rng) const {
    if (static_cast<int>(state.size()) != spec_.state_dim) {
        throw std::invalid_argument("Env::step: state dimension mismatch");
    }
    if (static_cast<int>(action.size()) != spec_.action_dim) {
        throw std::invalid_argument("Env::step: action dimension mismatch");
    }
    check_finite_vec(state, "Env::step: state");
    check_finite_vec(action, "Env::step: action");

    std::vector<double> clipped(action.begin(), action.end());
    for (int d = 0; d < spec_.action_dim; ++d) {
        clipped[d] = clampd(clipped[d], spec_.action_low[d], spec_.action_high[d]);
    }
    Transition tr = do_step(state, clipped, rng);
    tr.state.assign(state.begin(), state.end());
    tr.action = std::move(clipped);
    return tr;
}

std::unique_ptr<Env> make_env(const std::string& name, double init_noise) {
    if (name == "point_mass") return std::make_unique<PointMassEnv>(init_noise);
    if (name == "cart_swing") return std::make_unique<CartSwingEnv>(init_noise);
    if (name == "line_runner") return std::make_unique<LineRunnerEnv>(init_noise);
    throw std::invalid_argument("unknown environment: " + name);
}

std::vector<std::string> env_names() { return {"point_mass", "cart_swing", "line_runner"}; }

std::vector<double> random_policy_action(const EnvSpec& spec, Rng& rng) {
    std::vector<double> a(spec.action_dim);
    for (int d = 0; d < spec.action_dim; ++d) a[d] = rng.uniform(spec.action_low[d], spec.action_high[d]);
    return a;
}

SegmentBuffer::SegmentBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("SegmentBuffer: capacity must be > 0");
}

void SegmentBuffer::push(Segment segment, double true_return) {
    if (segments_.size() < capacity_) {
        segments_.push_back(std::move(segment));
        returns_.push_back(true_return);
    } else {
        segments_[head_] = std::move(segment);
        returns_[head_] = true_return;
        head_ = (head_ + 1) % capacity_;
    }
}

SegmentBuffer collect_segments(const Env& env, const PolicyFn& policy, int count, int segment_length,
                               Rng& rng) {
    if (count < 1) throw std::invalid_argument("collect_segments: count must be >= 1");
    if (segment_length < 1) throw std::invalid_argument("collect_segments: segment_length must be >= 1");

    SegmentBuffer buffer(static_cast<std::size_t>(count));
    Segment current;
    double current_return = 0.0;
    std::vector<double> state = env.reset(rng);
    int t_in_episode = 0;

    while (buffer.size() < static_cast<std::size_t>(count)) {
        const std::vector<double> action = policy(state, rng);
        Transition tr = env.step(state, action, rng);
        current.states.push_back(tr.state);
        current.actions.push_back(tr.action);
        current_return += tr.true_reward;

        if (current.length() == static_cast<std::size_t>(segment_length)) {
            buffer.push(std::move(current), current_return);
            current = Segment{};
            current_return = 0.0;
        }

        ++t_in_episode;
        if (t_in_episode >= env.spec().horizon) {
            state = env.reset(rng);
            t_in_episode = 0;
            current = Segment{};  // drop partial leftovers at an episode end
            current_return = 0.0;
        } else {
            state = std::move(tr.next_state);
        }
    }
    return buffer;
}

void write_trace_csv(const Env& env, const PolicyFn& policy, int steps, Rng& rng, std::ostream& out) {
    const EnvSpec& spec = env.spec();
    out << "t";
    for (int d = 0; d < spec.state_dim; ++d) out << ",s" << d;
    for (int d = 0; d < spec.action_dim; ++d) out << ",a" << d;
    out << ",true_reward\n";

    std::vector<double> state = env.reset(rng);
    int t_in_episode = 0;
    for (int t = 0; t < steps; ++t) {
        const std::vector<double> action = policy(state, rng);
        Transition tr = env.step(state, action, rng);
        out << t;
        for (double v : tr.state) out << "," << format_double(v);
        for (double v : tr.action) out << "," << format_double(v);
        out << "," << format_double(tr.true_reward) << "\n";
        ++t_in_episode;
        if (t_in_episode >= spec.horizon) {
            state = env.reset(rng);
            t_in_episode = 0;
        } else {
            state = std::move(tr.next_state);
        }
    }
}

}  // namespace rbrl
