// Desk-scale continuous-control environments with known ground-truth reward.
// Dynamics are explicit difference equations (documented per environment in
// envs.cpp); per-step true reward is bounded in [0, 1]. Environments are
// stateless objects: the caller owns the state vector and the rng stream, so
// next_state depends only on (state, action, rng draw).
#pragma once

#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rbrl/reward_learning.hpp"
#include "rbrl/rng.hpp"

namespace rbrl {

struct EnvSpec {
    std::string name;
    int state_dim = 0;
    int action_dim = 0;
    int horizon = 200;
    std::vector<double> action_low;
    std::vector<double> action_high;
    // Scales the randomized part of reset(); 0 makes the environment fully
    // deterministic.
    double init_noise = 1.0;
};

struct Transition {
    std::vector<double> state;
    std::vector<double> action;  // as executed (clipped to bounds)
    std::vector<double> next_state;
    double true_reward = 0.0;
};

class Env {
public:
    virtual ~Env() = default;

    const EnvSpec& spec() const { return spec_; }

    virtual std::vector<double> reset(Rng& rng) const = 0;

    // Clips the action to bounds, rejects non-finite state/action.
    Transition step(std::span<const double> state, std::span<const double> action, Rng& rng) const;

protected:
    explicit Env(EnvSpec spec) : spec_(std::move(spec)) {}
    virtual Transition do_step(std::span<const double> state, std::span<const double> action,
                               Rng& rng) const = 0;

    EnvSpec spec_;
};

// Registry: "point_mass", "cart_swing", "line_runner".
std::unique_ptr<Env> make_env(const std::string& name, double init_noise = 1.0);
std::vector<std::string> env_names();

using PolicyFn = std::function<std::vector<double>(std::span<const double> state, Rng& rng)>;

std::vector<double> random_policy_action(const EnvSpec& spec, Rng& rng);

// Ring buffer of length-L segments tagged with their true cumulative reward.
class SegmentBuffer {
public:
    explicit SegmentBuffer(std::size_t capacity);

    void push(Segment segment, double true_return);
    std::size_t size() const { return segments_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Segment& segment(std::size_t i) const { return segments_[index(i)]; }
    double true_return(std::size_t i) const { return returns_[index(i)]; }

private:
    std::size_t index(std::size_t i) const { return (head_ + i) % segments_.size(); }

    std::size_t capacity_;
    std::size_t head_ = 0;  // oldest element when full
    std::vector<Segment> segments_;
    std::vector<double> returns_;
};

// Chops policy rollouts into exactly `count` non-overlapping segments of
// length L (episodes reset at the horizon; leftover steps at an episode end
// are dropped).
SegmentBuffer collect_segments(const Env& env, const PolicyFn& policy, int count, int segment_length,
                               Rng& rng);

// Trace CSV: t,s0..s{S-1},a0..a{A-1},true_reward
void write_trace_csv(const Env& env, const PolicyFn& policy, int steps, Rng& rng, std::ostream& out);

}  // namespace rbrl
