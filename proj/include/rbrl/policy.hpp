// PPO over a learned (or entropy) reward, with the rating-phase protocol:
// phase 1 trains on an entropy exploration reward while buffering segments;
// after rating and reward-model training, phase 2 continues on the predicted
// reward only. Evaluation always reports TRUE episodic reward; the learner
// never consumes it (the rollout reward comes from a RewardFn, true rewards
// reach only the phase-1 segment observer and the evaluator).
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbrl/envs.hpp"
#include "rbrl/mlp.hpp"
#include "rbrl/optim.hpp"
#include "rbrl/rater.hpp"
#include "rbrl/reward_learning.hpp"
#include "rbrl/rng.hpp"

namespace rbrl {

struct PpoConfig {
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip_epsilon = 0.2;
    int epochs_per_update = 10;
    int rollout_length = 2048;
    int minibatch_size = 64;
    MlpSpec policy_mlp;  // input/output dims are filled from the env spec
    MlpSpec value_mlp;
    OptimizerConfig optimizer;
    int exploration_steps = 32000;
    double init_log_std = 0.0;
    double entropy_coef = 0.0;
    bool normalize_advantages = true;
    double max_grad_norm = 0.5;  // global-norm gradient clip per group; 0 disables
    double target_kl = 0.02;     // approx-KL early stop per update; 0 disables
    int eval_interval = 4000;
    int eval_episodes = 10;
    int reward_refit_interval = 0;  // 0 = single reward-model fit after rating

    void validate() const;
};

// Returns a PpoConfig with desk-scale policy/value networks (2x64 tanh).
PpoConfig default_ppo_config();

class GaussianPolicy {
public:
    GaussianPolicy(MlpSpec mean_spec, double init_log_std, std::uint64_t init_seed);

    int action_dim() const { return mean_net_.spec().output_dim; }
    const Mlp& mean_net() const { return mean_net_; }
    Mlp& mean_net() { return mean_net_; }
    const std::vector<double>& log_std() const { return log_std_; }
    std::vector<double>& log_std() { return log_std_; }

    // Deterministic action (evaluation).
    std::vector<double> mean_action(std::span<const double> state) const;
    // Sampled raw action (training); the caller clips to env bounds.
    std::vector<double> sample(std::span<const double> state, Rng& rng) const;
    double log_prob(std::span<const double> state, std::span<const double> action) const;
    // Differential entropy of the action distribution; state-independent
    // because the log-std is.
    double entropy() const;

private:
    Mlp mean_net_;
    std::vector<double> log_std_;
};

double entropy_reward(const GaussianPolicy& policy, std::span<const double> state);

// Predicted reward for one transition: a single evaluation-mode forward pass
// on concat(state, action).
double predicted_reward(const Mlp& reward_model, const Transition& transition);

// Learning reward for one step; deliberately has no access to true rewards.
using RewardFn =
    std::function<double(std::span<const double> state, std::span<const double> action,
                         std::span<const double> next_state)>;
// Per-step observer of full transitions (used in phase 1 to buffer segments).
using TransitionObserver = std::function<void(const Transition&)>;

struct Rollout {
    std::vector<std::vector<double>> states;
    std::vector<std::vector<double>> actions_raw;  // pre-clip, for likelihoods
    std::vector<std::vector<double>> actions_env;  // clipped, as executed
    std::vector<double> rewards;
    std::vector<double> values;
    std::vector<double> logprobs;
    std::vector<std::uint8_t> dones;  // episode ended at this step
    double bootstrap_value = 0.0;     // V(s_T), masked by dones.back()

    std::size_t size() const { return states.size(); }
};

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

GaeResult compute_gae(const Rollout& rollout, double gamma, double lambda);

double discounted_return(std::span<const double> rewards, double gamma);

struct PpoDiagnostics {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
};

// One PPO agent: Gaussian policy + separate value network, each with its own
// optimizer state. A single agent is single-threaded; independent agents are
// safe to run in parallel.
class PpoAgent {
public:
    PpoAgent(const EnvSpec& env_spec, const PpoConfig& cfg, std::uint64_t seed);

    const PpoConfig& config() const { return cfg_; }
    GaussianPolicy& policy() { return policy_; }
    const GaussianPolicy& policy() const { return policy_; }
    Mlp& value_net() { return value_; }

    // Collects cfg.rollout_length steps, continuing episodes across calls.
    Rollout collect_rollout(const Env& env, const RewardFn& reward, Rng& env_rng, Rng& action_rng,
                            const TransitionObserver& observer = nullptr);

    // Per-phase tweaks applied on top of the base config for one update.
    struct PhaseOverride {
        // Value function trains, policy stays put. Used for the entropy
        // exploration phase: its reward is constant per step, so the policy
        // gradient is zero in expectation and any update is estimation noise
        // that would drift the policy and bias the gathered segments.
        bool freeze_policy = false;
    };

    // Clipped-surrogate update; rejects non-finite advantages.
    PpoDiagnostics update(const Rollout& rollout, Rng& shuffle_rng,
                          const PhaseOverride* override_cfg = nullptr);

    // Reinitializes the value network and every optimizer moment. Used at the
    // exploration -> predicted-reward boundary, where the reward scale changes
    // discontinuously and stale value estimates would drown the advantages.
    void reset_value_and_optimizers(std::uint64_t seed);

    std::vector<double> act_deterministic(std::span<const double> state) const;

private:
    void reset_episode(const Env& env, Rng& env_rng);

    PpoConfig cfg_;
    GaussianPolicy policy_;
    Mlp value_;
    OptimizerState policy_opt_;
    OptimizerState log_std_opt_;
    OptimizerState value_opt_;
    std::vector<double> action_low_;
    std::vector<double> action_high_;
    std::vector<double> episode_state_;
    int episode_t_ = 0;
    bool episode_live_ = false;
};

struct EvalPoint {
    long step = 0;
    double mean_true_return = 0.0;
    double stderr_ = 0.0;  // over eval episodes
    int phase = 1;
};

struct RunRecord {
    std::vector<EvalPoint> curve;
    std::vector<double> reward_loss_history;
    bool completed = true;
    std::string error;

    void write_curve_csv(std::ostream& out) const;
    static std::vector<EvalPoint> read_curve_csv(std::istream& in);
};

// Mean/stderr of true episodic return over deterministic-policy episodes.
EvalPoint evaluate_policy(const Env& env, const PpoAgent& agent, int episodes, long step, int phase,
                          Rng& rng);

// Full protocol. Phase 1: entropy-reward PPO for exploration_steps while
// buffering length-L segments. Then: rate `budget` segments, train the reward
// model, and continue PPO on the predicted reward. The curve reports true
// episodic reward every eval_interval steps. Reward-model divergence aborts
// with a partial record.
RunRecord run_rbrl(const Env& env, const RaterConfig& rater_cfg, const RewardTrainerConfig& reward_cfg,
                   const PpoConfig& ppo_cfg, long total_steps, std::uint64_t seed,
                   int segment_length = 50);

}  // namespace rbrl
