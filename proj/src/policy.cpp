#include "rbrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rbrl/experiment.hpp"

namespace rbrl {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

void clip_global_norm(std::span<double> grads, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (double& g : grads) g *= scale;
    }
}

}  // namespace

void PpoConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("PpoConfig: gamma must be in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
        throw std::invalid_argument("PpoConfig: gae_lambda must be in [0, 1]");
    }
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
        throw std::invalid_argument("PpoConfig: clip_epsilon must be in (0, 1)");
    }
    if (epochs_per_update < 1) throw std::invalid_argument("PpoConfig: epochs_per_update must be >= 1");
    if (rollout_length < 1) throw std::invalid_argument("PpoConfig: rollout_length must be >= 1");
    if (minibatch_size < 1) throw std::invalid_argument("PpoConfig: minibatch_size must be >= 1");
    if (exploration_steps < 0) throw std::invalid_argument("PpoConfig: exploration_steps must be >= 0");
    if (eval_interval < 1) throw std::invalid_argument("PpoConfig: eval_interval must be >= 1");
    if (eval_episodes < 1) throw std::invalid_argument("PpoConfig: eval_episodes must be >= 1");
    if (reward_refit_interval < 0) {
        throw std::invalid_argument("PpoConfig: reward_refit_interval must be >= 0");
    }
    if (max_grad_norm < 0.0) throw std::invalid_argument("PpoConfig: max_grad_norm must be >= 0");
    if (target_kl < 0.0) throw std::invalid_argument("PpoConfig: target_kl must be >= 0");
    optimizer.validate();
}

PpoConfig default_ppo_config() {
    PpoConfig cfg;
    cfg.policy_mlp = {.input_dim = 1,
                      .hidden_layers = 2,
                      .hidden_width = 64,
                      .activation = Activation::Tanh,
                      .dropout_rate = 0.0,
                      .output_squash = OutputSquash::Tanh,
                      .output_dim = 1};
    cfg.value_mlp = {.input_dim = 1,
                     .hidden_layers = 2,
                     .hidden_width = 64,
                     .activation = Activation::Tanh,
                     .dropout_rate = 0.0,
                     .output_squash = OutputSquash::None,
                     .output_dim = 1};
    cfg.optimizer = make_adam(3e-4);
    return cfg;
}

GaussianPolicy::GaussianPolicy(MlpSpec mean_spec, double init_log_std, std::uint64_t init_seed)
    : mean_net_(mean_spec, init_seed), log_std_(mean_spec.output_dim, init_log_std) {
    if (!std::isfinite(init_log_std)) throw std::invalid_argument("GaussianPolicy: log_std must be finite");
    // Small output-layer init: the initial mean action is near zero, so early
    // behavior is dominated by the exploration noise rather than a random
    // directional bias.
    const int last = mean_net_.spec().hidden_layers;
    for (int i = 0; i < mean_net_.spec().layer_out(last); ++i) {
        for (int j = 0; j < mean_net_.spec().layer_in(last); ++j) {
            mean_net_.set_w(last, i, j, 0.01 * mean_net_.w(last, i, j));
        }
    }
}

std::vector<double> GaussianPolicy::mean_action(std::span<const double> state) const {
    return mean_net_.forward_vec(state);
}

std::vector<double> GaussianPolicy::sample(std::span<const double> state, Rng& rng) const {
    std::vector<double> a = mean_net_.forward_vec(state);
    for (std::size_t d = 0; d < a.size(); ++d) a[d] += std::exp(log_std_[d]) * rng.normal();
    return a;
}

double GaussianPolicy::log_prob(std::span<const double> state, std::span<const double> action) const {
    const std::vector<double> mu = mean_net_.forward_vec(state);
    double lp = 0.0;
    for (std::size_t d = 0; d < mu.size(); ++d) {
        const double sigma = std::exp(log_std_[d]);
        const double z = (action[d] - mu[d]) / sigma;
        lp += -0.5 * z * z - log_std_[d] - 0.5 * kLog2Pi;
    }
    return lp;
}

double GaussianPolicy::entropy() const {
    double h = 0.0;
    for (double ls : log_std_) h += ls + 0.5 * (kLog2Pi + 1.0);
    return h;
}

double entropy_reward(const GaussianPolicy& policy, std::span<const double> /*state*/) {
    return policy.entropy();
}

double predicted_reward(const Mlp& reward_model, const Transition& transition) {
    std::vector<double> x;
    x.reserve(transition.state.size() + transition.action.size());
    x.insert(x.end(), transition.state.begin(), transition.state.end());
    x.insert(x.end(), transition.action.begin(), transition.action.end());
    return reward_model.forward(x);
}

GaeResult compute_gae(const Rollout& rollout, double gamma, double lambda) {
    const std::size_t T = rollout.size();
    GaeResult res;
    res.advantages.assign(T, 0.0);
    res.returns.assign(T, 0.0);
    double last_gae = 0.0;
    for (std::size_t i = T; i-- > 0;) {
        const double nonterminal = rollout.dones[i] ? 0.0 : 1.0;
        const double next_value = (i == T - 1) ? rollout.bootstrap_value : rollout.values[i + 1];
        const double delta = rollout.rewards[i] + gamma * next_value * nonterminal - rollout.values[i];
        last_gae = delta + gamma * lambda * nonterminal * last_gae;
        res.advantages[i] = last_gae;
        res.returns[i] = last_gae + rollout.values[i];
    }
    return res;
}

double discounted_return(std::span<const double> rewards, double gamma) {
    double acc = 0.0;
    for (std::size_t i = rewards.size(); i-- > 0;) acc = rewards[i] + gamma * acc;
    return acc;
}

PpoAgent::PpoAgent(const EnvSpec& env_spec, const PpoConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      policy_([&] {
          MlpSpec spec = cfg.policy_mlp;
          spec.input_dim = env_spec.state_dim;
          spec.output_dim = env_spec.action_dim;
          return GaussianPolicy(spec, cfg.init_log_std, split_seed(seed, 0));
      }()),
      value_([&] {
          MlpSpec spec = cfg.value_mlp;
          spec.input_dim = env_spec.state_dim;
          spec.output_dim = 1;
          return Mlp(spec, split_seed(seed, 1));
      }()),
      policy_opt_(policy_.mean_net().param_count()),
      log_std_opt_(policy_.log_std().size()),
      value_opt_(value_.param_count()),
      action_low_(env_spec.action_low),
      action_high_(env_spec.action_high) {
    cfg_.validate();
}

void PpoAgent::reset_episode(const Env& env, Rng& env_rng) {
    episode_state_ = env.reset(env_rng);
    episode_t_ = 0;
    episode_live_ = true;
}

Rollout PpoAgent::collect_rollout(const Env& env, const RewardFn& reward, Rng& env_rng, Rng& action_rng,
                                  const TransitionObserver& observer) {
    const int T = cfg_.rollout_length;
    Rollout r;
    r.states.reserve(T);
    r.actions_raw.reserve(T);
    r.actions_env.reserve(T);
    r.rewards.reserve(T);
    r.values.reserve(T);
    r.logprobs.reserve(T);
    r.dones.reserve(T);

    if (!episode_live_) reset_episode(env, env_rng);

    for (int t = 0; t < T; ++t) {
        const std::vector<double>& state = episode_state_;
        std::vector<double> a_raw = policy_.sample(state, action_rng);
        const double logp = policy_.log_prob(state, a_raw);
        const double value = value_.forward(state);

        Transition tr = env.step(state, a_raw, env_rng);  // Env::step clips internally
        const double learn_reward = reward(tr.state, tr.action, tr.next_state);
        if (observer) observer(tr);

        ++episode_t_;
        const bool done = episode_t_ >= env.spec().horizon;

        r.states.push_back(tr.state);
        r.actions_raw.push_back(std::move(a_raw));
        r.actions_env.push_back(tr.action);
        r.rewards.push_back(learn_reward);
        r.values.push_back(value);
        r.logprobs.push_back(logp);
        r.dones.push_back(done ? 1 : 0);

        if (done) {
            reset_episode(env, env_rng);
        } else {
            episode_state_ = std::move(tr.next_state);
        }
    }
    r.bootstrap_value = value_.forward(episode_state_);
    return r;
}

PpoDiagnostics PpoAgent::update(const Rollout& rollout, Rng& shuffle_rng,
                                const PhaseOverride* override_cfg) {
    const std::size_t T = rollout.size();
    if (T == 0) throw std::invalid_argument("PpoAgent::update: empty rollout");
    const bool freeze_policy = override_cfg != nullptr && override_cfg->freeze_policy;
    const bool normalize_adv = cfg_.normalize_advantages;

    const GaeResult gae = compute_gae(rollout, cfg_.gamma, cfg_.gae_lambda);
    for (double a : gae.advantages) {
        if (!std::isfinite(a)) throw std::invalid_argument("PpoAgent::update: non-finite advantage");
    }

    const int action_dim = policy_.action_dim();
    std::vector<double> policy_grad(policy_.mean_net().param_count());
    std::vector<double> log_std_grad(action_dim);
    std::vector<double> value_grad(value_.param_count());
    std::vector<std::size_t> idx(T);
    std::iota(idx.begin(), idx.end(), 0);

    PpoDiagnostics diag;
    std::size_t clip_hits = 0, samples_seen = 0;
    double policy_loss_sum = 0.0, value_loss_sum = 0.0;
    bool kl_stop = false;

    ForwardCache mean_cache, value_cache;
    std::vector<double> mean_upstream(action_dim);

    for (int epoch = 0; epoch < cfg_.epochs_per_update && !kl_stop; ++epoch) {
        for (std::size_t i = T - 1; i > 0; --i) {
            const std::size_t j = shuffle_rng.uniform_int(i + 1);
            std::swap(idx[i], idx[j]);
        }
        for (std::size_t start = 0; start < T && !kl_stop; start += cfg_.minibatch_size) {
            const std::size_t end = std::min(T, start + static_cast<std::size_t>(cfg_.minibatch_size));
            const std::size_t B = end - start;
            double kl_sum = 0.0;
            std::size_t kl_count = 0;

            // Per-minibatch advantage normalization.
            double adv_mean = 0.0, adv_sq = 0.0;
            if (normalize_adv) {
                for (std::size_t p = start; p < end; ++p) adv_mean += gae.advantages[idx[p]];
                adv_mean /= static_cast<double>(B);
                for (std::size_t p = start; p < end; ++p) {
                    const double d = gae.advantages[idx[p]] - adv_mean;
                    adv_sq += d * d;
                }
                adv_sq = std::sqrt(adv_sq / static_cast<double>(B)) + 1e-8;
            }

            std::fill(policy_grad.begin(), policy_grad.end(), 0.0);
            std::fill(log_std_grad.begin(), log_std_grad.end(), 0.0);
            std::fill(value_grad.begin(), value_grad.end(), 0.0);
            const double scale = 1.0 / static_cast<double>(B);

            for (std::size_t p = start; p < end; ++p) {
                const std::size_t s = idx[p];
                ++samples_seen;

                if (!freeze_policy) {
                    const double adv = normalize_adv
                                           ? (gae.advantages[s] - adv_mean) / adv_sq
                                           : gae.advantages[s];

                    // Policy surrogate.
                    const std::vector<double> mu =
                        policy_.mean_net().forward_vec(rollout.states[s], nullptr, &mean_cache);
                    double logp_new = 0.0;
                    for (int d = 0; d < action_dim; ++d) {
                        const double sigma = std::exp(policy_.log_std()[d]);
                        const double z = (rollout.actions_raw[s][d] - mu[d]) / sigma;
                        logp_new += -0.5 * z * z - policy_.log_std()[d] - 0.5 * kLog2Pi;
                    }
                    const double ratio = std::exp(logp_new - rollout.logprobs[s]);
                    const double clipped =
                        clampd(ratio, 1.0 - cfg_.clip_epsilon, 1.0 + cfg_.clip_epsilon);
                    policy_loss_sum += -std::min(ratio * adv, clipped * adv);
                    if (std::abs(ratio - 1.0) > cfg_.clip_epsilon) ++clip_hits;
                    kl_sum += (ratio - 1.0) - (logp_new - rollout.logprobs[s]);
                    ++kl_count;

                    // Gradient of -min(ratio*adv, clipped*adv) w.r.t. logp_new:
                    // zero when the clipped branch is active and saturated.
                    const bool saturated = (adv >= 0.0 && ratio > 1.0 + cfg_.clip_epsilon) ||
                                           (adv < 0.0 && ratio < 1.0 - cfg_.clip_epsilon);
                    if (!saturated && adv != 0.0) {
                        const double dloss_dlogp = -adv * ratio * scale;
                        for (int d = 0; d < action_dim; ++d) {
                            const double sigma = std::exp(policy_.log_std()[d]);
                            const double diff = rollout.actions_raw[s][d] - mu[d];
                            mean_upstream[d] = dloss_dlogp * diff / (sigma * sigma);
                            log_std_grad[d] += dloss_dlogp * (diff * diff / (sigma * sigma) - 1.0);
                        }
                        policy_.mean_net().backward_into(mean_cache, mean_upstream, policy_grad);
                    }
                    // Entropy bonus: d(-c*H)/d log_std = -c.
                    if (cfg_.entropy_coef > 0.0) {
                        for (int d = 0; d < action_dim; ++d) {
                            log_std_grad[d] -= cfg_.entropy_coef * scale;
                        }
                    }
                }

                // Value regression: 0.5 * (V - return)^2.
                const double v = value_.forward(rollout.states[s], nullptr, &value_cache);
                const double verr = v - gae.returns[s];
                value_loss_sum += 0.5 * verr * verr;
                const double vup[1] = {verr * scale};
                value_.backward_into(value_cache, std::span<const double>(vup, 1), value_grad);
            }

            if (!freeze_policy) {
                // Stop the whole update once the new policy has moved too far
                // from the one that collected the rollout.
                if (cfg_.target_kl > 0.0 && kl_count > 0 &&
                    kl_sum / static_cast<double>(kl_count) > cfg_.target_kl) {
                    kl_stop = true;
                }
                clip_global_norm(policy_grad, cfg_.max_grad_norm);
                clip_global_norm(log_std_grad, cfg_.max_grad_norm);
                optimizer_step(policy_.mean_net().mutable_params(), policy_grad, cfg_.optimizer,
                               policy_opt_);
                optimizer_step(policy_.log_std(), log_std_grad, cfg_.optimizer, log_std_opt_);
                for (double ls : policy_.log_std()) {
                    if (!std::isfinite(ls)) throw std::runtime_error("PpoAgent::update: log_std diverged");
                }
            }
            clip_global_norm(value_grad, cfg_.max_grad_norm);
            optimizer_step(value_.mutable_params(), value_grad, cfg_.optimizer, value_opt_);
        }
    }

    diag.policy_loss = policy_loss_sum / static_cast<double>(samples_seen);
    diag.value_loss = value_loss_sum / static_cast<double>(samples_seen);
    diag.entropy = policy_.entropy();
    diag.clip_fraction = static_cast<double>(clip_hits) / static_cast<double>(samples_seen);
    return diag;
}

void PpoAgent::reset_value_and_optimizers(std::uint64_t seed) {
    value_ = Mlp(value_.spec(), seed);
    policy_opt_ = OptimizerState(policy_.mean_net().param_count());
    log_std_opt_ = OptimizerState(policy_.log_std().size());
    value_opt_ = OptimizerState(value_.param_count());
}

std::vector<double> PpoAgent::act_deterministic(std::span<const double> state) const {
    std::vector<double> a = policy_.mean_action(state);
    for (std::size_t d = 0; d < a.size(); ++d) a[d] = clampd(a[d], action_low_[d], action_high_[d]);
    return a;
}

void RunRecord::write_curve_csv(std::ostream& out) const {
    out << "step,mean_true_return,stderr,phase\n";
    for (const EvalPoint& p : curve) {
        out << p.step << "," << format_double(p.mean_true_return) << "," << format_double(p.stderr_)
            << "," << p.phase << "\n";
    }
}

std::vector<EvalPoint> RunRecord::read_curve_csv(std::istream& in) {
    std::vector<EvalPoint> curve;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_curve_csv: empty input");
    if (line != "step,mean_true_return,stderr,phase") {
        throw std::runtime_error("read_curve_csv: unexpected header: " + line);
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        EvalPoint p;
        std::getline(ss, field, ',');
        p.step = std::stol(field);
        std::getline(ss, field, ',');
        p.mean_true_return = std::stod(field);
        std::getline(ss, field, ',');
        p.stderr_ = std::stod(field);
        std::getline(ss, field, ',');
        p.phase = std::stoi(field);
        curve.push_back(p);
    }
    return curve;
}

EvalPoint evaluate_policy(const Env& env, const PpoAgent& agent, int episodes, long step, int phase,
                          Rng& rng) {
    std::vector<double> returns(episodes, 0.0);
    for (int e = 0; e < episodes; ++e) {
        std::vector<double> state = env.reset(rng);
        double total = 0.0;
        for (int t = 0; t < env.spec().horizon; ++t) {
            const std::vector<double> action = agent.act_deterministic(state);
            Transition tr = env.step(state, action, rng);
            total += tr.true_reward;
            state = std::move(tr.next_state);
        }
        returns[e] = total;
    }
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= episodes;
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    const double stderr_ =
        episodes > 1 ? std::sqrt(var / (episodes - 1)) / std::sqrt(static_cast<double>(episodes)) : 0.0;
    return {.step = step, .mean_true_return = mean, .stderr_ = stderr_, .phase = phase};
}

RunRecord run_rbrl(const Env& env, const RaterConfig& rater_cfg, const RewardTrainerConfig& reward_cfg_in,
                   const PpoConfig& ppo_cfg, long total_steps, std::uint64_t seed, int segment_length) {
    // The reward model's input/output dims are derived from the environment.
    RewardTrainerConfig reward_cfg = reward_cfg_in;
    reward_cfg.mlp.input_dim = env.spec().state_dim + env.spec().action_dim;
    reward_cfg.mlp.output_dim = 1;
    rater_cfg.validate();
    reward_cfg.validate();
    ppo_cfg.validate();
    if (total_steps < 1) throw std::invalid_argument("run_rbrl: total_steps must be >= 1");
    if (segment_length < 1) throw std::invalid_argument("run_rbrl: segment_length must be >= 1");
    const long collectable = ppo_cfg.exploration_steps / segment_length;
    if (rater_cfg.budget > collectable) {
        throw std::invalid_argument(
            "run_rbrl: rating budget exceeds segments collectable in the exploration phase");
    }

    PpoAgent agent(env.spec(), ppo_cfg, split_seed(seed, 10));
    Rng env_rng(split_seed(seed, 11));
    Rng action_rng(split_seed(seed, 12));
    Rng shuffle_rng(split_seed(seed, 13));
    Rng rater_rng(split_seed(seed, 14));

    SegmentBuffer buffer(static_cast<std::size_t>(std::max<long>(collectable, 1)));
    Segment pending;
    double pending_return = 0.0;
    int pending_t = 0;
    TransitionObserver phase1_observer = [&](const Transition& tr) {
        pending.states.push_back(tr.state);
        pending.actions.push_back(tr.action);
        pending_return += tr.true_reward;
        if (pending.length() == static_cast<std::size_t>(segment_length)) {
            buffer.push(std::move(pending), pending_return);
            pending = Segment{};
            pending_return = 0.0;
        }
        ++pending_t;
        if (pending_t >= env.spec().horizon) {  // drop partial segments at episode ends
            pending = Segment{};
            pending_return = 0.0;
            pending_t = 0;
        }
    };

    RunRecord record;
    long steps = 0;
    long next_eval = 0;
    int eval_index = 0;
    const auto maybe_eval = [&](int phase) {
        while (steps >= next_eval) {
            Rng eval_rng(split_seed(seed, 100000 + static_cast<std::uint64_t>(eval_index)));
            record.curve.push_back(
                evaluate_policy(env, agent, ppo_cfg.eval_episodes, steps, phase, eval_rng));
            ++eval_index;
            next_eval += ppo_cfg.eval_interval;
        }
    };

    maybe_eval(1);

    // Phase 1: entropy exploration reward while buffering segments. The
    // entropy reward is constant across a rollout (state-independent
    // log-std), so the policy gradient is zero in expectation; updating the
    // policy on it only amplifies estimation noise, collapsing the diversity
    // of the gathered segments. The policy is held at its initialization
    // while the value function trains.
    PpoAgent::PhaseOverride phase1_override;
    phase1_override.freeze_policy = true;
    const RewardFn entropy_fn = [&agent](std::span<const double> state, std::span<const double>,
                                         std::span<const double>) {
        return entropy_reward(agent.policy(), state);
    };
    while (steps < ppo_cfg.exploration_steps && steps < total_steps) {
        Rollout rollout = agent.collect_rollout(env, entropy_fn, env_rng, action_rng, phase1_observer);
        agent.update(rollout, shuffle_rng, &phase1_override);
        steps += rollout.size();
        maybe_eval(1);
    }

    if (steps >= total_steps) return record;

    // Rate, train the reward model, then continue on predicted reward only.
    if (buffer.size() < static_cast<std::size_t>(rater_cfg.budget)) {
        throw std::runtime_error("run_rbrl: exploration phase produced too few segments to rate");
    }
    const RatingDataset dataset = rate_buffer(buffer, rater_cfg, rater_cfg.budget, rater_rng);

    Mlp reward_model;
    try {
        RewardTrainResult fit = train_reward_model(dataset, reward_cfg, split_seed(seed, 15));
        reward_model = std::move(fit.model);
        record.reward_loss_history = std::move(fit.loss_history);
    } catch (const std::runtime_error& e) {
        record.completed = false;
        record.error = e.what();
        return record;
    }

    agent.reset_value_and_optimizers(split_seed(seed, 16));

    const RewardFn predicted_fn = [&reward_model](std::span<const double> state,
                                                  std::span<const double> action,
                                                  std::span<const double>) {
        std::vector<double> x;
        x.reserve(state.size() + action.size());
        x.insert(x.end(), state.begin(), state.end());
        x.insert(x.end(), action.begin(), action.end());
        return reward_model.forward(x);
    };

    long phase2_steps = 0;
    long next_refit = ppo_cfg.reward_refit_interval > 0 ? ppo_cfg.reward_refit_interval
                                                        : std::numeric_limits<long>::max();
    int refit_index = 1;
    while (steps < total_steps) {
        Rollout rollout = agent.collect_rollout(env, predicted_fn, env_rng, action_rng, nullptr);
        agent.update(rollout, shuffle_rng);
        steps += rollout.size();
        phase2_steps += rollout.size();
        maybe_eval(2);
        if (phase2_steps >= next_refit && steps < total_steps) {
            try {
                RewardTrainResult fit =
                    train_reward_model(dataset, reward_cfg, split_seed(seed, 15 + refit_index));
                reward_model = std::move(fit.model);
                ++refit_index;
            } catch (const std::runtime_error& e) {
                record.completed = false;
                record.error = e.what();
                return record;
            }
            next_refit += ppo_cfg.reward_refit_interval;
        }
    }
    return record;
}

}  // namespace rbrl
