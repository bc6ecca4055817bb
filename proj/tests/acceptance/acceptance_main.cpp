// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Criteria 7 and 8 run the full two-preset protocol and take most
// of the wall time; everything else is exact math against independent
// oracles.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rbrl/experiment.hpp"
#include "rbrl/policy.hpp"
#include "rbrl/rater.hpp"

using namespace rbrl;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Probability normalization + argmax properties on random tuples.
void criterion_1() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(101);
    bool sums_ok = true, argmax_ok = true;
    for (int rep = 0; rep < 1000; ++rep) {
        const int n = 2 + static_cast<int>(rng.uniform_int(5));
        std::vector<double> interior(n - 1);
        for (double& b : interior) b = rng.uniform();
        std::sort(interior.begin(), interior.end());
        ClassBounds cb;
        cb.bounds.push_back(0.0);
        cb.bounds.insert(cb.bounds.end(), interior.begin(), interior.end());
        cb.bounds.push_back(1.0);

        const double r = rng.uniform();
        const double ks[] = {0.1, 0.5, 1.0, 5.0, 10.0};
        const double k = ks[rng.uniform_int(5)];
        const QVariant variant = rep % 2 == 0 ? QVariant::Original : QVariant::Midpoint;

        const std::vector<double> p = class_probabilities(r, cb, {variant, k});
        double total = 0.0;
        for (double v : p) total += v;
        if (std::abs(total - 1.0) > 1e-9) sums_ok = false;

        const int argmax = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        if (variant == QVariant::Original) {
            for (int i = 0; i < n; ++i) {
                if (r > cb.lower(i) && r < cb.upper(i) && argmax != i) argmax_ok = false;
            }
        } else {
            double best = std::abs(r - cb.midpoint(0));
            int nearest = 0;
            bool tie = false;
            for (int i = 1; i < n; ++i) {
                const double d = std::abs(r - cb.midpoint(i));
                if (d < best - 1e-15) {
                    best = d;
                    nearest = i;
                    tie = false;
                } else if (std::abs(d - best) <= 1e-15) {
                    tie = true;
                }
            }
            if (!tie && argmax != nearest) argmax_ok = false;
        }
    }
    const double dt = elapsed_s(start);
    char detail[160];
    std::snprintf(detail, sizeof detail, "1000 tuples, sums %s, argmax %s, %.2fs",
                  sums_ok ? "ok" : "BAD", argmax_ok ? "ok" : "BAD", dt);
    report(1, sums_ok && argmax_ok && dt < 1.0, "probability normalization and argmax properties",
           detail);
}

// ---------------------------------------------------------------------------
// 2. Symmetry and k -> 0 limits.
void criterion_2() {
    bool ok = true;
    ClassBounds two{{0.0, 0.5, 1.0}};
    for (QVariant variant : {QVariant::Original, QVariant::Midpoint}) {
        const std::vector<double> p = class_probabilities(0.5, two, {variant, 1.0});
        if (std::abs(p[0] - 0.5) > 1e-12 || std::abs(p[1] - 0.5) > 1e-12) ok = false;
    }
    ClassBounds four{{0.0, 0.25, 0.5, 0.75, 1.0}};
    for (QVariant variant : {QVariant::Original, QVariant::Midpoint}) {
        const std::vector<double> p = class_probabilities(0.37, four, {variant, 1e-12});
        for (double v : p) {
            if (std::abs(v - 0.25) > 1e-9) ok = false;
        }
    }
    report(2, ok, "midpoint symmetry and k->0 uniform limit", ok ? "both anchors exact" : "mismatch");
}

// ---------------------------------------------------------------------------
// 3. Gradient fidelity: forward nets, activation derivatives, CE pipeline.
void criterion_3() {
    const auto start = std::chrono::steady_clock::now();
    bool forward_ok = true, act_ok = true, ce_ok = true;

    // Activation derivatives vs central differences.
    for (Activation act : {Activation::Tanh, Activation::Sigmoid, Activation::ArcTan,
                           Activation::LeCunTanh}) {
        for (double x = -10.0; x <= 10.0; x += 0.01) {
            const double h = 1e-6;
            const double fd = (activation_apply(act, x + h) - activation_apply(act, x - h)) / (2 * h);
            if (std::abs(activation_grad(act, x) - fd) > 1e-8) act_ok = false;
        }
    }

    // Forward/backward gradients, >= 100 seeds per activation.
    std::uint64_t seed = 0;
    for (Activation act : {Activation::Tanh, Activation::Sigmoid, Activation::ArcTan,
                           Activation::LeCunTanh}) {
        for (int rep = 0; rep < 100; ++rep) {
            Rng inst(split_seed(303, seed++));
            const MlpSpec spec{.input_dim = 1 + static_cast<int>(inst.uniform_int(4)),
                               .hidden_layers = 1 + static_cast<int>(inst.uniform_int(3)),
                               .hidden_width = 2 + static_cast<int>(inst.uniform_int(7)),
                               .activation = act,
                               .dropout_rate = 0.0,
                               .output_squash =
                                   inst.uniform() < 0.5 ? OutputSquash::None : OutputSquash::Tanh,
                               .output_dim = 1};
            Mlp net(spec, inst.next_u64());
            std::vector<double> input(spec.input_dim);
            for (double& v : input) v = inst.uniform(-2, 2);

            ForwardCache cache;
            (void)net.forward(input, nullptr, &cache);
            const std::vector<double> analytic = net.backward(cache, 1.0);
            const double h = 1e-5;
            for (std::size_t i = 0; i < net.param_count(); ++i) {
                const double orig = net.params()[i];
                net.mutable_params()[i] = orig + h;
                const double up = net.forward(input);
                net.mutable_params()[i] = orig - h;
                const double down = net.forward(input);
                net.mutable_params()[i] = orig;
                const double fd = (up - down) / (2 * h);
                const double diff = std::abs(analytic[i] - fd);
                if (diff > 1e-7 && diff > 1e-5 * std::max(std::abs(analytic[i]), std::abs(fd))) {
                    forward_ok = false;
                }
            }
        }
    }

    // Cross-entropy pipeline vs finite differences, bounds frozen; >= 100
    // well-separated random instances cycling all activations/variants.
    int checked = 0;
    std::uint64_t attempt = 0;
    while (checked < 100) {
        Rng inst(split_seed(404, attempt++));
        const Activation acts[] = {Activation::Tanh, Activation::Sigmoid, Activation::ArcTan,
                                   Activation::LeCunTanh};
        const MlpSpec spec{.input_dim = 3,
                           .hidden_layers = 2,
                           .hidden_width = 6,
                           .activation = acts[attempt % 4],
                           .dropout_rate = 0.0,
                           .output_squash = OutputSquash::Tanh,
                           .output_dim = 1};
        Mlp net(spec, inst.next_u64());
        const int n = 2 + static_cast<int>(inst.uniform_int(3));
        const QConfig q{attempt % 2 == 0 ? QVariant::Original : QVariant::Midpoint,
                        0.5 + inst.uniform(0.0, 2.0)};

        std::vector<Segment> batch;
        std::vector<int> labels;
        for (int s = 0; s < 8; ++s) {
            Segment seg;
            for (int t = 0; t < 4; ++t) {
                seg.states.push_back({inst.uniform(-1, 1), inst.uniform(-1, 1)});
                seg.actions.push_back({inst.uniform(-1, 1)});
            }
            batch.push_back(std::move(seg));
            labels.push_back(static_cast<int>(inst.uniform_int(n)));
        }
        std::vector<double> returns(batch.size());
        for (std::size_t s = 0; s < batch.size(); ++s) returns[s] = segment_return(net, batch[s]);
        std::vector<double> sorted = returns;
        std::sort(sorted.begin(), sorted.end());
        bool separated = true;
        for (std::size_t i = 1; i < sorted.size(); ++i) {
            if (sorted[i] - sorted[i - 1] < 1e-3) separated = false;
        }
        if (!separated) continue;

        const ClassBounds cb = estimate_bounds(normalize_batch(returns), labels, n);
        const CrossEntropyResult res = cross_entropy_loss(batch, labels, net, cb, q);
        const double h = 1e-5;
        for (std::size_t i = 0; i < net.param_count(); ++i) {
            const double orig = net.params()[i];
            net.mutable_params()[i] = orig + h;
            const double up = cross_entropy_loss(batch, labels, net, cb, q).loss;
            net.mutable_params()[i] = orig - h;
            const double down = cross_entropy_loss(batch, labels, net, cb, q).loss;
            net.mutable_params()[i] = orig;
            const double fd = (up - down) / (2 * h);
            const double diff = std::abs(res.grad[i] - fd);
            if (diff > 1e-7 && diff > 1e-4 * std::max(std::abs(res.grad[i]), std::abs(fd))) {
                ce_ok = false;
            }
        }
        ++checked;
    }

    const double dt = elapsed_s(start);
    char detail[200];
    std::snprintf(detail, sizeof detail,
                  "activations %s, forward 4x100 seeds %s, pipeline 100 instances %s, %.1fs",
                  act_ok ? "ok" : "BAD", forward_ok ? "ok" : "BAD", ce_ok ? "ok" : "BAD", dt);
    report(3, forward_ok && act_ok && ce_ok && dt < 30.0, "gradient fidelity vs finite differences",
           detail);
}

// ---------------------------------------------------------------------------
// 4. Bounds correctness on 1000 random instances with ties and empty classes.
void criterion_4() {
    Rng rng(505);
    bool ok = true;
    for (int rep = 0; rep < 1000; ++rep) {
        const int n = 2 + static_cast<int>(rng.uniform_int(5));
        const std::size_t m = 2 + rng.uniform_int(60);
        std::vector<double> returns(m);
        for (double& r : returns) {
            r = rng.uniform();
            if (rng.uniform() < 0.35) r = std::round(r * 5.0) / 5.0;  // force ties
        }
        const std::vector<double> normalized = normalize_batch(returns);
        std::vector<int> labels(m);
        // Bias labels so empty classes occur regularly.
        for (int& l : labels) {
            l = static_cast<int>(rng.uniform_int(n));
            if (rng.uniform() < 0.25) l = 0;
        }
        std::vector<int> counts(n, 0);
        for (int l : labels) counts[l]++;

        const ClassBounds cb = estimate_bounds(normalized, labels, n);
        if (!counts_reproducible(normalized, cb, counts)) ok = false;

        bool tie_on_bound = false;
        for (double v : normalized) {
            for (int i = 1; i < n; ++i) {
                if (v == cb.bounds[i]) tie_on_bound = true;
            }
        }
        if (!tie_on_bound && bin_counts(normalized, cb) != counts) ok = false;
    }
    report(4, ok, "count-matched bounds recount exactly on 1000 instances",
           ok ? "including empty-class and tied-return cases" : "recount mismatch");
}

// ---------------------------------------------------------------------------
// 5. Optimizer equivalence and hand-computed steps.
void criterion_5() {
    bool ok = true;

    OptimizerConfig adam = make_adam(0.01);
    OptimizerConfig adamw0 = make_adamw(0.01);
    adamw0.weight_decay = 0.0;
    std::vector<double> a(16, 0.25), b(16, 0.25);
    OptimizerState sa(16), sb(16);
    Rng rng(606);
    std::vector<double> grad(16);
    for (int step = 0; step < 1000; ++step) {
        for (double& g : grad) g = rng.uniform(-1, 1);
        optimizer_step(a, grad, adam, sa);
        optimizer_step(b, grad, adamw0, sb);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (std::abs(a[i] - b[i]) > 1e-12) ok = false;
        }
    }

    std::vector<double> theta{1.0};
    OptimizerState st(1);
    optimizer_step(theta, std::vector<double>{1.0}, make_adam(0.001), st);
    if (std::abs(theta[0] - 0.99900) > 1e-5) ok = false;

    std::vector<double> theta2{1.0};
    OptimizerConfig aw = make_adamw(0.001);
    aw.weight_decay = 0.01;
    OptimizerState st2(1);
    optimizer_step(theta2, std::vector<double>{1.0}, aw, st2);
    if (std::abs(theta2[0] - 0.99899) > 1e-5) ok = false;

    report(5, ok, "Adam/AdamW equivalence and one-step hand values",
           ok ? "<= 1e-12 over 1000 steps; 0.99900 / 0.99899 match" : "mismatch");
}

// ---------------------------------------------------------------------------
// 6. Rater monotone in return, antitone in max_reward, exhaustive grids.
void criterion_6() {
    bool ok = true;
    const double max_grid[] = {10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0};
    for (int n = 2; n <= 6 && ok; ++n) {
        for (double max_reward : max_grid) {
            const RaterConfig cfg{.n_classes = n, .max_reward = max_reward, .budget = 1};
            int prev = 0;
            for (int i = 0; i <= 10000; ++i) {
                const double r = -10.0 + 70.0 * i / 10000.0;
                const int label = rate_segment(r, cfg);
                if (label < prev) ok = false;
                prev = label;
            }
        }
        // Antitone across the max_reward grid at every return value.
        for (int i = 0; i <= 10000; ++i) {
            const double r = -10.0 + 70.0 * i / 10000.0;
            int prev_label = std::numeric_limits<int>::max();
            for (double max_reward : max_grid) {
                const int label =
                    rate_segment(r, {.n_classes = n, .max_reward = max_reward, .budget = 1});
                if (label > prev_label) ok = false;
                prev_label = label;
            }
        }
    }
    report(6, ok, "rater monotone in return, antitone in max_reward",
           ok ? "n in 2..6, 10001-point grids, 7 boundaries" : "violation found");
}

// ---------------------------------------------------------------------------
// 7. Directional end-to-end: optimized vs paper_default on point_mass (n=2).
void criterion_7(const fs::path& tmp) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig opt = preset("optimized");
    ExperimentConfig def = preset("paper_default");
    for (ExperimentConfig* cfg : {&opt, &def}) {
        cfg->n_classes = 2;
        cfg->rating_budget = 200;
        cfg->total_steps = 100000;
        cfg->seeds = {1, 2, 3, 4, 5};
    }

    const SweepResult ro = run_experiment(opt, tmp / "c7_optimized", 2);
    const SweepResult rd = run_experiment(def, tmp / "c7_default", 2);
    const SummaryRow& so = ro.summary.at(0);
    const SummaryRow& sd = rd.summary.at(0);

    const bool all_ok = so.n_seeds == 5 && sd.n_seeds == 5;
    const bool mean_ok = so.mean >= sd.mean;
    const bool stderr_ok = so.stderr_ <= sd.stderr_;
    char detail[240];
    std::snprintf(detail, sizeof detail,
                  "optimized %.1f +- %.1f vs default %.1f +- %.1f over 5 seeds, %.0fs", so.mean,
                  so.stderr_, sd.mean, sd.stderr_, elapsed_s(start));
    report(7, all_ok && mean_ok && stderr_ok,
           "optimized preset matches or beats paper_default (mean and stderr)", detail);
}

// ---------------------------------------------------------------------------
// 8. Consistency across n: range of final means, optimized vs default.
void criterion_8(const fs::path& tmp) {
    const auto start = std::chrono::steady_clock::now();
    const SweepAxis axis{.name = "n_classes", .values = {"2", "3", "4", "5", "6"}};
    double ranges[2] = {0.0, 0.0};
    bool complete = true;
    const char* names[2] = {"optimized", "paper_default"};
    for (int i = 0; i < 2; ++i) {
        ExperimentConfig cfg = preset(names[i]);
        cfg.seeds = {1, 2, 3};
        cfg.total_steps = 60000;
        const SweepResult res = run_sweep(cfg, axis, tmp / (std::string("c8_") + names[i]), 2);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const SummaryRow& row : res.summary) {
            if (row.n_seeds != 3) complete = false;
            lo = std::min(lo, row.mean);
            hi = std::max(hi, row.mean);
        }
        ranges[i] = hi - lo;
    }
    char detail[200];
    std::snprintf(detail, sizeof detail,
                  "final-mean range across n=2..6: optimized %.1f vs default %.1f, %.0fs", ranges[0],
                  ranges[1], elapsed_s(start));
    report(8, complete && ranges[0] <= ranges[1],
           "optimized preset is at least as consistent across rating classes", detail);
}

// ---------------------------------------------------------------------------
// 9. Byte-for-byte determinism of run and sweep outputs.
void criterion_9(const fs::path& tmp) {
    ExperimentConfig cfg = preset("optimized");
    cfg.name = "det";
    cfg.total_steps = 1200;
    cfg.segment_length = 20;
    cfg.rating_budget = 10;
    cfg.reward_epochs = 3;
    cfg.reward_batch_size = 5;
    cfg.seeds = {1, 2};
    cfg.ppo.rollout_length = 200;
    cfg.ppo.epochs_per_update = 2;
    cfg.ppo.exploration_steps = 400;
    cfg.ppo.eval_interval = 400;
    cfg.ppo.eval_episodes = 2;
    cfg.ppo.policy_mlp.hidden_width = 16;
    cfg.ppo.value_mlp.hidden_width = 16;
    cfg.reward_mlp.hidden_width = 8;
    cfg.reward_mlp.hidden_layers = 1;

    bool ok = true;
    (void)run_experiment(cfg, tmp / "c9_run_a", 1);
    (void)run_experiment(cfg, tmp / "c9_run_b", 2);
    for (const char* rel : {"summary.csv", "long.csv", "runs/s1/curve.csv", "runs/s2/curve.csv"}) {
        if (slurp(tmp / "c9_run_a" / rel) != slurp(tmp / "c9_run_b" / rel)) ok = false;
    }

    const SweepAxis axis{.name = "k", .values = {"0.5", "5"}};
    (void)run_sweep(cfg, axis, tmp / "c9_sweep_a", 2);
    (void)run_sweep(cfg, axis, tmp / "c9_sweep_b", 1);
    for (const char* rel :
         {"summary.csv", "long.csv", "runs/k=0.5_s1/curve.csv", "runs/k=0.5_s2/curve.csv",
          "runs/k=5_s1/curve.csv", "runs/k=5_s2/curve.csv"}) {
        if (slurp(tmp / "c9_sweep_a" / rel) != slurp(tmp / "c9_sweep_b" / rel)) ok = false;
    }
    report(9, ok, "run and sweep outputs reproduce byte-for-byte",
           ok ? "run twice and sweep twice, all CSVs identical" : "byte mismatch");
}

// ---------------------------------------------------------------------------
// 10. PPO sanity on line_runner with true reward: >= 2x random baseline.
void criterion_10() {
    const auto start = std::chrono::steady_clock::now();
    const auto env = make_env("line_runner");
    int wins = 0;
    std::string per_seed;
    for (std::uint64_t seed : {1, 2, 3}) {
        // Random-policy baseline.
        Rng base_rng(split_seed(seed, 1));
        double baseline = 0.0;
        for (int e = 0; e < 10; ++e) {
            std::vector<double> state = env->reset(base_rng);
            double total = 0.0;
            for (int t = 0; t < env->spec().horizon; ++t) {
                const Transition tr =
                    env->step(state, random_policy_action(env->spec(), base_rng), base_rng);
                total += tr.true_reward;
                state = tr.next_state;
            }
            baseline += total;
        }
        baseline /= 10.0;

        PpoConfig cfg = default_ppo_config();
        PpoAgent agent(env->spec(), cfg, split_seed(seed, 2));
        Rng env_rng(split_seed(seed, 3)), act_rng(split_seed(seed, 4)), shuffle_rng(split_seed(seed, 5));
        const RewardFn true_fn = [&env](std::span<const double> s, std::span<const double> a,
                                        std::span<const double>) {
            Rng scratch(0);
            return env->step(s, a, scratch).true_reward;
        };
        long steps = 0;
        while (steps < 50000) {
            Rollout rollout = agent.collect_rollout(*env, true_fn, env_rng, act_rng);
            agent.update(rollout, shuffle_rng);
            steps += rollout.size();
        }
        Rng eval_rng(split_seed(seed, 6));
        const EvalPoint final_eval = evaluate_policy(*env, agent, 10, steps, 1, eval_rng);
        if (final_eval.mean_true_return >= 2.0 * baseline) ++wins;
        char buf[64];
        std::snprintf(buf, sizeof buf, " s%llu: %.0f vs %.0f;", (unsigned long long)seed,
                      final_eval.mean_true_return, baseline);
        per_seed += buf;
    }
    char detail[200];
    std::snprintf(detail, sizeof detail, "%d/3 seeds >= 2x baseline;%s %.0fs", wins, per_seed.c_str(),
                  elapsed_s(start));
    report(10, wins == 3, "PPO with true reward beats 2x random baseline on line_runner", detail);
}

}  // namespace

int main() {
    const fs::path tmp = fs::temp_directory_path() / "rbrl_acceptance";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_9(tmp);
    criterion_10();
    criterion_7(tmp);
    criterion_8(tmp);

    std::printf("%s: %d criterion(s) failed\n", g_failures == 0 ? "ALL PASS" : "RESULT", g_failures);
    return g_failures == 0 ? 0 : 1;
}
