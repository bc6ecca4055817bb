#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "rbrl/experiment.hpp"

using namespace rbrl;

namespace {

namespace fs = std::filesystem;

// Desk-scale config small enough for unit tests.
ExperimentConfig tiny_config() {
    ExperimentConfig cfg = preset("optimized");
    cfg.name = "tiny";
    cfg.total_steps = 1000;
    cfg.segment_length = 20;
    cfg.rating_budget = 10;
    cfg.reward_epochs = 2;
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
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("presets carry the published hyperparameters") {
    const ExperimentConfig opt = preset("optimized");
    CHECK(opt.q.k == 1.0);
    CHECK(opt.q.variant == QVariant::Original);
    CHECK(opt.reward_optimizer.kind == OptimizerKind::AdamW);
    CHECK(opt.reward_optimizer.learning_rate == 0.0005);
    CHECK(opt.reward_mlp.hidden_layers == 2);
    CHECK(opt.reward_mlp.dropout_rate == 0.05);
    CHECK(opt.reward_mlp.activation == Activation::ArcTan);

    const ExperimentConfig def = preset("paper_default");
    CHECK(def.q.k == 1.0);
    CHECK(def.reward_optimizer.kind == OptimizerKind::Adam);
    CHECK(def.reward_optimizer.learning_rate == 0.0003);
    CHECK(def.reward_mlp.hidden_layers == 3);
    CHECK(def.reward_mlp.dropout_rate == 0.0);
    CHECK(def.reward_mlp.activation == Activation::Tanh);

    CHECK_THROWS_AS((void)preset("fastest"), std::invalid_argument);
}

TEST_CASE("experiment config JSON round-trip is the identity") {
    ExperimentConfig cfg = tiny_config();
    cfg.q.k = 0.5;
    cfg.q.variant = QVariant::Midpoint;
    cfg.rater_max_reward = 17.25;
    cfg.ppo.init_log_std = -0.3;
    const ExperimentConfig back = ExperimentConfig::from_json_string(cfg.to_json_string());
    CHECK(back.to_json_string() == cfg.to_json_string());
    CHECK(back.name == cfg.name);
    CHECK(back.q == cfg.q);
    CHECK(back.reward_mlp == cfg.reward_mlp);
    CHECK(back.reward_optimizer == cfg.reward_optimizer);
    CHECK(back.seeds == cfg.seeds);
    CHECK(back.rater_max_reward == cfg.rater_max_reward);
    CHECK(back.ppo.init_log_std == cfg.ppo.init_log_std);
}

TEST_CASE("config validation rejects duplicate seeds and bad fields") {
    ExperimentConfig cfg = tiny_config();
    cfg.seeds = {1, 1};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.seeds = {};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.env = "mujoco";
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.n_classes = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("apply_axis covers every study axis and rejects unknown names") {
    const ExperimentConfig base = tiny_config();
    CHECK(apply_axis(base, "k", "5").q.k == 5.0);
    CHECK(apply_axis(base, "q_variant", "midpoint").q.variant == QVariant::Midpoint);
    CHECK(apply_axis(base, "activation", "sigmoid").reward_mlp.activation == Activation::Sigmoid);
    CHECK(apply_axis(base, "dropout", "0.25").reward_mlp.dropout_rate == 0.25);
    CHECK(apply_axis(base, "learning_rate", "0.0001").reward_optimizer.learning_rate == 0.0001);
    CHECK(apply_axis(base, "optimizer", "adam").reward_optimizer.kind == OptimizerKind::Adam);
    CHECK(apply_axis(base, "optimizer", "adam").reward_optimizer.weight_decay == 0.0);
    CHECK(apply_axis(base, "hidden_layers", "3").reward_mlp.hidden_layers == 3);
    CHECK(apply_axis(base, "max_reward", "15").rater_max_reward == 15.0);
    CHECK(apply_axis(base, "n_classes", "6").n_classes == 6);
    CHECK_THROWS_AS((void)apply_axis(base, "batch", "2"), std::invalid_argument);
    CHECK_THROWS_AS((void)apply_axis(base, "k", "fast"), std::invalid_argument);
}

TEST_CASE("summarize: hand-computed mean and stderr, permutation invariance") {
    const std::vector<double> two{10.0, 20.0};
    const SummaryRow row = summarize("x", two);
    CHECK(row.mean == doctest::Approx(15.0).epsilon(1e-15));
    CHECK(row.stderr_ == doctest::Approx(5.0).epsilon(1e-12));  // stddev 7.071.. / sqrt(2)
    CHECK(row.n_seeds == 2);

    const std::vector<double> identical{4.0, 4.0, 4.0};
    CHECK(summarize("x", identical).stderr_ == 0.0);

    const std::vector<double> single{42.0};
    const SummaryRow one = summarize("x", single);
    CHECK(one.mean == 42.0);
    CHECK(one.stderr_ == 0.0);

    const std::vector<double> a{3.0, 1.0, 2.0}, b{2.0, 3.0, 1.0};
    const SummaryRow ra = summarize("x", a), rb = summarize("x", b);
    CHECK(ra.mean == rb.mean);
    CHECK(ra.stderr_ == rb.stderr_);

    CHECK_THROWS_AS((void)summarize("x", std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("final_window_mean averages the last tenth of the curve") {
    std::vector<EvalPoint> curve;
    for (int i = 0; i < 20; ++i) {
        curve.push_back({.step = i, .mean_true_return = static_cast<double>(i), .stderr_ = 0, .phase = 2});
    }
    // Last 10% of 20 points = 2 points: 18 and 19.
    CHECK(final_window_mean(curve) == doctest::Approx(18.5).epsilon(1e-15));
    const std::vector<EvalPoint> one{{.step = 0, .mean_true_return = 3.0, .stderr_ = 0, .phase = 1}};
    CHECK(final_window_mean(one) == 3.0);
}

TEST_CASE("run_experiment writes per-seed curves and a one-row summary") {
    const TempDir tmp("rbrl_run_out");
    const ExperimentConfig cfg = tiny_config();
    const SweepResult res = run_experiment(cfg, tmp.path, 2);
    REQUIRE(res.runs.size() == 2);
    CHECK(res.runs[0].ok);
    CHECK(res.runs[1].ok);
    REQUIRE(res.summary.size() == 1);
    CHECK(res.summary[0].n_seeds == 2);

    CHECK(fs::exists(tmp.path / "runs" / "s1" / "curve.csv"));
    CHECK(fs::exists(tmp.path / "runs" / "s2" / "curve.csv"));
    const std::string summary = slurp(tmp.path / "summary.csv");
    CHECK(summary.starts_with("axis_value,mean,stderr,n_seeds\ntiny,"));

    // The emitted summary is recomputable from the raw curves on disk.
    const SummaryRow again = summarize_curve_files(
        "tiny", {tmp.path / "runs" / "s1" / "curve.csv", tmp.path / "runs" / "s2" / "curve.csv"});
    CHECK(again.mean == res.summary[0].mean);
    CHECK(again.stderr_ == res.summary[0].stderr_);
}

TEST_CASE("sweeps are deterministic byte-for-byte and order-independent of workers") {
    ExperimentConfig cfg = tiny_config();
    cfg.seeds = {1, 2};
    const SweepAxis axis{.name = "k", .values = {"0.5", "5"}};

    const TempDir run1("rbrl_sweep_a");
    const TempDir run2("rbrl_sweep_b");
    (void)run_sweep(cfg, axis, run1.path, 1);
    (void)run_sweep(cfg, axis, run2.path, 2);

    for (const char* rel :
         {"summary.csv", "long.csv", "runs/k=0.5_s1/curve.csv", "runs/k=0.5_s2/curve.csv",
          "runs/k=5_s1/curve.csv", "runs/k=5_s2/curve.csv"}) {
        CHECK(slurp(run1.path / rel) == slurp(run2.path / rel));
    }
}

TEST_CASE("sweep records failed cells without aborting") {
    ExperimentConfig cfg = tiny_config();
    cfg.seeds = {1};
    // budget 30 > 400/20 = 20 collectable segments -> that cell must fail.
    const SweepAxis axis{.name = "k", .values = {"1"}};
    ExperimentConfig bad = cfg;
    bad.rating_budget = 30;

    const TempDir tmp("rbrl_sweep_fail");
    const SweepResult res = run_sweep(bad, axis, tmp.path, 1);
    REQUIRE(res.runs.size() == 1);
    CHECK(!res.runs[0].ok);
    CHECK(res.summary[0].n_seeds == 0);
    CHECK(fs::exists(tmp.path / "runs" / "k=1_s1" / "error.txt"));
    const std::string summary = slurp(tmp.path / "summary.csv");
    CHECK(summary.find("nan") != std::string::npos);
}

TEST_CASE("format_double is shortest-round-trip stable") {
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-3.0) == "-3");
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}
