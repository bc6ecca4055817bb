// Deterministic sweep runner: a base experiment config, a named axis of
// values, seeded runs executed (optionally in parallel) and merged in
// (axis value, seed) order, with CSV outputs reproducible byte-for-byte.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbrl/policy.hpp"

namespace rbrl {

struct ExperimentConfig {
    std::string name = "experiment";
    std::string env = "point_mass";
    int n_classes = 2;
    QConfig q;
    double rater_max_reward = 50.0;
    int rating_budget = 200;
    int segment_length = 50;
    MlpSpec reward_mlp;
    OptimizerConfig reward_optimizer;
    int reward_batch_size = 50;
    int reward_epochs = 30;
    PpoConfig ppo;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    long total_steps = 100000;

    void validate() const;
    RaterConfig rater_config() const;
    RewardTrainerConfig reward_trainer_config() const;

    std::string to_json_string() const;
    static ExperimentConfig from_json_string(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static ExperimentConfig load(const std::filesystem::path& path);
};

// "paper_default" (Tanh, Adam, lr 3e-4, 3 hidden layers, no dropout) or
// "optimized" (ArcTan, AdamW, lr 5e-4, 2 hidden layers, 5% dropout); both use
// k = 1. Rejects unknown names.
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

struct SweepAxis {
    std::string name;
    std::vector<std::string> values;
};

// Known axes: k, q_variant, activation, dropout, learning_rate, optimizer,
// hidden_layers, max_reward, n_classes. Throws on unknown axis or bad value.
ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis,
                            const std::string& value);
std::vector<std::string> axis_names();

// Mean true return over the final window = last 10% of evaluation points
// (at least one).
double final_window_mean(std::span<const EvalPoint> curve);

struct SummaryRow {
    std::string axis_value;
    double mean = 0.0;    // across-seed mean of final-window means
    double stderr_ = 0.0; // sample stddev / sqrt(n_seeds)
    int n_seeds = 0;      // successful runs only
};

// Order-independent (values are sorted before accumulating). Rejects empty.
SummaryRow summarize(const std::string& axis_value, std::span<const double> final_means);

struct RunOutcome {
    std::string axis_value;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    RunRecord record;
};

struct SweepResult {
    std::vector<RunOutcome> runs;        // (axis value, seed) order
    std::vector<SummaryRow> summary;     // axis order
};

// Executes |axis| x |seeds| runs with up to `workers` threads; run failures
// are recorded per cell, not fatal. Outputs under out_dir:
//   runs/<axis>=<value>_s<seed>/curve.csv   (error.txt for failed runs)
//   summary.csv   (axis_value,mean,stderr,n_seeds)
//   long.csv      (axis_value,seed,step,mean_true_return,stderr,phase)
SweepResult run_sweep(const ExperimentConfig& base, const SweepAxis& axis,
                      const std::filesystem::path& out_dir, int workers);

// Single config: every seed of `config`, outputs runs/s<seed>/curve.csv plus a
// one-row summary.csv labeled with the config name.
SweepResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                           int workers);

// `summarize` verb: final-window summary of curve CSVs already on disk.
SummaryRow summarize_curve_files(const std::string& label,
                                 const std::vector<std::filesystem::path>& curve_csvs);

// Deterministic shortest-round-trip formatting used by every CSV writer.
std::string format_double(double v);

}  // namespace rbrl
