// rbrl CLI: run a single experiment, sweep one axis, summarize curve files,
// emit preset configs, export rollout traces, and emit synthetic-rating
// datasets.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rbrl/experiment.hpp"
#include "rbrl/rater.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> seeds;
    for (const std::string& item : split_commas(s)) seeds.push_back(std::stoull(item));
    return seeds;
}

// --axis NAME=v1,v2,...
rbrl::SweepAxis parse_axis(const std::string& s) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw CLI::ValidationError("--axis", "expected NAME=v1,v2,...");
    }
    rbrl::SweepAxis axis;
    axis.name = s.substr(0, eq);
    axis.values = split_commas(s.substr(eq + 1));
    if (axis.values.empty()) throw CLI::ValidationError("--axis", "axis has no values");
    return axis;
}

void print_summary(const std::vector<rbrl::SummaryRow>& rows) {
    std::cout << "axis_value,mean,stderr,n_seeds\n";
    for (const auto& row : rows) {
        std::cout << row.axis_value << "," << rbrl::format_double(row.mean) << ","
                  << rbrl::format_double(row.stderr_) << "," << row.n_seeds << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rating-based reinforcement learning lab"};
    app.require_subcommand(1);

    // run
    auto* run_cmd = app.add_subcommand("run", "Run one experiment config (all seeds)");
    std::string run_config, run_out = "out", run_seeds;
    int run_workers = 1;
    run_cmd->add_option("--config", run_config, "Experiment config JSON")->required();
    run_cmd->add_option("--out", run_out, "Output directory");
    run_cmd->add_option("--seeds", run_seeds, "Override seeds, comma-separated");
    run_cmd->add_option("--workers", run_workers, "Parallel runs");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one named axis over a base config");
    std::string sweep_config, sweep_axis, sweep_out = "out", sweep_seeds;
    int sweep_workers = 1;
    sweep_cmd->add_option("--config", sweep_config, "Base experiment config JSON")->required();
    sweep_cmd->add_option("--axis", sweep_axis, "NAME=v1,v2,... (k, q_variant, activation, dropout, learning_rate, optimizer, hidden_layers, max_reward, n_classes)")->required();
    sweep_cmd->add_option("--out", sweep_out, "Output directory");
    sweep_cmd->add_option("--seeds", sweep_seeds, "Override seeds, comma-separated");
    sweep_cmd->add_option("--workers", sweep_workers, "Parallel runs");

    // summarize
    auto* sum_cmd = app.add_subcommand("summarize", "Final-window summary of curve CSVs");
    std::vector<std::string> sum_files;
    std::string sum_label = "records", sum_out;
    sum_cmd->add_option("files", sum_files, "curve.csv paths")->required();
    sum_cmd->add_option("--label", sum_label, "Row label");
    sum_cmd->add_option("--out", sum_out, "Write summary CSV here instead of stdout");

    // preset
    auto* preset_cmd = app.add_subcommand("preset", "Emit a named config (paper_default, optimized)");
    std::string preset_name, preset_out, preset_seeds;
    preset_cmd->add_option("name", preset_name, "Preset name")->required();
    preset_cmd->add_option("--out", preset_out, "Write config here instead of stdout");
    preset_cmd->add_option("--seeds", preset_seeds, "Override seeds, comma-separated");

    // rollout
    auto* rollout_cmd = app.add_subcommand("rollout", "Export a random-policy trace CSV");
    std::string rollout_env = "point_mass", rollout_out;
    int rollout_steps = 1000;
    std::uint64_t rollout_seed = 1;
    rollout_cmd->add_option("--env", rollout_env, "Environment name");
    rollout_cmd->add_option("--steps", rollout_steps, "Steps to trace");
    rollout_cmd->add_option("--seed", rollout_seed, "Seed");
    rollout_cmd->add_option("--out", rollout_out, "Write CSV here instead of stdout");

    // rate
    auto* rate_cmd = app.add_subcommand("rate", "Emit a synthetic rating dataset (JSON lines)");
    std::string rate_env = "point_mass", rate_out;
    int rate_classes = 2, rate_budget = 100, rate_count = 200, rate_length = 50;
    double rate_max_reward = 50.0;
    std::uint64_t rate_seed = 1;
    rate_cmd->add_option("--env", rate_env, "Environment name");
    rate_cmd->add_option("--n-classes", rate_classes, "Rating classes");
    rate_cmd->add_option("--max-reward", rate_max_reward, "Rater maximum reward");
    rate_cmd->add_option("--budget", rate_budget, "Ratings to emit");
    rate_cmd->add_option("--count", rate_count, "Segments to collect");
    rate_cmd->add_option("--segment-length", rate_length, "Segment length");
    rate_cmd->add_option("--seed", rate_seed, "Seed");
    rate_cmd->add_option("--out", rate_out, "Output JSONL path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            rbrl::ExperimentConfig cfg = rbrl::ExperimentConfig::load(run_config);
            if (!run_seeds.empty()) cfg.seeds = parse_seeds(run_seeds);
            const rbrl::SweepResult res = rbrl::run_experiment(cfg, run_out, run_workers);
            print_summary(res.summary);
        } else if (*sweep_cmd) {
            rbrl::ExperimentConfig cfg = rbrl::ExperimentConfig::load(sweep_config);
            if (!sweep_seeds.empty()) cfg.seeds = parse_seeds(sweep_seeds);
            const rbrl::SweepAxis axis = parse_axis(sweep_axis);
            const rbrl::SweepResult res = rbrl::run_sweep(cfg, axis, sweep_out, sweep_workers);
            print_summary(res.summary);
        } else if (*sum_cmd) {
            std::vector<std::filesystem::path> paths(sum_files.begin(), sum_files.end());
            const rbrl::SummaryRow row = rbrl::summarize_curve_files(sum_label, paths);
            if (sum_out.empty()) {
                print_summary({row});
            } else {
                std::ofstream f(sum_out);
                f << "axis_value,mean,stderr,n_seeds\n"
                  << row.axis_value << "," << rbrl::format_double(row.mean) << ","
                  << rbrl::format_double(row.stderr_) << "," << row.n_seeds << "\n";
            }
        } else if (*preset_cmd) {
            rbrl::ExperimentConfig cfg = rbrl::preset(preset_name);
            if (!preset_seeds.empty()) cfg.seeds = parse_seeds(preset_seeds);
            if (preset_out.empty()) {
                std::cout << cfg.to_json_string() << "\n";
            } else {
                cfg.save(preset_out);
            }
        } else if (*rollout_cmd) {
            const auto env = rbrl::make_env(rollout_env);
            rbrl::Rng rng(rollout_seed);
            const rbrl::PolicyFn policy = [&env](std::span<const double>, rbrl::Rng& r) {
                return rbrl::random_policy_action(env->spec(), r);
            };
            if (rollout_out.empty()) {
                rbrl::write_trace_csv(*env, policy, rollout_steps, rng, std::cout);
            } else {
                std::ofstream f(rollout_out);
                rbrl::write_trace_csv(*env, policy, rollout_steps, rng, f);
            }
        } else if (*rate_cmd) {
            const auto env = rbrl::make_env(rate_env);
            rbrl::Rng rng(rate_seed);
            const rbrl::PolicyFn policy = [&env](std::span<const double>, rbrl::Rng& r) {
                return rbrl::random_policy_action(env->spec(), r);
            };
            const rbrl::SegmentBuffer buffer =
                rbrl::collect_segments(*env, policy, rate_count, rate_length, rng);
            const rbrl::RaterConfig cfg{.n_classes = rate_classes,
                                        .max_reward = rate_max_reward,
                                        .budget = rate_budget};
            const rbrl::RatingDataset ds = rbrl::rate_buffer(buffer, cfg, rate_budget, rng);
            ds.save_jsonl(rate_out);
            std::cout << "wrote " << ds.size() << " rated segments to " << rate_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
