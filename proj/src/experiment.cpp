#include "rbrl/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace rbrl {

namespace {

nlohmann::json mlp_spec_to_json(const MlpSpec& s) {
    return {{"input_dim", s.input_dim},
            {"hidden_layers", s.hidden_layers},
            {"hidden_width", s.hidden_width},
            {"activation", to_string(s.activation)},
            {"dropout_rate", s.dropout_rate},
            {"output_squash", to_string(s.output_squash)},
            {"output_dim", s.output_dim}};
}

MlpSpec mlp_spec_from_json(const nlohmann::json& j) {
    MlpSpec s;
    s.input_dim = j.at("input_dim").get<int>();
    s.hidden_layers = j.at("hidden_layers").get<int>();
    s.hidden_width = j.at("hidden_width").get<int>();
    s.activation = activation_from_string(j.at("activation").get<std::string>());
    s.dropout_rate = j.at("dropout_rate").get<double>();
    s.output_squash = output_squash_from_string(j.at("output_squash").get<std::string>());
    s.output_dim = j.at("output_dim").get<int>();
    return s;
}

nlohmann::json optimizer_to_json(const OptimizerConfig& o) {
    return {{"kind", to_string(o.kind)},
            {"learning_rate", o.learning_rate},
            {"beta1", o.beta1},
            {"beta2", o.beta2},
            {"epsilon", o.epsilon},
            {"weight_decay", o.weight_decay}};
}

OptimizerConfig optimizer_from_json(const nlohmann::json& j) {
    OptimizerConfig o;
    o.kind = optimizer_kind_from_string(j.at("kind").get<std::string>());
    o.learning_rate = j.at("learning_rate").get<double>();
    o.beta1 = j.at("beta1").get<double>();
    o.beta2 = j.at("beta2").get<double>();
    o.epsilon = j.at("epsilon").get<double>();
    o.weight_decay = j.at("weight_decay").get<double>();
    return o;
}

double parse_double(const std::string& s) {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("bad numeric value: " + s);
    return v;
}

int parse_int(const std::string& s) {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("bad integer value: " + s);
    return v;
}

}  // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void ExperimentConfig::validate() const {
    if (name.empty()) throw std::invalid_argument("ExperimentConfig: name must be non-empty");
    make_env(env);  // throws on unknown name
    if (n_classes < 2) throw std::invalid_argument("ExperimentConfig: n_classes must be >= 2");
    q.validate();
    rater_config().validate();
    reward_trainer_config().validate();
    if (segment_length < 1) throw std::invalid_argument("ExperimentConfig: segment_length must be >= 1");
    ppo.validate();
    if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: seeds must be non-empty");
    std::vector<std::uint64_t> sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw std::invalid_argument("ExperimentConfig: seeds must be distinct");
    }
    if (total_steps < 1) throw std::invalid_argument("ExperimentConfig: total_steps must be >= 1");
}

RaterConfig ExperimentConfig::rater_config() const {
    return {.n_classes = n_classes, .max_reward = rater_max_reward, .budget = rating_budget};
}

RewardTrainerConfig ExperimentConfig::reward_trainer_config() const {
    RewardTrainerConfig cfg;
    cfg.batch_size = reward_batch_size;
    cfg.epochs = reward_epochs;
    cfg.optimizer = reward_optimizer;
    cfg.q = q;
    cfg.mlp = reward_mlp;
    return cfg;
}

std::string ExperimentConfig::to_json_string() const {
    nlohmann::json j;
    j["name"] = name;
    j["env"] = env;
    j["n_classes"] = n_classes;
    j["q"] = {{"variant", to_string(q.variant)}, {"k", q.k}};
    j["rater"] = {{"max_reward", rater_max_reward}, {"budget", rating_budget}};
    j["segment_length"] = segment_length;
    j["reward_model"] = mlp_spec_to_json(reward_mlp);
    j["reward_optimizer"] = optimizer_to_json(reward_optimizer);
    j["reward_training"] = {{"batch_size", reward_batch_size}, {"epochs", reward_epochs}};
    j["ppo"] = {{"gamma", ppo.gamma},
                {"gae_lambda", ppo.gae_lambda},
                {"clip_epsilon", ppo.clip_epsilon},
                {"epochs_per_update", ppo.epochs_per_update},
                {"rollout_length", ppo.rollout_length},
                {"minibatch_size", ppo.minibatch_size},
                {"policy_mlp", mlp_spec_to_json(ppo.policy_mlp)},
                {"value_mlp", mlp_spec_to_json(ppo.value_mlp)},
                {"optimizer", optimizer_to_json(ppo.optimizer)},
                {"exploration_steps", ppo.exploration_steps},
                {"init_log_std", ppo.init_log_std},
                {"entropy_coef", ppo.entropy_coef},
                {"normalize_advantages", ppo.normalize_advantages},
                {"max_grad_norm", ppo.max_grad_norm},
                {"target_kl", ppo.target_kl},
                {"eval_interval", ppo.eval_interval},
                {"eval_episodes", ppo.eval_episodes},
                {"reward_refit_interval", ppo.reward_refit_interval}};
    j["seeds"] = seeds;
    j["total_steps"] = total_steps;
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    ExperimentConfig c;
    c.name = j.at("name").get<std::string>();
    c.env = j.at("env").get<std::string>();
    c.n_classes = j.at("n_classes").get<int>();
    c.q.variant = q_variant_from_string(j.at("q").at("variant").get<std::string>());
    c.q.k = j.at("q").at("k").get<double>();
    c.rater_max_reward = j.at("rater").at("max_reward").get<double>();
    c.rating_budget = j.at("rater").at("budget").get<int>();
    c.segment_length = j.at("segment_length").get<int>();
    c.reward_mlp = mlp_spec_from_json(j.at("reward_model"));
    c.reward_optimizer = optimizer_from_json(j.at("reward_optimizer"));
    c.reward_batch_size = j.at("reward_training").at("batch_size").get<int>();
    c.reward_epochs = j.at("reward_training").at("epochs").get<int>();
    const auto& p = j.at("ppo");
    c.ppo.gamma = p.at("gamma").get<double>();
    c.ppo.gae_lambda = p.at("gae_lambda").get<double>();
    c.ppo.clip_epsilon = p.at("clip_epsilon").get<double>();
    c.ppo.epochs_per_update = p.at("epochs_per_update").get<int>();
    c.ppo.rollout_length = p.at("rollout_length").get<int>();
    c.ppo.minibatch_size = p.at("minibatch_size").get<int>();
    c.ppo.policy_mlp = mlp_spec_from_json(p.at("policy_mlp"));
    c.ppo.value_mlp = mlp_spec_from_json(p.at("value_mlp"));
    c.ppo.optimizer = optimizer_from_json(p.at("optimizer"));
    c.ppo.exploration_steps = p.at("exploration_steps").get<int>();
    c.ppo.init_log_std = p.at("init_log_std").get<double>();
    c.ppo.entropy_coef = p.at("entropy_coef").get<double>();
    c.ppo.normalize_advantages = p.at("normalize_advantages").get<bool>();
    c.ppo.max_grad_norm = p.at("max_grad_norm").get<double>();
    c.ppo.target_kl = p.at("target_kl").get<double>();
    c.ppo.eval_interval = p.at("eval_interval").get<int>();
    c.ppo.eval_episodes = p.at("eval_episodes").get<int>();
    c.ppo.reward_refit_interval = p.at("reward_refit_interval").get<int>();
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.total_steps = j.at("total_steps").get<long>();
    c.validate();
    return c;
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("ExperimentConfig::save: cannot open " + path.string());
    f << to_json_string() << "\n";
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("ExperimentConfig::load: cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_string(ss.str());
}

ExperimentConfig preset(const std::string& name) {
    ExperimentConfig c;
    c.env = "point_mass";
    c.n_classes = 2;
    c.q = {.variant = QVariant::Original, .k = 1.0};
    // Boundary at 40% of the per-segment maximum: splits exploration-phase
    // segments into usefully balanced classes on the desk-scale envs.
    c.rater_max_reward = 20.0;
    c.rating_budget = 200;
    c.segment_length = 50;
    c.reward_mlp = {.input_dim = 6,
                    .hidden_layers = 3,
                    .hidden_width = 64,
                    .activation = Activation::Tanh,
                    .dropout_rate = 0.0,
                    .output_squash = OutputSquash::Tanh,
                    .output_dim = 1};
    c.reward_batch_size = 50;
    c.reward_epochs = 100;
    c.ppo = default_ppo_config();
    c.seeds = {1, 2, 3, 4, 5};
    c.total_steps = 100000;

    if (name == "paper_default") {
        c.name = "paper_default";
        c.reward_optimizer = make_adam(3e-4);
    } else if (name == "optimized") {
        c.name = "optimized";
        c.reward_mlp.hidden_layers = 2;
        c.reward_mlp.dropout_rate = 0.05;
        c.reward_mlp.activation = Activation::ArcTan;
        c.reward_optimizer = make_adamw(5e-4);
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    c.validate();
    return c;
}

std::vector<std::string> preset_names() { return {"paper_default", "optimized"}; }

ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis,
                            const std::string& value) {
    ExperimentConfig c = base;
    if (axis == "k") {
        c.q.k = parse_double(value);
    } else if (axis == "q_variant") {
        c.q.variant = q_variant_from_string(value);
    } else if (axis == "activation") {
        c.reward_mlp.activation = activation_from_string(value);
    } else if (axis == "dropout") {
        c.reward_mlp.dropout_rate = parse_double(value);
    } else if (axis == "learning_rate") {
        c.reward_optimizer.learning_rate = parse_double(value);
    } else if (axis == "optimizer") {
        const OptimizerKind kind = optimizer_kind_from_string(value);
        c.reward_optimizer =
            kind == OptimizerKind::Adam ? make_adam(base.reward_optimizer.learning_rate)
                                        : make_adamw(base.reward_optimizer.learning_rate);
    } else if (axis == "hidden_layers") {
        c.reward_mlp.hidden_layers = parse_int(value);
    } else if (axis == "max_reward") {
        c.rater_max_reward = parse_double(value);
    } else if (axis == "n_classes") {
        c.n_classes = parse_int(value);
    } else {
        throw std::invalid_argument("unknown sweep axis: " + axis);
    }
    c.validate();
    return c;
}

std::vector<std::string> axis_names() {
    return {"k",         "q_variant",     "activation", "dropout", "learning_rate",
            "optimizer", "hidden_layers", "max_reward", "n_classes"};
}

double final_window_mean(std::span<const EvalPoint> curve) {
    if (curve.empty()) throw std::invalid_argument("final_window_mean: empty curve");
    const std::size_t n = curve.size();
    const std::size_t window = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n))));
    double sum = 0.0;
    for (std::size_t i = n - window; i < n; ++i) sum += curve[i].mean_true_return;
    return sum / static_cast<double>(window);
}

SummaryRow summarize(const std::string& axis_value, std::span<const double> final_means) {
    if (final_means.empty()) throw std::invalid_argument("summarize: no records");
    std::vector<double> sorted(final_means.begin(), final_means.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    double mean = 0.0;
    for (double v : sorted) mean += v;
    mean /= static_cast<double>(n);
    double stderr_ = 0.0;
    if (n > 1) {
        double var = 0.0;
        for (double v : sorted) var += (v - mean) * (v - mean);
        stderr_ = std::sqrt(var / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
    }
    return {.axis_value = axis_value, .mean = mean, .stderr_ = stderr_, .n_seeds = static_cast<int>(n)};
}

namespace {

struct Job {
    std::string axis_value;
    std::string run_id;
    ExperimentConfig config;
    std::uint64_t seed;
};

RunOutcome execute_job(const Job& job, const std::filesystem::path& out_dir) {
    RunOutcome outcome;
    outcome.axis_value = job.axis_value;
    outcome.seed = job.seed;
    const std::filesystem::path run_dir = out_dir / "runs" / job.run_id;
    std::filesystem::create_directories(run_dir);
    try {
        const auto env = make_env(job.config.env);
        RunRecord record =
            run_rbrl(*env, job.config.rater_config(), job.config.reward_trainer_config(),
                     job.config.ppo, job.config.total_steps, job.seed, job.config.segment_length);
        if (!record.completed) throw std::runtime_error(record.error);
        std::ofstream f(run_dir / "curve.csv");
        record.write_curve_csv(f);
        outcome.ok = true;
        outcome.record = std::move(record);
    } catch (const std::exception& e) {
        outcome.ok = false;
        outcome.error = e.what();
        std::ofstream f(run_dir / "error.txt");
        f << e.what() << "\n";
    }
    return outcome;
}

SweepResult execute_jobs(const std::vector<Job>& jobs, const std::vector<std::string>& axis_values,
                         const std::filesystem::path& out_dir, int workers) {
    if (workers < 1) throw std::invalid_argument("run_sweep: workers must be >= 1");
    std::filesystem::create_directories(out_dir / "runs");

    SweepResult result;
    result.runs.resize(jobs.size());
    if (workers == 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) result.runs[i] = execute_job(jobs[i], out_dir);
    } else {
        std::mutex next_mutex;
        std::size_t next = 0;
        auto worker_loop = [&] {
            for (;;) {
                std::size_t i;
                {
                    std::lock_guard<std::mutex> lock(next_mutex);
                    if (next >= jobs.size()) return;
                    i = next++;
                }
                result.runs[i] = execute_job(jobs[i], out_dir);
            }
        };
        std::vector<std::thread> pool;
        const int n_threads = std::min<int>(workers, static_cast<int>(jobs.size()));
        pool.reserve(n_threads);
        for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker_loop);
        for (auto& t : pool) t.join();
    }

    // Merge in (axis value, seed) order: jobs were enumerated that way.
    std::ofstream summary_file(out_dir / "summary.csv");
    summary_file << "axis_value,mean,stderr,n_seeds\n";
    for (const std::string& value : axis_values) {
        std::vector<double> finals;
        for (const RunOutcome& run : result.runs) {
            if (run.axis_value == value && run.ok) finals.push_back(final_window_mean(run.record.curve));
        }
        SummaryRow row;
        if (finals.empty()) {
            row = {.axis_value = value,
                   .mean = std::numeric_limits<double>::quiet_NaN(),
                   .stderr_ = std::numeric_limits<double>::quiet_NaN(),
                   .n_seeds = 0};
        } else {
            row = summarize(value, finals);
        }
        result.summary.push_back(row);
        summary_file << row.axis_value << "," << format_double(row.mean) << ","
                     << format_double(row.stderr_) << "," << row.n_seeds << "\n";
    }

    std::ofstream long_file(out_dir / "long.csv");
    long_file << "axis_value,seed,step,mean_true_return,stderr,phase\n";
    for (const RunOutcome& run : result.runs) {
        if (!run.ok) continue;
        for (const EvalPoint& p : run.record.curve) {
            long_file << run.axis_value << "," << run.seed << "," << p.step << ","
                      << format_double(p.mean_true_return) << "," << format_double(p.stderr_) << ","
                      << p.phase << "\n";
        }
    }
    return result;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& base, const SweepAxis& axis,
                      const std::filesystem::path& out_dir, int workers) {
    base.validate();
    if (axis.values.empty()) throw std::invalid_argument("run_sweep: axis has no values");

    std::vector<Job> jobs;
    std::vector<std::string> axis_values;
    for (const std::string& value : axis.values) {
        const ExperimentConfig config = apply_axis(base, axis.name, value);
        axis_values.push_back(value);
        for (const std::uint64_t seed : base.seeds) {
            jobs.push_back({.axis_value = value,
                            .run_id = axis.name + "=" + value + "_s" + std::to_string(seed),
                            .config = config,
                            .seed = seed});
        }
    }
    return execute_jobs(jobs, axis_values, out_dir, workers);
}

SweepResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                           int workers) {
    config.validate();
    std::vector<Job> jobs;
    for (const std::uint64_t seed : config.seeds) {
        jobs.push_back({.axis_value = config.name,
                        .run_id = "s" + std::to_string(seed),
                        .config = config,
                        .seed = seed});
    }
    return execute_jobs(jobs, {config.name}, out_dir, workers);
}

SummaryRow summarize_curve_files(const std::string& label,
                                 const std::vector<std::filesystem::path>& curve_csvs) {
    if (curve_csvs.empty()) throw std::invalid_argument("summarize_curve_files: no inputs");
    std::vector<double> finals;
    for (const auto& path : curve_csvs) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("summarize_curve_files: cannot open " + path.string());
        const std::vector<EvalPoint> curve = RunRecord::read_curve_csv(f);
        finals.push_back(final_window_mean(curve));
    }
    return summarize(label, finals);
}

}  // namespace rbrl
