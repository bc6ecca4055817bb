// Minimal dense MLP with manual forward/backward passes, four activations,
// inverted dropout, and JSON checkpointing. No numerical framework assumed.
//
// Parameter layout (flat vector, layer order input->output):
//   [W0 row-major (out x in) | b0 | W1 | b1 | ... | WL | bL]
// Linear layer l maps layer_in(l) -> layer_out(l); there are hidden_layers + 1
// linear layers, each hidden one followed by the activation and (in training
// mode) inverted dropout. The output layer is linear with an optional tanh
// squash.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rbrl/rng.hpp"

namespace rbrl {

enum class Activation { Tanh, Sigmoid, ArcTan, LeCunTanh };
enum class OutputSquash { None, Tanh };

std::string to_string(Activation a);
std::string to_string(OutputSquash s);
Activation activation_from_string(const std::string& s);
OutputSquash output_squash_from_string(const std::string& s);

double activation_apply(Activation kind, double x);
// Analytic derivative of activation_apply at x.
double activation_grad(Activation kind, double x);

struct MlpSpec {
    int input_dim = 1;
    int hidden_layers = 2;
    int hidden_width = 256;
    Activation activation = Activation::Tanh;
    double dropout_rate = 0.0;
    OutputSquash output_squash = OutputSquash::None;
    int output_dim = 1;

    void validate() const;

    int num_linear_layers() const { return hidden_layers + 1; }
    int layer_in(int l) const { return l == 0 ? input_dim : hidden_width; }
    int layer_out(int l) const { return l == hidden_layers ? output_dim : hidden_width; }
    std::size_t hidden_unit_count() const {
        return static_cast<std::size_t>(hidden_layers) * static_cast<std::size_t>(hidden_width);
    }
    std::size_t param_count() const;

    bool operator==(const MlpSpec&) const = default;
};

// One keep/drop flag per hidden unit, layer-major. Kept units are scaled by
// 1/(1-dropout_rate) at train time (inverted dropout), so evaluation needs no
// rescaling.
using DropoutMask = std::vector<std::uint8_t>;

DropoutMask draw_dropout_mask(const MlpSpec& spec, Rng& rng);

struct ForwardCache {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;   // pre-activation z per linear layer
    std::vector<std::vector<double>> post;  // post-activation (and post-dropout) per hidden layer
    std::vector<double> output;
    DropoutMask mask;  // empty in evaluation mode
    bool training = false;
    std::uint64_t params_version = 0;
};

class Mlp {
public:
    Mlp() = default;
    // He-uniform weights (limit sqrt(6/fan_in)), zero biases, seeded.
    Mlp(const MlpSpec& spec, std::uint64_t init_seed);

    static Mlp zeros(const MlpSpec& spec);

    const MlpSpec& spec() const { return spec_; }
    std::size_t param_count() const { return params_.size(); }
    const std::vector<double>& params() const { return params_; }
    // Mutable access bumps the version; outstanding caches become stale.
    std::vector<double>& mutable_params() {
        ++version_;
        return params_;
    }
    std::uint64_t version() const { return version_; }

    double w(int l, int i, int j) const { return params_[w_offset(l) + static_cast<std::size_t>(i) * spec_.layer_in(l) + j]; }
    double b(int l, int i) const { return params_[b_offset(l) + i]; }
    void set_w(int l, int i, int j, double v) { mutable_params()[w_offset(l) + static_cast<std::size_t>(i) * spec_.layer_in(l) + j] = v; }
    void set_b(int l, int i, double v) { mutable_params()[b_offset(l) + i] = v; }

    // Training mode iff mask != nullptr. Rejects dimension mismatches and
    // non-finite inputs.
    std::vector<double> forward_vec(std::span<const double> input, const DropoutMask* mask = nullptr,
                                    ForwardCache* cache = nullptr) const;
    // Scalar convenience for output_dim == 1 (the reward head).
    double forward(std::span<const double> input, const DropoutMask* mask = nullptr,
                   ForwardCache* cache = nullptr) const;

    // Reverse-mode gradient of (upstream . output) w.r.t. every parameter.
    // Rejects caches from a different parameter version or spec.
    std::vector<double> backward(const ForwardCache& cache, std::span<const double> upstream) const;
    std::vector<double> backward(const ForwardCache& cache, double upstream) const;
    // Accumulating form used by training loops to avoid reallocation.
    void backward_into(const ForwardCache& cache, std::span<const double> upstream,
                       std::span<double> grad_accum) const;

    // Checkpoint format: JSON object {format, version, spec, layers:[{weights,bias}]},
    // layers ordered input->output, weights[i][j] = w(l, i, j).
    std::string to_json_string() const;
    static Mlp from_json_string(const std::string& text);
    void save(const std::string& path) const;
    static Mlp load(const std::string& path);

private:
    std::size_t w_offset(int l) const;
    std::size_t b_offset(int l) const;
    void check_cache(const ForwardCache& cache) const;

    MlpSpec spec_;
    std::vector<double> params_;
    std::uint64_t version_ = 0;
};

}  // namespace rbrl
