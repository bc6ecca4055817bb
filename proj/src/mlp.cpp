#include "rbrl/mlp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rbrl {

namespace {

constexpr double kLeCunScale = 1.7159;
constexpr double kLeCunSlope = 2.0 / 3.0;

void check_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw std::invalid_argument(std::string(what) + " contains a non-finite value");
        }
    }
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::ArcTan: return "arctan";
        case Activation::LeCunTanh: return "lecun_tanh";
    }
    throw std::invalid_argument("unknown activation");
}

std::string to_string(OutputSquash s) {
    return s == OutputSquash::None ? "none" : "tanh";
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "arctan") return Activation::ArcTan;
    if (s == "lecun_tanh") return Activation::LeCunTanh;
    throw std::invalid_argument("unknown activation: " + s);
}

OutputSquash output_squash_from_string(const std::string& s) {
    if (s == "none") return OutputSquash::None;
    if (s == "tanh") return OutputSquash::Tanh;
    throw std::invalid_argument("unknown output squash: " + s);
}

double activation_apply(Activation kind, double x) {
    switch (kind) {
        case Activation::Tanh: return std::tanh(x);
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::ArcTan: return std::atan(x);
        case Activation::LeCunTanh: return kLeCunScale * std::tanh(kLeCunSlope * x);
    }
    throw std::invalid_argument("unknown activation");
}

double activation_grad(Activation kind, double x) {
    switch (kind) {
        case Activation::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::Sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        }
        case Activation::ArcTan:
            return 1.0 / (1.0 + x * x);
        case Activation::LeCunTanh: {
            const double t = std::tanh(kLeCunSlope * x);
            return kLeCunScale * kLeCunSlope * (1.0 - t * t);
        }
    }
    throw std::invalid_argument("unknown activation");
}

void MlpSpec::validate() const {
    if (input_dim < 1) throw std::invalid_argument("MlpSpec: input_dim must be >= 1");
    if (output_dim < 1) throw std::invalid_argument("MlpSpec: output_dim must be >= 1");
    if (hidden_layers < 1) throw std::invalid_argument("MlpSpec: hidden_layers must be >= 1");
    if (hidden_width < 1) throw std::invalid_argument("MlpSpec: hidden_width must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw std::invalid_argument("MlpSpec: dropout_rate must be in [0, 1)");
    }
}

std::size_t MlpSpec::param_count() const {
    std::size_t n = 0;
    for (int l = 0; l < num_linear_layers(); ++l) {
        n += static_cast<std::size_t>(layer_out(l)) * layer_in(l) + layer_out(l);
    }
    return n;
}

DropoutMask draw_dropout_mask(const MlpSpec& spec, Rng& rng) {
    DropoutMask mask(spec.hidden_unit_count());
    for (auto& keep : mask) {
        keep = rng.uniform() >= spec.dropout_rate ? 1 : 0;
    }
    return mask;
}

Mlp::Mlp(const MlpSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    spec_.validate();
    params_.assign(spec_.param_count(), 0.0);
    Rng rng(init_seed);
    // Weights drawn layer by layer, row-major; biases stay zero.
    std::size_t off = 0;
    for (int l = 0; l < spec_.num_linear_layers(); ++l) {
        const double limit = std::sqrt(6.0 / spec_.layer_in(l));
        const std::size_t nw = static_cast<std::size_t>(spec_.layer_out(l)) * spec_.layer_in(l);
        for (std::size_t i = 0; i < nw; ++i) {
            params_[off + i] = rng.uniform(-limit, limit);
        }
        off += nw + spec_.layer_out(l);
    }
}

Mlp Mlp::zeros(const MlpSpec& spec) {
    spec.validate();
    Mlp net;
    net.spec_ = spec;
    net.params_.assign(spec.param_count(), 0.0);
    return net;
}

std::size_t Mlp::w_offset(int l) const {
    std::size_t off = 0;
    for (int i = 0; i < l; ++i) {
        off += static_cast<std::size_t>(spec_.layer_out(i)) * spec_.layer_in(i) + spec_.layer_out(i);
    }
    return off;
}

std::size_t Mlp::b_offset(int l) const {
    return w_offset(l) + static_cast<std::size_t>(spec_.layer_out(l)) * spec_.layer_in(l);
}

std::vector<double> Mlp::forward_vec(std::span<const double> input, const DropoutMask* mask,
                                     ForwardCache* cache) const {
    if (params_.empty()) throw std::logic_error("Mlp: uninitialized network");
    if (static_cast<int>(input.size()) != spec_.input_dim) {
        throw std::invalid_argument("Mlp::forward: input size != input_dim");
    }
    check_finite(input, "Mlp::forward: input");
    const bool training = mask != nullptr;
    if (training && mask->size() != spec_.hidden_unit_count()) {
        throw std::invalid_argument("Mlp::forward: dropout mask size mismatch");
    }
    const double keep_scale = training ? 1.0 / (1.0 - spec_.dropout_rate) : 1.0;

    const int layers = spec_.num_linear_layers();
    std::vector<std::vector<double>> pre(layers);
    std::vector<std::vector<double>> post(spec_.hidden_layers);

    std::vector<double> h(input.begin(), input.end());
    std::size_t off = 0;
    for (int l = 0; l < layers; ++l) {
        const int in = spec_.layer_in(l);
        const int out = spec_.layer_out(l);
        const double* w = params_.data() + off;
        const double* b = params_.data() + off + static_cast<std::size_t>(out) * in;
        std::vector<double> z(out);
        for (int i = 0; i < out; ++i) {
            const double* wi = w + static_cast<std::size_t>(i) * in;
            double s = b[i];
            for (int j = 0; j < in; ++j) s += wi[j] * h[j];
            z[i] = s;
        }
        pre[l] = z;
        if (l < spec_.hidden_layers) {
            std::vector<double> a(out);
            for (int i = 0; i < out; ++i) a[i] = activation_apply(spec_.activation, z[i]);
            if (training) {
                const std::uint8_t* m = mask->data() + static_cast<std::size_t>(l) * spec_.hidden_width;
                for (int i = 0; i < out; ++i) a[i] = m[i] ? a[i] * keep_scale : 0.0;
            }
            post[l] = a;
            h = std::move(a);
        } else {
            if (spec_.output_squash == OutputSquash::Tanh) {
                for (int i = 0; i < out; ++i) z[i] = std::tanh(z[i]);
            }
            h = std::move(z);
        }
        off += static_cast<std::size_t>(out) * in + out;
    }

    if (cache != nullptr) {
        cache->input.assign(input.begin(), input.end());
        cache->pre = std::move(pre);
        cache->post = std::move(post);
        cache->output = h;
        cache->mask = training ? *mask : DropoutMask{};
        cache->training = training;
        cache->params_version = version_;
    }
    return h;
}

double Mlp::forward(std::span<const double> input, const DropoutMask* mask, ForwardCache* cache) const {
    if (spec_.output_dim != 1) {
        throw std::invalid_argument("Mlp::forward (scalar): output_dim != 1");
    }
    return forward_vec(input, mask, cache)[0];
}

void Mlp::check_cache(const ForwardCache& cache) const {
    if (cache.params_version != version_) {
        throw std::invalid_argument("Mlp::backward: stale cache (parameters changed since forward)");
    }
    if (static_cast<int>(cache.input.size()) != spec_.input_dim ||
        cache.pre.size() != static_cast<std::size_t>(spec_.num_linear_layers()) ||
        cache.post.size() != static_cast<std::size_t>(spec_.hidden_layers)) {
        throw std::invalid_argument("Mlp::backward: cache does not match this network");
    }
}

void Mlp::backward_into(const ForwardCache& cache, std::span<const double> upstream,
                        std::span<double> grad_accum) const {
    check_cache(cache);
    if (static_cast<int>(upstream.size()) != spec_.output_dim) {
        throw std::invalid_argument("Mlp::backward: upstream size != output_dim");
    }
    if (grad_accum.size() != params_.size()) {
        throw std::invalid_argument("Mlp::backward: gradient buffer size mismatch");
    }
    const double keep_scale = cache.training ? 1.0 / (1.0 - spec_.dropout_rate) : 1.0;

    const int last = spec_.hidden_layers;  // index of the output linear layer
    std::vector<double> delta(upstream.begin(), upstream.end());
    if (spec_.output_squash == OutputSquash::Tanh) {
        for (int i = 0; i < spec_.output_dim; ++i) {
            const double y = cache.output[i];
            delta[i] *= 1.0 - y * y;
        }
    }

    for (int l = last; l >= 0; --l) {
        const int in = spec_.layer_in(l);
        const int out = spec_.layer_out(l);
        const std::size_t woff = w_offset(l);
        const std::size_t boff = b_offset(l);
        const std::vector<double>& x = l == 0 ? cache.input : cache.post[l - 1];

        for (int i = 0; i < out; ++i) {
            const double d = delta[i];
            if (d != 0.0) {
                double* gw = grad_accum.data() + woff + static_cast<std::size_t>(i) * in;
                for (int j = 0; j < in; ++j) gw[j] += d * x[j];
            }
            grad_accum[boff + i] += d;
        }
        if (l == 0) break;

        std::vector<double> dh(in, 0.0);
        const double* w = params_.data() + woff;
        for (int i = 0; i < out; ++i) {
            const double d = delta[i];
            if (d == 0.0) continue;
            const double* wi = w + static_cast<std::size_t>(i) * in;
            for (int j = 0; j < in; ++j) dh[j] += d * wi[j];
        }
        // Through dropout scaling and the activation of hidden layer l-1.
        const int hl = l - 1;
        delta.assign(in, 0.0);
        const std::uint8_t* m =
            cache.training ? cache.mask.data() + static_cast<std::size_t>(hl) * spec_.hidden_width
                           : nullptr;
        for (int j = 0; j < in; ++j) {
            double g = dh[j];
            if (m != nullptr) g = m[j] ? g * keep_scale : 0.0;
            delta[j] = g * activation_grad(spec_.activation, cache.pre[hl][j]);
        }
    }
}

std::vector<double> Mlp::backward(const ForwardCache& cache, std::span<const double> upstream) const {
    std::vector<double> grads(params_.size(), 0.0);
    backward_into(cache, upstream, grads);
    return grads;
}

std::vector<double> Mlp::backward(const ForwardCache& cache, double upstream) const {
    const double u[1] = {upstream};
    return backward(cache, std::span<const double>(u, 1));
}

std::string Mlp::to_json_string() const {
    nlohmann::json j;
    j["format"] = "rbrl-mlp";
    j["version"] = 1;
    j["spec"] = {{"input_dim", spec_.input_dim},
                 {"hidden_layers", spec_.hidden_layers},
                 {"hidden_width", spec_.hidden_width},
                 {"activation", to_string(spec_.activation)},
                 {"dropout_rate", spec_.dropout_rate},
                 {"output_squash", to_string(spec_.output_squash)},
                 {"output_dim", spec_.output_dim}};
    nlohmann::json layers = nlohmann::json::array();
    for (int l = 0; l < spec_.num_linear_layers(); ++l) {
        nlohmann::json weights = nlohmann::json::array();
        for (int i = 0; i < spec_.layer_out(l); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (int j = 0; j < spec_.layer_in(l); ++j) row.push_back(w(l, i, j));
            weights.push_back(std::move(row));
        }
        nlohmann::json bias = nlohmann::json::array();
        for (int i = 0; i < spec_.layer_out(l); ++i) bias.push_back(b(l, i));
        layers.push_back({{"weights", std::move(weights)}, {"bias", std::move(bias)}});
    }
    j["layers"] = std::move(layers);
    return j.dump(2);
}

Mlp Mlp::from_json_string(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format") != "rbrl-mlp" || j.at("version") != 1) {
        throw std::runtime_error("Mlp::from_json: unsupported checkpoint format");
    }
    const auto& s = j.at("spec");
    MlpSpec spec;
    spec.input_dim = s.at("input_dim").get<int>();
    spec.hidden_layers = s.at("hidden_layers").get<int>();
    spec.hidden_width = s.at("hidden_width").get<int>();
    spec.activation = activation_from_string(s.at("activation").get<std::string>());
    spec.dropout_rate = s.at("dropout_rate").get<double>();
    spec.output_squash = output_squash_from_string(s.at("output_squash").get<std::string>());
    spec.output_dim = s.at("output_dim").get<int>();

    Mlp net = Mlp::zeros(spec);
    const auto& layers = j.at("layers");
    if (layers.size() != static_cast<std::size_t>(spec.num_linear_layers())) {
        throw std::runtime_error("Mlp::from_json: layer count mismatch");
    }
    std::size_t off = 0;
    for (int l = 0; l < spec.num_linear_layers(); ++l) {
        const auto& weights = layers.at(l).at("weights");
        const auto& bias = layers.at(l).at("bias");
        if (weights.size() != static_cast<std::size_t>(spec.layer_out(l)) ||
            bias.size() != static_cast<std::size_t>(spec.layer_out(l))) {
            throw std::runtime_error("Mlp::from_json: layer shape mismatch");
        }
        for (int i = 0; i < spec.layer_out(l); ++i) {
            const auto& row = weights.at(i);
            if (row.size() != static_cast<std::size_t>(spec.layer_in(l))) {
                throw std::runtime_error("Mlp::from_json: weight row size mismatch");
            }
            for (int j2 = 0; j2 < spec.layer_in(l); ++j2) {
                net.params_[off + static_cast<std::size_t>(i) * spec.layer_in(l) + j2] =
                    row.at(j2).get<double>();
            }
        }
        off += static_cast<std::size_t>(spec.layer_out(l)) * spec.layer_in(l);
        for (int i = 0; i < spec.layer_out(l); ++i) net.params_[off + i] = bias.at(i).get<double>();
        off += spec.layer_out(l);
    }
    check_finite(net.params_, "Mlp::from_json: parameters");
    return net;
}

void Mlp::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("Mlp::save: cannot open " + path);
    f << to_json_string() << "\n";
}

Mlp Mlp::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("Mlp::load: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_string(ss.str());
}

}  // namespace rbrl
