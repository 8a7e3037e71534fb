#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bfcdn/rng.hpp"
#include "bfcdn/tensor.hpp"

namespace bfcdn {

// Scaled-down Bayesian fully-convolutional DenseNet topology. Spatial dims of
// the input must be divisible by 2^num_pool_levels.
struct NetworkConfig {
    int num_classes = 5;
    int growth_rate = 8;
    int layers_per_dense_block = 2;
    int num_pool_levels = 2;
    int initial_channels = 16;
    double dropout_rate = 0.4;
    int kernel_size = 3;

    void validate() const {
        if (num_classes < 2) throw std::invalid_argument("NetworkConfig: num_classes must be >= 2");
        if (growth_rate < 1) throw std::invalid_argument("NetworkConfig: growth_rate must be >= 1");
        if (layers_per_dense_block < 1)
            throw std::invalid_argument("NetworkConfig: layers_per_dense_block must be >= 1");
        if (num_pool_levels < 0)
            throw std::invalid_argument("NetworkConfig: num_pool_levels must be >= 0");
        if (initial_channels < 1)
            throw std::invalid_argument("NetworkConfig: initial_channels must be >= 1");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw std::invalid_argument("NetworkConfig: dropout_rate must be in [0,1)");
        if (kernel_size < 1 || kernel_size % 2 == 0)
            throw std::invalid_argument("NetworkConfig: kernel_size must be odd");
    }
};

// One convolution site in the parameter census.
struct ConvSpec {
    std::string name;
    int in_channels;
    int out_channels;
    int kernel;  // kernel x kernel
};

// The census is a pure function of the config; build() and the checkpoint
// loader both derive parameter shapes from it.
inline std::vector<ConvSpec> conv_census(const NetworkConfig& cfg) {
    cfg.validate();
    std::vector<ConvSpec> specs;
    int c = cfg.initial_channels;
    specs.push_back({"stem", 1, c, cfg.kernel_size});
    std::vector<int> skip_channels;
    for (int lvl = 0; lvl < cfg.num_pool_levels; ++lvl) {
        for (int l = 0; l < cfg.layers_per_dense_block; ++l) {
            specs.push_back({"enc" + std::to_string(lvl) + ".layer" + std::to_string(l),
                             c + l * cfg.growth_rate, cfg.growth_rate, cfg.kernel_size});
        }
        c += cfg.layers_per_dense_block * cfg.growth_rate;
        skip_channels.push_back(c);
        specs.push_back({"down" + std::to_string(lvl), c, c, 1});
    }
    for (int l = 0; l < cfg.layers_per_dense_block; ++l) {
        specs.push_back({"mid.layer" + std::to_string(l), c + l * cfg.growth_rate,
                         cfg.growth_rate, cfg.kernel_size});
    }
    c += cfg.layers_per_dense_block * cfg.growth_rate;
    for (int lvl = cfg.num_pool_levels - 1; lvl >= 0; --lvl) {
        c += skip_channels[static_cast<std::size_t>(lvl)];
        for (int l = 0; l < cfg.layers_per_dense_block; ++l) {
            specs.push_back({"dec" + std::to_string(lvl) + ".layer" + std::to_string(l),
                             c + l * cfg.growth_rate, cfg.growth_rate, cfg.kernel_size});
        }
        c += cfg.layers_per_dense_block * cfg.growth_rate;
        specs.push_back({"fuse" + std::to_string(lvl), c,
                         skip_channels[static_cast<std::size_t>(lvl)], 1});
        c = skip_channels[static_cast<std::size_t>(lvl)];
    }
    specs.push_back({"head_logits", c, cfg.num_classes, 1});
    specs.push_back({"head_var", c, 1, 1});
    return specs;
}

inline std::int64_t parameter_count(const NetworkConfig& cfg) {
    std::int64_t n = 0;
    for (const auto& s : conv_census(cfg))
        n += static_cast<std::int64_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel +
             s.out_channels;
    return n;
}

template <class S>
struct ModelT {
    NetworkConfig config;
    std::vector<std::string> param_names;
    std::vector<TensorPtr<S>> params;

    TensorPtr<S> find(const std::string& name) const {
        for (std::size_t i = 0; i < param_names.size(); ++i)
            if (param_names[i] == name) return params[i];
        throw std::invalid_argument("model has no parameter '" + name + "'");
    }

    void zero_grad() {
        for (auto& p : params) {
            p->ensure_grad();
            p->zero_grad();
        }
    }
};

// He fan-in initialization for kernels, zero biases. Deterministic in seed.
template <class S>
ModelT<S> build(const NetworkConfig& cfg, std::uint64_t seed) {
    ModelT<S> model;
    model.config = cfg;
    std::uint64_t idx = 0;
    for (const auto& spec : conv_census(cfg)) {
        RngStream rng(seed, "init", idx++);
        const int fan_in = spec.in_channels * spec.kernel * spec.kernel;
        const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
        std::vector<S> w(static_cast<std::size_t>(spec.out_channels) * spec.in_channels *
                         spec.kernel * spec.kernel);
        for (auto& v : w) v = static_cast<S>(rng.normal() * std_dev);
        model.param_names.push_back(spec.name + ".w");
        model.params.push_back(make_tensor<S>(
            {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}, std::move(w), true));
        model.param_names.push_back(spec.name + ".b");
        model.params.push_back(
            zeros<S>({spec.out_channels}, true));
    }
    return model;
}

namespace detail {

// Dropout site precedes every convolution.
template <class S>
TensorPtr<S> conv_site(const ModelT<S>& m, const TensorPtr<S>& x, const std::string& name,
                       bool dropout_enabled, RngStream& rng) {
    auto dropped = dropout(x, m.config.dropout_rate, rng, dropout_enabled);
    return conv2d(dropped, m.find(name + ".w"), m.find(name + ".b"), Padding::Same);
}

}  // namespace detail

// Dense block: each layer consumes the concatenation of all previous outputs
// and appends growth_rate channels.
template <class S>
TensorPtr<S> dense_block(const ModelT<S>& m, const TensorPtr<S>& x, const std::string& prefix,
                         int k_layers, bool dropout_enabled, RngStream& rng) {
    TensorPtr<S> cur = x;
    for (int l = 0; l < k_layers; ++l) {
        auto h = relu(detail::conv_site(m, cur, prefix + ".layer" + std::to_string(l),
                                        dropout_enabled, rng));
        cur = concat_channels(cur, h);
    }
    return cur;
}

template <class S>
struct ForwardOutput {
    TensorPtr<S> logits;    // [N,C,H,W]
    TensorPtr<S> variance;  // [N,1,H,W], strictly positive
};

template <class S>
ForwardOutput<S> forward(const ModelT<S>& m, const TensorPtr<S>& X, bool dropout_enabled,
                         RngStream& rng) {
    if (X->dims.size() != 4 || X->dim(1) != 1)
        throw std::invalid_argument("forward: input must be [N,1,H,W], got " + X->shape_str());
    const int stride = 1 << m.config.num_pool_levels;
    if (X->dim(2) % stride != 0 || X->dim(3) % stride != 0)
        throw std::invalid_argument("forward: spatial dims of " + X->shape_str() +
                                    " must be divisible by " + std::to_string(stride));
    const int L = m.config.layers_per_dense_block;
    auto x = relu(detail::conv_site(m, X, "stem", dropout_enabled, rng));
    std::vector<TensorPtr<S>> skips;
    for (int lvl = 0; lvl < m.config.num_pool_levels; ++lvl) {
        x = dense_block(m, x, "enc" + std::to_string(lvl), L, dropout_enabled, rng);
        skips.push_back(x);
        x = relu(detail::conv_site(m, x, "down" + std::to_string(lvl), dropout_enabled, rng));
        x = avg_pool2(x);
    }
    x = dense_block(m, x, "mid", L, dropout_enabled, rng);
    for (int lvl = m.config.num_pool_levels - 1; lvl >= 0; --lvl) {
        x = nearest_upsample2(x);
        x = concat_channels(skips[static_cast<std::size_t>(lvl)], x);
        x = dense_block(m, x, "dec" + std::to_string(lvl), L, dropout_enabled, rng);
        x = relu(detail::conv_site(m, x, "fuse" + std::to_string(lvl), dropout_enabled, rng));
    }
    ForwardOutput<S> out;
    out.logits = detail::conv_site(m, x, "head_logits", dropout_enabled, rng);
    out.variance = softplus(detail::conv_site(m, x, "head_var", dropout_enabled, rng));
    return out;
}

using Model = ModelT<float>;

}  // namespace bfcdn
