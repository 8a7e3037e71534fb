#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bfcdn/labels.hpp"
#include "bfcdn/rng.hpp"
#include "bfcdn/tensor.hpp"

namespace bfcdn {

struct LossConfig {
    int t_train = 10;  // Monte-Carlo perturbation samples per loss evaluation
    bool bayesian = true;

    void validate() const {
        if (t_train < 1) throw std::invalid_argument("LossConfig: t_train must be >= 1");
    }
};

// Per-class inverse-frequency weights for the current minibatch.
// beta_c = 1/|Y_c| for present classes, 0 for absent ones.
struct ClassWeights {
    std::vector<double> beta;
};

inline ClassWeights class_weights(const LabelMask& Y, int num_classes) {
    Y.validate(num_classes);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (const int l : Y.labels) ++counts[static_cast<std::size_t>(l)];
    ClassWeights w;
    w.beta.resize(static_cast<std::size_t>(num_classes), 0.0);
    for (int c = 0; c < num_classes; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0)
            w.beta[static_cast<std::size_t>(c)] =
                1.0 / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    return w;
}

// One reparameterized logit sample: z + sqrt(v) * eta, eta ~ N(0,1) drawn
// independently per pixel and class. Gradients reach both z and v.
template <class S>
TensorPtr<S> perturb_logits(const TensorPtr<S>& z, const TensorPtr<S>& v, RngStream& rng) {
    if (z->dims.size() != 4 || v->dims.size() != 4 || v->dim(1) != 1 || z->dim(0) != v->dim(0) ||
        z->dim(2) != v->dim(2) || z->dim(3) != v->dim(3))
        throw std::invalid_argument("perturb_logits: z " + z->shape_str() + " vs v " +
                                    v->shape_str());
    for (const S x : v->values)
        if (x < S(0)) throw std::invalid_argument("perturb_logits: negative variance");
    std::vector<S> eta(z->values.size());
    for (auto& e : eta) e = static_cast<S>(rng.normal());
    auto noise = make_tensor<S>(z->dims, std::move(eta));
    return add(z, mul_broadcast_channel(noise, vsqrt(v)));
}

namespace detail {

// beta_{Y(p)} at the true-class slot of each pixel, 0 elsewhere.
template <class S>
TensorPtr<S> weight_field(const LabelMask& Y, const ClassWeights& beta, int C) {
    const std::int64_t HW = static_cast<std::int64_t>(Y.height) * Y.width;
    std::vector<S> w(static_cast<std::size_t>(Y.batch) * C * HW, S(0));
    for (int n = 0; n < Y.batch; ++n) {
        for (std::int64_t p = 0; p < HW; ++p) {
            const int c = Y.labels[static_cast<std::size_t>(n) * HW + p];
            w[(static_cast<std::size_t>(n) * C + c) * HW + p] =
                static_cast<S>(beta.beta[static_cast<std::size_t>(c)]);
        }
    }
    return make_tensor<S>({Y.batch, C, Y.height, Y.width}, std::move(w));
}

}  // namespace detail

// Class-weighted Monte-Carlo cross entropy over perturbed logits:
//   L = -(1/T) sum_t sum_c beta_c sum_{p in Y_c} log softmax(z + eps_t)_c
// With bayesian=false the logits are used unperturbed once (T=1, v treated
// as 0), which is the class-weighted cross-entropy baseline.
template <class S>
TensorPtr<S> bayesian_loss(const TensorPtr<S>& z, const TensorPtr<S>& v, const LabelMask& Y,
                           const ClassWeights& beta, const LossConfig& cfg, RngStream& rng) {
    cfg.validate();
    if (z->dims.size() != 4)
        throw std::invalid_argument("bayesian_loss: z must be [N,C,H,W], got " + z->shape_str());
    const int C = z->dim(1);
    if (z->dim(0) != Y.batch || z->dim(2) != Y.height || z->dim(3) != Y.width)
        throw std::invalid_argument("bayesian_loss: z " + z->shape_str() +
                                    " does not match label mask dims");
    if (static_cast<int>(beta.beta.size()) != C)
        throw std::invalid_argument("bayesian_loss: weight count does not match C");
    check_finite(*z, "bayesian_loss logits");
    check_finite(*v, "bayesian_loss variance");
    auto w = detail::weight_field<S>(Y, beta, C);
    const int T = cfg.bayesian ? cfg.t_train : 1;
    std::vector<TensorPtr<S>> terms;
    terms.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        auto zhat = cfg.bayesian ? perturb_logits(z, v, rng) : z;
        terms.push_back(scale(sum(mul(w, log_softmax_channels(zhat))), S(-1)));
    }
    return mean_of(terms);
}

}  // namespace bfcdn
