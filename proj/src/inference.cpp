#include "bfcdn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace bfcdn {

double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (const double x : p) {
        if (x > 0.0) h -= x * std::log(x);
    }
    return h;
}

namespace {

// Softmax + variance of one stochastic pass, written into caller buffers.
void run_pass(const Model& model, const std::vector<float>& image, int H, int W,
              bool dropout_enabled, RngStream rng, std::vector<double>& probs,
              std::vector<double>& var) {
    auto X = make_tensor<float>({1, 1, H, W}, image);
    auto out = forward(model, X, dropout_enabled, rng);
    check_finite(*out.logits, "mc_predict logits");
    check_finite(*out.variance, "mc_predict variance");
    const int C = out.logits->dim(1);
    const std::int64_t HW = static_cast<std::int64_t>(H) * W;
    probs.resize(static_cast<std::size_t>(C) * HW);
    var.assign(out.variance->values.begin(), out.variance->values.end());
    const float* z = out.logits->values.data();
    for (std::int64_t p = 0; p < HW; ++p) {
        double mx = -1e300;
        for (int c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(z[c * HW + p]));
        double denom = 0.0;
        for (int c = 0; c < C; ++c) denom += std::exp(static_cast<double>(z[c * HW + p]) - mx);
        for (int c = 0; c < C; ++c)
            probs[static_cast<std::size_t>(c) * HW + p] =
                std::exp(static_cast<double>(z[c * HW + p]) - mx) / denom;
    }
}

}  // namespace

PredictiveOutput mc_predict(const Model& model, const std::vector<float>& image, int height,
                            int width, const InferenceConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (static_cast<std::int64_t>(image.size()) !=
        static_cast<std::int64_t>(height) * width)
        throw std::invalid_argument("mc_predict: image size does not match dims");

    Model m = model;  // shallow parameter share; only the dropout rate differs
    m.config.dropout_rate = cfg.dropout_rate;

    const int T = cfg.bayesian ? cfg.passes : 1;
    const bool use_dropout = cfg.bayesian && cfg.dropout_rate > 0.0;
    const std::int64_t HW = static_cast<std::int64_t>(height) * width;
    const int C = m.config.num_classes;

    // Per-pass buffers keep the reduction order independent of scheduling.
    std::vector<std::vector<double>> pass_probs(static_cast<std::size_t>(T));
    std::vector<std::vector<double>> pass_var(static_cast<std::size_t>(T));
    auto worker = [&](int t0, int t1) {
        for (int t = t0; t < t1; ++t) {
            RngStream rng(seed, "mc_pass", static_cast<std::uint64_t>(t));
            run_pass(m, image, height, width, use_dropout, rng,
                     pass_probs[static_cast<std::size_t>(t)], pass_var[static_cast<std::size_t>(t)]);
        }
    };
    const int nthreads = std::max(1, std::min(cfg.threads, T));
    if (nthreads == 1) {
        worker(0, T);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (T + nthreads - 1) / nthreads;
        for (int i = 0; i < nthreads; ++i)
            pool.emplace_back(worker, i * chunk, std::min(T, (i + 1) * chunk));
        for (auto& th : pool) th.join();
    }

    PredictiveOutput out;
    out.num_classes = C;
    out.height = height;
    out.width = width;
    out.mean_probs.assign(static_cast<std::size_t>(C) * HW, 0.0);
    out.aleatoric.assign(static_cast<std::size_t>(HW), 0.0);
    for (int t = 0; t < T; ++t) {
        const auto& pp = pass_probs[static_cast<std::size_t>(t)];
        for (std::size_t i = 0; i < out.mean_probs.size(); ++i) out.mean_probs[i] += pp[i];
        if (cfg.bayesian) {
            const auto& pv = pass_var[static_cast<std::size_t>(t)];
            for (std::size_t i = 0; i < out.aleatoric.size(); ++i) out.aleatoric[i] += pv[i];
        }
    }
    const double inv = 1.0 / T;
    for (auto& x : out.mean_probs) x *= inv;
    for (auto& x : out.aleatoric) x *= inv;

    out.epistemic.resize(static_cast<std::size_t>(HW));
    out.combined.resize(static_cast<std::size_t>(HW));
    out.segmentation.resize(static_cast<std::size_t>(HW));
    std::vector<double> pix(static_cast<std::size_t>(C));
    for (std::int64_t p = 0; p < HW; ++p) {
        int best = 0;
        for (int c = 0; c < C; ++c) {
            pix[static_cast<std::size_t>(c)] = out.mean_probs[static_cast<std::size_t>(c) * HW + p];
            if (pix[static_cast<std::size_t>(c)] > pix[static_cast<std::size_t>(best)]) best = c;
        }
        const double h = entropy(pix);
        out.epistemic[static_cast<std::size_t>(p)] = h;
        out.combined[static_cast<std::size_t>(p)] = h + out.aleatoric[static_cast<std::size_t>(p)];
        out.segmentation[static_cast<std::size_t>(p)] = best;
    }
    return out;
}

}  // namespace bfcdn
