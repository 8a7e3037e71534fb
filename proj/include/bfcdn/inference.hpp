#pragma once

#include <cstdint>
#include <vector>

#include "bfcdn/network.hpp"

namespace bfcdn {

struct InferenceConfig {
    int passes = 50;            // T stochastic forward passes
    double dropout_rate = 0.4;  // test-time dropout rate
    bool bayesian = true;       // false: one deterministic pass, v treated as 0
    int threads = 1;            // concurrent passes; aggregation order is fixed

    void validate() const {
        if (passes < 1) throw std::invalid_argument("InferenceConfig: passes must be >= 1");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw std::invalid_argument("InferenceConfig: dropout_rate must be in [0,1)");
    }
};

// Per-pixel predictive summary for one image.
struct PredictiveOutput {
    int num_classes = 0;
    int height = 0;
    int width = 0;
    std::vector<double> mean_probs;  // [C,H,W], per-pixel sums to 1
    std::vector<double> aleatoric;   // [H,W], mean variance head output
    std::vector<double> epistemic;   // [H,W], entropy of mean probs, nats
    std::vector<double> combined;    // [H,W], epistemic + aleatoric
    std::vector<int> segmentation;   // [H,W], argmax class
};

// Shannon entropy in nats; 0 log 0 := 0.
double entropy(const std::vector<double>& p);

// MC-dropout prediction: T stochastic passes, per-pass softmax averaged,
// entropy taken on the averaged distribution.
PredictiveOutput mc_predict(const Model& model, const std::vector<float>& image, int height,
                            int width, const InferenceConfig& cfg, std::uint64_t seed);

}  // namespace bfcdn
