#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bfcdn/data.hpp"
#include "bfcdn/network.hpp"

namespace bfcdn {

struct TrainConfig {
    int iterations = 3000;       // desk profile; paper profile uses 40000
    int batch_size = 2;
    double lr = 1e-3;            // desk; paper uses 1e-5
    double lr_decay_factor = 0.1;
    int lr_decay_at = 2500;      // paper: 10000
    int t_train = 10;
    double dropout_rate = 0.4;
    bool bayesian = true;
    std::uint64_t seed = 42;
    int checkpoint_every = 500;
    bool augmentation = true;
    std::string checkpoint_path;  // empty: no checkpoints written

    void validate() const {
        if (iterations < 0) throw std::invalid_argument("TrainConfig: iterations must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be positive");
        if (lr_decay_at > iterations && iterations > 0)
            throw std::invalid_argument("TrainConfig: lr_decay_at must be <= iterations");
        if (t_train < 1) throw std::invalid_argument("TrainConfig: t_train must be >= 1");
    }
};

struct TrainLog {
    struct Entry {
        int iteration;
        double loss;
        double lr;
        double seconds;  // cumulative wall time
    };
    struct Validation {
        int iteration;
        double mean_dice;
    };
    std::vector<Entry> entries;
    std::vector<Validation> validations;
};

// Learning rate for a 0-based iteration index: lr before lr_decay_at, decayed
// exactly once from there on.
double lr_schedule(int iteration, const TrainConfig& cfg);

// Minibatch Adam on the Bayesian (or baseline) loss. Deterministic given
// cfg.seed. Divergence (non-finite loss) aborts with the last checkpoint on
// disk retained.
TrainLog train(Model& model, const std::vector<LabeledSample>& dataset,
               const std::vector<LabeledSample>& val_dataset, const TrainConfig& cfg);

// CSV: "iter,loss,lr,seconds"
void write_train_log_csv(const std::string& path, const TrainLog& log);

}  // namespace bfcdn
