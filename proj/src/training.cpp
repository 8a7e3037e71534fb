#include "bfcdn/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "bfcdn/checkpoint.hpp"
#include "bfcdn/inference.hpp"
#include "bfcdn/loss.hpp"
#include "bfcdn/metrics.hpp"

namespace bfcdn {

double lr_schedule(int iteration, const TrainConfig& cfg) {
    if (iteration < 0) throw std::invalid_argument("lr_schedule: iteration must be >= 0");
    return iteration < cfg.lr_decay_at ? cfg.lr : cfg.lr * cfg.lr_decay_factor;
}

namespace {

double validation_mean_dice(const Model& model, const std::vector<LabeledSample>& val) {
    // Deterministic single-pass prediction keeps in-loop validation cheap.
    InferenceConfig cfg;
    cfg.passes = 1;
    cfg.bayesian = false;
    double acc = 0.0;
    for (const auto& s : val) {
        const auto pred = mc_predict(model, s.image, s.height, s.width, cfg, 0);
        LabelMask pm{1, s.height, s.width, pred.segmentation};
        LabelMask tm{1, s.height, s.width, s.mask};
        const auto d = dice(pm, tm, model.config.num_classes);
        acc += std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    }
    return val.empty() ? 0.0 : acc / static_cast<double>(val.size());
}

}  // namespace

TrainLog train(Model& model, const std::vector<LabeledSample>& dataset,
               const std::vector<LabeledSample>& val_dataset, const TrainConfig& cfg) {
    cfg.validate();
    TrainLog log;
    if (cfg.iterations == 0) return log;
    if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
    const int C = model.config.num_classes;
    const int H = dataset.front().height, W = dataset.front().width;
    for (const auto& s : dataset)
        if (s.height != H || s.width != W)
            throw std::invalid_argument("train: all samples must share one size");

    model.config.dropout_rate = cfg.dropout_rate;

    AdamState adam;
    adam.init(model.params);

    LossConfig loss_cfg;
    loss_cfg.t_train = cfg.bayesian ? cfg.t_train : 1;
    loss_cfg.bayesian = cfg.bayesian;

    // Epoch order: sampling without replacement, reshuffled per epoch.
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    std::uint64_t epoch = 0;

    const auto t0 = std::chrono::steady_clock::now();
    const int B = cfg.batch_size;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        std::vector<float> batch_img(static_cast<std::size_t>(B) * H * W);
        LabelMask batch_mask{B, H, W, std::vector<int>(static_cast<std::size_t>(B) * H * W)};
        for (int b = 0; b < B; ++b) {
            if (cursor == order.size()) {
                RngStream shuffle_rng(cfg.seed, "epoch_order", epoch++);
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);
                cursor = 0;
            }
            const LabeledSample* s = &dataset[order[cursor++]];
            LabeledSample augmented;
            if (cfg.augmentation) {
                RngStream aug_rng(cfg.seed, "augment",
                                  static_cast<std::uint64_t>(iter) * B + static_cast<std::uint64_t>(b));
                augmented = augment(*s, aug_rng);
                s = &augmented;
            }
            std::copy(s->image.begin(), s->image.end(),
                      batch_img.begin() + static_cast<std::ptrdiff_t>(b) * H * W);
            std::copy(s->mask.begin(), s->mask.end(),
                      batch_mask.labels.begin() + static_cast<std::ptrdiff_t>(b) * H * W);
        }

        auto X = make_tensor<float>({B, 1, H, W}, batch_img);
        RngStream dropout_rng(cfg.seed, "dropout", static_cast<std::uint64_t>(iter));
        auto out = forward(model, X, true, dropout_rng);

        const ClassWeights beta = class_weights(batch_mask, C);
        RngStream perturb_rng(cfg.seed, "perturb", static_cast<std::uint64_t>(iter));
        auto loss = bayesian_loss(out.logits, out.variance, batch_mask, beta, loss_cfg, perturb_rng);
        const double loss_val = static_cast<double>(loss->values[0]);
        if (!std::isfinite(loss_val))
            throw std::runtime_error("training diverged at iteration " + std::to_string(iter) +
                                     " (non-finite loss); last checkpoint retained");

        model.zero_grad();
        backward(loss);
        adam.lr = lr_schedule(iter, cfg);
        adam_step(model.params, adam);

        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.entries.push_back({iter, loss_val, adam.lr, secs});

        if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0) {
            if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, model);
            if (!val_dataset.empty())
                log.validations.push_back({iter, validation_mean_dice(model, val_dataset)});
        }
    }
    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, model);
    return log;
}

void write_train_log_csv(const std::string& path, const TrainLog& log) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << "iter,loss,lr,seconds\n";
    char buf[96];
    for (const auto& e : log.entries) {
        std::snprintf(buf, sizeof(buf), "%d,%.6g,%.6g,%.3f", e.iteration, e.loss, e.lr, e.seconds);
        f << buf << "\n";
    }
}

}  // namespace bfcdn
