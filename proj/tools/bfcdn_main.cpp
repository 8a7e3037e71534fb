// bfcdn: synthetic data generation, training, prediction with uncertainty
// maps, evaluation, noise sweeps and a gradient self-check.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime/numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bfcdn/checkpoint.hpp"
#include "bfcdn/inference.hpp"
#include "bfcdn/loss.hpp"
#include "bfcdn/metrics.hpp"
#include "bfcdn/runconfig.hpp"
#include "bfcdn/training.hpp"

namespace fs = std::filesystem;
using namespace bfcdn;

namespace {

// Configuration mistakes are usage errors (exit 1), not runtime failures.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// flag > config/default > BLS_SEED environment override
std::uint64_t resolve_seed(const CLI::Option* seed_flag, std::uint64_t flag_value,
                           std::uint64_t config_value) {
    if (seed_flag != nullptr && seed_flag->count() > 0) return flag_value;
    if (const char* env = std::getenv("BLS_SEED")) return std::strtoull(env, nullptr, 10);
    return config_value;
}

RunConfig load_config(const std::string& path) {
    try {
        RunConfig cfg = path.empty() ? RunConfig() : RunConfig::from_file(path);
        cfg.apply_profile();
        return cfg;
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

NetworkConfig network_config(const RunConfig& cfg) {
    NetworkConfig n;
    n.num_classes = cfg.get_int("network.num_classes");
    n.growth_rate = cfg.get_int("network.growth_rate");
    n.layers_per_dense_block = cfg.get_int("network.layers_per_dense_block");
    n.num_pool_levels = cfg.get_int("network.num_pool_levels");
    n.initial_channels = cfg.get_int("network.initial_channels");
    n.dropout_rate = cfg.get_double("network.dropout_rate");
    n.kernel_size = cfg.get_int("network.kernel_size");
    return n;
}

int cmd_generate_data(const std::string& out_dir, int count, int height, int width, int classes,
                      std::uint64_t seed, double smoothness, bool force) {
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force)
        throw CLI::ValidationError("--out", "'" + out_dir + "' is not empty (use --force)");
    const auto data = generate_synthetic(count, height, width, classes, seed, smoothness);
    write_dataset(out_dir, data, classes);
    std::printf("%s\n", (fs::path(out_dir) / "manifest.txt").string().c_str());
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_path,
              bool baseline, std::uint64_t seed) {
    const NetworkConfig net = network_config(cfg);
    const auto ds = read_dataset(data_dir, net.num_classes);

    TrainConfig tc;
    tc.iterations = cfg.get_int("train.iterations");
    tc.batch_size = cfg.get_int("train.batch_size");
    tc.lr = cfg.get_double("train.lr");
    tc.lr_decay_factor = cfg.get_double("train.lr_decay_factor");
    tc.lr_decay_at = cfg.get_int("train.lr_decay_at");
    tc.t_train = cfg.get_int("train.t_train");
    tc.dropout_rate = cfg.get_double("train.dropout_rate");
    tc.bayesian = !baseline && cfg.get_bool("train.bayesian");
    tc.seed = seed;
    tc.checkpoint_every = cfg.get_int("train.checkpoint_every");
    tc.augmentation = cfg.get_bool("train.augmentation");
    tc.checkpoint_path = out_path;

    Model model = build<float>(net, seed);
    const TrainLog log = train(model, ds.samples, {}, tc);
    write_train_log_csv(out_path + ".log.csv", log);
    std::printf("%s\n", out_path.c_str());
    return 0;
}

InferenceConfig inference_config(const RunConfig& cfg, int passes_override, double dropout_override,
                                 bool deterministic, int threads) {
    InferenceConfig ic;
    ic.passes = passes_override > 0 ? passes_override : cfg.get_int("infer.t");
    ic.dropout_rate = dropout_override >= 0.0 ? dropout_override : cfg.get_double("infer.dropout_rate");
    ic.bayesian = !deterministic;
    ic.threads = threads;
    return ic;
}

int cmd_predict(const std::string& model_path, const std::string& input_path,
                const std::string& out_seg, const std::string& out_unc, const std::string& channel,
                const std::string& out_raw, const InferenceConfig& ic, std::uint64_t seed) {
    const Model model = load_checkpoint(model_path);
    int h = 0, w = 0;
    const auto image = read_pgm_image(input_path, h, w);
    const auto pred = mc_predict(model, image, h, w, ic, seed);

    const std::vector<double>* field = &pred.combined;
    if (channel == "epistemic") field = &pred.epistemic;
    else if (channel == "aleatoric") field = &pred.aleatoric;
    else if (channel != "combined")
        throw CLI::ValidationError("--channel", "must be combined, epistemic or aleatoric");

    if (!out_seg.empty()) write_pgm_mask(out_seg, pred.segmentation, h, w, model.config.num_classes);
    if (!out_unc.empty()) write_heatmap(out_unc, *field, h, w);
    if (!out_raw.empty()) write_field_csv(out_raw, *field, h, w);
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_dir,
                 const std::string& out_path, const InferenceConfig& ic, std::uint64_t seed) {
    const Model model = load_checkpoint(model_path);
    const auto ds = read_dataset(data_dir, model.config.num_classes);
    const auto ev = evaluate(model, ds, ic, seed);
    write_eval_csv(out_path, ev, model.config.num_classes);
    std::printf("mean_dice %.6g\n", ev.mean.mean_dice);
    return 0;
}

int cmd_noise_sweep(const std::string& model_path, const std::string& baseline_path,
                    const std::string& data_dir, int levels, const std::string& out_path,
                    const NoiseSpec& noise, const InferenceConfig& ic, std::uint64_t seed) {
    const Model bayes = load_checkpoint(model_path);
    const Model base = load_checkpoint(baseline_path);
    if (base.config.num_classes != bayes.config.num_classes)
        throw std::runtime_error("bayesian and baseline models disagree on num_classes");
    const auto ds = read_dataset(data_dir, bayes.config.num_classes);
    const auto rows = noise_sweep_report(bayes, base, ds, levels, noise, ic, seed);
    write_sweep_csv(out_path, rows, bayes.config.num_classes);
    return 0;
}

// Central finite differences on a random sample of parameter coordinates,
// computed in float64 so the discretization error dominates roundoff.
int cmd_gradcheck(const RunConfig& cfg, std::uint64_t seed, int samples, double tolerance) {
    const NetworkConfig ncfg = network_config(cfg);
    auto model = build<double>(ncfg, seed);
    // Small random biases keep pre-activations off the exact ReLU kink that
    // the zero-bias init would otherwise create at dead positions.
    RngStream brng(seed, "gradcheck_bias");
    for (std::size_t i = 0; i < model.params.size(); ++i)
        if (model.param_names[i].ends_with(".b"))
            for (auto& v : model.params[i]->values) v = 0.05 + 0.1 * brng.uniform();

    const int H = 16, W = 16;
    auto data = generate_synthetic(1, H, W, ncfg.num_classes, seed + 1);
    auto X = zeros<double>({1, 1, H, W});
    for (std::size_t p = 0; p < data[0].sample.image.size(); ++p)
        X->values[p] = static_cast<double>(data[0].sample.image[p]);
    LabelMask Y{1, H, W, data[0].sample.mask};
    const ClassWeights beta = class_weights(Y, ncfg.num_classes);
    LossConfig lc;
    lc.t_train = 2;

    auto make_loss = [&]() {
        RngStream drop(seed, "gradcheck_dropout");
        auto out = forward(model, X, true, drop);
        RngStream perturb(seed, "gradcheck_perturb");
        return bayesian_loss(out.logits, out.variance, Y, beta, lc, perturb);
    };

    auto loss = make_loss();
    model.zero_grad();
    backward(loss);

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t i = 0; i < model.params.size(); ++i)
        for (std::size_t j = 0; j < model.params[i]->values.size(); ++j) coords.push_back({i, j});
    RngStream pick(seed, "gradcheck_pick");
    const int n = std::min<int>(samples, static_cast<int>(coords.size()));
    for (std::size_t i = coords.size(); i > 1; --i)
        std::swap(coords[i - 1], coords[static_cast<std::size_t>(pick.below(i))]);

    const double h = 1e-6;
    double worst = 0.0;
    for (int s = 0; s < n; ++s) {
        auto& p = model.params[coords[static_cast<std::size_t>(s)].first];
        const std::size_t j = coords[static_cast<std::size_t>(s)].second;
        const double saved = p->values[j];
        p->values[j] = saved + h;
        const double lp = make_loss()->values[0];
        p->values[j] = saved - h;
        const double lm = make_loss()->values[0];
        p->values[j] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = p->grad[j];
        const double scale = std::max(std::abs(fd), std::abs(an));
        if (scale < 1e-9) continue;
        worst = std::max(worst, std::abs(fd - an) / scale);
    }
    std::printf("gradcheck max relative error %.3g over %d parameters (tolerance %g)\n", worst, n,
                tolerance);
    if (worst >= tolerance) {
        std::fprintf(stderr, "gradcheck FAILED\n");
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian fully-convolutional DenseNet segmentation with uncertainty"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_path, model_path, baseline_path, input_path;
    std::string out_seg, out_unc, out_raw, channel = "combined";
    std::uint64_t seed = 42;
    int count = 200, height = 64, width = 64, classes = 5;
    double smoothness = 1.0, dropout_override = -1.0;
    bool force = false, baseline = false, deterministic = false;
    int passes = 0, threads = 1, levels = 5, block_size = 8, base_count = 2;
    int samples = 200, iterations_override = 0;
    double tolerance = 1e-3, lr_override = 0.0;

    auto* gen = app.add_subcommand("generate-data", "Write a synthetic layered dataset");
    gen->add_option("--out", out_path, "output directory")->required();
    gen->add_option("--count", count, "number of images");
    gen->add_option("--height", height, "image height");
    gen->add_option("--width", width, "image width");
    gen->add_option("--classes", classes, "number of layer classes");
    auto* gen_seed = gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--smoothness", smoothness, "boundary smoothness (larger = flatter)");
    gen->add_flag("--force", force, "write into a non-empty directory");

    auto* tr = app.add_subcommand("train", "Train a model on a dataset directory");
    tr->add_option("--config", config_path, "key=value run config")->check(CLI::ExistingFile);
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--out", out_path, "checkpoint output path")->required();
    tr->add_flag("--baseline", baseline, "class-weighted cross entropy (no perturbation)");
    auto* tr_seed = tr->add_option("--seed", seed, "training seed");
    auto* tr_iters = tr->add_option("--iterations", iterations_override, "override train.iterations");
    auto* tr_lr = tr->add_option("--lr", lr_override, "override train.lr");

    auto* pr = app.add_subcommand("predict", "Segment one image and export uncertainty");
    pr->add_option("--model", model_path, "checkpoint path")->required();
    pr->add_option("--input", input_path, "input PGM image")->required();
    pr->add_option("--out-seg", out_seg, "segmentation mask PGM");
    pr->add_option("--out-uncertainty", out_unc, "uncertainty heatmap PGM (+ .minmax.txt)");
    pr->add_option("--out-raw", out_raw, "raw uncertainty CSV");
    pr->add_option("--channel", channel, "combined|epistemic|aleatoric");
    pr->add_option("--passes", passes, "MC dropout passes");
    pr->add_option("--dropout-rate", dropout_override, "test-time dropout rate");
    pr->add_flag("--deterministic", deterministic, "single pass without dropout");
    pr->add_option("--threads", threads, "parallel passes");
    pr->add_option("--config", config_path, "key=value run config")->check(CLI::ExistingFile);
    auto* pr_seed = pr->add_option("--seed", seed, "MC sampling seed");

    auto* ev = app.add_subcommand("evaluate", "Dice / boundary-error report over a dataset");
    ev->add_option("--model", model_path, "checkpoint path")->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--out", out_path, "report CSV path")->required();
    ev->add_option("--passes", passes, "MC dropout passes");
    ev->add_flag("--deterministic", deterministic, "single pass without dropout");
    ev->add_option("--threads", threads, "parallel passes");
    ev->add_option("--config", config_path, "key=value run config")->check(CLI::ExistingFile);
    auto* ev_seed = ev->add_option("--seed", seed, "MC sampling seed");

    auto* sw = app.add_subcommand("noise-sweep", "Dice vs block-noise level, both models");
    sw->add_option("--model", model_path, "bayesian checkpoint")->required();
    sw->add_option("--baseline-model", baseline_path, "baseline checkpoint")->required();
    sw->add_option("--data", data_dir, "dataset directory")->required();
    sw->add_option("--levels", levels, "max noise level (sweep covers 0..levels)");
    sw->add_option("--out", out_path, "sweep CSV path")->required();
    sw->add_option("--passes", passes, "MC dropout passes");
    sw->add_option("--block-size", block_size, "noise block edge length");
    sw->add_option("--base-count", base_count, "blocks at level 1 (doubles per level)");
    sw->add_option("--threads", threads, "parallel passes");
    sw->add_option("--config", config_path, "key=value run config")->check(CLI::ExistingFile);
    auto* sw_seed = sw->add_option("--seed", seed, "noise and MC seed");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient self-check");
    gc->add_option("--config", config_path, "key=value run config")->check(CLI::ExistingFile);
    gc->add_option("--samples", samples, "parameter coordinates to probe");
    gc->add_option("--tolerance", tolerance, "max relative error allowed");
    auto* gc_seed = gc->add_option("--seed", seed, "model/input seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return cmd_generate_data(out_path, count, height, width, classes,
                                     resolve_seed(gen_seed, seed, 42), smoothness, force);
        }
        if (tr->parsed()) {
            RunConfig cfg = load_config(config_path);
            if (tr_iters->count() > 0) cfg.set("train.iterations", std::to_string(iterations_override));
            if (tr_lr->count() > 0) cfg.set("train.lr", std::to_string(lr_override));
            const std::uint64_t s = resolve_seed(
                tr_seed, seed, static_cast<std::uint64_t>(cfg.get_int("train.seed")));
            return cmd_train(cfg, data_dir, out_path, baseline, s);
        }
        if (pr->parsed()) {
            RunConfig cfg = load_config(config_path);
            const auto ic = inference_config(cfg, passes, dropout_override, deterministic, threads);
            return cmd_predict(model_path, input_path, out_seg, out_unc, channel, out_raw, ic,
                               resolve_seed(pr_seed, seed, 42));
        }
        if (ev->parsed()) {
            RunConfig cfg = load_config(config_path);
            const auto ic = inference_config(cfg, passes, -1.0, deterministic, threads);
            return cmd_evaluate(model_path, data_dir, out_path, ic,
                                resolve_seed(ev_seed, seed, 42));
        }
        if (sw->parsed()) {
            RunConfig cfg = load_config(config_path);
            const auto ic = inference_config(cfg, passes, -1.0, false, threads);
            NoiseSpec noise;
            noise.base_count = base_count;
            noise.block_size = block_size;
            const std::uint64_t s = resolve_seed(sw_seed, seed, 42);
            noise.seed = s;
            return cmd_noise_sweep(model_path, baseline_path, data_dir, levels, out_path, noise,
                                   ic, s);
        }
        if (gc->parsed()) {
            RunConfig cfg = load_config(config_path);
            return cmd_gradcheck(cfg, resolve_seed(gc_seed, seed, 42), samples, tolerance);
        }
    } catch (const CLI::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
