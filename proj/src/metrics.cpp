#include "bfcdn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bfcdn {

std::vector<double> dice(const LabelMask& pred, const LabelMask& truth, int num_classes) {
    if (pred.batch != truth.batch || pred.height != truth.height || pred.width != truth.width)
        throw std::invalid_argument("dice: mask shapes do not match");
    pred.validate(num_classes);
    truth.validate(num_classes);
    std::vector<std::int64_t> inter(static_cast<std::size_t>(num_classes), 0);
    std::vector<std::int64_t> a(static_cast<std::size_t>(num_classes), 0);
    std::vector<std::int64_t> b(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
        ++a[static_cast<std::size_t>(pred.labels[i])];
        ++b[static_cast<std::size_t>(truth.labels[i])];
        if (pred.labels[i] == truth.labels[i]) ++inter[static_cast<std::size_t>(pred.labels[i])];
    }
    std::vector<double> d(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) {
        const auto denom = a[static_cast<std::size_t>(c)] + b[static_cast<std::size_t>(c)];
        d[static_cast<std::size_t>(c)] =
            denom == 0 ? 1.0 : 2.0 * static_cast<double>(inter[static_cast<std::size_t>(c)]) / denom;
    }
    return d;
}

std::vector<BoundaryError> boundary_mae(const LabelMask& pred, const BoundarySet& truth,
                                        int num_classes, double resolution_um) {
    if (pred.width != truth.width)
        throw std::invalid_argument("boundary_mae: widths do not match");
    if (truth.num_boundaries != num_classes - 1)
        throw std::invalid_argument("boundary_mae: boundary count does not match num_classes");
    const auto ex = mask_to_boundaries(pred, num_classes);
    std::vector<BoundaryError> out(static_cast<std::size_t>(num_classes - 1));
    for (int k = 0; k < num_classes - 1; ++k) {
        double acc = 0.0;
        int n = 0;
        for (int x = 0; x < truth.width; ++x) {
            if (!ex.is_valid(k, x)) continue;
            acc += std::abs(static_cast<double>(ex.boundaries.at(k, x)) - truth.at(k, x));
            ++n;
        }
        auto& e = out[static_cast<std::size_t>(k)];
        e.valid_columns = n;
        e.present = n > 0;
        e.mae_um = n > 0 ? acc / n * resolution_um : 0.0;
    }
    return out;
}

namespace {

EvalReport eval_one(const Model& model, const LabeledSample& s, const BoundarySet& truth_b,
                    const InferenceConfig& cfg, std::uint64_t seed, double resolution_um) {
    const auto pred = mc_predict(model, s.image, s.height, s.width, cfg, seed);
    LabelMask pm{1, s.height, s.width, pred.segmentation};
    LabelMask tm{1, s.height, s.width, s.mask};
    EvalReport r;
    r.axial_resolution_um = resolution_um;
    r.dice = dice(pm, tm, model.config.num_classes);
    r.boundary = boundary_mae(pm, truth_b, model.config.num_classes, resolution_um);
    double acc = 0.0;
    for (const double d : r.dice) acc += d;
    r.mean_dice = acc / static_cast<double>(r.dice.size());
    return r;
}

}  // namespace

DatasetEval evaluate(const Model& model, const Dataset& ds, const InferenceConfig& cfg,
                     std::uint64_t seed, double resolution_um) {
    if (ds.samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
    DatasetEval ev;
    const int C = model.config.num_classes;
    ev.mean.dice.assign(static_cast<std::size_t>(C), 0.0);
    ev.mean.boundary.assign(static_cast<std::size_t>(C - 1), BoundaryError{});
    ev.mean.axial_resolution_um = resolution_um;
    std::vector<int> contributing(static_cast<std::size_t>(C - 1), 0);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        auto r = eval_one(model, ds.samples[i], ds.boundaries[i], cfg, seed + i, resolution_um);
        for (int c = 0; c < C; ++c) ev.mean.dice[static_cast<std::size_t>(c)] += r.dice[static_cast<std::size_t>(c)];
        for (int k = 0; k < C - 1; ++k) {
            const auto& e = r.boundary[static_cast<std::size_t>(k)];
            if (e.present) {
                ev.mean.boundary[static_cast<std::size_t>(k)].mae_um += e.mae_um;
                ev.mean.boundary[static_cast<std::size_t>(k)].valid_columns += e.valid_columns;
                ++contributing[static_cast<std::size_t>(k)];
            }
        }
        ev.mean.mean_dice += r.mean_dice;
        ev.per_image.push_back(std::move(r));
    }
    const double inv = 1.0 / static_cast<double>(ds.samples.size());
    for (auto& d : ev.mean.dice) d *= inv;
    ev.mean.mean_dice *= inv;
    for (int k = 0; k < C - 1; ++k) {
        auto& e = ev.mean.boundary[static_cast<std::size_t>(k)];
        if (contributing[static_cast<std::size_t>(k)] > 0) {
            e.mae_um /= static_cast<double>(contributing[static_cast<std::size_t>(k)]);
            e.present = true;
        }
    }
    return ev;
}

std::vector<SweepRow> noise_sweep_report(const Model& bayesian_model, const Model& baseline_model,
                                         const Dataset& ds, int max_level, const NoiseSpec& noise,
                                         const InferenceConfig& bayes_cfg, std::uint64_t seed) {
    if (ds.samples.empty()) throw std::invalid_argument("noise_sweep_report: empty dataset");
    const int C = bayesian_model.config.num_classes;
    InferenceConfig base_cfg = bayes_cfg;
    base_cfg.bayesian = false;
    std::vector<SweepRow> rows;
    for (int level = 0; level <= max_level; ++level) {
        for (int mode = 0; mode < 2; ++mode) {
            const bool bayes = mode == 0;
            SweepRow row;
            row.level = level;
            row.mode = bayes ? "bayesian" : "baseline";
            row.dice_per_class.assign(static_cast<std::size_t>(C), 0.0);
            double usum = 0.0;
            std::int64_t ucount = 0;
            for (std::size_t i = 0; i < ds.samples.size(); ++i) {
                const auto& s = ds.samples[i];
                NoiseSpec spec = noise;
                spec.level = level;
                spec.seed = noise.seed + i;
                std::vector<std::uint8_t> changed;
                const auto noisy = add_block_noise(s.image, s.height, s.width, spec, &changed);
                const auto pred = mc_predict(bayes ? bayesian_model : baseline_model, noisy,
                                             s.height, s.width, bayes ? bayes_cfg : base_cfg,
                                             seed + i);
                LabelMask pm{1, s.height, s.width, pred.segmentation};
                LabelMask tm{1, s.height, s.width, s.mask};
                const auto d = dice(pm, tm, C);
                for (int c = 0; c < C; ++c)
                    row.dice_per_class[static_cast<std::size_t>(c)] += d[static_cast<std::size_t>(c)];
                for (std::size_t p = 0; p < pred.combined.size(); ++p) {
                    if (level == 0 || changed[p]) {
                        usum += pred.combined[p];
                        ++ucount;
                    }
                }
            }
            const double inv = 1.0 / static_cast<double>(ds.samples.size());
            double acc = 0.0;
            for (auto& d : row.dice_per_class) {
                d *= inv;
                acc += d;
            }
            row.mean_dice = acc / C;
            row.mean_uncertainty = ucount > 0 ? usum / static_cast<double>(ucount) : 0.0;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows, int num_classes) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << "level,mode,mean_dice";
    for (int c = 0; c < num_classes; ++c) f << ",dice_c" << c;
    f << ",mean_uncertainty\n";
    char buf[40];
    for (const auto& r : rows) {
        f << r.level << "," << r.mode;
        std::snprintf(buf, sizeof(buf), "%.6g", r.mean_dice);
        f << "," << buf;
        for (const double d : r.dice_per_class) {
            std::snprintf(buf, sizeof(buf), "%.6g", d);
            f << "," << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.6g", r.mean_uncertainty);
        f << "," << buf << "\n";
    }
}

void write_eval_csv(const std::string& path, const DatasetEval& eval, int num_classes) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << "image,mean_dice";
    for (int c = 0; c < num_classes; ++c) f << ",dice_c" << c;
    for (int k = 1; k < num_classes; ++k) f << ",mae_um_b" << k;
    f << "\n";
    char buf[40];
    auto write_row = [&](const std::string& name, const EvalReport& r) {
        f << name;
        std::snprintf(buf, sizeof(buf), "%.6g", r.mean_dice);
        f << "," << buf;
        for (const double d : r.dice) {
            std::snprintf(buf, sizeof(buf), "%.6g", d);
            f << "," << buf;
        }
        for (const auto& e : r.boundary) {
            if (e.present) {
                std::snprintf(buf, sizeof(buf), "%.6g", e.mae_um);
                f << "," << buf;
            } else {
                f << ",absent";
            }
        }
        f << "\n";
    };
    for (std::size_t i = 0; i < eval.per_image.size(); ++i)
        write_row(std::to_string(i), eval.per_image[i]);
    write_row("mean", eval.mean);
}

}  // namespace bfcdn
