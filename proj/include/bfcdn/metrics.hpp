#pragma once

#include <string>
#include <vector>

#include "bfcdn/data.hpp"
#include "bfcdn/inference.hpp"
#include "bfcdn/labels.hpp"
#include "bfcdn/network.hpp"

namespace bfcdn {

constexpr double kDefaultAxialResolutionUm = 3.87;

// Per-boundary mean absolute error; absent when no column is valid in both
// the prediction and the ground truth.
struct BoundaryError {
    double mae_um = 0.0;
    int valid_columns = 0;
    bool present = false;
};

struct EvalReport {
    std::vector<double> dice;              // per class
    std::vector<BoundaryError> boundary;   // per boundary, in micrometers
    double mean_dice = 0.0;
    double axial_resolution_um = kDefaultAxialResolutionUm;
};

// Soerensen-Dice per class: 2|A n B| / (|A| + |B|); both empty -> 1.
std::vector<double> dice(const LabelMask& pred, const LabelMask& truth, int num_classes);

std::vector<BoundaryError> boundary_mae(const LabelMask& pred, const BoundarySet& truth,
                                        int num_classes,
                                        double resolution_um = kDefaultAxialResolutionUm);

// Deterministic or MC evaluation of a model over a dataset, averaged over
// images; per-image Dice rows are also returned.
struct DatasetEval {
    EvalReport mean;
    std::vector<EvalReport> per_image;
};

DatasetEval evaluate(const Model& model, const Dataset& ds, const InferenceConfig& cfg,
                     std::uint64_t seed, double resolution_um = kDefaultAxialResolutionUm);

// One row of the noise robustness sweep.
struct SweepRow {
    int level = 0;
    std::string mode;  // "bayesian" or "baseline"
    double mean_dice = 0.0;
    std::vector<double> dice_per_class;
    double mean_uncertainty = 0.0;  // combined U over corrupted pixels (all pixels at level 0)
};

std::vector<SweepRow> noise_sweep_report(const Model& bayesian_model, const Model& baseline_model,
                                         const Dataset& ds, int max_level, const NoiseSpec& noise,
                                         const InferenceConfig& bayes_cfg, std::uint64_t seed);

// CSV: "level,mode,mean_dice,dice_c0..dice_c{C-1},mean_uncertainty",
// 6 significant digits.
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows, int num_classes);

void write_eval_csv(const std::string& path, const DatasetEval& eval, int num_classes);

}  // namespace bfcdn
