#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bfcdn/labels.hpp"
#include "bfcdn/rng.hpp"

namespace bfcdn {

// Grayscale image in [0,1] plus its class mask, both H x W row-major.
struct LabeledSample {
    int height = 0;
    int width = 0;
    std::vector<float> image;
    std::vector<int> mask;
};

// C-1 layer boundaries as per-column row coordinates, top to bottom.
// rows is [num_boundaries][width] row-major.
struct BoundarySet {
    int width = 0;
    int num_boundaries = 0;
    std::vector<float> rows;

    float at(int k, int col) const {
        return rows[static_cast<std::size_t>(k) * width + col];
    }
};

// Boundaries recovered from a mask; a column is invalid for boundary k when
// class k is absent in it.
struct BoundaryExtraction {
    BoundarySet boundaries;
    std::vector<std::uint8_t> valid;  // [num_boundaries][width]

    bool is_valid(int k, int col) const {
        return valid[static_cast<std::size_t>(k) * boundaries.width + col] != 0;
    }
};

// Block-noise corruption schedule: level k places base_count * 2^(k-1)
// blocks; level 0 is clean.
struct NoiseSpec {
    int level = 0;
    int base_count = 2;
    int block_size = 8;
    std::uint64_t seed = 0;

    int block_count() const { return level == 0 ? 0 : base_count * (1 << (level - 1)); }
};

struct SyntheticSample {
    LabeledSample sample;
    BoundarySet boundaries;
};

// Layered synthetic images: C-1 smooth non-crossing boundaries, distinct
// per-layer base intensities, Gaussian texture noise. Larger smoothness
// flattens the boundaries.
std::vector<SyntheticSample> generate_synthetic(int count, int height, int width, int num_classes,
                                                std::uint64_t seed, double smoothness = 1.0);

LabelMask boundaries_to_mask(const BoundarySet& b, int height, int width);

BoundaryExtraction mask_to_boundaries(const LabelMask& Y, int num_classes);

// Deterministic mirror + rotation. Image bilinear, mask nearest-neighbor,
// out-of-frame filled with 0 / class 0.
LabeledSample transform_sample(const LabeledSample& s, bool mirror, double angle_deg);

// Mirror with probability 0.5, rotation uniform in [-15, 15] degrees.
LabeledSample augment(const LabeledSample& s, RngStream& rng);

// Uniform-intensity s x s blocks at random positions. changed, when given,
// receives a per-pixel flag of the overwritten region.
std::vector<float> add_block_noise(const std::vector<float>& image, int height, int width,
                                   const NoiseSpec& spec,
                                   std::vector<std::uint8_t>* changed = nullptr);

// ---- dataset directory layout ----------------------------------------------

struct Dataset {
    std::vector<LabeledSample> samples;
    std::vector<BoundarySet> boundaries;  // may be empty when loaded from masks only
    int num_classes = 0;
};

// images/NNNN.pgm + masks/NNNN.pgm + manifest.txt ("image<TAB>mask" lines).
void write_dataset(const std::string& dir, const std::vector<SyntheticSample>& data,
                   int num_classes);
Dataset read_dataset(const std::string& dir, int num_classes);

// ---- PGM / heatmap / CSV I/O -----------------------------------------------

// Binary PGM (P5). Images are quantized round(x*255), masks stored as raw
// class indices with maxval C-1.
void write_pgm_image(const std::string& path, const std::vector<float>& image, int height,
                     int width);
std::vector<float> read_pgm_image(const std::string& path, int& height, int& width);

void write_pgm_mask(const std::string& path, const std::vector<int>& mask, int height, int width,
                    int num_classes);
std::vector<int> read_pgm_mask(const std::string& path, int& height, int& width,
                               int num_classes);

// Min-max normalized heatmap; the (min,max) pair goes to "<path>.minmax.txt".
void write_heatmap(const std::string& path, const std::vector<double>& field, int height,
                   int width);

// Row-major CSV with 9 significant digits.
void write_field_csv(const std::string& path, const std::vector<double>& field, int height,
                     int width);

}  // namespace bfcdn
