#include "bfcdn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace bfcdn {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace

std::vector<SyntheticSample> generate_synthetic(int count, int height, int width, int num_classes,
                                                std::uint64_t seed, double smoothness) {
    if (num_classes < 2) throw std::invalid_argument("generate_synthetic: num_classes must be >= 2");
    if (count < 0) throw std::invalid_argument("generate_synthetic: count must be >= 0");
    if (height < num_classes)
        throw std::invalid_argument("generate_synthetic: " + std::to_string(num_classes - 1) +
                                    " boundaries cannot fit in " + std::to_string(height) +
                                    " rows");
    if (smoothness <= 0.0) throw std::invalid_argument("generate_synthetic: smoothness must be > 0");

    const int B = num_classes - 1;  // boundary count
    std::vector<SyntheticSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        RngStream rng(seed, "sample", static_cast<std::uint64_t>(i));

        // Layer thickness shares, then cumulative base boundary rows.
        std::vector<double> share(static_cast<std::size_t>(num_classes));
        double total = 0.0;
        for (auto& s : share) {
            s = rng.uniform(0.5, 1.5);
            total += s;
        }
        std::vector<double> base(static_cast<std::size_t>(B));
        double cum = 0.0;
        for (int k = 0; k < B; ++k) {
            cum += share[static_cast<std::size_t>(k)] / total;
            base[static_cast<std::size_t>(k)] = cum * height;
        }

        // Smooth undulation per boundary.
        const double amp = std::min(2.0, 0.04 * height) / smoothness;
        struct Wave {
            double a1, f1, p1, a2, f2, p2;
        };
        std::vector<Wave> waves(static_cast<std::size_t>(B));
        for (auto& w : waves) {
            w.a1 = amp * rng.uniform(0.5, 1.0);
            w.f1 = rng.uniform(0.5, 2.0);
            w.p1 = rng.uniform(0.0, 2.0 * kPi);
            w.a2 = 0.4 * amp * rng.uniform(0.5, 1.0);
            w.f2 = rng.uniform(2.0, 4.0);
            w.p2 = rng.uniform(0.0, 2.0 * kPi);
        }

        BoundarySet bset;
        bset.width = width;
        bset.num_boundaries = B;
        bset.rows.resize(static_cast<std::size_t>(B) * width);
        std::vector<double> col(static_cast<std::size_t>(B));
        for (int x = 0; x < width; ++x) {
            for (int k = 0; k < B; ++k) {
                const auto& w = waves[static_cast<std::size_t>(k)];
                const double u = w.a1 * std::sin(2.0 * kPi * w.f1 * x / width + w.p1) +
                                 w.a2 * std::sin(2.0 * kPi * w.f2 * x / width + w.p2);
                col[static_cast<std::size_t>(k)] = base[static_cast<std::size_t>(k)] + u;
            }
            // Keep every layer at least one row thick in this column.
            col[0] = std::max(col[0], 1.0);
            for (int k = 1; k < B; ++k) col[static_cast<std::size_t>(k)] =
                std::max(col[static_cast<std::size_t>(k)], col[static_cast<std::size_t>(k - 1)] + 1.0);
            col[static_cast<std::size_t>(B - 1)] =
                std::min(col[static_cast<std::size_t>(B - 1)], static_cast<double>(height - 1));
            for (int k = B - 2; k >= 0; --k) col[static_cast<std::size_t>(k)] =
                std::min(col[static_cast<std::size_t>(k)], col[static_cast<std::size_t>(k + 1)] - 1.0);
            if (col[0] < 1.0)
                throw std::invalid_argument("generate_synthetic: boundaries do not fit in image");
            for (int k = 0; k < B; ++k)
                bset.rows[static_cast<std::size_t>(k) * width + x] =
                    static_cast<float>(col[static_cast<std::size_t>(k)]);
        }

        const LabelMask mask = boundaries_to_mask(bset, height, width);
        SyntheticSample s;
        s.boundaries = bset;
        s.sample.height = height;
        s.sample.width = width;
        s.sample.mask = mask.labels;
        s.sample.image.resize(static_cast<std::size_t>(height) * width);
        for (std::size_t p = 0; p < s.sample.image.size(); ++p) {
            const int c = mask.labels[p];
            const double base_int = 0.1 + 0.8 * c / (num_classes - 1);
            s.sample.image[p] = static_cast<float>(clamp01(base_int + 0.05 * rng.normal()));
        }
        out.push_back(std::move(s));
    }
    return out;
}

LabelMask boundaries_to_mask(const BoundarySet& b, int height, int width) {
    if (b.width != width)
        throw std::invalid_argument("boundaries_to_mask: boundary width does not match");
    LabelMask mask;
    mask.batch = 1;
    mask.height = height;
    mask.width = width;
    mask.labels.assign(static_cast<std::size_t>(height) * width, 0);
    for (int x = 0; x < width; ++x) {
        for (int k = 1; k < b.num_boundaries; ++k)
            if (b.at(k, x) < b.at(k - 1, x))
                throw std::invalid_argument("boundaries_to_mask: boundaries out of order in column " +
                                            std::to_string(x));
        for (int k = 0; k < b.num_boundaries; ++k) {
            const int start = static_cast<int>(std::floor(b.at(k, x)));
            for (int r = std::max(0, start); r < height; ++r)
                mask.labels[static_cast<std::size_t>(r) * width + x] = k + 1;
        }
    }
    return mask;
}

BoundaryExtraction mask_to_boundaries(const LabelMask& Y, int num_classes) {
    Y.validate(num_classes);
    if (Y.batch != 1) throw std::invalid_argument("mask_to_boundaries: expects a single mask");
    const int H = Y.height, W = Y.width, B = num_classes - 1;
    BoundaryExtraction ex;
    ex.boundaries.width = W;
    ex.boundaries.num_boundaries = B;
    ex.boundaries.rows.assign(static_cast<std::size_t>(B) * W, 0.0f);
    ex.valid.assign(static_cast<std::size_t>(B) * W, 0);
    std::vector<int> prefix(static_cast<std::size_t>(H) + 1);
    for (int x = 0; x < W; ++x) {
        for (int k = 1; k <= B; ++k) {
            // Optimal step fit: boundary row minimizing the count of pixels
            // on the wrong side of a (label >= k) threshold.
            prefix[0] = 0;
            bool class_present = false;
            for (int r = 0; r < H; ++r) {
                const int l = Y.labels[static_cast<std::size_t>(r) * W + x];
                prefix[static_cast<std::size_t>(r) + 1] =
                    prefix[static_cast<std::size_t>(r)] + (l >= k ? 1 : 0);
                if (l == k) class_present = true;
            }
            const int total_ge = prefix[static_cast<std::size_t>(H)];
            int best_cost = 1 << 30, first = 0, last = 0;
            for (int r = 0; r <= H; ++r) {
                const int cost = 2 * prefix[static_cast<std::size_t>(r)] + (H - r) - total_ge;
                if (cost < best_cost) {
                    best_cost = cost;
                    first = last = r;
                } else if (cost == best_cost) {
                    last = r;
                }
            }
            ex.boundaries.rows[static_cast<std::size_t>(k - 1) * W + x] =
                static_cast<float>(0.5 * (first + last));
            ex.valid[static_cast<std::size_t>(k - 1) * W + x] =
                (class_present && total_ge > 0) ? 1 : 0;
        }
    }
    return ex;
}

LabeledSample transform_sample(const LabeledSample& s, bool mirror, double angle_deg) {
    const int H = s.height, W = s.width;
    LabeledSample src = s;
    if (mirror) {
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W / 2; ++c) {
                std::swap(src.image[static_cast<std::size_t>(r) * W + c],
                          src.image[static_cast<std::size_t>(r) * W + (W - 1 - c)]);
                std::swap(src.mask[static_cast<std::size_t>(r) * W + c],
                          src.mask[static_cast<std::size_t>(r) * W + (W - 1 - c)]);
            }
    }
    const double theta = angle_deg * kPi / 180.0;
    if (theta == 0.0) return src;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double cy = 0.5 * (H - 1), cx = 0.5 * (W - 1);
    LabeledSample out;
    out.height = H;
    out.width = W;
    out.image.assign(static_cast<std::size_t>(H) * W, 0.0f);
    out.mask.assign(static_cast<std::size_t>(H) * W, 0);
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            const double dy = r - cy, dx = c - cx;
            const double sy = ct * dy - st * dx + cy;  // inverse rotation
            const double sx = st * dy + ct * dx + cx;
            // nearest neighbor for the categorical mask
            const int nr = static_cast<int>(std::lround(sy));
            const int nc = static_cast<int>(std::lround(sx));
            if (nr >= 0 && nr < H && nc >= 0 && nc < W)
                out.mask[static_cast<std::size_t>(r) * W + c] =
                    src.mask[static_cast<std::size_t>(nr) * W + nc];
            // bilinear for the image
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0, fx = sx - x0;
            double acc = 0.0;
            for (int oy = 0; oy <= 1; ++oy)
                for (int ox = 0; ox <= 1; ++ox) {
                    const int yy = y0 + oy, xx = x0 + ox;
                    if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                    const double wgt = (oy ? fy : 1.0 - fy) * (ox ? fx : 1.0 - fx);
                    acc += wgt * src.image[static_cast<std::size_t>(yy) * W + xx];
                }
            out.image[static_cast<std::size_t>(r) * W + c] = static_cast<float>(clamp01(acc));
        }
    }
    return out;
}

LabeledSample augment(const LabeledSample& s, RngStream& rng) {
    const bool mirror = rng.uniform() < 0.5;
    const double angle = rng.uniform(-15.0, 15.0);
    return transform_sample(s, mirror, angle);
}

std::vector<float> add_block_noise(const std::vector<float>& image, int height, int width,
                                   const NoiseSpec& spec, std::vector<std::uint8_t>* changed) {
    if (spec.level < 0) throw std::invalid_argument("add_block_noise: level must be >= 0");
    if (changed) changed->assign(image.size(), 0);
    std::vector<float> out = image;
    if (spec.level == 0) return out;
    const int s = spec.block_size;
    if (s < 1 || s > height || s > width)
        throw std::invalid_argument("add_block_noise: block_size does not fit in image");
    RngStream rng(spec.seed, "block_noise", static_cast<std::uint64_t>(spec.level));
    const int n = spec.block_count();
    for (int b = 0; b < n; ++b) {
        const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(height - s + 1)));
        const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(width - s + 1)));
        const float val = static_cast<float>(rng.uniform());
        for (int r = top; r < top + s; ++r)
            for (int c = left; c < left + s; ++c) {
                out[static_cast<std::size_t>(r) * width + c] = val;
                if (changed) (*changed)[static_cast<std::size_t>(r) * width + c] = 1;
            }
    }
    return out;
}

// ---- PGM -------------------------------------------------------------------

namespace {

void write_pgm(const std::string& path, const std::vector<unsigned char>& bytes, int height,
               int width, int maxval) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << "P5\n" << width << " " << height << "\n" << maxval << "\n";
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

int next_pgm_token(std::istream& in, const std::string& path) {
    // skips whitespace and '#' comments
    while (true) {
        const int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v = -1;
    if (!(in >> v)) throw std::runtime_error("malformed PGM header in '" + path + "'");
    return v;
}

std::vector<unsigned char> read_pgm(const std::string& path, int& height, int& width,
                                    int expected_maxval) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    if (m0 != 'P' || m1 != '5')
        throw std::runtime_error("malformed PGM header in '" + path + "': expected P5");
    width = next_pgm_token(f, path);
    height = next_pgm_token(f, path);
    const int maxval = next_pgm_token(f, path);
    if (width <= 0 || height <= 0)
        throw std::runtime_error("malformed PGM dims in '" + path + "'");
    if (maxval != expected_maxval)
        throw std::runtime_error("unexpected maxval " + std::to_string(maxval) + " in '" + path +
                                 "' (expected " + std::to_string(expected_maxval) + ")");
    f.get();  // single whitespace after maxval
    std::vector<unsigned char> bytes(static_cast<std::size_t>(height) * width);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (f.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw std::runtime_error("truncated PGM data in '" + path + "'");
    return bytes;
}

}  // namespace

void write_pgm_image(const std::string& path, const std::vector<float>& image, int height,
                     int width) {
    std::vector<unsigned char> bytes(image.size());
    for (std::size_t i = 0; i < image.size(); ++i)
        bytes[i] = static_cast<unsigned char>(std::lround(clamp01(image[i]) * 255.0));
    write_pgm(path, bytes, height, width, 255);
}

std::vector<float> read_pgm_image(const std::string& path, int& height, int& width) {
    const auto bytes = read_pgm(path, height, width, 255);
    std::vector<float> image(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) image[i] = static_cast<float>(bytes[i]) / 255.0f;
    return image;
}

void write_pgm_mask(const std::string& path, const std::vector<int>& mask, int height, int width,
                    int num_classes) {
    if (num_classes < 2 || num_classes > 256)
        throw std::invalid_argument("write_pgm_mask: num_classes must be in [2,256]");
    std::vector<unsigned char> bytes(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] < 0 || mask[i] >= num_classes)
            throw std::invalid_argument("write_pgm_mask: label out of range");
        bytes[i] = static_cast<unsigned char>(mask[i]);
    }
    write_pgm(path, bytes, height, width, num_classes - 1);
}

std::vector<int> read_pgm_mask(const std::string& path, int& height, int& width, int num_classes) {
    const auto bytes = read_pgm(path, height, width, num_classes - 1);
    return std::vector<int>(bytes.begin(), bytes.end());
}

void write_heatmap(const std::string& path, const std::vector<double>& field, int height,
                   int width) {
    double lo = field.empty() ? 0.0 : field[0], hi = lo;
    for (const double v : field) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<unsigned char> bytes(field.size(), 0);
    if (hi > lo) {
        const double scale = 255.0 / (hi - lo);
        for (std::size_t i = 0; i < field.size(); ++i)
            bytes[i] = static_cast<unsigned char>(std::lround((field[i] - lo) * scale));
    }
    write_pgm(path, bytes, height, width, 255);
    std::ofstream side(path + ".minmax.txt");
    if (!side) throw std::runtime_error("cannot write sidecar for '" + path + "'");
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%.9g %.9g\n", lo, hi);
    side << buf;
}

void write_field_csv(const std::string& path, const std::vector<double>& field, int height,
                     int width) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    char buf[40];
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            std::snprintf(buf, sizeof(buf), "%.9g", field[static_cast<std::size_t>(r) * width + c]);
            f << (c ? "," : "") << buf;
        }
        f << "\n";
    }
}

// ---- dataset directory -----------------------------------------------------

void write_dataset(const std::string& dir, const std::vector<SyntheticSample>& data,
                   int num_classes) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write manifest in '" + dir + "'");
    char name[32];
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::snprintf(name, sizeof(name), "%04zu.pgm", i);
        const std::string img_rel = std::string("images/") + name;
        const std::string mask_rel = std::string("masks/") + name;
        write_pgm_image((fs::path(dir) / img_rel).string(), data[i].sample.image,
                        data[i].sample.height, data[i].sample.width);
        write_pgm_mask((fs::path(dir) / mask_rel).string(), data[i].sample.mask,
                       data[i].sample.height, data[i].sample.width, num_classes);
        manifest << img_rel << "\t" << mask_rel << "\n";
    }
}

Dataset read_dataset(const std::string& dir, int num_classes) {
    std::ifstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot open manifest in '" + dir + "'");
    Dataset ds;
    ds.num_classes = num_classes;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("malformed manifest line: '" + line + "'");
        LabeledSample s;
        int h2 = 0, w2 = 0;
        s.image = read_pgm_image((fs::path(dir) / line.substr(0, tab)).string(), s.height, s.width);
        s.mask = read_pgm_mask((fs::path(dir) / line.substr(tab + 1)).string(), h2, w2, num_classes);
        if (h2 != s.height || w2 != s.width)
            throw std::runtime_error("image/mask size mismatch for manifest line: '" + line + "'");
        LabelMask m{1, s.height, s.width, s.mask};
        ds.boundaries.push_back(mask_to_boundaries(m, num_classes).boundaries);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace bfcdn
