#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "bfcdn/metrics.hpp"

using namespace bfcdn;

namespace {

Model tiny_model(std::uint64_t seed = 2) {
    NetworkConfig cfg;
    cfg.num_classes = 3;
    cfg.growth_rate = 2;
    cfg.layers_per_dense_block = 1;
    cfg.num_pool_levels = 1;
    cfg.initial_channels = 4;
    return build<float>(cfg, seed);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("dice of identical masks is 1, of disjoint masks 0") {
    LabelMask a{1, 2, 2, {0, 1, 1, 0}};
    auto d = dice(a, a, 2);
    CHECK(d[0] == 1.0);
    CHECK(d[1] == 1.0);
    LabelMask b{1, 2, 2, {1, 0, 0, 1}};
    d = dice(a, b, 2);
    CHECK(d[0] == 0.0);
    CHECK(d[1] == 0.0);
}

TEST_CASE("dice hand oracle with partial overlap") {
    LabelMask pred{1, 2, 2, {0, 0, 1, 1}};
    LabelMask truth{1, 2, 2, {0, 1, 1, 1}};
    const auto d = dice(pred, truth, 2);
    CHECK(d[0] == doctest::Approx(2.0 / 3.0));  // 2*1 / (2+1)
    CHECK(d[1] == doctest::Approx(0.8));        // 2*2 / (2+3)
}

TEST_CASE("dice counts a class absent from both masks as perfect") {
    LabelMask a{1, 1, 2, {0, 1}};
    const auto d = dice(a, a, 4);
    CHECK(d[2] == 1.0);
    CHECK(d[3] == 1.0);
}

TEST_CASE("dice is symmetric and matches a confusion-matrix oracle") {
    RngStream rng(31, "masks");
    const int C = 4, HW = 16 * 16;
    LabelMask a{1, 16, 16, {}}, b{1, 16, 16, {}};
    a.labels.resize(HW);
    b.labels.resize(HW);
    for (int p = 0; p < HW; ++p) {
        a.labels[static_cast<std::size_t>(p)] = static_cast<int>(rng.below(C));
        b.labels[static_cast<std::size_t>(p)] = static_cast<int>(rng.below(C));
    }
    const auto dab = dice(a, b, C);
    const auto dba = dice(b, a, C);
    for (int c = 0; c < C; ++c) {
        CHECK(dab[static_cast<std::size_t>(c)] == dba[static_cast<std::size_t>(c)]);
        std::int64_t na = 0, nb = 0, ni = 0;
        for (int p = 0; p < HW; ++p) {
            na += a.labels[static_cast<std::size_t>(p)] == c;
            nb += b.labels[static_cast<std::size_t>(p)] == c;
            ni += a.labels[static_cast<std::size_t>(p)] == c &&
                  b.labels[static_cast<std::size_t>(p)] == c;
        }
        CHECK(dab[static_cast<std::size_t>(c)] ==
              doctest::Approx(2.0 * static_cast<double>(ni) / static_cast<double>(na + nb)));
    }
}

TEST_CASE("dice rejects mismatched shapes") {
    LabelMask a{1, 2, 2, {0, 0, 0, 0}};
    LabelMask b{1, 2, 3, {0, 0, 0, 0, 0, 0}};
    CHECK_THROWS_AS(dice(a, b, 2), std::invalid_argument);
}

TEST_CASE("boundary MAE of a perfect mask is zero") {
    BoundarySet b;
    b.width = 4;
    b.num_boundaries = 2;
    b.rows = {3, 3, 3, 3, 6, 6, 6, 6};
    const auto m = boundaries_to_mask(b, 10, 4);
    const auto e = boundary_mae(m, b, 3);
    REQUIRE(e.size() == 2);
    for (const auto& be : e) {
        CHECK(be.present);
        CHECK(be.valid_columns == 4);
        CHECK(be.mae_um == 0.0);
    }
}

TEST_CASE("one-row boundary shift equals the 3.87 um axial resolution") {
    BoundarySet truth;
    truth.width = 4;
    truth.num_boundaries = 1;
    truth.rows = {3, 3, 3, 3};
    BoundarySet shifted = truth;
    for (auto& r : shifted.rows) r += 1.0f;
    const auto m = boundaries_to_mask(shifted, 8, 4);
    const auto e = boundary_mae(m, truth, 2);
    CHECK(e[0].mae_um == doctest::Approx(3.87));
    // explicit resolution overrides the default
    CHECK(boundary_mae(m, truth, 2, 1.0)[0].mae_um == doctest::Approx(1.0));
}

TEST_CASE("boundary MAE averages across columns") {
    BoundarySet truth;
    truth.width = 4;
    truth.num_boundaries = 1;
    truth.rows = {3, 3, 3, 3};
    BoundarySet pred = truth;
    pred.rows = {3, 3, 5, 5};  // half the columns off by two rows
    const auto m = boundaries_to_mask(pred, 8, 4);
    const auto e = boundary_mae(m, truth, 2);
    CHECK(e[0].mae_um == doctest::Approx(3.87));  // mean shift of one row
}

TEST_CASE("columns where the prediction misses the class are excluded") {
    BoundarySet truth;
    truth.width = 2;
    truth.num_boundaries = 1;
    truth.rows = {2, 2};
    // column 0 agrees; column 1 is pure class 0, so no boundary is observable
    LabelMask m{1, 4, 2, {0, 0, 0, 0, 1, 0, 1, 0}};
    const auto e = boundary_mae(m, truth, 2);
    CHECK(e[0].present);
    CHECK(e[0].valid_columns == 1);
    CHECK(e[0].mae_um == 0.0);
    // prediction missing the class everywhere: boundary absent, not zero-error
    LabelMask all0{1, 4, 2, {0, 0, 0, 0, 0, 0, 0, 0}};
    const auto e2 = boundary_mae(all0, truth, 2);
    CHECK_FALSE(e2[0].present);
    CHECK(e2[0].valid_columns == 0);
}

TEST_CASE("evaluate averages per-image reports") {
    auto m = tiny_model();
    auto data = generate_synthetic(3, 16, 16, 3, 9);
    Dataset ds;
    ds.num_classes = 3;
    for (const auto& s : data) {
        ds.samples.push_back(s.sample);
        ds.boundaries.push_back(s.boundaries);
    }
    InferenceConfig cfg;
    cfg.bayesian = false;
    const auto ev = evaluate(m, ds, cfg, 1);
    REQUIRE(ev.per_image.size() == 3);
    double acc = 0.0;
    for (const auto& r : ev.per_image) acc += r.mean_dice;
    CHECK(ev.mean.mean_dice == doctest::Approx(acc / 3.0));
    for (int c = 0; c < 3; ++c) {
        double dc = 0.0;
        for (const auto& r : ev.per_image) dc += r.dice[static_cast<std::size_t>(c)];
        CHECK(ev.mean.dice[static_cast<std::size_t>(c)] == doctest::Approx(dc / 3.0));
    }
    Dataset empty;
    CHECK_THROWS_AS(evaluate(m, empty, cfg, 1), std::invalid_argument);
}

TEST_CASE("noise sweep report shape and determinism") {
    auto bayes = tiny_model(2);
    auto base = tiny_model(3);
    auto data = generate_synthetic(2, 16, 16, 3, 10);
    Dataset ds;
    ds.num_classes = 3;
    for (const auto& s : data) {
        ds.samples.push_back(s.sample);
        ds.boundaries.push_back(s.boundaries);
    }
    NoiseSpec noise;
    noise.block_size = 4;
    noise.seed = 5;
    InferenceConfig cfg;
    cfg.passes = 3;
    const auto rows = noise_sweep_report(bayes, base, ds, 2, noise, cfg, 8);
    REQUIRE(rows.size() == 6);  // levels 0..2 x {bayesian, baseline}
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].level == static_cast<int>(i / 2));
        CHECK(rows[i].mode == (i % 2 == 0 ? "bayesian" : "baseline"));
        CHECK(rows[i].dice_per_class.size() == 3);
        CHECK(rows[i].mean_dice >= 0.0);
        CHECK(rows[i].mean_dice <= 1.0);
        CHECK(rows[i].mean_uncertainty >= 0.0);
    }
    const auto again = noise_sweep_report(bayes, base, ds, 2, noise, cfg, 8);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].mean_dice == again[i].mean_dice);
        CHECK(rows[i].mean_uncertainty == again[i].mean_uncertainty);
    }
}

TEST_CASE("sweep and eval CSV headers") {
    const auto dir =
        (std::filesystem::temp_directory_path() / "bfcdn_test_metrics_csv").string();
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    SweepRow row;
    row.level = 1;
    row.mode = "bayesian";
    row.mean_dice = 0.5;
    row.dice_per_class = {0.25, 0.75};
    row.mean_uncertainty = 0.125;
    write_sweep_csv(dir + "/sweep.csv", {row}, 2);
    std::ifstream f(dir + "/sweep.csv");
    std::string header, line;
    REQUIRE(std::getline(f, header));
    REQUIRE(std::getline(f, line));
    CHECK(header == "level,mode,mean_dice,dice_c0,dice_c1,mean_uncertainty");
    CHECK(line == "1,bayesian,0.5,0.25,0.75,0.125");

    DatasetEval ev;
    ev.mean.mean_dice = 1.0;
    ev.mean.dice = {1.0, 1.0};
    ev.mean.boundary = {BoundaryError{0.0, 0, false}};
    write_eval_csv(dir + "/eval.csv", ev, 2);
    std::ifstream g(dir + "/eval.csv");
    REQUIRE(std::getline(g, header));
    REQUIRE(std::getline(g, line));
    CHECK(header == "image,mean_dice,dice_c0,dice_c1,mae_um_b1");
    CHECK(line == "mean,1,1,1,absent");
}

}
