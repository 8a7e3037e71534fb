#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "bfcdn/runconfig.hpp"

using namespace bfcdn;

namespace {

std::string write_config(const char* name, const std::string& text) {
    const auto dir = std::filesystem::temp_directory_path() / "bfcdn_test_cfg";
    std::filesystem::create_directories(dir);
    const auto path = (dir / name).string();
    std::ofstream f(path);
    f << text;
    return path;
}

}  // namespace

TEST_SUITE("runconfig") {

TEST_CASE("defaults cover the documented keys") {
    RunConfig cfg;
    CHECK(cfg.get_int("network.num_classes") == 5);
    CHECK(cfg.get_int("network.growth_rate") == 8);
    CHECK(cfg.get_double("network.dropout_rate") == 0.4);
    CHECK(cfg.get_string("train.profile") == "desk");
    CHECK(cfg.get_int("train.iterations") == 3000);
    CHECK(cfg.get_double("train.lr") == 0.001);
    CHECK(cfg.get_bool("train.bayesian"));
    CHECK(cfg.get_int("infer.t") == 50);
    CHECK(cfg.get_int("data.height") == 64);
    CHECK_FALSE(cfg.is_set("train.lr"));  // defaults are not "explicitly set"
}

TEST_CASE("set and typed getters") {
    RunConfig cfg;
    cfg.set("train.lr", "0.01");
    CHECK(cfg.is_set("train.lr"));
    CHECK(cfg.get_double("train.lr") == 0.01);
    cfg.set("train.bayesian", "no");
    CHECK_FALSE(cfg.get_bool("train.bayesian"));
    cfg.set("train.bayesian", "1");
    CHECK(cfg.get_bool("train.bayesian"));
}

TEST_CASE("unknown keys are rejected everywhere") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("train.typo", "1"), std::invalid_argument);
    CHECK_THROWS_AS(cfg.get_string("no.such.key"), std::invalid_argument);
}

TEST_CASE("type errors carry the key and offending value") {
    RunConfig cfg;
    cfg.set("train.iterations", "lots");
    CHECK_THROWS_WITH_AS(cfg.get_int("train.iterations"),
                         doctest::Contains("'lots' is not an integer"), std::runtime_error);
    cfg.set("train.lr", "fast");
    CHECK_THROWS_AS(cfg.get_double("train.lr"), std::runtime_error);
    cfg.set("train.bayesian", "maybe");
    CHECK_THROWS_AS(cfg.get_bool("train.bayesian"), std::runtime_error);
    // trailing garbage is not silently ignored
    cfg.set("train.iterations", "30 00");
    CHECK_THROWS_AS(cfg.get_int("train.iterations"), std::runtime_error);
}

TEST_CASE("file parsing handles comments and blank lines") {
    const auto path = write_config("ok.cfg",
                                   "# a comment\n"
                                   "\n"
                                   "train.lr = 0.005   # inline comment\n"
                                   "  network.num_classes=7\n");
    const auto cfg = RunConfig::from_file(path);
    CHECK(cfg.get_double("train.lr") == 0.005);
    CHECK(cfg.get_int("network.num_classes") == 7);
    CHECK(cfg.is_set("train.lr"));
    CHECK_FALSE(cfg.is_set("train.iterations"));
}

TEST_CASE("malformed lines report the line number") {
    const auto path = write_config("bad.cfg", "train.lr=0.1\nthis is not key value\n");
    CHECK_THROWS_WITH_AS(RunConfig::from_file(path), doctest::Contains(":2:"),
                         std::runtime_error);
    const auto path2 = write_config("badkey.cfg", "\n\nnot.a.key=1\n");
    CHECK_THROWS_WITH_AS(RunConfig::from_file(path2), doctest::Contains(":3:"),
                         std::runtime_error);
    CHECK_THROWS_AS(RunConfig::from_file("/nonexistent/path.cfg"), std::runtime_error);
}

TEST_CASE("paper profile rewrites the schedule defaults") {
    RunConfig cfg;
    cfg.set("train.profile", "paper");
    cfg.apply_profile();
    CHECK(cfg.get_int("train.iterations") == 40000);
    CHECK(cfg.get_double("train.lr") == 1e-5);
    CHECK(cfg.get_int("train.lr_decay_at") == 10000);
}

TEST_CASE("desk profile keeps the shipped defaults") {
    RunConfig cfg;
    cfg.apply_profile();
    CHECK(cfg.get_int("train.iterations") == 3000);
    CHECK(cfg.get_double("train.lr") == 0.001);
    CHECK(cfg.get_int("train.lr_decay_at") == 2500);
}

TEST_CASE("explicit values survive the profile") {
    RunConfig cfg;
    cfg.set("train.profile", "paper");
    cfg.set("train.iterations", "123");
    cfg.apply_profile();
    CHECK(cfg.get_int("train.iterations") == 123);  // explicit beats profile
    CHECK(cfg.get_double("train.lr") == 1e-5);      // untouched key follows profile
}

TEST_CASE("unknown profile names are rejected") {
    RunConfig cfg;
    cfg.set("train.profile", "couch");
    CHECK_THROWS_WITH_AS(cfg.apply_profile(), doctest::Contains("couch"), std::runtime_error);
}

}
