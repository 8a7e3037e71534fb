#include "bfcdn/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace bfcdn {

namespace {

// key -> default value. The "desk" profile is the shipped default; the
// "paper" profile switches to the reference training schedule.
const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        {"network.num_classes", "5"},
        {"network.growth_rate", "8"},
        {"network.layers_per_dense_block", "2"},
        {"network.num_pool_levels", "2"},
        {"network.initial_channels", "16"},
        {"network.dropout_rate", "0.4"},
        {"network.kernel_size", "3"},
        {"train.profile", "desk"},
        {"train.iterations", "3000"},
        {"train.batch_size", "2"},
        {"train.lr", "0.001"},
        {"train.lr_decay_factor", "0.1"},
        {"train.lr_decay_at", "2500"},
        {"train.t_train", "10"},
        {"train.dropout_rate", "0.4"},
        {"train.bayesian", "true"},
        {"train.seed", "42"},
        {"train.checkpoint_every", "500"},
        {"train.augmentation", "true"},
        {"infer.t", "50"},
        {"infer.dropout_rate", "0.4"},
        {"data.count", "200"},
        {"data.height", "64"},
        {"data.width", "64"},
        {"data.classes", "5"},
        {"data.seed", "42"},
        {"data.smoothness", "1.0"},
        {"data.noise_base_count", "2"},
        {"data.noise_block_size", "8"},
        {"paths.data", ""},
        {"paths.model", ""},
        {"paths.out", ""},
    };
    return d;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (defaults().find(key) == defaults().end())
        throw std::invalid_argument("unknown config key '" + key + "'");
    values_[key] = value;
    explicit_[key] = true;
}

bool RunConfig::is_set(const std::string& key) const {
    const auto it = explicit_.find(key);
    return it != explicit_.end() && it->second;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            cfg.set(key, value);
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

std::string RunConfig::get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    return it->second;
}

int RunConfig::get_int(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::runtime_error("config key '" + key + "': '" + v + "' is not an integer");
    }
}

double RunConfig::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::runtime_error("config key '" + key + "': '" + v + "' is not a number");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    std::string v = get_string(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config key '" + key + "': '" + v + "' is not a boolean");
}

void RunConfig::apply_profile() {
    const std::string profile = get_string("train.profile");
    auto set_default = [this](const std::string& key, const std::string& value) {
        if (!is_set(key)) values_[key] = value;
    };
    if (profile == "desk") {
        set_default("train.iterations", "3000");
        set_default("train.lr", "0.001");
        set_default("train.lr_decay_at", "2500");
    } else if (profile == "paper") {
        set_default("train.iterations", "40000");
        set_default("train.lr", "1e-5");
        set_default("train.lr_decay_at", "10000");
    } else {
        throw std::runtime_error("train.profile must be 'desk' or 'paper', got '" + profile + "'");
    }
}

}  // namespace bfcdn
