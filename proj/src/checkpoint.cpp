#include "bfcdn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace bfcdn {

namespace {

constexpr char kMagic[] = "BFCDN1\n";
constexpr char kConfigSentinel[] = "CONFIG\n";

void put_u32(std::ostream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& f, const std::string& path) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw std::runtime_error("truncated checkpoint '" + path + "'");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32_array(std::ostream& f, const std::vector<float>& v) {
    static_assert(sizeof(float) == 4);
    // host is little-endian on all supported targets
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::string config_text(const NetworkConfig& c) {
    std::ostringstream os;
    os << "network.num_classes=" << c.num_classes << "\n"
       << "network.growth_rate=" << c.growth_rate << "\n"
       << "network.layers_per_dense_block=" << c.layers_per_dense_block << "\n"
       << "network.num_pool_levels=" << c.num_pool_levels << "\n"
       << "network.initial_channels=" << c.initial_channels << "\n"
       << "network.dropout_rate=" << c.dropout_rate << "\n"
       << "network.kernel_size=" << c.kernel_size << "\n";
    return os.str();
}

NetworkConfig parse_config_text(const std::string& text, const std::string& path) {
    NetworkConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("malformed config line in checkpoint '" + path + "': " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "network.num_classes") c.num_classes = std::stoi(val);
        else if (key == "network.growth_rate") c.growth_rate = std::stoi(val);
        else if (key == "network.layers_per_dense_block") c.layers_per_dense_block = std::stoi(val);
        else if (key == "network.num_pool_levels") c.num_pool_levels = std::stoi(val);
        else if (key == "network.initial_channels") c.initial_channels = std::stoi(val);
        else if (key == "network.dropout_rate") c.dropout_rate = std::stod(val);
        else if (key == "network.kernel_size") c.kernel_size = std::stoi(val);
        else throw std::runtime_error("unknown config key in checkpoint '" + path + "': " + key);
    }
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f.write(kMagic, 7);
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        const auto& name = model.param_names[i];
        const auto& t = *model.params[i];
        put_u32(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(f, static_cast<std::uint32_t>(t.dims.size()));
        for (const int d : t.dims) put_u32(f, static_cast<std::uint32_t>(d));
        put_f32_array(f, t.values);
    }
    f.write(kConfigSentinel, 7);
    const std::string cfg = config_text(model.config);
    f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    char magic[7];
    f.read(magic, 7);
    if (!f || std::memcmp(magic, kMagic, 7) != 0)
        throw std::runtime_error("'" + path + "' is not a BFCDN1 checkpoint");

    std::map<std::string, std::pair<std::vector<int>, std::vector<float>>> entries;
    while (true) {
        char peeked[7];
        f.read(peeked, 7);
        if (!f) throw std::runtime_error("truncated checkpoint '" + path + "'");
        if (std::memcmp(peeked, kConfigSentinel, 7) == 0) break;
        f.seekg(-7, std::ios::cur);
        const std::uint32_t name_len = get_u32(f, path);
        if (name_len == 0 || name_len > 4096)
            throw std::runtime_error("implausible name length in checkpoint '" + path + "'");
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const std::uint32_t rank = get_u32(f, path);
        if (rank == 0 || rank > 8)
            throw std::runtime_error("implausible rank in checkpoint '" + path + "'");
        std::vector<int> dims(rank);
        std::int64_t n = 1;
        for (auto& d : dims) {
            d = static_cast<int>(get_u32(f, path));
            n *= d;
        }
        std::vector<float> values(static_cast<std::size_t>(n));
        f.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(float)));
        if (!f) throw std::runtime_error("truncated checkpoint '" + path + "'");
        entries[name] = {std::move(dims), std::move(values)};
    }
    std::string cfg_text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const NetworkConfig cfg = parse_config_text(cfg_text, path);

    // Rebuild against the census so shape mismatches surface with names.
    Model model;
    model.config = cfg;
    for (const auto& spec : conv_census(cfg)) {
        for (const std::string suffix : {".w", ".b"}) {
            const std::string name = spec.name + suffix;
            const auto it = entries.find(name);
            if (it == entries.end())
                throw std::runtime_error("checkpoint '" + path + "' is missing parameter '" + name +
                                         "'");
            const std::vector<int> expect =
                suffix == ".w"
                    ? std::vector<int>{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}
                    : std::vector<int>{spec.out_channels};
            if (it->second.first != expect)
                throw std::runtime_error("checkpoint '" + path + "': parameter '" + name +
                                         "' has unexpected shape");
            model.param_names.push_back(name);
            model.params.push_back(
                make_tensor<float>(it->second.first, std::move(it->second.second), true));
        }
    }
    return model;
}

}  // namespace bfcdn
