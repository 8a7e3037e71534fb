#pragma once

#include <map>
#include <string>

namespace bfcdn {

// Flat key=value run configuration with '#' comments. Unknown keys are
// rejected; every known key has a documented default. Precedence is
// flags > file > profile > defaults, applied by the CLI.
class RunConfig {
public:
    RunConfig();  // defaults only

    static RunConfig from_file(const std::string& path);

    // set() rejects unknown keys; used both by the parser and flag overrides.
    void set(const std::string& key, const std::string& value);
    bool is_set(const std::string& key) const;  // explicitly set (not default)

    std::string get_string(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    // Applies the "desk" or "paper" preset to train.* keys that were not
    // explicitly set.
    void apply_profile();

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, bool> explicit_;
};

}  // namespace bfcdn
