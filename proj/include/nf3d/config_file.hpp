#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace nf3d {

/// key = value text config. '#' starts a comment, blank lines are skipped.
/// Unknown keys are rejected against the allowed set.
class ConfigFile {
public:
    ConfigFile() = default;

    static ConfigFile parse(const std::filesystem::path& path,
                            const std::set<std::string>& allowed_keys);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;

private:
    std::map<std::string, std::string> values_;
};

} // namespace nf3d
