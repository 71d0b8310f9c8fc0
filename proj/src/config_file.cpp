#include "nf3d/config_file.hpp"

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>

#include "nf3d/types.hpp"

namespace nf3d {

namespace {

std::string trim(const std::string& text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    return text.substr(begin, end - begin);
}

} // namespace

ConfigFile ConfigFile::parse(const std::filesystem::path& path,
                             const std::set<std::string>& allowed_keys) {
    std::ifstream in(path);
    if (!in) throw DataError("config: cannot open " + path.string());

    ConfigFile config;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;

        const std::size_t eq = body.find('=');
        if (eq == std::string::npos) {
            throw DataError("config " + path.string() + " line " +
                            std::to_string(line_number) + ": expected key = value");
        }
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (key.empty()) {
            throw DataError("config " + path.string() + " line " +
                            std::to_string(line_number) + ": empty key");
        }
        if (allowed_keys.count(key) == 0) {
            throw DataError("config " + path.string() + " line " +
                            std::to_string(line_number) + ": unknown key '" + key + "'");
        }
        if (config.values_.count(key) > 0) {
            throw DataError("config " + path.string() + " line " +
                            std::to_string(line_number) + ": duplicate key '" + key + "'");
        }
        config.values_[key] = value;
    }
    return config;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(it->second.c_str(), &end);
    if (errno != 0 || end == it->second.c_str() || *end != '\0') {
        throw DataError("config: key '" + key + "' is not a real number: '" + it->second +
                        "'");
    }
    return v;
}

long long ConfigFile::get_int(const std::string& key, long long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(it->second.c_str(), &end, 10);
    if (errno != 0 || end == it->second.c_str() || *end != '\0') {
        throw DataError("config: key '" + key + "' is not an integer: '" + it->second + "'");
    }
    return v;
}

} // namespace nf3d
