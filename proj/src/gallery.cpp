#include "nf3d/gallery.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "nf3d/model_io.hpp"
#include "nf3d/types.hpp"

namespace nf3d {

namespace {

constexpr const char* kIndexName = "index.txt";
constexpr const char* kLockName = ".lock";

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
    std::uint64_t hash = 14695981039346656037ULL;
    for (const std::uint8_t b : bytes) {
        hash ^= b;
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::string hash_hex(std::uint64_t hash) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

void check_identity(const std::string& identity) {
    if (identity.empty()) throw DataError("gallery: identity is empty");
    for (const char c : identity) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
                        c == '-' || c == '.';
        if (!ok) {
            throw DataError("gallery: identity '" + identity +
                            "' may only contain letters, digits, '_', '-', '.'");
        }
    }
    if (identity == "." || identity == "..") {
        throw DataError("gallery: identity '" + identity + "' is reserved");
    }
}

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc;
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

/// Exclusive advisory lock on the gallery, released on destruction.
class GalleryLock {
  public:
    explicit GalleryLock(const std::filesystem::path& gallery_dir) {
        const std::filesystem::path lock_path = gallery_dir / kLockName;
        fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
        if (fd_ < 0) {
            throw DataError("gallery: cannot open lock file " + lock_path.string() + ": " +
                            std::strerror(errno));
        }
        if (::flock(fd_, LOCK_EX) != 0) {
            const int err = errno;
            ::close(fd_);
            fd_ = -1;
            throw DataError("gallery: cannot lock " + lock_path.string() + ": " +
                            std::strerror(err));
        }
    }
    ~GalleryLock() {
        if (fd_ >= 0) ::close(fd_);
    }
    GalleryLock(const GalleryLock&) = delete;
    GalleryLock& operator=(const GalleryLock&) = delete;

  private:
    int fd_ = -1;
};

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

long long parse_int(const std::string& text, const std::string& what, int line_number) {
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(text.c_str(), &end, 10);
    if (errno != 0 || end == text.c_str() || *end != '\0') {
        throw DataError("gallery index line " + std::to_string(line_number) + ": bad " +
                        what + " '" + text + "'");
    }
    return v;
}

void write_index(const std::filesystem::path& gallery_dir,
                 const std::vector<IndexRecord>& records) {
    std::string text;
    for (const auto& r : records) {
        text += r.identity;
        text += '\t';
        text += r.relative_path;
        text += '\t';
        text += std::to_string(r.hidden_count);
        text += '\t';
        text += r.timestamp;
        text += '\t';
        text += std::to_string(r.source_points);
        text += '\t';
        text += g17(r.final_mse);
        text += '\t';
        text += hash_hex(r.source_hash);
        text += '\n';
    }
    const std::vector<std::uint8_t> bytes(text.begin(), text.end());
    detail::write_file(bytes, gallery_dir / kIndexName, "gallery index");
}

} // namespace

std::vector<IndexRecord> read_index(const std::filesystem::path& gallery_dir) {
    const std::filesystem::path index_path = gallery_dir / kIndexName;
    std::ifstream in(index_path);
    if (!in) return {};

    std::vector<IndexRecord> records;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 7) {
            throw DataError("gallery index line " + std::to_string(line_number) +
                            ": expected 7 tab-separated fields, got " +
                            std::to_string(fields.size()));
        }
        IndexRecord r;
        r.identity = fields[0];
        r.relative_path = fields[1];
        if (r.identity.empty() || r.relative_path.empty()) {
            throw DataError("gallery index line " + std::to_string(line_number) +
                            ": empty identity or path");
        }
        r.hidden_count =
            static_cast<Eigen::Index>(parse_int(fields[2], "hidden count", line_number));
        r.timestamp = fields[3];
        r.source_points =
            static_cast<Eigen::Index>(parse_int(fields[4], "point count", line_number));
        char* end = nullptr;
        errno = 0;
        r.final_mse = std::strtod(fields[5].c_str(), &end);
        if (errno != 0 || end == fields[5].c_str() || *end != '\0') {
            throw DataError("gallery index line " + std::to_string(line_number) +
                            ": bad mse '" + fields[5] + "'");
        }
        errno = 0;
        r.source_hash = std::strtoull(fields[6].c_str(), &end, 16);
        if (errno != 0 || end == fields[6].c_str() || *end != '\0') {
            throw DataError("gallery index line " + std::to_string(line_number) +
                            ": bad hash '" + fields[6] + "'");
        }
        records.push_back(std::move(r));
    }
    return records;
}

GalleryEntry enroll(const std::filesystem::path& gallery_dir, const std::string& identity,
                    const FaceModel& model, const EnrollMetadata& meta) {
    check_identity(identity);
    if (meta.source_points < 0) throw DataError("gallery: source_points must be >= 0");
    if (meta.final_mse < 0.0) throw DataError("gallery: final_mse must be >= 0");
    for (const char c : meta.timestamp) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            throw DataError("gallery: timestamp may not contain whitespace");
        }
    }

    std::error_code ec;
    std::filesystem::create_directories(gallery_dir, ec);
    if (ec) {
        throw DataError("gallery: cannot create " + gallery_dir.string() + ": " +
                        ec.message());
    }

    const GalleryLock lock(gallery_dir);
    std::vector<IndexRecord> records = read_index(gallery_dir);

    for (const auto& r : records) {
        if (r.hidden_count != model.hidden_count()) {
            throw DataError("gallery: hidden count " + std::to_string(model.hidden_count()) +
                            " does not match the gallery's " +
                            std::to_string(r.hidden_count));
        }
    }

    const std::vector<std::uint8_t> bytes = encode_model(model);
    const std::uint64_t hash = fnv1a64(bytes);

    std::set<std::string> taken;
    std::size_t identity_models = 0;
    for (const auto& r : records) {
        taken.insert(r.relative_path);
        if (r.identity != identity) continue;
        ++identity_models;
        if (r.source_hash == hash) {
            throw DataError("gallery: identity '" + identity +
                            "' already holds this exact model (hash " + hash_hex(hash) +
                            ")");
        }
    }

    std::string relative_path;
    for (std::size_t k = identity_models;; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "model_%04zu.nf3d", k);
        relative_path = identity + "/" + name;
        if (taken.count(relative_path) == 0 &&
            !std::filesystem::exists(gallery_dir / relative_path)) {
            break;
        }
    }

    std::filesystem::create_directories(gallery_dir / identity, ec);
    if (ec) {
        throw DataError("gallery: cannot create identity directory: " + ec.message());
    }
    detail::write_file(bytes, gallery_dir / relative_path, "model file");

    IndexRecord record;
    record.identity = identity;
    record.relative_path = relative_path;
    record.hidden_count = model.hidden_count();
    record.timestamp = meta.timestamp.empty() ? utc_now() : meta.timestamp;
    record.source_points = meta.source_points;
    record.final_mse = meta.final_mse;
    record.source_hash = hash;
    records.push_back(record);
    write_index(gallery_dir, records);

    GalleryEntry entry;
    entry.identity = identity;
    for (const auto& r : records) {
        if (r.identity == identity) entry.model_paths.push_back(r.relative_path);
    }
    return entry;
}

std::vector<MatchResult> match_probe(const std::filesystem::path& gallery_dir,
                                     const FaceModel& probe, const SiameseNet& net,
                                     int top_k) {
    if (top_k < 1) throw DataError("gallery: top_k must be >= 1");
    const std::vector<IndexRecord> records = read_index(gallery_dir);
    if (records.empty()) {
        throw DataError("gallery: no enrolled models under " + gallery_dir.string());
    }

    const FlatWeights probe_flat = flatten(probe);
    if (net.input_size() != probe_flat.values.size()) {
        throw DataError("gallery: verifier input size " + std::to_string(net.input_size()) +
                        " does not match model size " +
                        std::to_string(probe_flat.values.size()));
    }
    const Eigen::VectorXd probe_embedding = embed(net, probe_flat.values);

    std::map<std::string, double> best;
    for (const auto& r : records) {
        if (r.hidden_count != probe.hidden_count()) {
            throw DataError("gallery: probe hidden count " +
                            std::to_string(probe.hidden_count()) +
                            " does not match the gallery's " +
                            std::to_string(r.hidden_count));
        }
        const FaceModel enrolled = deserialize(gallery_dir / r.relative_path);
        if (enrolled.hidden_count() != r.hidden_count) {
            throw DataError("gallery: " + r.relative_path +
                            " disagrees with its index record");
        }
        const double score =
            energy(probe_embedding, embed(net, flatten(enrolled).values));
        const auto [it, inserted] = best.emplace(r.identity, score);
        if (!inserted && score < it->second) it->second = score;
    }

    std::vector<MatchResult> results;
    results.reserve(best.size());
    for (const auto& [identity, score] : best) {
        results.push_back({identity, score});
    }
    std::sort(results.begin(), results.end(), [](const MatchResult& a, const MatchResult& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.identity < b.identity;
    });
    if (static_cast<std::size_t>(top_k) < results.size()) {
        results.resize(static_cast<std::size_t>(top_k));
    }
    return results;
}

} // namespace nf3d
