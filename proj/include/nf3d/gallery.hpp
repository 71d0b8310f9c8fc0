#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nf3d/face_model.hpp"
#include "nf3d/siamese.hpp"

namespace nf3d {

struct EnrollMetadata {
    /// ISO-8601 UTC; filled with the current time when left empty.
    std::string timestamp;
    Eigen::Index source_points = 0;
    double final_mse = 0.0;
};

/// One line of the gallery index: tab-separated fields, paths relative to
/// the gallery root.
struct IndexRecord {
    std::string identity;
    std::string relative_path;
    Eigen::Index hidden_count = 0;
    std::string timestamp;
    Eigen::Index source_points = 0;
    double final_mse = 0.0;
    std::uint64_t source_hash = 0;
};

struct GalleryEntry {
    std::string identity;
    std::vector<std::string> model_paths;
};

struct MatchResult {
    std::string identity;
    double score = 0.0;
};

std::vector<IndexRecord> read_index(const std::filesystem::path& gallery_dir);

/// Stores the model under <gallery>/<identity>/ and appends an index
/// record; the index is replaced by write-then-rename under an exclusive
/// gallery lock, so readers always see a consistent file. Rejects a
/// hidden-count mismatch with the existing gallery and re-enrollment of a
/// byte-identical model for the same identity.
GalleryEntry enroll(const std::filesystem::path& gallery_dir, const std::string& identity,
                    const FaceModel& model, const EnrollMetadata& meta);

/// Scores every enrolled model against the probe with the verifier net,
/// keeps the minimum per identity, and returns the best top_k ascending by
/// score, ties broken by identity label.
std::vector<MatchResult> match_probe(const std::filesystem::path& gallery_dir,
                                     const FaceModel& probe, const SiameseNet& net,
                                     int top_k);

} // namespace nf3d
