#pragma once

#include <filesystem>
#include <optional>

#include "nf3d/point_cloud.hpp"

namespace nf3d {

/// Reads an XYZ text file: one point per line, three whitespace-separated
/// reals, lines starting with '#' and blank lines ignored. An optional
/// landmark file holds integer indices into the cloud, one per line.
/// Malformed lines are reported with their line number.
PointCloud load_cloud(const std::filesystem::path& path,
                      const std::optional<std::filesystem::path>& landmark_path = std::nullopt);

/// Writes the cloud in the same XYZ text format, full double precision.
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

} // namespace nf3d
