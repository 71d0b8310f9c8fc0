#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "nf3d/types.hpp"

namespace nf3d {

/// Ordered set of 3D samples, one point per column. Landmarks are indices
/// into the columns, kept in the order they were supplied.
struct PointCloud {
    Eigen::Matrix3Xd points;
    std::vector<Eigen::Index> landmark_indices;

    Eigen::Index size() const { return points.cols(); }
    bool empty() const { return points.cols() == 0; }
    bool has_landmarks() const { return !landmark_indices.empty(); }

    /// Gathers the landmark columns into a 3xL matrix.
    Eigen::Matrix3Xd landmark_points() const;

    /// Throws DataError if any landmark index falls outside [0, size()).
    void check_landmarks() const;
};

/// Record of the centering/scaling map so a cloud can be restored to
/// source units.
struct NormalizationParams {
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    double scale = 1.0;
};

/// Centers the cloud on its centroid and scales isotropically so every
/// coordinate lands in [-1, 1], with the bound attained on at least one
/// axis for non-degenerate input. A fully coincident cloud keeps scale 1
/// and collapses to the origin.
std::pair<PointCloud, NormalizationParams> normalize(const PointCloud& cloud);

/// Inverse of normalize: p * scale + centroid per point.
PointCloud denormalize(const PointCloud& cloud, const NormalizationParams& params);

} // namespace nf3d
