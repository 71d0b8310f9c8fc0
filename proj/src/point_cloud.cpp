#include "nf3d/point_cloud.hpp"

#include <cmath>
#include <string>

namespace nf3d {

Eigen::Matrix3Xd PointCloud::landmark_points() const {
    check_landmarks();
    Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(landmark_indices.size()));
    for (std::size_t i = 0; i < landmark_indices.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)) = points.col(landmark_indices[i]);
    }
    return out;
}

void PointCloud::check_landmarks() const {
    for (const Eigen::Index idx : landmark_indices) {
        if (idx < 0 || idx >= size()) {
            throw DataError("cloud: landmark index " + std::to_string(idx) +
                            " out of range [0, " + std::to_string(size()) + ")");
        }
    }
}

std::pair<PointCloud, NormalizationParams> normalize(const PointCloud& cloud) {
    if (cloud.empty()) {
        throw DataError("cloud: cannot normalize an empty cloud");
    }
    NormalizationParams params;
    params.centroid = cloud.points.rowwise().mean();

    PointCloud out;
    out.landmark_indices = cloud.landmark_indices;
    out.points = cloud.points.colwise() - params.centroid;

    const double spread = out.points.cwiseAbs().maxCoeff();
    // Coincident points leave only centering round-off behind; dividing by
    // that noise would explode the cloud, so keep scale 1 and snap to zero.
    const double degenerate = 1e-12 * std::max(1.0, cloud.points.cwiseAbs().maxCoeff());
    if (spread <= degenerate) {
        params.scale = 1.0;
        out.points.setZero();
    } else {
        params.scale = spread;
        out.points /= params.scale;
    }
    return {std::move(out), params};
}

PointCloud denormalize(const PointCloud& cloud, const NormalizationParams& params) {
    if (!(params.scale > 0.0)) {
        throw DataError("cloud: denormalize requires a positive scale");
    }
    PointCloud out;
    out.landmark_indices = cloud.landmark_indices;
    out.points = (cloud.points * params.scale).colwise() + params.centroid;
    return out;
}

} // namespace nf3d
