#include "nf3d/icp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "nf3d/kdtree.hpp"
#include "nf3d/random.hpp"

namespace nf3d {

namespace {

void validate(const IcpConfig& config) {
    if (config.max_iterations < 1) {
        throw DataError("registration: max_iterations must be >= 1");
    }
    if (!(config.residual_tolerance > 0.0)) {
        throw DataError("registration: residual_tolerance must be positive");
    }
    if (!(config.sample_fraction > 0.0) || config.sample_fraction > 1.0) {
        throw DataError("registration: sample_fraction must be in (0, 1]");
    }
    if (config.rejection_distance && !(*config.rejection_distance > 0.0)) {
        throw DataError("registration: rejection_distance must be positive");
    }
}

// ceil(fraction * n) moving indices, ascending. fraction == 1 keeps all
// points without touching the generator.
std::vector<Eigen::Index> sample_indices(Eigen::Index n, double fraction,
                                         std::mt19937_64& rng) {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    if (fraction >= 1.0) return all;

    const auto keep = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(n), std::ceil(fraction * static_cast<double>(n))));
    for (std::size_t i = 0; i < keep; ++i) {
        const auto j = i + static_cast<std::size_t>(
                               uniform_index(rng, static_cast<std::uint64_t>(all.size() - i)));
        std::swap(all[i], all[j]);
    }
    all.resize(std::max<std::size_t>(keep, 1));
    std::sort(all.begin(), all.end());
    return all;
}

std::vector<Correspondence> correspond(const Eigen::Matrix3Xd& moving_pts,
                                       const std::vector<Eigen::Index>& sample,
                                       const KdTree3& tree,
                                       const std::optional<double>& rejection_distance) {
    std::vector<Correspondence> pairs;
    pairs.reserve(sample.size());
    for (const Eigen::Index i : sample) {
        const KdTree3::Hit hit = tree.nearest(moving_pts.col(i));
        const double dist = std::sqrt(hit.squared_distance);
        if (rejection_distance && dist > *rejection_distance) continue;
        pairs.push_back({i, hit.index, dist});
    }
    return pairs;
}

} // namespace

std::vector<Correspondence> nearest_correspondences(const PointCloud& moving,
                                                    const PointCloud& fixed,
                                                    const IcpConfig& config) {
    validate(config);
    if (moving.empty() || fixed.empty()) {
        throw DataError("registration: correspondence search needs nonempty clouds");
    }
    std::mt19937_64 rng(config.seed);
    const KdTree3 tree(fixed.points);
    const auto sample = sample_indices(moving.size(), config.sample_fraction, rng);
    return correspond(moving.points, sample, tree, config.rejection_distance);
}

IcpResult icp(const PointCloud& moving, const PointCloud& fixed,
              const RigidTransform& initial, const IcpConfig& config) {
    validate(config);
    if (moving.size() < 3 || fixed.size() < 3) {
        throw DataError("registration: icp needs at least 3 points per cloud");
    }

    std::mt19937_64 rng(config.seed);
    const KdTree3 tree(fixed.points);

    IcpResult result;
    result.transform = initial;
    Eigen::Matrix3Xd current = ((initial.R * moving.points).colwise() + initial.t).eval();

    double previous = std::numeric_limits<double>::infinity();
    for (int iter = 1; iter <= config.max_iterations; ++iter) {
        const auto sample = sample_indices(moving.size(), config.sample_fraction, rng);
        const auto pairs = correspond(current, sample, tree, config.rejection_distance);
        if (pairs.size() < 3) {
            throw NumericError("registration: fewer than 3 correspondence pairs survive "
                               "rejection at iteration " + std::to_string(iter));
        }

        double residual = 0.0;
        for (const auto& pair : pairs) {
            residual += pair.distance * pair.distance;
        }
        residual /= static_cast<double>(pairs.size());

        result.residual_history.push_back(residual);
        result.iterations_used = iter;
        result.final_residual = residual;
        if (residual <= config.residual_tolerance ||
            std::abs(previous - residual) <= config.residual_tolerance) {
            break;
        }
        previous = residual;

        Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(pairs.size()));
        Eigen::Matrix3Xd dst(3, static_cast<Eigen::Index>(pairs.size()));
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            src.col(static_cast<Eigen::Index>(k)) = current.col(pairs[k].moving);
            dst.col(static_cast<Eigen::Index>(k)) = fixed.points.col(pairs[k].fixed);
        }
        const RigidTransform step = solve_rigid(src, dst);
        current = ((step.R * current).colwise() + step.t).eval();
        result.transform = compose(step, result.transform);
    }
    return result;
}

std::pair<PointCloud, RigidTransform> register_landmarks(
    const PointCloud& probe, const Eigen::Matrix3Xd& reference_landmarks) {
    if (!probe.has_landmarks()) {
        throw DataError("registration: probe cloud carries no landmarks");
    }
    const Eigen::Matrix3Xd probe_landmarks = probe.landmark_points();
    if (probe_landmarks.cols() != reference_landmarks.cols()) {
        throw DataError("registration: landmark count mismatch (probe " +
                        std::to_string(probe_landmarks.cols()) + ", reference " +
                        std::to_string(reference_landmarks.cols()) + ")");
    }
    const RigidTransform transform = solve_rigid(probe_landmarks, reference_landmarks);
    return {apply_transform(probe, transform), transform};
}

} // namespace nf3d
