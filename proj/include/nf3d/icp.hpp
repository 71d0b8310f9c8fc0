#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nf3d/rigid.hpp"

namespace nf3d {

struct IcpConfig {
    int max_iterations = 50;
    /// Converged when the mean-squared residual, or its change between
    /// iterations, drops below this.
    double residual_tolerance = 1e-6;
    /// Fraction of moving points used per iteration, in (0, 1].
    double sample_fraction = 1.0;
    /// Pairs farther apart than this are dropped before the rigid solve.
    std::optional<double> rejection_distance;
    std::uint64_t seed = 0;
};

struct Correspondence {
    Eigen::Index moving = -1;
    Eigen::Index fixed = -1;
    double distance = 0.0;
};

struct IcpResult {
    RigidTransform transform;
    int iterations_used = 0;
    /// Mean squared distance over the surviving correspondence pairs.
    double final_residual = 0.0;
    /// Residual at the start of each iteration, for convergence inspection.
    std::vector<double> residual_history;
};

/// Exact nearest neighbor in `fixed` for each sampled moving point.
/// Sampling keeps ceil(sample_fraction * N) points, seeded; pairs beyond
/// rejection_distance are omitted. Distances are Euclidean.
std::vector<Correspondence> nearest_correspondences(const PointCloud& moving,
                                                    const PointCloud& fixed,
                                                    const IcpConfig& config);

/// Alternates correspondence search and rigid least squares from `initial`
/// until the residual (or its change) falls below tolerance or the
/// iteration budget runs out. The returned transform composes every
/// per-iteration motion with the initial one. Throws NumericError when
/// fewer than 3 pairs survive rejection.
IcpResult icp(const PointCloud& moving, const PointCloud& fixed,
              const RigidTransform& initial, const IcpConfig& config);

/// Rigidly aligns the probe's landmarks onto the reference landmarks and
/// applies that motion to the whole cloud. Requires at least 3 landmarks
/// in matching order.
std::pair<PointCloud, RigidTransform> register_landmarks(
    const PointCloud& probe, const Eigen::Matrix3Xd& reference_landmarks);

} // namespace nf3d
