#include "nf3d/rigid.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "nf3d/types.hpp"

namespace nf3d {

namespace {

// Collinear (or coincident) point sets leave a rotation about the line
// axis unconstrained, so the solve must refuse them distinctly.
bool collinear(const Eigen::Matrix3Xd& centered) {
    const Eigen::Matrix3d scatter = centered * centered.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
    const Eigen::Vector3d ev = eig.eigenvalues(); // ascending
    return ev(1) <= 1e-12 * std::max(ev(2), 1e-300);
}

} // namespace

RigidTransform solve_rigid(const Eigen::Matrix3Xd& moving, const Eigen::Matrix3Xd& fixed) {
    if (moving.cols() != fixed.cols()) {
        throw DataError("registration: point lists differ in length (" +
                        std::to_string(moving.cols()) + " vs " +
                        std::to_string(fixed.cols()) + ")");
    }
    if (moving.cols() < 3) {
        throw DataError("registration: need at least 3 point pairs, got " +
                        std::to_string(moving.cols()));
    }

    const Eigen::Vector3d centroid_m = moving.rowwise().mean();
    const Eigen::Vector3d centroid_f = fixed.rowwise().mean();
    const Eigen::Matrix3Xd mc = moving.colwise() - centroid_m;
    const Eigen::Matrix3Xd fc = fixed.colwise() - centroid_f;

    if (collinear(mc) || collinear(fc)) {
        throw NumericError("registration: degenerate (collinear) point configuration");
    }

    const Eigen::Matrix3d cross_cov = mc * fc.transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross_cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    const Eigen::Matrix3d v = svd.matrixV();
    // Flip the least-significant axis when the best orthogonal map is a
    // reflection, keeping det(R) = +1.
    Eigen::Vector3d correction(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);

    RigidTransform out;
    out.R = v * correction.asDiagonal() * u.transpose();
    out.t = centroid_f - out.R * centroid_m;
    return out;
}

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& transform) {
    PointCloud out;
    out.landmark_indices = cloud.landmark_indices;
    out.points = (transform.R * cloud.points).colwise() + transform.t;
    return out;
}

double rotation_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    const double c = ((a * b.transpose()).trace() - 1.0) / 2.0;
    return std::acos(std::clamp(c, -1.0, 1.0));
}

} // namespace nf3d
