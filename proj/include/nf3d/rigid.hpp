#pragma once

#include <Eigen/Core>

#include "nf3d/point_cloud.hpp"

namespace nf3d {

/// Proper rigid motion p -> R*p + t. R is kept orthonormal with det +1.
struct RigidTransform {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();

    static RigidTransform identity() { return {}; }

    Eigen::Vector3d operator()(const Eigen::Vector3d& p) const { return R * p + t; }

    RigidTransform inverse() const {
        RigidTransform inv;
        inv.R = R.transpose();
        inv.t = -(inv.R * t);
        return inv;
    }
};

/// second(first(p)): composes two motions into one.
inline RigidTransform compose(const RigidTransform& second, const RigidTransform& first) {
    RigidTransform out;
    out.R = second.R * first.R;
    out.t = second.R * first.t + second.t;
    return out;
}

/// Least-squares rigid motion taking `moving` onto `fixed`, both 3xN in
/// corresponding column order. Centroid subtraction, cross-covariance SVD,
/// determinant correction so the result is always a proper rotation.
/// Throws DataError on size mismatch or fewer than 3 pairs, NumericError
/// when either point set is collinear.
RigidTransform solve_rigid(const Eigen::Matrix3Xd& moving, const Eigen::Matrix3Xd& fixed);

/// Applies R*p + t to every point; landmark indices are preserved.
PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& transform);

/// Geodesic angle (radians) between two rotations.
double rotation_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

} // namespace nf3d
