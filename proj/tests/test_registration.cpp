#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>

#include "nf3d/icp.hpp"
#include "nf3d/kdtree.hpp"
#include "nf3d/rigid.hpp"
#include "support.hpp"

using namespace nf3d;
using namespace testsupport;

namespace {

RigidTransform rot_z(double radians, const Eigen::Vector3d& t = Eigen::Vector3d::Zero()) {
    RigidTransform out;
    out.R = Eigen::AngleAxisd(radians, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    out.t = t;
    return out;
}

RigidTransform random_rigid(std::uint64_t seed, double max_angle, double max_translation) {
    std::mt19937_64 rng(seed);
    Eigen::Vector3d axis;
    do {
        axis = Eigen::Vector3d(uniform_range(rng, -1, 1), uniform_range(rng, -1, 1),
                               uniform_range(rng, -1, 1));
    } while (axis.norm() < 1e-3);
    axis.normalize();
    RigidTransform out;
    out.R = Eigen::AngleAxisd(uniform_range(rng, -max_angle, max_angle), axis)
                .toRotationMatrix();
    Eigen::Vector3d t(uniform_range(rng, -1, 1), uniform_range(rng, -1, 1),
                      uniform_range(rng, -1, 1));
    if (t.norm() > 0) t = t.normalized() * uniform_range(rng, 0, max_translation);
    out.t = t;
    return out;
}

} // namespace

TEST_CASE("solve_rigid recovers the identity") {
    const PointCloud cloud = random_box_cloud(10, 3);
    const RigidTransform T = solve_rigid(cloud.points, cloud.points);
    CHECK((T.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(T.t.norm() < 1e-12);
}

TEST_CASE("solve_rigid recovers a pure translation") {
    const PointCloud cloud = random_box_cloud(5, 4);
    const Eigen::Matrix3Xd moved = cloud.points.colwise() + Eigen::Vector3d(0.1, 0, 0);
    const RigidTransform T = solve_rigid(cloud.points, moved);
    CHECK((T.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((T.t - Eigen::Vector3d(0.1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("solve_rigid recovers a z-rotation plus translation to 1e-9") {
    const PointCloud cloud = random_box_cloud(10, 5);
    const RigidTransform truth =
        rot_z(25.0 * M_PI / 180.0, Eigen::Vector3d(0.05, -0.02, 0.1));
    Eigen::Matrix3Xd moved = cloud.points;
    for (Eigen::Index i = 0; i < moved.cols(); ++i) moved.col(i) = truth(moved.col(i));
    const RigidTransform T = solve_rigid(cloud.points, moved);
    CHECK((T.R - truth.R).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((T.t - truth.t).norm() < 1e-9);
}

TEST_CASE("solve_rigid always returns a proper rotation") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const PointCloud cloud = random_box_cloud(30, 100 + seed);
        const RigidTransform truth = random_rigid(seed, M_PI, 1.0);
        Eigen::Matrix3Xd moved = cloud.points;
        for (Eigen::Index i = 0; i < moved.cols(); ++i) moved.col(i) = truth(moved.col(i));
        // Perturb so the fit is least-squares, not exact.
        std::mt19937_64 rng(seed);
        for (Eigen::Index i = 0; i < moved.cols(); ++i) {
            moved.col(i) += 0.01 * Eigen::Vector3d(normal_draw(rng), normal_draw(rng),
                                                   normal_draw(rng));
        }
        const RigidTransform T = solve_rigid(cloud.points, moved);
        CHECK((T.R.transpose() * T.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
              1e-9);
        CHECK(T.R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(rotation_angle(T.R, truth.R) < 0.05);
    }
}

TEST_CASE("solve_rigid rejects size mismatches and too few pairs") {
    const PointCloud a = random_box_cloud(5, 1);
    const PointCloud b = random_box_cloud(4, 2);
    CHECK_THROWS_AS(solve_rigid(a.points, b.points), DataError);
    const PointCloud two = random_box_cloud(2, 3);
    CHECK_THROWS_AS(solve_rigid(two.points, two.points), DataError);
}

TEST_CASE("solve_rigid reports collinear input as a numeric failure") {
    Eigen::Matrix3Xd line(3, 4);
    for (Eigen::Index i = 0; i < 4; ++i) {
        line.col(i) = Eigen::Vector3d(static_cast<double>(i), 0, 0);
    }
    CHECK_THROWS_AS(solve_rigid(line, line), NumericError);
}

TEST_CASE("apply_transform leaves points on the rotation axis fixed") {
    const PointCloud cloud = make_cloud({{0, 0, 1}});
    const PointCloud out = apply_transform(cloud, rot_z(M_PI / 2.0));
    CHECK((out.points.col(0) - Eigen::Vector3d(0, 0, 1)).norm() < 1e-15);
}

TEST_CASE("apply_transform preserves pairwise distances and landmarks") {
    PointCloud cloud = random_box_cloud(20, 6);
    cloud.landmark_indices = {3, 1, 4};
    const RigidTransform T = random_rigid(9, M_PI, 2.0);
    const PointCloud out = apply_transform(cloud, T);
    CHECK(out.landmark_indices == cloud.landmark_indices);
    for (Eigen::Index i = 1; i < cloud.size(); ++i) {
        const double before = (cloud.points.col(i) - cloud.points.col(0)).norm();
        const double after = (out.points.col(i) - out.points.col(0)).norm();
        CHECK(after == doctest::Approx(before).epsilon(1e-12));
    }
}

TEST_CASE("inverse and compose cancel") {
    const RigidTransform T = random_rigid(12, M_PI, 2.0);
    const RigidTransform round = compose(T.inverse(), T);
    CHECK((round.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(round.t.norm() < 1e-12);
}

TEST_CASE("rotation_angle measures the geodesic angle") {
    CHECK(rotation_angle(rot_z(0.3).R, Eigen::Matrix3d::Identity()) ==
          doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("kdtree nearest matches brute force, ties to the lowest index") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        PointCloud fixed = random_box_cloud(257, 40 + seed);
        // Duplicate a block of columns so exact distance ties exist.
        fixed.points.rightCols(50) = fixed.points.leftCols(50);
        const KdTree3 tree(fixed.points);
        const PointCloud queries = random_box_cloud(200, 80 + seed);
        for (Eigen::Index i = 0; i < queries.size(); ++i) {
            const auto hit = tree.nearest(queries.points.col(i));
            const auto [want_idx, want_d2] = brute_nearest(queries.points.col(i), fixed.points);
            CHECK(hit.index == want_idx);
            CHECK(hit.squared_distance == want_d2);
        }
        // Query at an exact duplicated point must return the lower index.
        const auto dup = tree.nearest(fixed.points.col(210));
        CHECK(dup.index == 210 - 207);
        CHECK(dup.squared_distance == 0.0);
    }
}

TEST_CASE("nearest_correspondences picks the closer fixed point") {
    const PointCloud moving = make_cloud({{0, 0, 0}});
    const PointCloud fixed = make_cloud({{1, 0, 0}, {0.2, 0, 0}});
    const auto pairs = nearest_correspondences(moving, fixed, IcpConfig{});
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].moving == 0);
    CHECK(pairs[0].fixed == 1);
    CHECK(pairs[0].distance == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("nearest_correspondences honors rejection distance and sampling") {
    const PointCloud moving = make_cloud({{0, 0, 0}, {10, 0, 0}});
    const PointCloud fixed = make_cloud({{0.1, 0, 0}});
    IcpConfig config;
    config.rejection_distance = 1.0;
    const auto pairs = nearest_correspondences(moving, fixed, config);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].moving == 0);

    IcpConfig sampled;
    sampled.sample_fraction = 0.25;
    sampled.seed = 5;
    const PointCloud big = random_box_cloud(100, 50);
    const auto a = nearest_correspondences(big, fixed, sampled);
    const auto b = nearest_correspondences(big, fixed, sampled);
    CHECK(a.size() == 25);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].moving == b[i].moving);
}

TEST_CASE("icp on already-aligned clouds stops after one iteration at zero residual") {
    const PointCloud cloud = random_box_cloud(200, 21);
    const IcpResult result = icp(cloud, cloud, RigidTransform::identity(), IcpConfig{});
    CHECK(result.iterations_used == 1);
    CHECK(result.final_residual == 0.0);
    CHECK((result.transform.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(result.transform.t.norm() < 1e-12);
}

TEST_CASE("icp recovers a 20 degree rotation with translation on 1000 points") {
    const BumpSurface surface = random_bump_surface(77);
    const PointCloud fixed = surface_cloud(surface, 1000, 99);
    const RigidTransform truth = rot_z(20.0 * M_PI / 180.0, Eigen::Vector3d(0.1, 0, 0));
    const PointCloud moving = apply_transform(fixed, truth);

    IcpConfig config;
    config.residual_tolerance = 1e-12;
    const IcpResult result = icp(moving, fixed, RigidTransform::identity(), config);
    // Aligning moving onto fixed recovers the inverse motion.
    const RigidTransform want = truth.inverse();
    CHECK(rotation_angle(result.transform.R, want.R) < 0.5 * M_PI / 180.0);
    CHECK((result.transform.t - want.t).norm() < 1e-3);
    CHECK(result.iterations_used <= 50);
}

TEST_CASE("icp residual history is recorded per iteration") {
    const BumpSurface surface = random_bump_surface(31);
    const PointCloud fixed = surface_cloud(surface, 400, 32);
    const PointCloud moving = apply_transform(fixed, rot_z(0.15, Eigen::Vector3d(0.05, 0, 0)));
    IcpConfig config;
    config.residual_tolerance = 1e-12;
    const IcpResult result = icp(moving, fixed, RigidTransform::identity(), config);
    CHECK(result.residual_history.size() == static_cast<std::size_t>(result.iterations_used));
    CHECK(result.final_residual == result.residual_history.back());
    CHECK(result.final_residual < result.residual_history.front());
}

TEST_CASE("icp with a fixed seed and subsampling is reproducible") {
    const BumpSurface surface = random_bump_surface(55);
    const PointCloud fixed = surface_cloud(surface, 600, 56);
    const PointCloud moving = apply_transform(fixed, rot_z(0.2, Eigen::Vector3d(0.02, 0.03, 0)));
    IcpConfig config;
    config.sample_fraction = 0.5;
    config.seed = 17;
    const IcpResult a = icp(moving, fixed, RigidTransform::identity(), config);
    const IcpResult b = icp(moving, fixed, RigidTransform::identity(), config);
    CHECK((a.transform.R.array() == b.transform.R.array()).all());
    CHECK((a.transform.t.array() == b.transform.t.array()).all());
    CHECK(a.residual_history == b.residual_history);
}

TEST_CASE("icp fails loudly when rejection starves the solver") {
    const PointCloud moving = random_box_cloud(50, 60);
    const PointCloud fixed =
        apply_transform(moving, rot_z(0, Eigen::Vector3d(5, 5, 5)));
    IcpConfig config;
    config.rejection_distance = 1e-3;
    CHECK_THROWS_AS(icp(moving, fixed, RigidTransform::identity(), config), NumericError);
}

TEST_CASE("icp validates its configuration") {
    const PointCloud cloud = random_box_cloud(10, 61);
    IcpConfig config;
    config.sample_fraction = 0.0;
    CHECK_THROWS_AS(icp(cloud, cloud, RigidTransform::identity(), config), DataError);
    config.sample_fraction = 1.5;
    CHECK_THROWS_AS(icp(cloud, cloud, RigidTransform::identity(), config), DataError);
    config = IcpConfig{};
    config.max_iterations = 0;
    CHECK_THROWS_AS(icp(cloud, cloud, RigidTransform::identity(), config), DataError);
}

TEST_CASE("register_landmarks aligns the probe onto reference landmarks") {
    PointCloud reference = random_box_cloud(40, 70);
    reference.landmark_indices = {0, 7, 19, 23};
    const RigidTransform truth = rot_z(0.4, Eigen::Vector3d(0.3, -0.1, 0.2));
    PointCloud probe = apply_transform(reference, truth);

    const auto [aligned, transform] = register_landmarks(probe, reference.landmark_points());
    CHECK((aligned.points - reference.points).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(rotation_angle(transform.R, truth.inverse().R) < 1e-6);
}

TEST_CASE("register_landmarks of an already-aligned probe is the identity") {
    PointCloud probe = random_box_cloud(20, 71);
    probe.landmark_indices = {1, 5, 9, 13};
    const auto [aligned, transform] = register_landmarks(probe, probe.landmark_points());
    CHECK((aligned.points - probe.points).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((transform.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("register_landmarks requires at least 3 landmarks on both sides") {
    PointCloud probe = random_box_cloud(10, 72);
    probe.landmark_indices = {0, 1};
    Eigen::Matrix3Xd two(3, 2);
    two.setZero();
    CHECK_THROWS_AS(register_landmarks(probe, two), DataError);
    PointCloud bare = random_box_cloud(10, 73);
    Eigen::Matrix3Xd three = random_box_cloud(3, 74).points;
    CHECK_THROWS_AS(register_landmarks(bare, three), DataError);
}
