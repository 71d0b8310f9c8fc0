#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "nf3d/cloud_io.hpp"
#include "nf3d/config_file.hpp"
#include "nf3d/point_cloud.hpp"
#include "support.hpp"

using namespace nf3d;
using namespace testsupport;

TEST_CASE("normalize centers and scales a two-point cloud") {
    const PointCloud cloud = make_cloud({{1, 2, 3}, {3, 2, 1}});
    const auto [out, params] = normalize(cloud);
    CHECK(params.centroid.isApprox(Eigen::Vector3d(2, 2, 2)));
    CHECK(params.scale == doctest::Approx(1.0));
    CHECK(out.points.col(0).isApprox(Eigen::Vector3d(-1, 0, 1)));
    CHECK(out.points.col(1).isApprox(Eigen::Vector3d(1, 0, -1)));
}

TEST_CASE("normalize of a single point collapses to the origin with scale 1") {
    const PointCloud cloud = make_cloud({{5, 5, 5}});
    const auto [out, params] = normalize(cloud);
    CHECK(out.points.col(0).norm() == 0.0);
    CHECK(params.scale == 1.0);
    CHECK(params.centroid.isApprox(Eigen::Vector3d(5, 5, 5)));
}

TEST_CASE("normalize of coincident points keeps scale 1") {
    const PointCloud cloud = make_cloud({{2, -1, 3}, {2, -1, 3}, {2, -1, 3}});
    const auto [out, params] = normalize(cloud);
    CHECK(params.scale == 1.0);
    CHECK(out.points.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("normalize puts every coordinate in [-1, 1] and attains the bound") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        const PointCloud cloud = random_box_cloud(200, seed, 40.0);
        const auto [out, params] = normalize(cloud);
        const double peak = out.points.cwiseAbs().maxCoeff();
        CHECK(peak <= 1.0 + 1e-12);
        CHECK(peak == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(out.points.rowwise().mean().norm() < 1e-9);
    }
}

TEST_CASE("normalize preserves landmark indices") {
    PointCloud cloud = make_cloud({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}});
    cloud.landmark_indices = {2, 0};
    const auto [out, params] = normalize(cloud);
    CHECK(out.landmark_indices == std::vector<Eigen::Index>{2, 0});
}

TEST_CASE("denormalize restores source units") {
    const PointCloud cloud = make_cloud({{0, 0, 0}});
    NormalizationParams params;
    params.centroid = Eigen::Vector3d(2, 2, 2);
    params.scale = 3.0;
    const PointCloud out = denormalize(cloud, params);
    CHECK(out.points.col(0).isApprox(Eigen::Vector3d(2, 2, 2)));
}

TEST_CASE("denormalize inverts normalize") {
    const PointCloud cloud = random_box_cloud(100, 7, 12.5);
    const auto [normalized, params] = normalize(cloud);
    const PointCloud back = denormalize(normalized, params);
    CHECK((back.points - cloud.points).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("denormalize rejects a non-positive scale") {
    const PointCloud cloud = make_cloud({{0, 0, 0}});
    NormalizationParams params;
    params.scale = 0.0;
    CHECK_THROWS_AS(denormalize(cloud, params), DataError);
}

TEST_CASE("normalize rejects an empty cloud") {
    CHECK_THROWS_AS(normalize(PointCloud{}), DataError);
}

TEST_CASE("landmark_points gathers columns in landmark order") {
    PointCloud cloud = make_cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
    cloud.landmark_indices = {2, 0, 1};
    const Eigen::Matrix3Xd lm = cloud.landmark_points();
    CHECK(lm.col(0).isApprox(Eigen::Vector3d(0, 1, 0)));
    CHECK(lm.col(1).isApprox(Eigen::Vector3d(0, 0, 0)));
    CHECK(lm.col(2).isApprox(Eigen::Vector3d(1, 0, 0)));
}

TEST_CASE("check_landmarks rejects out-of-range indices") {
    PointCloud cloud = make_cloud({{0, 0, 0}});
    cloud.landmark_indices = {1};
    CHECK_THROWS_AS(cloud.check_landmarks(), DataError);
    cloud.landmark_indices = {-1};
    CHECK_THROWS_AS(cloud.check_landmarks(), DataError);
}

TEST_CASE("load_cloud reads points, comments, and blank lines") {
    TempDir dir;
    const auto path = dir / "cloud.xyz";
    write_text(path, "# header\n0 0 0\n\n1 2 3\n  4\t5 6\n");
    const PointCloud cloud = load_cloud(path);
    REQUIRE(cloud.size() == 3);
    CHECK(cloud.points.col(1).isApprox(Eigen::Vector3d(1, 2, 3)));
    CHECK(cloud.points.col(2).isApprox(Eigen::Vector3d(4, 5, 6)));
}

TEST_CASE("load_cloud reports a non-finite coordinate with its line number") {
    TempDir dir;
    const auto path = dir / "bad.xyz";
    write_text(path, "0 0 nan\n");
    CHECK_THROWS_WITH_AS(load_cloud(path), doctest::Contains("line 1"), DataError);
}

TEST_CASE("load_cloud reports malformed lines with their line number") {
    TempDir dir;
    const auto path = dir / "bad.xyz";
    write_text(path, "0 0 0\n1 2\n");
    CHECK_THROWS_WITH_AS(load_cloud(path), doctest::Contains("line 2"), DataError);
    write_text(path, "0 0 0\n1 2 3 4\n");
    CHECK_THROWS_WITH_AS(load_cloud(path), doctest::Contains("line 2"), DataError);
    write_text(path, "0 0 zebra\n");
    CHECK_THROWS_AS(load_cloud(path), DataError);
}

TEST_CASE("load_cloud rejects missing and empty files") {
    TempDir dir;
    CHECK_THROWS_AS(load_cloud(dir / "absent.xyz"), DataError);
    write_text(dir / "empty.xyz", "# nothing\n");
    CHECK_THROWS_AS(load_cloud(dir / "empty.xyz"), DataError);
}

TEST_CASE("load_cloud reads a landmark file in order") {
    TempDir dir;
    write_text(dir / "cloud.xyz", "0 0 0\n1 1 1\n2 2 2\n");
    write_text(dir / "cloud.lm", "2\n0\n");
    const PointCloud cloud = load_cloud(dir / "cloud.xyz", dir / "cloud.lm");
    CHECK(cloud.landmark_indices == std::vector<Eigen::Index>{2, 0});
}

TEST_CASE("load_cloud rejects landmark indices outside the cloud") {
    TempDir dir;
    write_text(dir / "cloud.xyz", "0 0 0\n1 1 1\n");
    write_text(dir / "cloud.lm", "2\n");
    CHECK_THROWS_AS(load_cloud(dir / "cloud.xyz", dir / "cloud.lm"), DataError);
}

TEST_CASE("save_cloud round-trips coordinates exactly") {
    TempDir dir;
    const PointCloud cloud = random_box_cloud(64, 11, 3.0);
    const auto path = dir / "out.xyz";
    save_cloud(cloud, path);
    const PointCloud back = load_cloud(path);
    REQUIRE(back.size() == cloud.size());
    CHECK((back.points.array() == cloud.points.array()).all());
}

TEST_CASE("config file parses values and type conversions") {
    TempDir dir;
    const auto path = dir / "fit.conf";
    write_text(path,
               "# fit settings\n"
               "lm.hidden_count = 40\n"
               "lm.target_mse = 1e-3   # inline comment\n"
               "icp.sample_fraction = 0.5\n");
    const std::set<std::string> allowed = {"lm.hidden_count", "lm.target_mse",
                                           "icp.sample_fraction", "lm.beta"};
    const ConfigFile config = ConfigFile::parse(path, allowed);
    CHECK(config.has("lm.hidden_count"));
    CHECK_FALSE(config.has("lm.beta"));
    CHECK(config.get_int("lm.hidden_count", 0) == 40);
    CHECK(config.get_double("lm.target_mse", 0.0) == doctest::Approx(1e-3));
    CHECK(config.get_double("lm.beta", 10.0) == 10.0);
    CHECK(config.get_string("icp.sample_fraction", "") == "0.5");
}

TEST_CASE("config file rejects unknown and duplicate keys with line numbers") {
    TempDir dir;
    const auto path = dir / "bad.conf";
    const std::set<std::string> allowed = {"lm.beta"};
    write_text(path, "lm.betta = 3\n");
    CHECK_THROWS_WITH_AS(ConfigFile::parse(path, allowed), doctest::Contains("line 1"),
                         DataError);
    write_text(path, "lm.beta = 3\nlm.beta = 4\n");
    CHECK_THROWS_WITH_AS(ConfigFile::parse(path, allowed), doctest::Contains("line 2"),
                         DataError);
    write_text(path, "just words\n");
    CHECK_THROWS_AS(ConfigFile::parse(path, allowed), DataError);
}

TEST_CASE("config file rejects non-numeric values on typed reads") {
    TempDir dir;
    const auto path = dir / "bad.conf";
    const std::set<std::string> allowed = {"lm.beta"};
    write_text(path, "lm.beta = fast\n");
    const ConfigFile config = ConfigFile::parse(path, allowed);
    CHECK_THROWS_AS(config.get_double("lm.beta", 0.0), DataError);
    CHECK_THROWS_AS(config.get_int("lm.beta", 0), DataError);
}
