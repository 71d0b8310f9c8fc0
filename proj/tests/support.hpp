#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <sys/wait.h>
#include <utility>
#include <vector>

#include "nf3d/face_model.hpp"
#include "nf3d/point_cloud.hpp"
#include "nf3d/random.hpp"

namespace testsupport {

/// Self-deleting scratch directory.
class TempDir {
public:
    TempDir() {
        auto pattern = (std::filesystem::temp_directory_path() / "nf3d_test_XXXXXX").string();
        if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("write_text failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_text failed: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nf3d::PointCloud make_cloud(const std::vector<std::array<double, 3>>& pts) {
    nf3d::PointCloud cloud;
    cloud.points.resize(3, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        cloud.points.col(static_cast<Eigen::Index>(i)) =
            Eigen::Vector3d(pts[i][0], pts[i][1], pts[i][2]);
    }
    return cloud;
}

/// Standard normal via Box-Muller on the library's reproducible uniforms.
inline double normal_draw(std::mt19937_64& rng) {
    double u = nf3d::uniform_unit(rng);
    while (u == 0.0) u = nf3d::uniform_unit(rng);
    const double v = nf3d::uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
}

inline nf3d::PointCloud random_box_cloud(Eigen::Index n, std::uint64_t seed,
                                         double half_width = 1.0) {
    std::mt19937_64 rng(seed);
    nf3d::PointCloud cloud;
    cloud.points.resize(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            cloud.points(k, i) = nf3d::uniform_range(rng, -half_width, half_width);
        }
    }
    return cloud;
}

/// Benchmark surface z = 0.5 * exp(-4 * (x^2 + y^2)) sampled uniformly over
/// [-1, 1]^2, optional Gaussian height noise.
inline nf3d::PointCloud gauss_bump_cloud(Eigen::Index n, std::uint64_t seed,
                                         double noise_sigma = 0.0) {
    std::mt19937_64 rng(seed);
    nf3d::PointCloud cloud;
    cloud.points.resize(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = nf3d::uniform_range(rng, -1.0, 1.0);
        const double y = nf3d::uniform_range(rng, -1.0, 1.0);
        double z = 0.5 * std::exp(-4.0 * (x * x + y * y));
        if (noise_sigma > 0.0) z += noise_sigma * normal_draw(rng);
        cloud.points.col(i) = Eigen::Vector3d(x, y, z);
    }
    return cloud;
}

/// Sum of a few Gaussian bumps; distinct parameter draws give distinct
/// synthetic identities.
struct BumpSurface {
    struct Bump {
        double amplitude, sharpness, cx, cy;
    };
    std::vector<Bump> bumps;

    double operator()(double x, double y) const {
        double z = 0.0;
        for (const auto& b : bumps) {
            const double dx = x - b.cx;
            const double dy = y - b.cy;
            z += b.amplitude * std::exp(-b.sharpness * (dx * dx + dy * dy));
        }
        return z;
    }
};

inline BumpSurface random_bump_surface(std::uint64_t seed, int bump_count = 3) {
    std::mt19937_64 rng(seed);
    BumpSurface surface;
    for (int k = 0; k < bump_count; ++k) {
        BumpSurface::Bump b;
        b.amplitude = nf3d::uniform_range(rng, 0.15, 0.3);
        if (nf3d::uniform_unit(rng) < 0.5) b.amplitude = -b.amplitude;
        b.sharpness = nf3d::uniform_range(rng, 2.0, 8.0);
        b.cx = nf3d::uniform_range(rng, -0.5, 0.5);
        b.cy = nf3d::uniform_range(rng, -0.5, 0.5);
        surface.bumps.push_back(b);
    }
    return surface;
}

inline nf3d::PointCloud surface_cloud(const BumpSurface& surface, Eigen::Index n,
                                      std::uint64_t seed, double noise_sigma = 0.0) {
    std::mt19937_64 rng(seed);
    nf3d::PointCloud cloud;
    cloud.points.resize(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = nf3d::uniform_range(rng, -1.0, 1.0);
        const double y = nf3d::uniform_range(rng, -1.0, 1.0);
        double z = surface(x, y);
        if (noise_sigma > 0.0) z += noise_sigma * normal_draw(rng);
        cloud.points.col(i) = Eigen::Vector3d(x, y, z);
    }
    return cloud;
}

/// Brute-force exact nearest neighbor, ties to the lowest index.
inline std::pair<Eigen::Index, double> brute_nearest(const Eigen::Vector3d& query,
                                                     const Eigen::Matrix3Xd& points) {
    Eigen::Index best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
        const double d2 = (points.col(i) - query).squaredNorm();
        if (d2 < best_d2) {
            best = i;
            best_d2 = d2;
        }
    }
    return {best, best_d2};
}

inline double rel_inf_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
    const double scale = std::max(want.cwiseAbs().maxCoeff(), 1e-12);
    return (got - want).cwiseAbs().maxCoeff() / scale;
}

/// Central finite differences of 0.5 * sum((z - model(x, y))^2) in flat
/// weight order; the oracle for the analytic Jte.
inline Eigen::VectorXd fd_half_sse_gradient(const nf3d::FaceModel& model,
                                            const nf3d::PointCloud& cloud, double step) {
    const auto half_sse = [&](const nf3d::FlatWeights& flat) {
        const nf3d::FaceModel m = nf3d::unflatten(flat);
        const Eigen::VectorXd a =
            forward(m, cloud.points.row(0).transpose(), cloud.points.row(1).transpose());
        return 0.5 * (cloud.points.row(2).transpose() - a).squaredNorm();
    };
    nf3d::FlatWeights flat = nf3d::flatten(model);
    Eigen::VectorXd grad(flat.values.size());
    for (Eigen::Index k = 0; k < flat.values.size(); ++k) {
        const double saved = flat.values[k];
        flat.values[k] = saved + step;
        const double up = half_sse(flat);
        flat.values[k] = saved - step;
        const double down = half_sse(flat);
        flat.values[k] = saved;
        grad[k] = (up - down) / (2.0 * step);
    }
    return grad;
}

/// Runs a shell command, capturing stdout+stderr. Returns (exit code, output).
inline std::pair<int, std::string> run_command(const std::string& command) {
    FILE* pipe = popen((command + " 2>&1").c_str(), "r");
    if (!pipe) throw std::runtime_error("popen failed");
    std::string output;
    char buf[4096];
    std::size_t got = 0;
    while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, got);
    const int status = pclose(pipe);
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128;
    return {code, output};
}

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (const char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    out += "'";
    return out;
}

} // namespace testsupport
