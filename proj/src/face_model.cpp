#include "nf3d/face_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "nf3d/random.hpp"
#include "nf3d/types.hpp"

namespace nf3d {

namespace {

void check_consistent(const FaceModel& model) {
    const Eigen::Index m = model.Wi.rows();
    if (m < 1) {
        throw DataError("face model: hidden_count must be >= 1");
    }
    if (model.Bi.size() != m || model.Wo.size() != m) {
        throw DataError("face model: Wi, Bi, Wo disagree on hidden_count");
    }
}

// Hidden activations for a batch, one column per hidden unit.
Eigen::MatrixXd hidden_activations(const FaceModel& model,
                                   const Eigen::Ref<const Eigen::VectorXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& y) {
    return ((x * model.Wi.col(0).transpose() + y * model.Wi.col(1).transpose()).rowwise() +
            model.Bi.transpose())
        .array()
        .tanh()
        .matrix();
}

// M! saturated so comparisons against request counts stay safe.
double factorial_capped(Eigen::Index m) {
    double f = 1.0;
    for (Eigen::Index i = 2; i <= m; ++i) {
        f *= static_cast<double>(i);
        if (f > 1e18) return std::numeric_limits<double>::infinity();
    }
    return f;
}

bool is_identity(const Permutation& perm) {
    for (std::size_t j = 0; j < perm.size(); ++j) {
        if (perm[j] != static_cast<Eigen::Index>(j)) return false;
    }
    return true;
}

} // namespace

void check_permutation(const Permutation& perm, Eigen::Index hidden_count) {
    if (static_cast<Eigen::Index>(perm.size()) != hidden_count) {
        throw DataError("permutation: size " + std::to_string(perm.size()) +
                        " does not match hidden_count " + std::to_string(hidden_count));
    }
    std::vector<bool> seen(static_cast<std::size_t>(hidden_count), false);
    for (const Eigen::Index dst : perm) {
        if (dst < 0 || dst >= hidden_count) {
            throw DataError("permutation: entry " + std::to_string(dst) + " out of range");
        }
        if (seen[static_cast<std::size_t>(dst)]) {
            throw DataError("permutation: entry " + std::to_string(dst) + " repeats");
        }
        seen[static_cast<std::size_t>(dst)] = true;
    }
}

double forward(const FaceModel& model, double x, double y) {
    check_consistent(model);
    const Eigen::ArrayXd n =
        (model.Wi.col(0).array() * x + model.Wi.col(1).array() * y + model.Bi.array()).tanh();
    return std::tanh(model.Wo.dot(n.matrix()) + model.Bo);
}

Eigen::VectorXd forward(const FaceModel& model,
                        const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y) {
    check_consistent(model);
    if (x.size() != y.size()) {
        throw DataError("face model: x and y batches differ in length");
    }
    const Eigen::MatrixXd h = hidden_activations(model, x, y);
    return ((h * model.Wo).array() + model.Bo).tanh().matrix();
}

double mse(const FaceModel& model, const PointCloud& cloud) {
    if (cloud.empty()) {
        throw DataError("face model: mse over an empty cloud");
    }
    const Eigen::VectorXd z = forward(model, cloud.points.row(0).transpose(),
                                      cloud.points.row(1).transpose());
    return (cloud.points.row(2).transpose() - z).squaredNorm() /
           static_cast<double>(cloud.size());
}

FlatWeights flatten(const FaceModel& model) {
    check_consistent(model);
    const Eigen::Index m = model.hidden_count();
    FlatWeights flat;
    flat.hidden_count = m;
    flat.values.resize(4 * m + 1);
    for (Eigen::Index j = 0; j < m; ++j) {
        flat.values[4 * j + 0] = model.Wi(j, 0);
        flat.values[4 * j + 1] = model.Wi(j, 1);
        flat.values[4 * j + 2] = model.Bi[j];
        flat.values[4 * j + 3] = model.Wo[j];
    }
    flat.values[4 * m] = model.Bo;
    return flat;
}

FaceModel unflatten(const FlatWeights& flat) {
    const Eigen::Index m = flat.hidden_count;
    if (m < 1) {
        throw DataError("face model: flat vector needs hidden_count >= 1");
    }
    if (flat.values.size() != 4 * m + 1) {
        throw DataError("face model: flat vector length " + std::to_string(flat.values.size()) +
                        " does not match 4*" + std::to_string(m) + "+1");
    }
    FaceModel model;
    model.Wi.resize(m, 2);
    model.Bi.resize(m);
    model.Wo.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        model.Wi(j, 0) = flat.values[4 * j + 0];
        model.Wi(j, 1) = flat.values[4 * j + 1];
        model.Bi[j] = flat.values[4 * j + 2];
        model.Wo[j] = flat.values[4 * j + 3];
    }
    model.Bo = flat.values[4 * m];
    return model;
}

FaceModel permute_augment(const FaceModel& model, const Permutation& perm) {
    check_consistent(model);
    check_permutation(perm, model.hidden_count());
    FaceModel out;
    out.Wi.resizeLike(model.Wi);
    out.Bi.resizeLike(model.Bi);
    out.Wo.resizeLike(model.Wo);
    out.Bo = model.Bo;
    for (Eigen::Index j = 0; j < model.hidden_count(); ++j) {
        out.Wi.row(perm[static_cast<std::size_t>(j)]) = model.Wi.row(j);
        out.Bi[perm[static_cast<std::size_t>(j)]] = model.Bi[j];
        out.Wo[perm[static_cast<std::size_t>(j)]] = model.Wo[j];
    }
    return out;
}

FlatWeights permute_flat(const FlatWeights& flat, const Permutation& perm) {
    const Eigen::Index m = flat.hidden_count;
    if (flat.values.size() != 4 * m + 1) {
        throw DataError("face model: flat vector length does not match hidden_count");
    }
    check_permutation(perm, m);
    FlatWeights out;
    out.hidden_count = m;
    out.values.resize(flat.values.size());
    for (Eigen::Index j = 0; j < m; ++j) {
        out.values.segment<4>(4 * perm[static_cast<std::size_t>(j)]) =
            flat.values.segment<4>(4 * j);
    }
    out.values[4 * m] = flat.values[4 * m];
    return out;
}

std::vector<Permutation> random_permutations(Eigen::Index hidden_count, int count,
                                             std::uint64_t seed, bool include_identity) {
    if (hidden_count < 1) {
        throw DataError("permutation: hidden_count must be >= 1");
    }
    if (count < 0) {
        throw DataError("permutation: count must be >= 0");
    }
    const double available =
        factorial_capped(hidden_count) - (include_identity ? 0.0 : 1.0);
    if (static_cast<double>(count) > available) {
        throw DataError("permutation: only " + std::to_string(available) +
                        " distinct permutations exist for hidden_count " +
                        std::to_string(hidden_count));
    }

    std::mt19937_64 rng(seed);
    std::set<Permutation> seen;
    std::vector<Permutation> out;
    out.reserve(static_cast<std::size_t>(count));
    Permutation perm(static_cast<std::size_t>(hidden_count));
    while (static_cast<int>(out.size()) < count) {
        std::iota(perm.begin(), perm.end(), Eigen::Index{0});
        shuffle_inplace(perm, rng);
        if (!include_identity && is_identity(perm)) continue;
        if (seen.insert(perm).second) out.push_back(perm);
    }
    return out;
}

std::vector<FlatWeights> random_augmentations(const FaceModel& model, int count,
                                              std::uint64_t seed) {
    check_consistent(model);
    const auto perms = random_permutations(model.hidden_count(), count, seed,
                                           /*include_identity=*/true);
    const FlatWeights flat = flatten(model);
    std::vector<FlatWeights> out;
    out.reserve(perms.size());
    for (const auto& perm : perms) {
        out.push_back(permute_flat(flat, perm));
    }
    return out;
}

PointCloud resample(const FaceModel& model, const GridSpec& grid) {
    check_consistent(model);
    if (grid.nx < 1 || grid.ny < 1) {
        throw DataError("resample: grid needs nx >= 1 and ny >= 1");
    }
    if (grid.x_min > grid.x_max || grid.y_min > grid.y_max) {
        throw DataError("resample: grid bounds are inverted");
    }
    if (grid.x_min < -1.0 || grid.x_max > 1.0 || grid.y_min < -1.0 || grid.y_max > 1.0) {
        throw DataError("resample: grid bounds must lie in [-1, 1]");
    }

    const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(grid.nx, grid.x_min, grid.x_max);
    const Eigen::VectorXd ys = Eigen::VectorXd::LinSpaced(grid.ny, grid.y_min, grid.y_max);

    const Eigen::Index n = grid.nx * grid.ny;
    Eigen::VectorXd x(n), y(n);
    for (Eigen::Index iy = 0; iy < grid.ny; ++iy) {
        for (Eigen::Index ix = 0; ix < grid.nx; ++ix) {
            const Eigen::Index k = iy * grid.nx + ix;
            x[k] = xs[ix];
            y[k] = ys[iy];
        }
    }

    PointCloud cloud;
    cloud.points.resize(3, n);
    cloud.points.row(0) = x.transpose();
    cloud.points.row(1) = y.transpose();
    cloud.points.row(2) = forward(model, x, y).transpose();
    return cloud;
}

} // namespace nf3d
