#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "nf3d/point_cloud.hpp"

namespace nf3d {

/// Height-field regression network z = tanh(Wo' * tanh(Wi * [x y]' + Bi) + Bo)
/// with M hidden tanh units. The weights are the compact face representation.
struct FaceModel {
    Eigen::Matrix<double, Eigen::Dynamic, 2> Wi; ///< row j: input weights of hidden unit j
    Eigen::VectorXd Bi;                          ///< hidden biases
    Eigen::VectorXd Wo;                          ///< output weights
    double Bo = 0.0;                             ///< output bias

    Eigen::Index hidden_count() const { return Wi.rows(); }
    Eigen::Index parameter_count() const { return 4 * hidden_count() + 1; }
};

/// The model weights as one vector of length 4M+1: per hidden unit j the
/// block (Wi_x, Wi_y, Bi, Wo), blocks in unit order, Bo last. This layout
/// makes a hidden-unit swap a contiguous 4-element block swap.
struct FlatWeights {
    Eigen::VectorXd values;
    Eigen::Index hidden_count = 0;
};

/// mapping[j] is the destination row of hidden unit j. Must be a bijection
/// on {0, ..., M-1}.
using Permutation = std::vector<Eigen::Index>;

/// Throws DataError unless perm is a bijection on {0, ..., M-1}.
void check_permutation(const Permutation& perm, Eigen::Index hidden_count);

double forward(const FaceModel& model, double x, double y);

/// Batched evaluation, one output per (x, y) row.
Eigen::VectorXd forward(const FaceModel& model,
                        const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y);

/// Mean squared error of the model's z against the cloud's z.
double mse(const FaceModel& model, const PointCloud& cloud);

FlatWeights flatten(const FaceModel& model);
FaceModel unflatten(const FlatWeights& flat);

/// Moves hidden-unit row j to position perm[j]; Bo is unchanged. The
/// permuted model computes the same function up to summation order.
FaceModel permute_augment(const FaceModel& model, const Permutation& perm);

/// Same reordering applied directly to a flat vector (block swaps).
FlatWeights permute_flat(const FlatWeights& flat, const Permutation& perm);

/// `count` flattened variants of the model under distinct random
/// permutations (identity included in the candidate set), deterministic
/// under seed. Throws DataError when count exceeds M!.
std::vector<FlatWeights> random_augmentations(const FaceModel& model, int count,
                                              std::uint64_t seed);

/// Distinct random permutations of {0..M-1}; optionally excluding the
/// identity so every permuted copy differs from the original.
std::vector<Permutation> random_permutations(Eigen::Index hidden_count, int count,
                                             std::uint64_t seed, bool include_identity);

struct GridSpec {
    double x_min = -1.0, x_max = 1.0;
    double y_min = -1.0, y_max = 1.0;
    Eigen::Index nx = 1, ny = 1;
};

/// Evaluates the model over a regular grid and returns the nx*ny points,
/// x varying fastest. Bounds must lie in [-1, 1]. Denser grids than the
/// training cloud give super-resolved regenerations.
PointCloud resample(const FaceModel& model, const GridSpec& grid);

} // namespace nf3d
