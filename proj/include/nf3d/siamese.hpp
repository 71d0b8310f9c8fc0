#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nf3d/face_model.hpp"

namespace nf3d {

/// Shared-weight embedding network over flattened model weights: tanh on
/// hidden layers, identity on the final embedding layer.
struct SiameseNet {
    std::vector<Eigen::Index> layer_sizes;  ///< input, hidden..., embedding
    std::vector<Eigen::MatrixXd> weights;   ///< weights[l]: sizes[l+1] x sizes[l]
    std::vector<Eigen::VectorXd> biases;

    Eigen::Index input_size() const { return layer_sizes.front(); }
    Eigen::Index embedding_size() const { return layer_sizes.back(); }
    Eigen::Index layer_count() const { return static_cast<Eigen::Index>(layer_sizes.size()); }
};

struct LabeledPair {
    FlatWeights a;
    FlatWeights b;
    int label = 0; ///< 1 = same identity, 0 = different
};

struct SiameseConfig {
    /// Upper bound of the pair energy in the loss.
    double q = 5.0;
    double learning_rate = 0.01;
    int epochs = 50;
    Eigen::Index batch_size = 32;
    std::uint64_t seed = 0;
    /// Hidden sizes then embedding size; the input size comes from the pairs.
    std::vector<Eigen::Index> layers = {256, 64, 16};

    void validate() const;
};

struct EvalReport {
    std::vector<std::pair<double, double>> roc_points; ///< (fpr, tpr)
    double auc = 0.0;
    std::vector<std::pair<double, double>> pr_points;  ///< (recall, precision)
    double accuracy_at_threshold = 0.0;
    double threshold = 0.0;
    /// Score and threshold per swept operating point, aligned with roc_points.
    std::vector<double> thresholds;
};

SiameseNet init_siamese(Eigen::Index input_size, const std::vector<Eigen::Index>& layers,
                        std::uint64_t seed);

Eigen::VectorXd embed(const SiameseNet& net, const Eigen::Ref<const Eigen::VectorXd>& input);

/// Euclidean distance between two embeddings.
double energy(const Eigen::Ref<const Eigen::VectorXd>& e1,
              const Eigen::Ref<const Eigen::VectorXd>& e2);

/// Contrastive loss of one pair: Y*(2/Q)E^2 + (1-Y)*2Q*exp(-2.77E/Q).
double pair_loss(double e, int label, double q);

/// Random labeled pairs from (identity, models) groups. Each model's pool
/// is the original plus augment_per_model distinct non-identity
/// permutations, so positives can be minted even from a single model.
/// Positive pairs share an identity, negatives never do, and no pair joins
/// two bit-identical vectors. Deterministic under seed.
std::vector<LabeledPair> generate_pairs(
    const std::vector<std::pair<std::string, std::vector<FlatWeights>>>& gallery,
    int positives, int negatives, int augment_per_model, std::uint64_t seed);

/// Seeded pair-level split; returns (first, second) with `fraction` of the
/// pairs in the first part.
std::pair<std::vector<LabeledPair>, std::vector<LabeledPair>> split_pairs(
    const std::vector<LabeledPair>& pairs, double fraction, std::uint64_t seed);

/// Gradient of the summed contrastive loss over the pairs with respect to
/// every weight and bias, flowing through both shared-weight branches.
/// Layout mirrors net.weights and net.biases.
std::pair<std::vector<Eigen::MatrixXd>, std::vector<Eigen::VectorXd>> siamese_gradient(
    const SiameseNet& net, const std::vector<LabeledPair>& pairs, double q);

/// Minibatch gradient descent on the summed contrastive loss, gradients
/// flowing through both branches of the shared weights. Returns the net and
/// the mean pair loss per epoch.
std::pair<SiameseNet, std::vector<double>> train_siamese(const std::vector<LabeledPair>& pairs,
                                                         const SiameseConfig& config);

/// (decision, score): same-identity iff the embedding distance is below
/// the threshold.
std::pair<bool, double> verify(const SiameseNet& net, const FlatWeights& p1,
                               const FlatWeights& p2, double threshold);

/// ROC/PR by sweeping the decision threshold over all observed scores;
/// AUC by trapezoid; best-accuracy threshold reported. Throws DataError
/// when only one label is present.
EvalReport eval_roc(const SiameseNet& net, const std::vector<LabeledPair>& pairs);

void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);

/// Binary net format: magic "NSIA", version u16 LE, layer count u32 LE,
/// 6 reserved zero bytes, layer sizes as u32 LE, then per layer the weight
/// matrix (row-major) and bias as little-endian float32.
void save_net(const SiameseNet& net, const std::filesystem::path& path);
SiameseNet load_net(const std::filesystem::path& path);

/// Binary pair records: magic "NPRS", version u16 LE, vector dimension
/// u32 LE, 6 reserved zero bytes, record count u64 LE, then per record a
/// label byte and the two vectors as little-endian float32.
void save_pairs(const std::vector<LabeledPair>& pairs, const std::filesystem::path& path);
std::vector<LabeledPair> load_pairs(const std::filesystem::path& path);

} // namespace nf3d
