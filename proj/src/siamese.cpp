#include "nf3d/siamese.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>

#include "binary_io.hpp"
#include "nf3d/random.hpp"
#include "nf3d/types.hpp"

namespace nf3d {

namespace {

constexpr char kNetMagic[4] = {'N', 'S', 'I', 'A'};
constexpr std::uint16_t kNetFormatVersion = 1;
// Decay rate of the different-identity loss, fixed by the loss definition.
constexpr double kDiffDecay = 2.77;

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_net(const SiameseNet& net) {
    if (net.layer_sizes.size() < 2) {
        throw DataError("siamese: net needs at least input and embedding layers");
    }
    const std::size_t nw = net.layer_sizes.size() - 1;
    if (net.weights.size() != nw || net.biases.size() != nw) {
        throw DataError("siamese: layer count disagrees with weight count");
    }
    for (std::size_t l = 0; l < nw; ++l) {
        if (net.layer_sizes[l] < 1 || net.layer_sizes[l + 1] < 1) {
            throw DataError("siamese: layer sizes must be >= 1");
        }
        if (net.weights[l].rows() != net.layer_sizes[l + 1] ||
            net.weights[l].cols() != net.layer_sizes[l] ||
            net.biases[l].size() != net.layer_sizes[l + 1]) {
            throw DataError("siamese: weight shape disagrees with layer sizes at layer " +
                            std::to_string(l));
        }
    }
}

void check_label(int label) {
    if (label != 0 && label != 1) {
        throw DataError("siamese: pair label must be 0 or 1");
    }
}

void check_pair_dims(const std::vector<LabeledPair>& pairs) {
    if (pairs.empty()) throw DataError("siamese: pair list is empty");
    const Eigen::Index dim = pairs.front().a.values.size();
    for (const auto& pair : pairs) {
        check_label(pair.label);
        if (pair.a.values.size() != dim || pair.b.values.size() != dim) {
            throw DataError("siamese: pairs disagree on vector dimension");
        }
    }
}

// Activations per layer, input first, embedding last. Hidden layers are
// tanh, the final layer is identity.
std::vector<Eigen::VectorXd> forward_all(const SiameseNet& net,
                                         const Eigen::Ref<const Eigen::VectorXd>& input) {
    const std::size_t nw = net.weights.size();
    std::vector<Eigen::VectorXd> acts(nw + 1);
    acts[0] = input;
    for (std::size_t l = 0; l < nw; ++l) {
        Eigen::VectorXd pre = net.weights[l] * acts[l] + net.biases[l];
        acts[l + 1] = (l + 1 < nw) ? pre.array().tanh().matrix() : std::move(pre);
    }
    return acts;
}

// d(pair loss)/dE.
double loss_slope(double e, int label, double q) {
    return label != 0 ? (4.0 / q) * e
                      : -2.0 * kDiffDecay * std::exp(-kDiffDecay * e / q);
}

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    explicit Gradients(const SiameseNet& net) {
        weights.reserve(net.weights.size());
        biases.reserve(net.biases.size());
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                                    net.weights[l].cols()));
            biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
        }
    }

    void set_zero() {
        for (auto& w : weights) w.setZero();
        for (auto& b : biases) b.setZero();
    }
};

// Accumulates d(loss)/d(params) for one branch given the gradient at its
// embedding output.
void backprop_branch(const SiameseNet& net, const std::vector<Eigen::VectorXd>& acts,
                     Eigen::VectorXd delta, Gradients& grads) {
    for (std::size_t l = net.weights.size(); l-- > 0;) {
        grads.weights[l].noalias() += delta * acts[l].transpose();
        grads.biases[l] += delta;
        if (l > 0) {
            delta = (net.weights[l].transpose() * delta).cwiseProduct(
                (1.0 - acts[l].array().square()).matrix());
        }
    }
}

// Loss of one pair plus its gradient contribution on the shared weights.
double accumulate_pair(const SiameseNet& net, const LabeledPair& pair, double q,
                       Gradients& grads) {
    const auto acts_a = forward_all(net, pair.a.values);
    const auto acts_b = forward_all(net, pair.b.values);
    const Eigen::VectorXd diff = acts_a.back() - acts_b.back();
    const double e = diff.norm();
    const double loss = pair_loss(e, pair.label, q);
    if (e > 0.0) {
        const Eigen::VectorXd grad_embed = (loss_slope(e, pair.label, q) / e) * diff;
        backprop_branch(net, acts_a, grad_embed, grads);
        backprop_branch(net, acts_b, -grad_embed, grads);
    }
    return loss;
}

bool same_bits(const FlatWeights& a, const FlatWeights& b) {
    return a.hidden_count == b.hidden_count && a.values.size() == b.values.size() &&
           (a.values.array() == b.values.array()).all();
}

} // namespace

void SiameseConfig::validate() const {
    if (!(q > 0.0)) throw DataError("siamese: q must be positive");
    if (!(learning_rate > 0.0)) throw DataError("siamese: learning_rate must be positive");
    if (epochs < 1) throw DataError("siamese: epochs must be >= 1");
    if (batch_size < 1) throw DataError("siamese: batch_size must be >= 1");
    if (layers.empty()) throw DataError("siamese: layer list is empty");
    for (const Eigen::Index size : layers) {
        if (size < 1) throw DataError("siamese: layer sizes must be >= 1");
    }
}

SiameseNet init_siamese(Eigen::Index input_size, const std::vector<Eigen::Index>& layers,
                        std::uint64_t seed) {
    if (input_size < 1) throw DataError("siamese: input size must be >= 1");
    if (layers.empty()) throw DataError("siamese: layer list is empty");

    SiameseNet net;
    net.layer_sizes.reserve(layers.size() + 1);
    net.layer_sizes.push_back(input_size);
    net.layer_sizes.insert(net.layer_sizes.end(), layers.begin(), layers.end());

    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
        const Eigen::Index rows = net.layer_sizes[l + 1];
        const Eigen::Index cols = net.layer_sizes[l];
        if (rows < 1) throw DataError("siamese: layer sizes must be >= 1");
        const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
        Eigen::MatrixXd w(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                w(r, c) = uniform_range(rng, -bound, bound);
            }
        }
        Eigen::VectorXd b(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            b[r] = uniform_range(rng, -bound, bound);
        }
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    return net;
}

Eigen::VectorXd embed(const SiameseNet& net, const Eigen::Ref<const Eigen::VectorXd>& input) {
    check_net(net);
    if (input.size() != net.input_size()) {
        throw DataError("siamese: input length " + std::to_string(input.size()) +
                        " does not match net input size " + std::to_string(net.input_size()));
    }
    return forward_all(net, input).back();
}

double energy(const Eigen::Ref<const Eigen::VectorXd>& e1,
              const Eigen::Ref<const Eigen::VectorXd>& e2) {
    if (e1.size() != e2.size()) {
        throw DataError("siamese: embeddings differ in length");
    }
    return (e1 - e2).norm();
}

double pair_loss(double e, int label, double q) {
    if (e < 0.0) throw DataError("siamese: energy must be nonnegative");
    if (!(q > 0.0)) throw DataError("siamese: q must be positive");
    check_label(label);
    return label != 0 ? (2.0 / q) * e * e : 2.0 * q * std::exp(-kDiffDecay * e / q);
}

std::vector<LabeledPair> generate_pairs(
    const std::vector<std::pair<std::string, std::vector<FlatWeights>>>& gallery,
    int positives, int negatives, int augment_per_model, std::uint64_t seed) {
    if (positives < 0 || negatives < 0) {
        throw DataError("pairs: requested counts must be >= 0");
    }
    if (augment_per_model < 0) {
        throw DataError("pairs: augment_per_model must be >= 0");
    }
    if (gallery.empty()) throw DataError("pairs: gallery is empty");

    std::set<std::string> names;
    Eigen::Index hidden_count = -1;
    for (const auto& [identity, models] : gallery) {
        if (identity.empty()) throw DataError("pairs: empty identity name");
        if (!names.insert(identity).second) {
            throw DataError("pairs: duplicate identity '" + identity + "'");
        }
        if (models.empty()) {
            throw DataError("pairs: identity '" + identity + "' has no models");
        }
        for (const auto& model : models) {
            if (hidden_count < 0) hidden_count = model.hidden_count;
            if (model.hidden_count != hidden_count ||
                model.values.size() != 4 * hidden_count + 1) {
                throw DataError("pairs: models disagree on hidden_count");
            }
        }
    }

    std::mt19937_64 rng(seed);
    std::vector<std::vector<FlatWeights>> pools(gallery.size());
    for (std::size_t i = 0; i < gallery.size(); ++i) {
        for (const auto& model : gallery[i].second) {
            pools[i].push_back(model);
            if (augment_per_model > 0) {
                const auto perms = random_permutations(hidden_count, augment_per_model,
                                                       rng(), /*include_identity=*/false);
                for (const auto& perm : perms) {
                    pools[i].push_back(permute_flat(model, perm));
                }
            }
        }
    }

    std::vector<std::size_t> rich;
    for (std::size_t i = 0; i < pools.size(); ++i) {
        if (pools[i].size() >= 2) rich.push_back(i);
    }
    if (positives > 0 && rich.empty()) {
        throw DataError("pairs: positives need an identity with two distinct vectors; "
                        "add models or raise augment_per_model");
    }
    if (negatives > 0 && gallery.size() < 2) {
        throw DataError("pairs: negatives need at least two identities");
    }

    constexpr int kMaxAttempts = 1000;
    std::vector<LabeledPair> out;
    out.reserve(static_cast<std::size_t>(positives + negatives));

    for (int k = 0; k < positives; ++k) {
        bool made = false;
        for (int attempt = 0; attempt < kMaxAttempts && !made; ++attempt) {
            const auto i = rich[uniform_index(rng, rich.size())];
            const auto a = uniform_index(rng, pools[i].size());
            auto b = uniform_index(rng, pools[i].size());
            while (b == a) b = uniform_index(rng, pools[i].size());
            if (same_bits(pools[i][a], pools[i][b])) continue;
            out.push_back({pools[i][a], pools[i][b], 1});
            made = true;
        }
        if (!made) {
            throw DataError("pairs: identity pools contain too few distinct vectors "
                            "for the requested positives");
        }
    }

    for (int k = 0; k < negatives; ++k) {
        bool made = false;
        for (int attempt = 0; attempt < kMaxAttempts && !made; ++attempt) {
            const auto i = uniform_index(rng, pools.size());
            auto j = uniform_index(rng, pools.size());
            while (j == i) j = uniform_index(rng, pools.size());
            const auto a = uniform_index(rng, pools[i].size());
            const auto b = uniform_index(rng, pools[j].size());
            if (same_bits(pools[i][a], pools[j][b])) continue;
            out.push_back({pools[i][a], pools[j][b], 0});
            made = true;
        }
        if (!made) {
            throw DataError("pairs: identities contain too few distinct vectors "
                            "for the requested negatives");
        }
    }
    return out;
}

std::pair<std::vector<LabeledPair>, std::vector<LabeledPair>> split_pairs(
    const std::vector<LabeledPair>& pairs, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0) || !(fraction <= 1.0)) {
        throw DataError("pairs: split fraction must be in [0, 1]");
    }
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    shuffle_inplace(order, rng);

    const auto first_count = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(pairs.size())));
    std::pair<std::vector<LabeledPair>, std::vector<LabeledPair>> out;
    out.first.reserve(first_count);
    out.second.reserve(pairs.size() - first_count);
    for (std::size_t k = 0; k < order.size(); ++k) {
        (k < first_count ? out.first : out.second).push_back(pairs[order[k]]);
    }
    return out;
}

std::pair<std::vector<Eigen::MatrixXd>, std::vector<Eigen::VectorXd>> siamese_gradient(
    const SiameseNet& net, const std::vector<LabeledPair>& pairs, double q) {
    check_net(net);
    check_pair_dims(pairs);
    if (!(q > 0.0)) throw DataError("siamese: q must be positive");
    if (pairs.front().a.values.size() != net.weights.front().cols()) {
        throw DataError("siamese: pair dimension does not match net input size");
    }
    Gradients grads(net);
    for (const auto& pair : pairs) accumulate_pair(net, pair, q, grads);
    return {std::move(grads.weights), std::move(grads.biases)};
}

std::pair<SiameseNet, std::vector<double>> train_siamese(const std::vector<LabeledPair>& pairs,
                                                         const SiameseConfig& config) {
    config.validate();
    check_pair_dims(pairs);

    const Eigen::Index input_size = pairs.front().a.values.size();
    std::mt19937_64 rng(config.seed);
    SiameseNet net = init_siamese(input_size, config.layers, rng());

    Gradients grads(net);
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(config.epochs));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_inplace(order, rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            grads.set_zero();
            for (std::size_t k = start; k < stop; ++k) {
                epoch_loss += accumulate_pair(net, pairs[order[k]], config.q, grads);
            }
            const double step = config.learning_rate / static_cast<double>(stop - start);
            for (std::size_t l = 0; l < net.weights.size(); ++l) {
                net.weights[l] -= step * grads.weights[l];
                net.biases[l] -= step * grads.biases[l];
            }
        }
        history.push_back(epoch_loss / static_cast<double>(pairs.size()));
    }
    return {std::move(net), std::move(history)};
}

std::pair<bool, double> verify(const SiameseNet& net, const FlatWeights& p1,
                               const FlatWeights& p2, double threshold) {
    const double score = energy(embed(net, p1.values), embed(net, p2.values));
    return {score < threshold, score};
}

EvalReport eval_roc(const SiameseNet& net, const std::vector<LabeledPair>& pairs) {
    check_net(net);
    check_pair_dims(pairs);

    // (score, label), ascending by score.
    std::vector<std::pair<double, int>> scored;
    scored.reserve(pairs.size());
    std::size_t total_pos = 0;
    for (const auto& pair : pairs) {
        const double score = energy(embed(net, pair.a.values), embed(net, pair.b.values));
        scored.emplace_back(score, pair.label);
        total_pos += static_cast<std::size_t>(pair.label);
    }
    const std::size_t total_neg = scored.size() - total_pos;
    if (total_pos == 0 || total_neg == 0) {
        throw DataError("siamese: evaluation needs both labels present");
    }
    std::sort(scored.begin(), scored.end());

    EvalReport report;
    double best_accuracy = -1.0;
    std::size_t pos_below = 0;
    std::size_t neg_below = 0;
    std::size_t k = 0;

    // Sweep thresholds over distinct scores, then one past the maximum so
    // the (1,1) corner is always present. A pair predicts "same" iff
    // score < threshold.
    while (true) {
        const bool past_end = k == scored.size();
        const double threshold = past_end ? scored.back().first + 1.0 : scored[k].first;

        const double tpr = static_cast<double>(pos_below) / static_cast<double>(total_pos);
        const double fpr = static_cast<double>(neg_below) / static_cast<double>(total_neg);
        const std::size_t true_neg = total_neg - neg_below;
        const double accuracy = static_cast<double>(pos_below + true_neg) /
                                static_cast<double>(scored.size());
        const std::size_t predicted_pos = pos_below + neg_below;
        const double precision =
            predicted_pos == 0
                ? 1.0
                : static_cast<double>(pos_below) / static_cast<double>(predicted_pos);

        report.thresholds.push_back(threshold);
        report.roc_points.emplace_back(fpr, tpr);
        report.pr_points.emplace_back(tpr, precision);
        if (accuracy > best_accuracy) {
            best_accuracy = accuracy;
            report.threshold = threshold;
            report.accuracy_at_threshold = accuracy;
        }

        if (past_end) break;
        while (k < scored.size() && scored[k].first == threshold) {
            pos_below += static_cast<std::size_t>(scored[k].second);
            neg_below += static_cast<std::size_t>(1 - scored[k].second);
            ++k;
        }
    }

    for (std::size_t i = 1; i < report.roc_points.size(); ++i) {
        const auto& [fpr0, tpr0] = report.roc_points[i - 1];
        const auto& [fpr1, tpr1] = report.roc_points[i];
        report.auc += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0;
    }
    return report;
}

void write_eval_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("eval: cannot open " + path.string() + " for writing");
    out << "threshold,fpr,tpr,precision,recall\n";
    for (std::size_t i = 0; i < report.roc_points.size(); ++i) {
        out << g17(report.thresholds[i]) << ',' << g17(report.roc_points[i].first) << ','
            << g17(report.roc_points[i].second) << ',' << g17(report.pr_points[i].second)
            << ',' << g17(report.pr_points[i].first) << '\n';
    }
    out << "# auc=" << g17(report.auc) << " best_threshold=" << g17(report.threshold)
        << " accuracy=" << g17(report.accuracy_at_threshold) << '\n';
    if (!out) throw DataError("eval: short write to " + path.string());
}

void save_net(const SiameseNet& net, const std::filesystem::path& path) {
    check_net(net);
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kNetMagic, kNetMagic + 4);
    detail::put_u16(out, kNetFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(net.layer_sizes.size()));
    out.insert(out.end(), 6, std::uint8_t{0});
    for (const Eigen::Index size : net.layer_sizes) {
        detail::put_u32(out, static_cast<std::uint32_t>(size));
    }
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < net.weights[l].cols(); ++c) {
                detail::put_f32(out, static_cast<float>(net.weights[l](r, c)));
            }
        }
        for (Eigen::Index r = 0; r < net.biases[l].size(); ++r) {
            detail::put_f32(out, static_cast<float>(net.biases[l][r]));
        }
    }
    detail::write_file(out, path, "net file");
}

SiameseNet load_net(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path, "net file");
    detail::ByteReader in(bytes, "net file");
    if (std::memcmp(in.take(4), kNetMagic, 4) != 0) {
        throw DataError("net file: bad magic, not an NSIA net: " + path.string());
    }
    const std::uint16_t version = in.u16();
    if (version != kNetFormatVersion) {
        throw DataError("net file: unsupported format version " + std::to_string(version));
    }
    const std::uint32_t layer_count = in.u32();
    if (layer_count < 2) {
        throw DataError("net file: needs at least two layers");
    }
    in.take(6);

    SiameseNet net;
    net.layer_sizes.reserve(layer_count);
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        const std::uint32_t size = in.u32();
        if (size == 0) throw DataError("net file: zero layer size");
        net.layer_sizes.push_back(static_cast<Eigen::Index>(size));
    }
    for (std::uint32_t l = 0; l + 1 < layer_count; ++l) {
        const Eigen::Index rows = net.layer_sizes[l + 1];
        const Eigen::Index cols = net.layer_sizes[l];
        Eigen::MatrixXd w(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                w(r, c) = static_cast<double>(in.f32());
            }
        }
        Eigen::VectorXd b(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            b[r] = static_cast<double>(in.f32());
        }
        if (!w.allFinite() || !b.allFinite()) {
            throw DataError("net file: non-finite weight in layer " + std::to_string(l));
        }
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    in.expect_exhausted();
    return net;
}

} // namespace nf3d
