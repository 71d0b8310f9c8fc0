#include "nf3d/lm.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <utility>

#include "nf3d/random.hpp"
#include "nf3d/types.hpp"

namespace nf3d {

namespace {

// Rejected steps multiply mu by beta at most this many times per epoch, so
// a slow beta cannot stall an epoch indefinitely.
constexpr int kMaxRejectionsPerEpoch = 50;

// The output is tanh-bounded, so targets of exactly +-1 would need infinite
// pre-activations; training clamps them just inside the open interval.
constexpr double kTargetClampMargin = 1e-6;

PointCloud clamp_targets(const PointCloud& cloud) {
    PointCloud out = cloud;
    out.points.row(2) = out.points.row(2)
                            .cwiseMax(-1.0 + kTargetClampMargin)
                            .cwiseMin(1.0 - kTargetClampMargin);
    return out;
}

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void LmConfig::validate() const {
    if (hidden_count < 1) throw DataError("lm: hidden_count must be >= 1");
    if (!(target_mse > 0.0)) throw DataError("lm: target_mse must be positive");
    if (max_epochs < 1) throw DataError("lm: max_epochs must be >= 1");
    if (!(mu_initial > 0.0)) throw DataError("lm: mu_initial must be positive");
    if (!(beta > 1.0)) throw DataError("lm: beta must be > 1");
    if (!(mu_initial < mu_max)) throw DataError("lm: mu_initial must be below mu_max");
    if (!(gradient_min > 0.0)) throw DataError("lm: gradient_min must be positive");
    if (batch_size < 1) throw DataError("lm: batch_size must be >= 1");
}

const char* to_string(StopReason reason) {
    switch (reason) {
        case StopReason::target_mse: return "target_mse";
        case StopReason::max_epochs: return "max_epochs";
        case StopReason::mu_max: return "mu_max";
        case StopReason::gradient_min: return "gradient_min";
    }
    return "unknown";
}

StopReason stop_reason_from_string(const std::string& name) {
    if (name == "target_mse") return StopReason::target_mse;
    if (name == "max_epochs") return StopReason::max_epochs;
    if (name == "mu_max") return StopReason::mu_max;
    if (name == "gradient_min") return StopReason::gradient_min;
    throw DataError("lm: unknown stop reason '" + name + "'");
}

FaceModel init_weights(Eigen::Index hidden_count, std::uint64_t seed) {
    if (hidden_count < 1) throw DataError("lm: hidden_count must be >= 1");
    std::mt19937_64 rng(seed);
    const double hidden_bound = 1.0 / std::sqrt(2.0);
    const double output_bound = 1.0 / std::sqrt(static_cast<double>(hidden_count));

    FaceModel model;
    model.Wi.resize(hidden_count, 2);
    model.Bi.resize(hidden_count);
    model.Wo.resize(hidden_count);
    for (Eigen::Index j = 0; j < hidden_count; ++j) {
        model.Wi(j, 0) = uniform_range(rng, -hidden_bound, hidden_bound);
        model.Wi(j, 1) = uniform_range(rng, -hidden_bound, hidden_bound);
        model.Bi[j] = uniform_range(rng, -hidden_bound, hidden_bound);
        model.Wo[j] = uniform_range(rng, -output_bound, output_bound);
    }
    model.Bo = uniform_range(rng, -output_bound, output_bound);
    return model;
}

NormalEquations accumulate_normal_equations(const FaceModel& model,
                                            const PointCloud& cloud,
                                            Eigen::Index batch_size) {
    if (cloud.empty()) throw DataError("lm: cloud is empty");
    if (batch_size < 1) throw DataError("lm: batch_size must be >= 1");

    const Eigen::Index n = cloud.size();
    const Eigen::Index m = model.hidden_count();
    const Eigen::Index p = model.parameter_count();

    NormalEquations neq;
    neq.JtJ = Eigen::MatrixXd::Zero(p, p);
    neq.Jte = Eigen::VectorXd::Zero(p);

    Eigen::MatrixXd Ja;
    for (Eigen::Index start = 0; start < n; start += batch_size) {
        const Eigen::Index b = std::min(batch_size, n - start);
        const Eigen::VectorXd x = cloud.points.row(0).segment(start, b).transpose();
        const Eigen::VectorXd y = cloud.points.row(1).segment(start, b).transpose();
        const Eigen::VectorXd z = cloud.points.row(2).segment(start, b).transpose();

        const Eigen::MatrixXd h =
            ((x * model.Wi.col(0).transpose() + y * model.Wi.col(1).transpose()).rowwise() +
             model.Bi.transpose())
                .array()
                .tanh()
                .matrix();
        const Eigen::VectorXd a = ((h * model.Wo).array() + model.Bo).tanh().matrix();
        const Eigen::VectorXd e = z - a;
        const Eigen::ArrayXd gf = 1.0 - a.array().square();

        // d(:, j) = gf .* Wo_j .* (1 - h_j^2): sensitivity of the output
        // pre-activation routed through hidden unit j.
        const Eigen::MatrixXd d =
            ((1.0 - h.array().square()).rowwise() * model.Wo.transpose().array())
                .colwise() *
            gf;

        // Ja = da/dW in flat layout order; J = de/dW = -Ja. The sign drops
        // out of JtJ and is restored below for Jte.
        Ja.resize(b, p);
        for (Eigen::Index j = 0; j < m; ++j) {
            Ja.col(4 * j + 0) = d.col(j).cwiseProduct(x);
            Ja.col(4 * j + 1) = d.col(j).cwiseProduct(y);
            Ja.col(4 * j + 2) = d.col(j);
            Ja.col(4 * j + 3) = gf.matrix().cwiseProduct(h.col(j));
        }
        Ja.col(4 * m) = gf.matrix();

        neq.JtJ.selfadjointView<Eigen::Lower>().rankUpdate(Ja.transpose());
        neq.Jte.noalias() -= Ja.transpose() * e;
        neq.sse += e.squaredNorm();
    }
    neq.JtJ = neq.JtJ.selfadjointView<Eigen::Lower>();
    return neq;
}

namespace {

// Jte in flat layout (e = z - a, J = de/dW), skipping the Gauss-Newton
// matrix; used where only the gradient is needed.
Eigen::VectorXd gradient_jte(const FaceModel& model, const PointCloud& cloud) {
    const Eigen::Index m = model.hidden_count();
    const Eigen::VectorXd x = cloud.points.row(0).transpose();
    const Eigen::VectorXd y = cloud.points.row(1).transpose();
    const Eigen::VectorXd z = cloud.points.row(2).transpose();

    const Eigen::MatrixXd h =
        ((x * model.Wi.col(0).transpose() + y * model.Wi.col(1).transpose()).rowwise() +
         model.Bi.transpose())
            .array()
            .tanh()
            .matrix();
    const Eigen::VectorXd a = ((h * model.Wo).array() + model.Bo).tanh().matrix();
    const Eigen::VectorXd ge =
        ((1.0 - a.array().square()) * (z - a).array()).matrix();
    const Eigen::MatrixXd dwe = (1.0 - h.array().square()).colwise() * ge.array();

    const Eigen::VectorXd tx = dwe.transpose() * x;
    const Eigen::VectorXd ty = dwe.transpose() * y;
    const Eigen::VectorXd ts = dwe.colwise().sum().transpose();
    const Eigen::VectorXd th = h.transpose() * ge;

    Eigen::VectorXd grad(model.parameter_count());
    for (Eigen::Index j = 0; j < m; ++j) {
        grad[4 * j + 0] = -model.Wo[j] * tx[j];
        grad[4 * j + 1] = -model.Wo[j] * ty[j];
        grad[4 * j + 2] = -model.Wo[j] * ts[j];
        grad[4 * j + 3] = -th[j];
    }
    grad[4 * m] = -ge.sum();
    return grad;
}

} // namespace

Eigen::VectorXd solve_damped_step(const Eigen::MatrixXd& JtJ,
                                  const Eigen::VectorXd& Jte, double mu) {
    if (JtJ.rows() != JtJ.cols() || JtJ.rows() != Jte.size()) {
        throw DataError("lm: normal equation shapes disagree");
    }
    if (mu < 0.0) throw DataError("lm: mu must be nonnegative");

    Eigen::MatrixXd damped = JtJ;
    damped.diagonal().array() += mu;
    const Eigen::LLT<Eigen::MatrixXd> llt(damped);
    if (llt.info() != Eigen::Success) {
        throw NumericError("lm: damped normal equations are not positive definite");
    }
    return llt.solve(-Jte);
}

FaceModel lm_step(const FaceModel& model, const NormalEquations& neq, double mu) {
    FlatWeights flat = flatten(model);
    if (neq.Jte.size() != flat.values.size()) {
        throw DataError("lm: normal equations do not match the model size");
    }
    flat.values += solve_damped_step(neq.JtJ, neq.Jte, mu);
    return unflatten(flat);
}

std::pair<FaceModel, TrainReport> train_lm(const PointCloud& cloud, const LmConfig& config) {
    config.validate();
    if (cloud.empty()) throw DataError("lm: training cloud is empty");
    if (cloud.size() < 4 * config.hidden_count + 1) {
        std::cerr << "lm: warning: " << cloud.size() << " points for "
                  << 4 * config.hidden_count + 1
                  << " parameters; the fit is underdetermined\n";
    }

    const PointCloud targets = clamp_targets(cloud);
    FaceModel model = init_weights(config.hidden_count, config.seed);
    double current = mse(model, targets);

    TrainReport report;
    report.mse_history.push_back(current);
    if (current <= config.target_mse) {
        report.final_mse = current;
        report.stop_reason = StopReason::target_mse;
        return {std::move(model), std::move(report)};
    }

    double mu = config.mu_initial;
    StopReason reason = StopReason::max_epochs;
    int epochs_done = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const NormalEquations neq =
            accumulate_normal_equations(model, targets, config.batch_size);
        if (neq.Jte.lpNorm<Eigen::Infinity>() < config.gradient_min) {
            reason = StopReason::gradient_min;
            break;
        }

        bool accepted = false;
        for (int rejections = 0; rejections < kMaxRejectionsPerEpoch; ++rejections) {
            double candidate_mse = std::numeric_limits<double>::infinity();
            FaceModel candidate;
            try {
                candidate = lm_step(model, neq, mu);
                candidate_mse = mse(candidate, targets);
            } catch (const NumericError&) {
                // Factorization failure: same treatment as a worse MSE.
            }
            if (std::isfinite(candidate_mse) && candidate_mse < current) {
                model = std::move(candidate);
                current = candidate_mse;
                mu = std::max(mu / config.beta, std::numeric_limits<double>::min());
                accepted = true;
                break;
            }
            mu *= config.beta;
            if (mu > config.mu_max) break;
        }

        if (!accepted) {
            reason = StopReason::mu_max;
            epochs_done = epoch;
            break;
        }
        epochs_done = epoch;
        report.mse_history.push_back(current);
        if (current <= config.target_mse) {
            reason = StopReason::target_mse;
            break;
        }
    }

    report.final_mse = current;
    report.epochs_used = epochs_done;
    report.stop_reason = reason;
    return {std::move(model), std::move(report)};
}

std::pair<FaceModel, TrainReport> train_gd(const PointCloud& cloud, const GdConfig& config) {
    if (config.hidden_count < 1) throw DataError("gd: hidden_count must be >= 1");
    if (!(config.learning_rate > 0.0)) throw DataError("gd: learning_rate must be positive");
    if (config.max_epochs < 1) throw DataError("gd: max_epochs must be >= 1");
    if (config.target_mse < 0.0) throw DataError("gd: target_mse must be >= 0");
    if (cloud.empty()) throw DataError("gd: training cloud is empty");

    const PointCloud targets = clamp_targets(cloud);
    FaceModel model = init_weights(config.hidden_count, config.seed);
    double current = mse(model, targets);

    TrainReport report;
    report.mse_history.push_back(current);
    StopReason reason = StopReason::max_epochs;
    int epochs_done = 0;

    if (config.target_mse > 0.0 && current <= config.target_mse) {
        reason = StopReason::target_mse;
    } else {
        const double scale = 2.0 / static_cast<double>(cloud.size());
        for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
            FlatWeights flat = flatten(model);
            flat.values -= config.learning_rate * scale * gradient_jte(model, targets);
            model = unflatten(flat);
            current = mse(model, targets);
            if (!std::isfinite(current)) {
                throw NumericError("gd: diverged at epoch " + std::to_string(epoch));
            }
            report.mse_history.push_back(current);
            epochs_done = epoch;
            if (config.target_mse > 0.0 && current <= config.target_mse) {
                reason = StopReason::target_mse;
                break;
            }
        }
    }

    report.final_mse = current;
    report.epochs_used = epochs_done;
    report.stop_reason = reason;
    return {std::move(model), std::move(report)};
}

std::string format_report(const TrainReport& report) {
    std::string out;
    out += "final_mse: " + g17(report.final_mse) + "\n";
    out += "epochs_used: " + std::to_string(report.epochs_used) + "\n";
    out += "stop_reason: " + std::string(to_string(report.stop_reason)) + "\n";
    out += "mse_history: ";
    for (std::size_t i = 0; i < report.mse_history.size(); ++i) {
        if (i > 0) out += ",";
        out += g17(report.mse_history[i]);
    }
    out += "\n";
    return out;
}

void write_report(const TrainReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("report: cannot open " + path.string() + " for writing");
    out << format_report(report);
    if (!out) throw DataError("report: short write to " + path.string());
}

} // namespace nf3d
