#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nf3d/face_model.hpp"

namespace nf3d {

struct LmConfig {
    Eigen::Index hidden_count = 500;
    double target_mse = 2e-4;
    int max_epochs = 1000;
    double mu_initial = 1e-3;
    double beta = 10.0;
    double mu_max = 1e10;
    /// Stop when the gradient infinity norm falls below this.
    double gradient_min = 1e-7;
    Eigen::Index batch_size = 256;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class StopReason { target_mse, max_epochs, mu_max, gradient_min };

const char* to_string(StopReason reason);
StopReason stop_reason_from_string(const std::string& name);

struct TrainReport {
    double final_mse = 0.0;
    int epochs_used = 0;
    StopReason stop_reason = StopReason::max_epochs;
    /// Initial MSE followed by the MSE after each accepted step.
    std::vector<double> mse_history;
};

/// Gauss-Newton normal equations accumulated in batches so the full
/// Jacobian is never materialized. Jte is the gradient of 0.5*sum(e^2)
/// with e = z - model(x, y).
struct NormalEquations {
    Eigen::MatrixXd JtJ;
    Eigen::VectorXd Jte;
    double sse = 0.0;
};

/// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)]: fan_in 2 for the
/// hidden layer, M for the output layer. Deterministic under seed.
FaceModel init_weights(Eigen::Index hidden_count, std::uint64_t seed);

NormalEquations accumulate_normal_equations(const FaceModel& model,
                                            const PointCloud& cloud,
                                            Eigen::Index batch_size);

/// Solves (JtJ + mu*I) delta = -Jte with a Cholesky factorization.
/// Throws NumericError when the damped system is not positive definite,
/// which callers treat as a rejected step.
Eigen::VectorXd solve_damped_step(const Eigen::MatrixXd& JtJ,
                                  const Eigen::VectorXd& Jte, double mu);

/// One damped Gauss-Newton candidate: model weights plus the solved step.
FaceModel lm_step(const FaceModel& model, const NormalEquations& neq, double mu);

/// Levenberg-Marquardt fit of a fresh model to the cloud. Steps that
/// lower the MSE are accepted and divide mu by beta; rejected steps
/// multiply mu by beta and re-solve against the same normal equations.
std::pair<FaceModel, TrainReport> train_lm(const PointCloud& cloud, const LmConfig& config);

struct GdConfig {
    Eigen::Index hidden_count = 50;
    double learning_rate = 0.01;
    int max_epochs = 1000;
    /// 0 disables the early stop.
    double target_mse = 0.0;
    std::uint64_t seed = 0;
};

/// Plain full-batch gradient descent on the same loss, as a convergence
/// baseline. Same seed gives the same initialization as train_lm.
std::pair<FaceModel, TrainReport> train_gd(const PointCloud& cloud, const GdConfig& config);

/// Key: value lines plus a one-line CSV mse_history.
std::string format_report(const TrainReport& report);
void write_report(const TrainReport& report, const std::filesystem::path& path);

} // namespace nf3d
