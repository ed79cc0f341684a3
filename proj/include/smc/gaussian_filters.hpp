#pragma once

#include <span>
#include <vector>

#include "smc/ssm.hpp"

namespace smc {

struct GaussianBelief {
    Vector mean;
    Matrix cov;
    int k = 0;
};

/// Scaled unscented transform constants. lambda = alpha^2 (n + kappa) - n.
struct UTParams {
    double alpha = 1.0;
    double beta = 2.0;
    /// Defaults to 3 - n when unset.
    std::optional<double> kappa;

    [[nodiscard]] double lambda(int n) const;
};

struct SigmaPoints {
    Matrix points;  ///< n x (2n + 1), column 0 is the mean
    Vector mean_weights;
    Vector cov_weights;
};

/// Symmetrizes; negative eigenvalues left by rounding are clamped to zero.
Matrix repair_covariance(const Matrix& cov);

/// Exact linear-Gaussian predict and update.
/// x_k = F x_{k-1} + w, w ~ N(0, process_cov); y = H x_k + v, v ~ N(0, obs_cov).
GaussianBelief kalman_step(const Matrix& transition, const Matrix& process_cov, const Matrix& observation,
                           const Matrix& obs_cov, const GaussianBelief& belief, const Vector& y);

GaussianBelief ekf_step(const GaussianStructure& model, const GaussianBelief& belief, const Vector& y, int k);

SigmaPoints sigma_points(const GaussianBelief& belief, const UTParams& params);

GaussianBelief ukf_step(const GaussianStructure& model, const GaussianBelief& belief, const Vector& y, int k,
                        const UTParams& params = {});

enum class GaussianFilterKind { ekf, ukf };

struct GaussianFilterOutput {
    std::vector<GaussianBelief> beliefs;  ///< k = 1..K
    double wall_ms = 0.0;
    bool failed = false;
    int failed_k = 0;
    std::string failure;
};

/// Runs EKF or UKF from the model's initial moments over y_1..y_K.
GaussianFilterOutput run_gaussian_filter(const GaussianStructure& model, std::span<const Vector> observations,
                                         GaussianFilterKind kind, const UTParams& params = {});

}  // namespace smc
