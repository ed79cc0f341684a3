#include "smc/gaussian_filters.hpp"

#include <chrono>
#include <stdexcept>

namespace smc {

namespace {

// Shared measurement update so that the linear and linearized paths agree
// bit for bit on linear models.
GaussianBelief linear_update(const Vector& prior_mean, const Matrix& prior_cov, const Matrix& h,
                             const Matrix& r, const Vector& innovation, int k) {
    const Matrix s = h * prior_cov * h.transpose() + r;
    Eigen::LDLT<Matrix> ldlt(s);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        (ldlt.vectorD().array().abs() < 1e-300).any()) {
        throw std::runtime_error("Kalman update: innovation covariance is singular");
    }
    const Matrix gain = ldlt.solve(h * prior_cov).transpose();
    const auto n = prior_mean.size();
    const Matrix i_kh = Matrix::Identity(n, n) - gain * h;
    GaussianBelief out;
    out.k = k;
    out.mean = prior_mean + gain * innovation;
    // Joseph form.
    out.cov = repair_covariance(i_kh * prior_cov * i_kh.transpose() + gain * r * gain.transpose());
    return out;
}

}  // namespace

double UTParams::lambda(int n) const {
    const double kap = kappa.value_or(3.0 - n);
    return alpha * alpha * (n + kap) - n;
}

Matrix repair_covariance(const Matrix& cov) {
    Matrix sym = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    if (eig.info() != Eigen::Success) {
        throw std::runtime_error("repair_covariance: eigen decomposition failed");
    }
    if (eig.eigenvalues().minCoeff() >= 0.0) {
        return sym;
    }
    const Vector clamped = eig.eigenvalues().cwiseMax(0.0);
    Matrix fixed = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (fixed + fixed.transpose());
}

GaussianBelief kalman_step(const Matrix& transition, const Matrix& process_cov, const Matrix& observation,
                           const Matrix& obs_cov, const GaussianBelief& belief, const Vector& y) {
    const auto n = belief.mean.size();
    if (transition.rows() != n || transition.cols() != n || process_cov.rows() != n ||
        observation.cols() != n || obs_cov.rows() != observation.rows() || y.size() != observation.rows()) {
        throw std::invalid_argument("kalman_step: inconsistent dimensions");
    }
    const Vector prior_mean = transition * belief.mean;
    const Matrix prior_cov =
        repair_covariance(transition * belief.cov * transition.transpose() + process_cov);
    return linear_update(prior_mean, prior_cov, observation, obs_cov, y - observation * prior_mean,
                         belief.k + 1);
}

GaussianBelief ekf_step(const GaussianStructure& model, const GaussianBelief& belief, const Vector& y, int k) {
    const Matrix f = model.mean_jacobian(k, belief.mean);
    const Vector prior_mean = model.mean_fn(k, belief.mean);
    const Matrix prior_cov =
        repair_covariance(f * belief.cov * f.transpose() + model.process_cov(k, belief.mean));
    const Matrix h = model.obs_jacobian(prior_mean);
    return linear_update(prior_mean, prior_cov, h, model.obs_cov(),
                         model.innovation(y, model.obs_fn(prior_mean)), k);
}

SigmaPoints sigma_points(const GaussianBelief& belief, const UTParams& params) {
    const int n = static_cast<int>(belief.mean.size());
    const double lambda = params.lambda(n);
    if (!(n + lambda > 0.0)) {
        throw std::invalid_argument("sigma_points: n + lambda must be positive");
    }
    const Matrix root = cholesky_factor((n + lambda) * belief.cov);
    SigmaPoints sp;
    sp.points.resize(n, 2 * n + 1);
    sp.points.col(0) = belief.mean;
    for (int i = 0; i < n; ++i) {
        sp.points.col(1 + i) = belief.mean + root.col(i);
        sp.points.col(1 + n + i) = belief.mean - root.col(i);
    }
    sp.mean_weights = Vector::Constant(2 * n + 1, 1.0 / (2.0 * (n + lambda)));
    sp.mean_weights[0] = lambda / (n + lambda);
    sp.cov_weights = sp.mean_weights;
    sp.cov_weights[0] += 1.0 - params.alpha * params.alpha + params.beta;
    return sp;
}

GaussianBelief ukf_step(const GaussianStructure& model, const GaussianBelief& belief, const Vector& y, int k,
                        const UTParams& params) {
    // Predict.
    const SigmaPoints prior_sp = sigma_points(belief, params);
    const auto count = prior_sp.points.cols();
    Matrix moved(belief.mean.size(), count);
    for (Eigen::Index j = 0; j < count; ++j) {
        moved.col(j) = model.mean_fn(k, prior_sp.points.col(j));
    }
    const Vector prior_mean = moved * prior_sp.mean_weights;
    Matrix prior_cov = model.process_cov(k, belief.mean);
    for (Eigen::Index j = 0; j < count; ++j) {
        const Vector d = moved.col(j) - prior_mean;
        prior_cov += prior_sp.cov_weights[j] * d * d.transpose();
    }
    prior_cov = repair_covariance(prior_cov);

    // Update with points redrawn from the predicted belief.
    const SigmaPoints sp = sigma_points(GaussianBelief{prior_mean, prior_cov, k}, params);
    const Vector y0 = model.obs_fn(sp.points.col(0));
    Matrix ys(y0.size(), count);
    ys.col(0) = y0;
    for (Eigen::Index j = 1; j < count; ++j) {
        ys.col(j) = model.obs_fn(sp.points.col(j));
    }
    Vector y_hat = Vector::Zero(y0.size());
    for (Eigen::Index j = 0; j < count; ++j) {
        y_hat += sp.mean_weights[j] * model.innovation(ys.col(j), y0);
    }
    y_hat += y0;

    Matrix s = model.obs_cov();
    Matrix cross = Matrix::Zero(prior_mean.size(), y0.size());
    for (Eigen::Index j = 0; j < count; ++j) {
        const Vector dy = model.innovation(ys.col(j), y_hat);
        const Vector dx = sp.points.col(j) - prior_mean;
        s += sp.cov_weights[j] * dy * dy.transpose();
        cross += sp.cov_weights[j] * dx * dy.transpose();
    }
    Eigen::LDLT<Matrix> ldlt(s);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        throw std::runtime_error("UKF update: innovation covariance is singular");
    }
    const Matrix gain = ldlt.solve(cross.transpose()).transpose();
    GaussianBelief out;
    out.k = k;
    out.mean = prior_mean + gain * model.innovation(y, y_hat);
    out.cov = repair_covariance(prior_cov - gain * s * gain.transpose());
    return out;
}

GaussianFilterOutput run_gaussian_filter(const GaussianStructure& model, std::span<const Vector> observations,
                                         GaussianFilterKind kind, const UTParams& params) {
    GaussianFilterOutput out;
    out.beliefs.reserve(observations.size());
    const auto start = std::chrono::steady_clock::now();
    GaussianBelief belief{model.initial_mean(), model.initial_cov(), 0};
    for (std::size_t t = 0; t < observations.size(); ++t) {
        const int k = static_cast<int>(t) + 1;
        try {
            belief = kind == GaussianFilterKind::ekf ? ekf_step(model, belief, observations[t], k)
                                                     : ukf_step(model, belief, observations[t], k, params);
        } catch (const std::runtime_error& e) {
            out.failed = true;
            out.failed_k = k;
            out.failure = e.what();
            break;
        }
        out.beliefs.push_back(belief);
    }
    out.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace smc
