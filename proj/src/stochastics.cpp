#include "smc/stochastics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "smc/errors.hpp"

namespace smc {

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

RngStream RngStream::child(std::uint64_t index) const {
    return RngStream(mix64(seed_ ^ mix64(index + 0x632be59bd9b4e019ULL)));
}

std::size_t RngStream::below(std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(engine_);
}

WrappedCauchyParams::WrappedCauchyParams(double mean_angle, double concentration)
    : mu(wrap_angle(mean_angle)), rho(concentration) {
    if (!(rho >= 0.0 && rho < 1.0)) {
        throw std::invalid_argument("wrapped Cauchy: rho must lie in [0, 1), got " +
                                    std::to_string(rho));
    }
}

double wrap_angle(double a) {
    double w = a - kTwoPi * std::floor((a + kPi) / kTwoPi);
    if (w >= kPi) {
        w -= kTwoPi;
    } else if (w < -kPi) {
        w += kTwoPi;
    }
    return w;
}

Matrix cholesky_factor(const Matrix& cov) {
    if (cov.rows() != cov.cols()) {
        throw std::invalid_argument("cholesky_factor: covariance is not square");
    }
    const auto n = cov.rows();
    if (n == 0) {
        return Matrix(0, 0);
    }
    // Exact zeros are common (degenerate priors, noise-free models); the LLT
    // of a zero matrix fails, so handle it directly.
    if (cov.isZero(0.0)) {
        return Matrix::Zero(n, n);
    }
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() == Eigen::Success) {
        return llt.matrixL();
    }
    const double jitter = 1e-12 * cov.trace() / static_cast<double>(n);
    Matrix bumped = cov;
    bumped.diagonal().array() += std::max(jitter, 0.0);
    llt.compute(bumped);
    if (llt.info() != Eigen::Success) {
        // Semi-definite with zero rows/columns: factor the nonzero block.
        Eigen::LDLT<Matrix> ldlt(cov);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
            (ldlt.vectorD().array() >= -1e-14 * std::max(1.0, cov.trace())).all()) {
            Vector d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
            Matrix l = ldlt.matrixL();
            Matrix root = ldlt.transpositionsP().transpose() * (l * d.asDiagonal());
            return root;
        }
        throw std::invalid_argument("cholesky_factor: covariance is not positive semidefinite");
    }
    return llt.matrixL();
}

Vector gaussian_sample_factored(const Vector& mean, const Matrix& lower, RngStream& rng) {
    Vector z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        z[i] = rng.normal();
    }
    return mean + lower * z;
}

Vector gaussian_sample(const Vector& mean, const Matrix& cov, RngStream& rng) {
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
        throw std::invalid_argument("gaussian_sample: dimension mismatch");
    }
    return gaussian_sample_factored(mean, cholesky_factor(cov), rng);
}

double gaussian_logpdf(const Vector& x, const Vector& mean, const Matrix& cov) {
    const auto n = x.size();
    if (mean.size() != n || cov.rows() != n || cov.cols() != n) {
        throw std::invalid_argument("gaussian_logpdf: dimension mismatch");
    }
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw std::invalid_argument("gaussian_logpdf: covariance is not positive definite");
    }
    const Vector z = llt.matrixL().solve(x - mean);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(n) * std::log(kTwoPi) + log_det + z.squaredNorm());
}

double gaussian_logpdf(double x, double mean, double var) {
    if (!(var > 0.0)) {
        throw std::invalid_argument("gaussian_logpdf: variance must be positive");
    }
    const double d = x - mean;
    return -0.5 * (std::log(kTwoPi * var) + d * d / var);
}

double wrapped_cauchy_logpdf(double y, const WrappedCauchyParams& params) {
    const double rho = params.rho;
    if (!(rho >= 0.0 && rho < 1.0)) {
        throw std::invalid_argument("wrapped_cauchy_logpdf: rho must lie in [0, 1)");
    }
    const double d = wrap_angle(y) - params.mu;
    // 1 + rho^2 - 2 rho cos(d) written without cancellation near rho -> 1.
    const double s = std::sin(0.5 * d);
    const double denom = (1.0 - rho) * (1.0 - rho) + 4.0 * rho * s * s;
    return std::log1p(-rho * rho) - std::log(kTwoPi) - std::log(denom);
}

double wrapped_cauchy_sample(const WrappedCauchyParams& params, RngStream& rng) {
    const double rho = params.rho;
    if (!(rho >= 0.0 && rho < 1.0)) {
        throw std::invalid_argument("wrapped_cauchy_sample: rho must lie in [0, 1)");
    }
    const double u = rng.uniform_open();
    const double scale = (1.0 - rho) / (1.0 + rho);
    return wrap_angle(params.mu + 2.0 * std::atan(scale * std::tan(kPi * (u - 0.5))));
}

namespace {

// Cumulative weights with the last positive bin pinned above 1 so that every
// uniform in [0, 1) lands on a bin with positive mass.
std::vector<double> checked_cumulative(std::span<const double> weights) {
    if (weights.empty()) {
        throw std::invalid_argument("categorical draw: empty weight vector");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw std::invalid_argument("categorical draw: weights must be finite and nonnegative");
        }
        total += w;
    }
    if (total == 0.0) {
        throw DegeneracyError(-1, "categorical draw: all weights are zero");
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("categorical draw: weights sum to " + std::to_string(total) +
                                    ", expected 1");
    }
    std::vector<double> cum(weights.size());
    std::partial_sum(weights.begin(), weights.end(), cum.begin());
    std::size_t last = weights.size();
    while (last > 0 && weights[last - 1] == 0.0) {
        --last;
    }
    for (std::size_t i = last - 1; i < cum.size(); ++i) {
        cum[i] = 2.0;
    }
    return cum;
}

std::vector<std::size_t> merge_sorted(const std::vector<double>& cum,
                                      const std::vector<double>& sorted_u) {
    std::vector<std::size_t> out(sorted_u.size());
    std::size_t bin = 0;
    for (std::size_t j = 0; j < sorted_u.size(); ++j) {
        while (sorted_u[j] >= cum[bin]) {
            ++bin;
        }
        out[j] = bin;
    }
    return out;
}

}  // namespace

std::vector<std::size_t> multinomial_indices(std::span<const double> weights, std::size_t n_draws,
                                             RngStream& rng) {
    const auto cum = checked_cumulative(weights);
    if (n_draws == 0) {
        return {};
    }
    // Order statistics of n_draws uniforms: partial sums of n_draws + 1
    // exponentials divided by the full sum.
    std::vector<double> u(n_draws);
    double acc = 0.0;
    for (std::size_t j = 0; j < n_draws; ++j) {
        acc += rng.exponential();
        u[j] = acc;
    }
    const double total = acc + rng.exponential();
    for (double& v : u) {
        v /= total;
    }
    return merge_sorted(cum, u);
}

std::vector<std::size_t> systematic_indices(std::span<const double> weights, std::size_t n_draws,
                                            RngStream& rng) {
    const auto cum = checked_cumulative(weights);
    if (n_draws == 0) {
        return {};
    }
    const double step = 1.0 / static_cast<double>(n_draws);
    const double offset = rng.uniform() * step;
    std::vector<double> u(n_draws);
    for (std::size_t j = 0; j < n_draws; ++j) {
        u[j] = offset + static_cast<double>(j) * step;
    }
    return merge_sorted(cum, u);
}

std::vector<std::size_t> multinomial_counts(std::span<const double> weights, std::size_t n_draws,
                                            RngStream& rng) {
    const auto idx = multinomial_indices(weights, n_draws, rng);
    std::vector<std::size_t> counts(weights.size(), 0);
    for (auto i : idx) {
        ++counts[i];
    }
    return counts;
}

}  // namespace smc
