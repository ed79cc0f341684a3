#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace smc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// SplitMix64 finalizer. Used to derive child seeds from (parent seed, index).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic random stream.
///
/// Wraps a 64-bit Mersenne twister seeded from a single 64-bit value. Child
/// streams are derived from (seed, index) through a SplitMix64 hash, so the
/// parent state is never consumed and the same child can be rebuilt anywhere.
/// A stream has a single owner; distinct streams may live on distinct threads.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

    /// Independent stream for cell `index`. Does not advance this stream.
    [[nodiscard]] RngStream child(std::uint64_t index) const;

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1).
    double uniform_open() {
        double u;
        do {
            u = uniform();
        } while (u == 0.0);
        return u;
    }

    double normal() { return normal_(engine_); }

    /// Exp(1) variate.
    double exponential() { return -std::log(uniform_open()); }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

struct WrappedCauchyParams {
    double mu = 0.0;
    double rho = 0.0;

    /// Validates rho in [0,1) and wraps mu into [-pi, pi).
    WrappedCauchyParams(double mean_angle, double concentration);
};

/// Wraps any finite angle into [-pi, pi).
double wrap_angle(double a);

/// Lower Cholesky factor of `cov`. A failed factorization is retried once
/// with 1e-12 * trace / n added to the diagonal; the second failure throws.
Matrix cholesky_factor(const Matrix& cov);

Vector gaussian_sample(const Vector& mean, const Matrix& cov, RngStream& rng);

/// Same as gaussian_sample with a precomputed lower factor.
Vector gaussian_sample_factored(const Vector& mean, const Matrix& lower, RngStream& rng);

/// Exact log-density of N(mean, cov) at x. Throws on a singular covariance.
double gaussian_logpdf(const Vector& x, const Vector& mean, const Matrix& cov);

/// Scalar N(mean, var) log-density.
double gaussian_logpdf(double x, double mean, double var);

double wrapped_cauchy_logpdf(double y, const WrappedCauchyParams& params);

double wrapped_cauchy_sample(const WrappedCauchyParams& params, RngStream& rng);

/// Counts of N i.i.d. categorical draws. Weights must sum to one within 1e-9.
std::vector<std::size_t> multinomial_counts(std::span<const double> weights, std::size_t n_draws,
                                            RngStream& rng);

/// N i.i.d. categorical draws returned as nondecreasing indices.
///
/// Uses ordered uniforms built from normalized exponential spacings and a
/// single merge against the cumulative weights, so the cost is O(n + N).
std::vector<std::size_t> multinomial_indices(std::span<const double> weights, std::size_t n_draws,
                                             RngStream& rng);

/// Stratified inversion with one shared uniform offset.
std::vector<std::size_t> systematic_indices(std::span<const double> weights, std::size_t n_draws,
                                            RngStream& rng);

template <typename T>
const T& uniform_choice(std::span<const T> set, RngStream& rng) {
    if (set.empty()) {
        throw std::invalid_argument("uniform_choice: empty set");
    }
    // A singleton draw consumes no randomness.
    if (set.size() == 1) {
        return set.front();
    }
    return set[rng.below(set.size())];
}

template <typename T>
const T& uniform_choice(const std::vector<T>& set, RngStream& rng) {
    return uniform_choice(std::span<const T>(set), rng);
}

}  // namespace smc
