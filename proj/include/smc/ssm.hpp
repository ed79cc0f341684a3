#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smc/errors.hpp"
#include "smc/stochastics.hpp"

namespace smc {

using VectorRef = Eigen::Ref<Vector>;
using ConstVectorRef = Eigen::Ref<const Vector>;

/// Discrete-time state-space model seen by the particle filters.
///
/// Time indexing: `sample_transition(k, x, ...)` draws X_k given X_{k-1} = x,
/// `transition_mean(k, x)` is E[X_k | X_{k-1} = x] and `log_likelihood(k, x, y)`
/// is log p(Y_k = y | X_k = x) up to an additive constant shared by all x.
/// `regime`, when given, replaces the nominal process-noise scale.
class StateSpaceModel {
public:
    virtual ~StateSpaceModel() = default;

    [[nodiscard]] virtual int state_dim() const = 0;
    [[nodiscard]] virtual int obs_dim() const = 0;

    virtual void sample_initial(RngStream& rng, VectorRef out) const = 0;

    virtual void sample_transition(int k, ConstVectorRef x_prev, std::optional<double> regime,
                                   RngStream& rng, VectorRef out) const = 0;

    virtual void transition_mean(int k, ConstVectorRef x_prev, VectorRef out) const = 0;

    [[nodiscard]] virtual double log_likelihood(int k, ConstVectorRef x, ConstVectorRef y) const = 0;
};

/// The extra structure the Gaussian filters need:
///   X_k = f_k(X_{k-1}) + noise with covariance process_cov(k, X_{k-1}),
///   Y_k = h(X_k) + noise with covariance obs_cov().
/// `innovation` defaults to y - h(x); angular observations override it to wrap.
class GaussianStructure {
public:
    virtual ~GaussianStructure() = default;

    [[nodiscard]] virtual Vector mean_fn(int k, const Vector& x_prev) const = 0;
    [[nodiscard]] virtual Matrix mean_jacobian(int k, const Vector& x_prev) const = 0;
    [[nodiscard]] virtual Matrix process_cov(int k, const Vector& x_prev) const = 0;
    [[nodiscard]] virtual Vector obs_fn(const Vector& x) const = 0;
    [[nodiscard]] virtual Matrix obs_jacobian(const Vector& x) const = 0;
    [[nodiscard]] virtual Matrix obs_cov() const = 0;
    [[nodiscard]] virtual Vector innovation(const Vector& y, const Vector& predicted) const {
        return y - predicted;
    }
    [[nodiscard]] virtual Vector initial_mean() const = 0;
    [[nodiscard]] virtual Matrix initial_cov() const = 0;
};

/// Finite set of process-noise scales a regime-switching filter draws from.
class RegimeSet {
public:
    explicit RegimeSet(std::vector<double> values);

    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] double operator[](std::size_t l) const { return values_[l]; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

    /// Index of `value`, or nullopt when it is not a member.
    [[nodiscard]] std::optional<std::size_t> index_of(double value) const;

private:
    std::vector<double> values_;
};

/// Weighted particle approximation at time k.
///
/// Particles are stored column-wise (state_dim x N). Log-weights are kept
/// unnormalized; `normalized_weights()` gives the probability vector.
/// `regimes`, when nonempty, holds one index into a RegimeSet per particle.
struct ParticleCloud {
    int k = 0;
    Matrix particles;
    Vector log_weights;
    std::vector<std::size_t> regimes;

    ParticleCloud() = default;
    ParticleCloud(int time_index, Matrix xs);

    [[nodiscard]] std::size_t size() const noexcept {
        return static_cast<std::size_t>(particles.cols());
    }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(particles.rows()); }
    [[nodiscard]] bool has_regimes() const noexcept { return !regimes.empty(); }

    [[nodiscard]] Vector normalized_weights() const;
    [[nodiscard]] bool uniform_weights() const;
};

enum class ResamplingScheme { multinomial, systematic };

struct ResamplingPolicy {
    ResamplingScheme scheme = ResamplingScheme::multinomial;
    /// Resample only when ESS < ess_fraction * N. Values above 1 mean every step.
    double ess_fraction = 2.0;

    [[nodiscard]] bool every_step() const noexcept { return ess_fraction > 1.0; }
};

/// exp(raw - max) / sum. Throws DegeneracyError(k) when every entry is -inf
/// or the result is not finite.
Vector normalize_log_weights(const Vector& raw, int k = -1);

/// Ancestor indices drawn from `weights` (already normalized).
std::vector<std::size_t> draw_ancestors(std::span<const double> weights, std::size_t n,
                                        ResamplingScheme scheme, RngStream& rng);

/// Resampled copy with uniform weights; regime labels travel with particles.
ParticleCloud resample(const ParticleCloud& cloud, RngStream& rng,
                       ResamplingScheme scheme = ResamplingScheme::multinomial);

Vector posterior_mean(const ParticleCloud& cloud);

/// Weighted mean with externally supplied normalized weights.
Vector weighted_mean(const Matrix& particles, const Vector& weights);

double effective_sample_size(const ParticleCloud& cloud);
double effective_sample_size(const Vector& weights);

/// Debug dump, one row per particle: `k,i,weight,x0,...,x{n-1}[,regime]`.
/// Weights are normalized; the regime column carries the regime value.
/// Doubles use the shortest round-trip form, so a re-read is bit-exact.
void write_cloud_csv(std::ostream& os, const ParticleCloud& cloud,
                     const RegimeSet* regimes = nullptr, bool header = true);

/// Reads a dump produced by write_cloud_csv (single time index). Weights
/// become log-weights; regime values are mapped back through `regimes`.
ParticleCloud read_cloud_csv(std::istream& is, const RegimeSet* regimes = nullptr);

}  // namespace smc
