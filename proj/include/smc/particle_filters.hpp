#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smc/ssm.hpp"

namespace smc {

enum class FilterKind { bpf, apf, pbps };

/// How PBPS extends each particle one step ahead before weighting it
/// against the next observation.
enum class OffspringMode {
    deterministic_mean,  ///< offspring = transition_mean(k + 1, particle); no randomness
    stochastic,          ///< offspring ~ sample_transition(k + 1, particle)
};

struct ParticleFilterOptions {
    FilterKind kind = FilterKind::bpf;
    OffspringMode offspring = OffspringMode::deterministic_mean;
    ResamplingPolicy resampling;
    bool keep_clouds = false;
};

/// Per-particle regime labels for one step, as indices into `set`.
struct RegimeAssignment {
    const RegimeSet* set = nullptr;
    std::vector<std::size_t> labels;

    [[nodiscard]] std::optional<double> value(std::size_t i) const {
        if (set == nullptr || labels.empty()) {
            return std::nullopt;
        }
        return (*set)[labels[i]];
    }
};

struct StepResult {
    /// Time-k cloud. Uniform weights after resampling; otherwise it carries
    /// the filtering weights.
    ParticleCloud cloud;
    /// Weighted mean of the time-k particles before resampling.
    Vector estimate;
    /// ESS of the weights the resampling used.
    double ess = 0.0;
};

/// The three log-weight vectors of one PBPS correction. `offspring` is
/// shifted so its maximum is zero; `combined == current + offspring` exactly.
struct PbpsLogWeights {
    Vector current;
    Vector offspring;
    Vector combined;
};

struct FilterOutput {
    std::vector<Vector> estimates;
    std::vector<ParticleCloud> clouds;
    std::vector<double> ess;
    double wall_ms = 0.0;
    /// Per-step regime label frequencies (regime-switching filters only).
    std::vector<std::vector<double>> regime_frequencies;
    bool failed = false;
    int failed_k = 0;
    std::string failure;
};

/// Draws N particles i.i.d. from the model's initial law (time 0).
ParticleCloud initial_cloud(const StateSpaceModel& model, std::size_t n, RngStream& rng);

/// Propagates every particle of `prev` through q_k. Regime i, when present,
/// is used for particle i.
Matrix propagate(const StateSpaceModel& model, int k, const Matrix& prev,
                 const RegimeAssignment* regimes, RngStream& rng);

/// Bootstrap filter step k-1 -> k.
StepResult bpf_step(const StateSpaceModel& model, const ParticleCloud& prev, ConstVectorRef y,
                    RngStream& rng, const ResamplingPolicy& policy = {},
                    const RegimeAssignment* regimes = nullptr);

/// Normalized first-stage APF weights: prior weight times the likelihood of
/// each particle's transition mean against y.
Vector apf_pilot_weights(const StateSpaceModel& model, const ParticleCloud& prev, ConstVectorRef y);

/// Auxiliary filter step. Pilot points are transition means; ancestors are
/// picked by pilot likelihood and the second-stage weight divides by the
/// pilot likelihood of the chosen ancestor.
StepResult apf_step(const StateSpaceModel& model, const ParticleCloud& prev, ConstVectorRef y,
                    RngStream& rng, const ResamplingPolicy& policy = {},
                    const RegimeAssignment* regimes = nullptr);

/// Log-weights of the predictive correction for propagated particles at time
/// k. With `y_next` absent the offspring part is identically zero.
PbpsLogWeights pbps_log_weights(const StateSpaceModel& model, int k, const Matrix& propagated,
                                const Vector& prior_log_weights, ConstVectorRef y,
                                const Vector* y_next, OffspringMode mode,
                                const RegimeAssignment* regimes, RngStream& rng);

/// Predictive bootstrap smoother step. Weights each propagated particle by
/// its own likelihood against y_k times its offspring's likelihood against
/// y_{k+1}, then resamples the time-k particles. At the horizon (`y_next`
/// null) it is exactly bpf_step.
StepResult pbps_step(const StateSpaceModel& model, const ParticleCloud& prev, ConstVectorRef y,
                     const Vector* y_next, RngStream& rng, OffspringMode mode = OffspringMode::deterministic_mean,
                     const ResamplingPolicy& policy = {}, const RegimeAssignment* regimes = nullptr);

/// One step of any particle filter: (previous cloud, k, y_k, y_{k+1} or null).
using StepFunction =
    std::function<StepResult(const ParticleCloud&, int, ConstVectorRef, const Vector*, RngStream&)>;

/// Shared outer loop: initialization, k = 1..K, timing and failure capture.
FilterOutput run_steps(std::span<const Vector> observations,
                       std::size_t n, RngStream& rng, bool keep_clouds,
                       const std::function<ParticleCloud(RngStream&)>& init, const StepFunction& step);

/// Runs BPF, APF or PBPS over y_1..y_K (observations[0] is y_1).
FilterOutput run_filter(const StateSpaceModel& model, std::span<const Vector> observations,
                        std::size_t n, const ParticleFilterOptions& options, RngStream& rng);

}  // namespace smc
