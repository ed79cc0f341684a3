#pragma once

#include <span>
#include <vector>

#include "smc/particle_filters.hpp"

namespace smc {

enum class RobustKind { rs_bpf, rs_apf, rs_pbps, dma_bpf };

struct RobustFilterOptions {
    RobustKind kind = RobustKind::rs_pbps;
    OffspringMode offspring = OffspringMode::deterministic_mean;
    ResamplingPolicy resampling;
    bool keep_clouds = false;
};

/// i.i.d. uniform regime labels for n particles.
std::vector<std::size_t> draw_regime_labels(const RegimeSet& regimes, std::size_t n, RngStream& rng);

/// Regime-switching step: every particle gets a fresh uniform regime, then
/// the base filter step runs with those regimes. With a singleton set no
/// randomness is spent on labels and the result matches the base step.
StepResult rs_step(const StateSpaceModel& family, const RegimeSet& regimes, const ParticleCloud& prev,
                   ConstVectorRef y, const Vector* y_next, FilterKind base, RngStream& rng,
                   OffspringMode offspring = OffspringMode::deterministic_mean,
                   const ResamplingPolicy& policy = {});

/// Per-model aggregate weights of a labeled candidate cloud, normalized to
/// sum to one: omega_l proportional to sum of exp(ll_i) over particles with label l.
Vector dma_model_weights(const Vector& candidate_log_likelihoods, std::span<const std::size_t> labels,
                         std::size_t n_models, int k = -1);

/// Multinomial allocation of n slots to models. Slots landing on a model with
/// no member particles are moved to the populated models proportionally to
/// their weights. Counts always sum to n.
std::vector<std::size_t> allocate_models(const Vector& model_weights,
                                         std::span<const std::size_t> group_sizes, std::size_t n,
                                         RngStream& rng);

/// Dynamic model averaging step. `prev` must carry regime labels.
/// Output weights are uniform; the output labels are the allocated models.
StepResult dma_bpf_step(const StateSpaceModel& family, const RegimeSet& regimes,
                        const ParticleCloud& prev, ConstVectorRef y, RngStream& rng);

/// Label frequencies of a labeled cloud, in RegimeSet order.
std::vector<double> regime_frequencies(const ParticleCloud& cloud, std::size_t n_models);

FilterOutput run_robust_filter(const StateSpaceModel& family, const RegimeSet& regimes,
                               std::span<const Vector> observations, std::size_t n,
                               const RobustFilterOptions& options, RngStream& rng);

}  // namespace smc
