#include "smc/particle_filters.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace smc {

namespace {

using Index = Eigen::Index;

Vector log_likelihoods(const StateSpaceModel& model, int k, const Matrix& xs, ConstVectorRef y) {
    Vector ll(xs.cols());
    for (Index i = 0; i < xs.cols(); ++i) {
        ll[i] = model.log_likelihood(k, xs.col(i), y);
    }
    return ll;
}

void check_regimes(const RegimeAssignment* regimes, std::size_t n) {
    if (regimes != nullptr && !regimes->labels.empty()) {
        if (regimes->set == nullptr || regimes->labels.size() != n) {
            throw std::invalid_argument("regime labels do not match the particle count");
        }
    }
}

// Normalizes `resampling_log_weights`, records the estimate and ESS, and
// either resamples or carries `filter_log_weights` forward.
StepResult finish_step(int k, Matrix particles, const Vector& resampling_log_weights,
                       const Vector& filter_log_weights, std::vector<std::size_t> labels,
                       const ResamplingPolicy& policy, RngStream& rng) {
    const Vector w = normalize_log_weights(resampling_log_weights, k);
    StepResult out;
    out.estimate = weighted_mean(particles, w);
    out.ess = effective_sample_size(w);

    const auto n = static_cast<std::size_t>(particles.cols());
    if (policy.every_step() || out.ess < policy.ess_fraction * static_cast<double>(n)) {
        const auto ancestors = draw_ancestors(std::span<const double>(w.data(), n), n, policy.scheme, rng);
        out.cloud.k = k;
        out.cloud.particles.resize(particles.rows(), particles.cols());
        out.cloud.log_weights = Vector::Zero(particles.cols());
        if (!labels.empty()) {
            out.cloud.regimes.resize(n);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto a = ancestors[i];
            out.cloud.particles.col(static_cast<Index>(i)) = particles.col(static_cast<Index>(a));
            if (!labels.empty()) {
                out.cloud.regimes[i] = labels[a];
            }
        }
    } else {
        out.cloud.k = k;
        out.cloud.particles = std::move(particles);
        // Keep the log-weights bounded across steps.
        out.cloud.log_weights = filter_log_weights.array() - filter_log_weights.maxCoeff();
        out.cloud.regimes = std::move(labels);
    }
    return out;
}

std::vector<std::size_t> labels_of(const RegimeAssignment* regimes) {
    return regimes == nullptr ? std::vector<std::size_t>{} : regimes->labels;
}

}  // namespace

ParticleCloud initial_cloud(const StateSpaceModel& model, std::size_t n, RngStream& rng) {
    if (n < 1) {
        throw std::invalid_argument("particle count must be at least 1");
    }
    Matrix xs(model.state_dim(), static_cast<Index>(n));
    for (Index i = 0; i < xs.cols(); ++i) {
        model.sample_initial(rng, xs.col(i));
    }
    return ParticleCloud(0, std::move(xs));
}

Matrix propagate(const StateSpaceModel& model, int k, const Matrix& prev,
                 const RegimeAssignment* regimes, RngStream& rng) {
    check_regimes(regimes, static_cast<std::size_t>(prev.cols()));
    Matrix next(prev.rows(), prev.cols());
    for (Index i = 0; i < prev.cols(); ++i) {
        const auto regime = regimes != nullptr ? regimes->value(static_cast<std::size_t>(i)) : std::nullopt;
        model.sample_transition(k, prev.col(i), regime, rng, next.col(i));
    }
    return next;
}

StepResult bpf_step(const StateSpaceModel& model, const ParticleCloud& prev, ConstVectorRef y,
                    RngStream& rng, const ResamplingPolicy& policy, const RegimeAssignment* regimes) {
    const int k = prev.k + 1;
    Matrix xs = propagate(model, k, prev.particles, regimes, rng);
    const Vector lw = prev.log_weights + log_likelihoods(model, k, xs, y);
    return finish_step(k, std::move(xs), lw, lw, labels_of(regimes), policy, rng);
}

namespace {

Vector pilot_log_likelihoods(const StateSpaceModel& model, int k, const Matrix& prev, ConstVectorRef y) {
    Vector pilot_ll(prev.cols());
    Vector pilot(prev.rows());
    for (Index i = 0; i < prev.cols(); ++i) {
        model.transition_mean(k, prev.col(i), pilot);
        pilot_ll[i] = model.log_likelihood(k, pilot, y);
    }
    return pilot_ll;
}

}  // namespace

Vector apf_pilot_weights(const StateSpaceModel& model, const ParticleCloud& prev, ConstVectorRef y) {
    const int k = prev.k + 1;
    return normalize_log_weights(prev.log_weights + pilot_log_likelihoods(model, k, prev.particles, y), k);
}

StepResult apf_step(const StateSpaceModel& model, const ParticleCloud& prev, ConstVectorRef y,
                    RngStream& rng, const ResamplingPolicy& policy, const RegimeAssignment* regimes) {
    const int k = prev.k + 1;
    const Index n = prev.particles.cols();
    check_regimes(regimes, static_cast<std::size_t>(n));

    // First stage: likelihood of the transition mean of each ancestor.
    const Vector pilot_ll = pilot_log_likelihoods(model, k, prev.particles, y);
    Vector first_stage;
    try {
        first_stage = normalize_log_weights(prev.log_weights + pilot_ll, k);
    } catch (const DegeneracyError&) {
        throw DegeneracyError(k, "APF pilot-stage weights vanished at k=" + std::to_string(k));
    }
    const auto ancestors = draw_ancestors(std::span<const double>(first_stage.data(), static_cast<std::size_t>(n)),
                                          static_cast<std::size_t>(n), policy.scheme, rng);

    Matrix xs(prev.particles.rows(), n);
    std::vector<std::size_t> labels;
    if (regimes != nullptr && !regimes->labels.empty()) {
        labels.resize(static_cast<std::size_t>(n));
    }
    Vector lw(n);
    for (Index i = 0; i < n; ++i) {
        const auto a = ancestors[static_cast<std::size_t>(i)];
        std::optional<double> regime;
        if (!labels.empty()) {
            labels[static_cast<std::size_t>(i)] = regimes->labels[a];
            regime = (*regimes->set)[regimes->labels[a]];
        }
        model.sample_transition(k, prev.particles.col(static_cast<Index>(a)), regime, rng, xs.col(i));
    }
    for (Index i = 0; i < n; ++i) {
        const auto a = static_cast<Index>(ancestors[static_cast<std::size_t>(i)]);
        lw[i] = model.log_likelihood(k, xs.col(i), y) - pilot_ll[a];
    }
    return finish_step(k, std::move(xs), lw, lw, std::move(labels), policy, rng);
}

PbpsLogWeights pbps_log_weights(const StateSpaceModel& model, int k, const Matrix& propagated,
                                const Vector& prior_log_weights, ConstVectorRef y,
                                const Vector* y_next, OffspringMode mode,
                                const RegimeAssignment* regimes, RngStream& rng) {
    const Index n = propagated.cols();
    PbpsLogWeights out;
    out.current = prior_log_weights + log_likelihoods(model, k, propagated, y);
    out.offspring = Vector::Zero(n);
    if (y_next != nullptr) {
        Vector child(propagated.rows());
        for (Index i = 0; i < n; ++i) {
            if (mode == OffspringMode::deterministic_mean) {
                model.transition_mean(k + 1, propagated.col(i), child);
            } else {
                const auto regime = regimes != nullptr ? regimes->value(static_cast<std::size_t>(i)) : std::nullopt;
                model.sample_transition(k + 1, propagated.col(i), regime, rng, child);
            }
            out.offspring[i] = model.log_likelihood(k + 1, child, *y_next);
        }
        const double top = out.offspring.maxCoeff();
        if (std::isfinite(top)) {
            out.offspring.array() -= top;
        }
    }
    out.combined = out.current + out.offspring;
    return out;
}

StepResult pbps_step(const StateSpaceModel& model, const ParticleCloud& prev, ConstVectorRef y,
                     const Vector* y_next, RngStream& rng, OffspringMode mode,
                     const ResamplingPolicy& policy, const RegimeAssignment* regimes) {
    const int k = prev.k + 1;
    Matrix xs = propagate(model, k, prev.particles, regimes, rng);
    const auto lw = pbps_log_weights(model, k, xs, prev.log_weights, y, y_next, mode, regimes, rng);
    return finish_step(k, std::move(xs), lw.combined, lw.current, labels_of(regimes), policy, rng);
}

FilterOutput run_steps(std::span<const Vector> observations,
                       std::size_t n, RngStream& rng, bool keep_clouds,
                       const std::function<ParticleCloud(RngStream&)>& init, const StepFunction& step) {
    if (observations.empty()) {
        throw std::invalid_argument("run_filter: at least one observation is required");
    }
    if (n < 1) {
        throw std::invalid_argument("run_filter: particle count must be at least 1");
    }
    FilterOutput out;
    out.estimates.reserve(observations.size());
    out.ess.reserve(observations.size());

    const auto start = std::chrono::steady_clock::now();
    try {
        ParticleCloud cloud = init(rng);
        const auto horizon = observations.size();
        for (std::size_t t = 0; t < horizon; ++t) {
            const int k = static_cast<int>(t) + 1;
            const Vector* next = t + 1 < horizon ? &observations[t + 1] : nullptr;
            StepResult r = step(cloud, k, observations[t], next, rng);
            out.estimates.push_back(std::move(r.estimate));
            out.ess.push_back(r.ess);
            cloud = std::move(r.cloud);
            if (keep_clouds) {
                out.clouds.push_back(cloud);
            }
        }
    } catch (const DegeneracyError& e) {
        out.failed = true;
        out.failed_k = e.k();
        out.failure = e.what();
    }
    const auto stop = std::chrono::steady_clock::now();
    out.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    return out;
}

FilterOutput run_filter(const StateSpaceModel& model, std::span<const Vector> observations,
                        std::size_t n, const ParticleFilterOptions& options, RngStream& rng) {
    auto init = [&](RngStream& r) { return initial_cloud(model, n, r); };
    StepFunction step;
    switch (options.kind) {
        case FilterKind::bpf:
            step = [&](const ParticleCloud& prev, int, ConstVectorRef y, const Vector*, RngStream& r) {
                return bpf_step(model, prev, y, r, options.resampling);
            };
            break;
        case FilterKind::apf:
            step = [&](const ParticleCloud& prev, int, ConstVectorRef y, const Vector*, RngStream& r) {
                return apf_step(model, prev, y, r, options.resampling);
            };
            break;
        case FilterKind::pbps:
            step = [&](const ParticleCloud& prev, int, ConstVectorRef y, const Vector* next, RngStream& r) {
                return pbps_step(model, prev, y, next, r, options.offspring, options.resampling);
            };
            break;
    }
    return run_steps(observations, n, rng, options.keep_clouds, init, step);
}

}  // namespace smc
