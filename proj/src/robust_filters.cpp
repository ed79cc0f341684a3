#include "smc/robust_filters.hpp"

#include <numeric>

namespace smc {

namespace {
using Index = Eigen::Index;
}

std::vector<std::size_t> draw_regime_labels(const RegimeSet& regimes, std::size_t n, RngStream& rng) {
    std::vector<std::size_t> idx(regimes.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) {
        l = uniform_choice(idx, rng);
    }
    return labels;
}

StepResult rs_step(const StateSpaceModel& family, const RegimeSet& regimes, const ParticleCloud& prev,
                   ConstVectorRef y, const Vector* y_next, FilterKind base, RngStream& rng,
                   OffspringMode offspring, const ResamplingPolicy& policy) {
    RegimeAssignment assignment{&regimes, draw_regime_labels(regimes, prev.size(), rng)};
    switch (base) {
        case FilterKind::apf:
            return apf_step(family, prev, y, rng, policy, &assignment);
        case FilterKind::pbps:
            return pbps_step(family, prev, y, y_next, rng, offspring, policy, &assignment);
        case FilterKind::bpf:
        default:
            return bpf_step(family, prev, y, rng, policy, &assignment);
    }
}

Vector dma_model_weights(const Vector& candidate_log_likelihoods, std::span<const std::size_t> labels,
                         std::size_t n_models, int k) {
    if (labels.size() != static_cast<std::size_t>(candidate_log_likelihoods.size())) {
        throw std::invalid_argument("dma_model_weights: label count mismatch");
    }
    // A common shift cancels in the final normalization.
    const Vector w = normalize_log_weights(candidate_log_likelihoods, k);
    Vector omega = Vector::Zero(static_cast<Index>(n_models));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        omega[static_cast<Index>(labels[i])] += w[static_cast<Index>(i)];
    }
    const double total = omega.sum();
    if (!(total > 0.0)) {
        throw DegeneracyError(k, "DMA model weights vanished at k=" + std::to_string(k));
    }
    return omega / total;
}

std::vector<std::size_t> allocate_models(const Vector& model_weights,
                                         std::span<const std::size_t> group_sizes, std::size_t n,
                                         RngStream& rng) {
    const auto n_models = static_cast<std::size_t>(model_weights.size());
    if (group_sizes.size() != n_models) {
        throw std::invalid_argument("allocate_models: group size count mismatch");
    }
    auto counts = multinomial_counts(std::span<const double>(model_weights.data(), n_models), n, rng);

    std::size_t orphaned = 0;
    Vector populated = Vector::Zero(static_cast<Index>(n_models));
    for (std::size_t l = 0; l < n_models; ++l) {
        if (group_sizes[l] == 0) {
            orphaned += counts[l];
            counts[l] = 0;
        } else {
            populated[static_cast<Index>(l)] = model_weights[static_cast<Index>(l)];
        }
    }
    if (orphaned > 0) {
        const double total = populated.sum();
        if (!(total > 0.0)) {
            throw DegeneracyError(-1, "allocate_models: no populated model has positive weight");
        }
        populated /= total;
        const auto extra = multinomial_counts(std::span<const double>(populated.data(), n_models), orphaned, rng);
        for (std::size_t l = 0; l < n_models; ++l) {
            counts[l] += extra[l];
        }
    }
    return counts;
}

StepResult dma_bpf_step(const StateSpaceModel& family, const RegimeSet& regimes,
                        const ParticleCloud& prev, ConstVectorRef y, RngStream& rng) {
    if (!prev.has_regimes() || prev.regimes.size() != prev.size()) {
        throw std::invalid_argument("dma_bpf_step: the cloud must carry one regime label per particle");
    }
    const int k = prev.k + 1;
    const std::size_t n = prev.size();
    const std::size_t n_models = regimes.size();

    // Candidate propagation under the current labels.
    RegimeAssignment current{&regimes, prev.regimes};
    const Matrix candidates = propagate(family, k, prev.particles, &current, rng);
    Vector ll(static_cast<Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<Index>(i);
        ll[c] = prev.log_weights[c] + family.log_likelihood(k, candidates.col(c), y);
    }

    const Vector omega = dma_model_weights(ll, prev.regimes, n_models, k);
    std::vector<std::vector<std::size_t>> members(n_models);
    for (std::size_t i = 0; i < n; ++i) {
        members[prev.regimes[i]].push_back(i);
    }
    std::vector<std::size_t> sizes(n_models);
    for (std::size_t l = 0; l < n_models; ++l) {
        sizes[l] = members[l].size();
    }
    const auto counts = allocate_models(omega, sizes, n, rng);

    // Within each model, ancestors are drawn by their own candidate likelihood.
    Matrix ancestors(prev.particles.rows(), static_cast<Index>(n));
    std::vector<std::size_t> labels;
    labels.reserve(n);
    Index slot = 0;
    for (std::size_t l = 0; l < n_models; ++l) {
        if (counts[l] == 0) {
            continue;
        }
        Vector group_ll(static_cast<Index>(members[l].size()));
        for (std::size_t j = 0; j < members[l].size(); ++j) {
            group_ll[static_cast<Index>(j)] = ll[static_cast<Index>(members[l][j])];
        }
        const Vector gw = normalize_log_weights(group_ll, k);
        const auto picks = multinomial_indices(std::span<const double>(gw.data(), members[l].size()),
                                               counts[l], rng);
        for (auto p : picks) {
            ancestors.col(slot++) = prev.particles.col(static_cast<Index>(members[l][p]));
            labels.push_back(l);
        }
    }

    RegimeAssignment next{&regimes, labels};
    StepResult out;
    out.cloud = ParticleCloud(k, propagate(family, k, ancestors, &next, rng));
    out.cloud.regimes = std::move(labels);
    out.estimate = out.cloud.particles.rowwise().mean();
    out.ess = effective_sample_size(normalize_log_weights(ll, k));
    return out;
}

std::vector<double> regime_frequencies(const ParticleCloud& cloud, std::size_t n_models) {
    std::vector<double> freq(n_models, 0.0);
    if (!cloud.has_regimes()) {
        return freq;
    }
    const Vector w = cloud.normalized_weights();
    for (std::size_t i = 0; i < cloud.regimes.size(); ++i) {
        freq[cloud.regimes[i]] += w[static_cast<Index>(i)];
    }
    return freq;
}

FilterOutput run_robust_filter(const StateSpaceModel& family, const RegimeSet& regimes,
                               std::span<const Vector> observations, std::size_t n,
                               const RobustFilterOptions& options, RngStream& rng) {
    std::vector<std::vector<double>> freqs;
    auto init = [&](RngStream& r) {
        ParticleCloud cloud = initial_cloud(family, n, r);
        if (options.kind == RobustKind::dma_bpf) {
            cloud.regimes = draw_regime_labels(regimes, n, r);
        }
        return cloud;
    };
    auto record = [&](StepResult r) {
        freqs.push_back(regime_frequencies(r.cloud, regimes.size()));
        return r;
    };
    StepFunction step;
    switch (options.kind) {
        case RobustKind::rs_bpf:
        case RobustKind::rs_apf:
        case RobustKind::rs_pbps: {
            const FilterKind base = options.kind == RobustKind::rs_bpf   ? FilterKind::bpf
                                    : options.kind == RobustKind::rs_apf ? FilterKind::apf
                                                                         : FilterKind::pbps;
            step = [&, base](const ParticleCloud& prev, int, ConstVectorRef y, const Vector* next, RngStream& r) {
                return record(rs_step(family, regimes, prev, y, next, base, r, options.offspring, options.resampling));
            };
            break;
        }
        case RobustKind::dma_bpf:
            step = [&](const ParticleCloud& prev, int, ConstVectorRef y, const Vector*, RngStream& r) {
                return record(dma_bpf_step(family, regimes, prev, y, r));
            };
            break;
    }
    FilterOutput out = run_steps(observations, n, rng, options.keep_clouds, init, step);
    out.regime_frequencies = std::move(freqs);
    return out;
}

}  // namespace smc
