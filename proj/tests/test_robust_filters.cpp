#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "smc/models.hpp"
#include "smc/robust_filters.hpp"

namespace {

using smc::ConstVectorRef;
using smc::Matrix;
using smc::ParticleCloud;
using smc::RngStream;
using smc::Vector;
using smc::VectorRef;

/// Deterministic dynamics x_k = x_{k-1} + regime, Gaussian unit observation.
class ShiftModel final : public smc::StateSpaceModel {
public:
    int state_dim() const override { return 1; }
    int obs_dim() const override { return 1; }
    void sample_initial(RngStream& rng, VectorRef out) const override { out[0] = rng.normal(); }
    void sample_transition(int, ConstVectorRef x, std::optional<double> regime, RngStream&,
                           VectorRef out) const override {
        out[0] = x[0] + regime.value_or(0.0);
    }
    void transition_mean(int, ConstVectorRef x, VectorRef out) const override { out[0] = x[0]; }
    double log_likelihood(int, ConstVectorRef x, ConstVectorRef y) const override {
        return -0.5 * (y[0] - x[0]) * (y[0] - x[0]);
    }
};

const std::vector<double> kDefaultRegimes{0.0005, 0.001, 0.003, 0.005};

ParticleCloud labeled_cloud(std::initializer_list<double> xs, std::vector<std::size_t> labels) {
    Matrix m(1, static_cast<Eigen::Index>(xs.size()));
    Eigen::Index j = 0;
    for (const double x : xs) {
        m(0, j++) = x;
    }
    ParticleCloud cloud(0, m);
    cloud.regimes = std::move(labels);
    return cloud;
}

TEST(RegimeLabels, UniformFrequencies) {
    const smc::RegimeSet regimes(kDefaultRegimes);
    RngStream rng(1);
    const auto labels = smc::draw_regime_labels(regimes, 10000, rng);
    std::vector<double> freq(4, 0.0);
    for (const auto l : labels) {
        ASSERT_LT(l, 4u);
        freq[l] += 1e-4;
    }
    for (const double f : freq) {
        EXPECT_NEAR(f, 0.25, 0.02);
    }
}

TEST(RsStep, SingletonSetMatchesBaseStep) {
    const smc::Model1 model;
    const smc::RegimeSet nominal({3.0});
    RngStream init(2);
    const ParticleCloud prev = smc::initial_cloud(model, 200, init);
    const Vector y = Vector::Constant(1, 2.5);
    const Vector y_next = Vector::Constant(1, 0.5);
    for (const auto base : {smc::FilterKind::bpf, smc::FilterKind::apf, smc::FilterKind::pbps}) {
        RngStream a(3);
        RngStream b(3);
        const auto rs = smc::rs_step(model, nominal, prev, y, &y_next, base, a);
        smc::StepResult plain;
        switch (base) {
            case smc::FilterKind::bpf:
                plain = smc::bpf_step(model, prev, y, b);
                break;
            case smc::FilterKind::apf:
                plain = smc::apf_step(model, prev, y, b);
                break;
            case smc::FilterKind::pbps:
                plain = smc::pbps_step(model, prev, y, &y_next, b);
                break;
        }
        EXPECT_EQ(rs.cloud.particles, plain.cloud.particles);
        EXPECT_EQ(rs.estimate, plain.estimate);
        EXPECT_TRUE(std::all_of(rs.cloud.regimes.begin(), rs.cloud.regimes.end(),
                                [](std::size_t l) { return l == 0; }));
    }
}

TEST(RsStep, LabelsStayInSet) {
    const smc::Model2 model;
    const smc::RegimeSet regimes(kDefaultRegimes);
    RngStream sim(4);
    smc::ScenarioSpec scenario;
    const auto traj = smc::simulate_model2({}, scenario, sim);
    for (const auto kind : {smc::RobustKind::rs_bpf, smc::RobustKind::rs_apf, smc::RobustKind::rs_pbps,
                            smc::RobustKind::dma_bpf}) {
        smc::RobustFilterOptions options;
        options.kind = kind;
        options.keep_clouds = true;
        RngStream rng(5);
        const auto out = smc::run_robust_filter(model, regimes, traj.observations, 300, options, rng);
        ASSERT_FALSE(out.failed) << out.failure;
        ASSERT_EQ(out.clouds.size(), 40u);
        ASSERT_EQ(out.regime_frequencies.size(), 40u);
        for (const auto& cloud : out.clouds) {
            ASSERT_EQ(cloud.size(), 300u);
            ASSERT_EQ(cloud.regimes.size(), 300u);
            EXPECT_TRUE(std::all_of(cloud.regimes.begin(), cloud.regimes.end(),
                                    [](std::size_t l) { return l < 4; }));
        }
        for (const auto& f : out.regime_frequencies) {
            EXPECT_NEAR(std::accumulate(f.begin(), f.end(), 0.0), 1.0, 1e-12);
        }
    }
}

TEST(RsStep, UnresampledLabelsKeepUniformFrequencies) {
    const ShiftModel model;
    const smc::RegimeSet regimes(kDefaultRegimes);
    RngStream init(6);
    const ParticleCloud prev = smc::initial_cloud(model, 10000, init);
    // Without resampling the drawn labels are carried as they are.
    smc::ResamplingPolicy never;
    never.ess_fraction = 0.0;
    RngStream rng(7);
    const auto step = smc::rs_step(model, regimes, prev, Vector::Constant(1, 0.0), nullptr,
                                   smc::FilterKind::bpf, rng, smc::OffspringMode::deterministic_mean, never);
    std::vector<double> count(4, 0.0);
    for (const auto l : step.cloud.regimes) {
        count[l] += 1e-4;
    }
    for (const double c : count) {
        EXPECT_NEAR(c, 0.25, 0.02);
    }
}

TEST(Dma, ModelWeightsAggregateByLabel) {
    const Vector ll = (Vector(4) << std::log(0.1), std::log(0.2), std::log(0.3), std::log(0.4)).finished();
    const std::vector<std::size_t> labels{0, 1, 0, 1};
    const Vector omega = smc::dma_model_weights(ll, labels, 2);
    EXPECT_NEAR(omega[0], 0.4, 1e-12);
    EXPECT_NEAR(omega[1], 0.6, 1e-12);
    const Vector shifted = smc::dma_model_weights((ll.array() - 700.0).matrix(), labels, 3);
    EXPECT_NEAR(shifted[0], 0.4, 1e-12);
    EXPECT_NEAR(shifted[1], 0.6, 1e-12);
    EXPECT_EQ(shifted[2], 0.0);
}

TEST(Dma, AllocationReassignsEmptyGroups) {
    RngStream rng(8);
    const Vector omega = (Vector(3) << 0.5, 0.5, 0.0).finished();
    const std::vector<std::size_t> sizes{0, 3, 2};
    for (int r = 0; r < 20; ++r) {
        EXPECT_EQ(smc::allocate_models(omega, sizes, 10, rng), (std::vector<std::size_t>{0, 10, 0}));
    }
    const Vector even = (Vector(2) << 0.25, 0.75).finished();
    const std::vector<std::size_t> both{2, 2};
    for (int r = 0; r < 20; ++r) {
        const auto c = smc::allocate_models(even, both, 7, rng);
        EXPECT_EQ(c[0] + c[1], 7u);
    }
}

TEST(Dma, TwoModelFourParticleHandCase) {
    const ShiftModel model;
    const smc::RegimeSet regimes({0.0, 3.0});
    const ParticleCloud prev = labeled_cloud({0.0, 1.0, 1.5, 2.0}, {0, 1, 0, 1});
    const double y = 2.5;
    // Candidates under the current labels.
    const std::vector<double> cand{0.0, 4.0, 1.5, 5.0};
    std::vector<double> lik(4);
    for (std::size_t i = 0; i < 4; ++i) {
        lik[i] = std::exp(-0.5 * (y - cand[i]) * (y - cand[i]));
    }
    const double total = std::accumulate(lik.begin(), lik.end(), 0.0);
    const double omega0 = (lik[0] + lik[2]) / total;

    Vector ll(4);
    for (int i = 0; i < 4; ++i) {
        ll[i] = model.log_likelihood(1, Vector::Constant(1, cand[static_cast<std::size_t>(i)]),
                                     Vector::Constant(1, y));
    }
    const Vector omega = smc::dma_model_weights(ll, prev.regimes, 2, 1);
    EXPECT_NEAR(omega[0], omega0, 1e-12);
    EXPECT_NEAR(omega[1], 1.0 - omega0, 1e-12);

    RngStream rng(9);
    const int reps = 20000;
    double label0 = 0.0;
    double within0 = 0.0;
    double n0 = 0.0;
    for (int r = 0; r < reps; ++r) {
        const auto step = smc::dma_bpf_step(model, regimes, prev, Vector::Constant(1, y), rng);
        ASSERT_EQ(step.cloud.size(), 4u);
        ASSERT_TRUE(step.cloud.uniform_weights());
        for (int j = 0; j < 4; ++j) {
            const auto l = step.cloud.regimes[static_cast<std::size_t>(j)];
            const double x = step.cloud.particles(0, j);
            // Re-propagating a group-l ancestor under label l reproduces a group-l candidate.
            if (l == 0) {
                ASSERT_TRUE(x == 0.0 || x == 1.5) << x;
                label0 += 1.0;
                n0 += 1.0;
                within0 += x == 1.5 ? 1.0 : 0.0;
            } else {
                ASSERT_TRUE(x == 4.0 || x == 5.0) << x;
            }
        }
    }
    EXPECT_NEAR(label0 / (4.0 * reps), omega0, 0.01);
    EXPECT_NEAR(within0 / n0, lik[2] / (lik[0] + lik[2]), 0.01);
}

TEST(Dma, SingleModelPreservesCountAndLabels) {
    const smc::Model1 model;
    const smc::RegimeSet regimes({3.0});
    RngStream sim(10);
    const auto traj = smc::simulate_model1({}, sim);
    smc::RobustFilterOptions options;
    options.kind = smc::RobustKind::dma_bpf;
    options.keep_clouds = true;
    RngStream rng(11);
    const auto out = smc::run_robust_filter(model, regimes, traj.observations, 250, options, rng);
    ASSERT_FALSE(out.failed);
    for (const auto& cloud : out.clouds) {
        EXPECT_EQ(cloud.size(), 250u);
        EXPECT_TRUE(std::all_of(cloud.regimes.begin(), cloud.regimes.end(), [](std::size_t l) { return l == 0; }));
    }
    for (const auto& f : out.regime_frequencies) {
        EXPECT_DOUBLE_EQ(f[0], 1.0);
    }
}

TEST(Dma, RequiresLabels) {
    const ShiftModel model;
    const smc::RegimeSet regimes({0.0, 1.0});
    RngStream rng(12);
    const ParticleCloud bare = smc::initial_cloud(model, 5, rng);
    EXPECT_THROW((void)smc::dma_bpf_step(model, regimes, bare, Vector::Zero(1), rng), std::invalid_argument);
}

}  // namespace
