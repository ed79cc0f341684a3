#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "smc/gaussian_filters.hpp"
#include "smc/models.hpp"
#include "smc/particle_filters.hpp"

namespace {

using smc::ConstVectorRef;
using smc::Matrix;
using smc::ParticleCloud;
using smc::RngStream;
using smc::Vector;
using smc::VectorRef;

/// Scalar random walk whose observation is informative only at the listed
/// time indices; elsewhere the likelihood is flat. A likelihood of -inf
/// everywhere can be forced at one time index.
class SwitchedModel final : public smc::StateSpaceModel {
public:
    explicit SwitchedModel(std::vector<int> informative, int dead_k = -1)
        : informative_(std::move(informative)), dead_k_(dead_k) {}

    int state_dim() const override { return 1; }
    int obs_dim() const override { return 1; }
    void sample_initial(RngStream& rng, VectorRef out) const override { out[0] = rng.normal(); }
    void sample_transition(int, ConstVectorRef x, std::optional<double> regime, RngStream& rng,
                           VectorRef out) const override {
        out[0] = 0.8 * x[0] + regime.value_or(1.0) * rng.normal();
    }
    void transition_mean(int, ConstVectorRef x, VectorRef out) const override { out[0] = 0.8 * x[0]; }
    double log_likelihood(int k, ConstVectorRef x, ConstVectorRef y) const override {
        if (k == dead_k_) {
            return -std::numeric_limits<double>::infinity();
        }
        for (const int i : informative_) {
            if (i == k) {
                return -0.5 * (y[0] - x[0]) * (y[0] - x[0]);
            }
        }
        return 0.0;
    }

private:
    std::vector<int> informative_;
    int dead_k_;
};

std::vector<Vector> scalar_observations(std::initializer_list<double> ys) {
    std::vector<Vector> out;
    for (const double y : ys) {
        out.push_back(Vector::Constant(1, y));
    }
    return out;
}

ParticleCloud scalar_cloud(int k, std::initializer_list<double> xs) {
    Matrix m(1, static_cast<Eigen::Index>(xs.size()));
    Eigen::Index j = 0;
    for (const double x : xs) {
        m(0, j++) = x;
    }
    return ParticleCloud(k, m);
}

smc::LinearGaussianModel scalar_linear_model() {
    return smc::LinearGaussianModel(Matrix::Constant(1, 1, 0.9), Matrix::Constant(1, 1, 1.0),
                                    Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0),
                                    Vector::Zero(1), Matrix::Constant(1, 1, 1.0));
}

TEST(Bpf, FlatLikelihoodGivesUniformWeightsAndPlainMean) {
    const SwitchedModel model({});
    RngStream rng(1);
    const ParticleCloud prev = smc::initial_cloud(model, 500, rng);
    RngStream a(2);
    RngStream b(2);
    smc::ResamplingPolicy never;
    never.ess_fraction = 0.0;
    const auto step = smc::bpf_step(model, prev, Vector::Constant(1, 3.0), a, never);
    const Matrix xs = smc::propagate(model, 1, prev.particles, nullptr, b);
    EXPECT_TRUE(step.cloud.uniform_weights());
    EXPECT_EQ(step.cloud.particles, xs);
    EXPECT_NEAR(step.estimate[0], xs.mean(), 1e-12);
    EXPECT_NEAR(step.ess, 500.0, 1e-9);
}

TEST(Bpf, WeightsMultiplyPriorByLikelihood) {
    const SwitchedModel model({1});
    RngStream rng(3);
    ParticleCloud prev = smc::initial_cloud(model, 50, rng);
    for (int i = 0; i < 50; ++i) {
        prev.log_weights[i] = 0.1 * i;
    }
    smc::ResamplingPolicy never;
    never.ess_fraction = 0.0;
    const double y = 0.7;
    const auto step = smc::bpf_step(model, prev, Vector::Constant(1, y), rng, never);
    Vector oracle(50);
    for (int i = 0; i < 50; ++i) {
        const double d = y - step.cloud.particles(0, i);
        oracle[i] = std::exp(0.1 * i) * std::exp(-0.5 * d * d);
    }
    oracle /= oracle.sum();
    EXPECT_LT((step.cloud.normalized_weights() - oracle).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(step.estimate[0], oracle.dot(step.cloud.particles.row(0).transpose()), 1e-12);
}

TEST(Bpf, SingleParticleAndSingleStep) {
    const auto model = scalar_linear_model();
    const auto ys = scalar_observations({0.4});
    RngStream rng(4);
    const auto out = smc::run_filter(model, ys, 1, {}, rng);
    ASSERT_FALSE(out.failed);
    ASSERT_EQ(out.estimates.size(), 1u);
    EXPECT_TRUE(std::isfinite(out.estimates[0][0]));
    EXPECT_EQ(out.ess[0], 1.0);
}

TEST(RunFilter, SameSeedSameOutput) {
    const smc::Model1 model;
    RngStream sim(5);
    const auto traj = smc::simulate_model1({}, sim);
    for (const auto kind : {smc::FilterKind::bpf, smc::FilterKind::apf, smc::FilterKind::pbps}) {
        smc::ParticleFilterOptions options;
        options.kind = kind;
        RngStream a(6);
        RngStream b(6);
        const auto x = smc::run_filter(model, traj.observations, 200, options, a);
        const auto y = smc::run_filter(model, traj.observations, 200, options, b);
        ASSERT_EQ(x.estimates.size(), 50u);
        EXPECT_EQ(x.estimates, y.estimates);
        EXPECT_EQ(x.ess, y.ess);
        EXPECT_GT(x.wall_ms, 0.0);
    }
}

TEST(RunFilter, KeepsCloudsOnRequest) {
    const auto model = scalar_linear_model();
    const auto ys = scalar_observations({0.1, 0.2, 0.3});
    smc::ParticleFilterOptions options;
    options.keep_clouds = true;
    RngStream rng(7);
    const auto out = smc::run_filter(model, ys, 20, options, rng);
    ASSERT_EQ(out.clouds.size(), 3u);
    EXPECT_EQ(out.clouds[2].k, 3);
    EXPECT_EQ(out.clouds[2].size(), 20u);
}

TEST(RunFilter, DegeneracyIsReportedWithTimeIndex) {
    const SwitchedModel model({1, 2, 3, 4}, 3);
    const auto ys = scalar_observations({0.0, 0.0, 0.0, 0.0});
    for (const auto kind : {smc::FilterKind::bpf, smc::FilterKind::apf, smc::FilterKind::pbps}) {
        smc::ParticleFilterOptions options;
        options.kind = kind;
        RngStream rng(8);
        const auto out = smc::run_filter(model, ys, 30, options, rng);
        EXPECT_TRUE(out.failed);
        EXPECT_EQ(out.failed_k, kind == smc::FilterKind::pbps ? 2 : 3);
        EXPECT_EQ(out.estimates.size(), static_cast<std::size_t>(out.failed_k - 1));
        EXPECT_FALSE(out.failure.empty());
    }
}

TEST(Pbps, ReducesToBpfWhenNextLikelihoodIsFlat) {
    const SwitchedModel model({1});
    RngStream init(9);
    const ParticleCloud prev = smc::initial_cloud(model, 300, init);
    const Vector y = Vector::Constant(1, 1.1);
    const Vector y_next = Vector::Constant(1, -4.0);
    RngStream a(10);
    RngStream b(10);
    const auto p = smc::pbps_step(model, prev, y, &y_next, a);
    const auto q = smc::bpf_step(model, prev, y, b);
    EXPECT_EQ(p.cloud.particles, q.cloud.particles);
    EXPECT_EQ(p.estimate, q.estimate);
    EXPECT_EQ(p.ess, q.ess);
}

TEST(Pbps, EqualsBpfAtHorizon) {
    const smc::Model1 model;
    RngStream init(11);
    const ParticleCloud prev = smc::initial_cloud(model, 300, init);
    const Vector y = Vector::Constant(1, 2.0);
    RngStream a(12);
    RngStream b(12);
    const auto p = smc::pbps_step(model, prev, y, nullptr, a);
    const auto q = smc::bpf_step(model, prev, y, b);
    EXPECT_EQ(p.cloud.particles, q.cloud.particles);
    EXPECT_EQ(p.estimate, q.estimate);
}

TEST(Pbps, SingleStepHorizonMatchesBpfRun) {
    const smc::Model1 model;
    const auto ys = scalar_observations({3.0});
    smc::ParticleFilterOptions bpf;
    smc::ParticleFilterOptions pbps;
    pbps.kind = smc::FilterKind::pbps;
    RngStream a(13);
    RngStream b(13);
    EXPECT_EQ(smc::run_filter(model, ys, 100, pbps, a).estimates,
              smc::run_filter(model, ys, 100, bpf, b).estimates);
}

TEST(Pbps, TwoParticleHandCase) {
    const smc::Model1 model;
    const Matrix xs = scalar_cloud(1, {-5.0, 5.0}).particles;
    const Vector y = Vector::Constant(1, 1.25);
    const Vector y_next = Vector::Constant(1, 1.0);
    RngStream rng(14);
    const auto lw = smc::pbps_log_weights(model, 1, xs, Vector::Zero(2), y, &y_next,
                                          smc::OffspringMode::deterministic_mean, nullptr, rng);
    // Both particles explain y equally; the offspring means decide.
    const double c = 8.0 * std::cos(1.2);
    const double m_lo = -2.5 - 125.0 / 26.0 + c;
    const double m_hi = 2.5 + 125.0 / 26.0 + c;
    const double l_lo = std::exp(-0.5 * std::pow(1.0 - m_lo * m_lo / 20.0, 2));
    const double l_hi = std::exp(-0.5 * std::pow(1.0 - m_hi * m_hi / 20.0, 2));
    const Vector w = smc::normalize_log_weights(lw.combined);
    EXPECT_NEAR(w[0], l_lo / (l_lo + l_hi), 1e-12);
    EXPECT_NEAR(w[1], l_hi / (l_lo + l_hi), 1e-12);
    EXPECT_NEAR(lw.current[0], lw.current[1], 1e-15);
    EXPECT_EQ(lw.combined, lw.current + lw.offspring);
    EXPECT_EQ(lw.offspring.maxCoeff(), 0.0);
}

TEST(Pbps, DeterministicOffspringSpendsNoRandomness) {
    const smc::Model1 model;
    RngStream init(15);
    const Matrix xs = smc::initial_cloud(model, 40, init).particles;
    const Vector y = Vector::Constant(1, 0.5);
    const Vector y_next = Vector::Constant(1, 2.0);
    RngStream a(16);
    RngStream b(16);
    (void)smc::pbps_log_weights(model, 1, xs, Vector::Zero(40), y, &y_next,
                                smc::OffspringMode::deterministic_mean, nullptr, a);
    EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Pbps, StochasticOffspringWeightsAreFinite) {
    const smc::Model1 model;
    RngStream rng(17);
    const auto traj = smc::simulate_model1({}, rng);
    smc::ParticleFilterOptions options;
    options.kind = smc::FilterKind::pbps;
    options.offspring = smc::OffspringMode::stochastic;
    const auto out = smc::run_filter(model, traj.observations, 500, options, rng);
    ASSERT_FALSE(out.failed);
    for (const auto& e : out.estimates) {
        EXPECT_TRUE(std::isfinite(e[0]));
    }
}

TEST(Apf, PilotWeightsMatchEnumeration) {
    const smc::Model1 model;
    ParticleCloud prev = scalar_cloud(0, {-5.0, 5.0});
    prev.log_weights << std::log(0.3), std::log(0.7);
    const double y = 4.0;
    const Vector w = smc::apf_pilot_weights(model, prev, Vector::Constant(1, y));
    const double m_lo = smc::model1_mean(-5.0, 1);
    const double m_hi = smc::model1_mean(5.0, 1);
    const double a = 0.3 * std::exp(smc::gaussian_logpdf(y, m_lo * m_lo / 20.0, 1.0));
    const double b = 0.7 * std::exp(smc::gaussian_logpdf(y, m_hi * m_hi / 20.0, 1.0));
    EXPECT_NEAR(w[0], a / (a + b), 1e-12);
    EXPECT_NEAR(w[1], b / (a + b), 1e-12);
}

TEST(Apf, SecondStageCancelsPilotWhenTransitionIsDeterministic) {
    // With zero process noise every particle sits on its pilot point, so the
    // second-stage weight psi(x) / psi(pilot) is exactly one.
    const SwitchedModel model({1});
    const ParticleCloud prev = scalar_cloud(0, {-1.0, 2.0, 0.5});
    const smc::RegimeSet still({0.0});
    const smc::RegimeAssignment regimes{&still, {0, 0, 0}};
    smc::ResamplingPolicy never;
    never.ess_fraction = 0.0;
    RngStream rng(18);
    const auto step = smc::apf_step(model, prev, Vector::Constant(1, 1.5), rng, never, &regimes);
    EXPECT_TRUE(step.cloud.uniform_weights());
    for (int i = 0; i < 3; ++i) {
        const double x = step.cloud.particles(0, i);
        EXPECT_TRUE(x == -0.8 || x == 1.6 || x == 0.4) << x;
    }
    EXPECT_NEAR(step.ess, 3.0, 1e-12);
}

TEST(ParticleFilters, AgreeWithKalmanOnLinearModel) {
    const auto model = scalar_linear_model();
    RngStream sim(19);
    const auto traj = model.simulate(10, sim);
    std::vector<smc::GaussianBelief> kf;
    smc::GaussianBelief belief{Vector::Zero(1), Matrix::Constant(1, 1, 1.0), 0};
    for (const auto& y : traj.observations) {
        belief = smc::kalman_step(model.transition(), model.process_cov(0, belief.mean), model.observation(),
                                  model.obs_cov(), belief, y);
        kf.push_back(belief);
    }
    const std::size_t n = 20000;
    for (const auto kind : {smc::FilterKind::bpf, smc::FilterKind::apf}) {
        smc::ParticleFilterOptions options;
        options.kind = kind;
        RngStream rng(20);
        const auto out = smc::run_filter(model, traj.observations, n, options, rng);
        ASSERT_FALSE(out.failed);
        for (std::size_t k = 0; k < kf.size(); ++k) {
            const double se = std::sqrt(kf[k].cov(0, 0) / static_cast<double>(n));
            EXPECT_NEAR(out.estimates[k][0], kf[k].mean[0], 6.0 * se) << "kind=" << static_cast<int>(kind) << " k=" << k + 1;
        }
    }
}

// Large-N limit of PBPS on a linear-Gaussian model. The resampled cloud stays
// Gaussian, and the combined weight is a Gaussian likelihood of the stacked
// observation (y_k, y_{k+1}) with rows (H, HF). Deterministic offspring use
// noise R on the second row; stochastic offspring integrate to HQH' + R.
std::vector<smc::GaussianBelief> pbps_limit(const smc::LinearGaussianModel& model, const std::vector<Vector>& ys,
                                            smc::OffspringMode mode) {
    const Matrix f = model.transition();
    const Matrix q = model.process_cov(0, Vector::Zero(1));
    const Matrix h = model.observation();
    const Matrix r = model.obs_cov();
    const Matrix r_next = mode == smc::OffspringMode::stochastic ? Matrix(h * q * h.transpose() + r) : r;
    std::vector<smc::GaussianBelief> out;
    smc::GaussianBelief belief{Vector::Zero(1), Matrix::Constant(1, 1, 1.0), 0};
    for (std::size_t k = 0; k < ys.size(); ++k) {
        if (k + 1 == ys.size()) {
            belief = smc::kalman_step(f, q, h, r, belief, ys[k]);
        } else {
            const Matrix hs = (Matrix(2, 1) << h(0, 0), h(0, 0) * f(0, 0)).finished();
            const Matrix rs = (Matrix(2, 2) << r(0, 0), 0.0, 0.0, r_next(0, 0)).finished();
            const Vector ys2 = (Vector(2) << ys[k][0], ys[k + 1][0]).finished();
            belief = smc::kalman_step(f, q, hs, rs, belief, ys2);
        }
        out.push_back(belief);
    }
    return out;
}

TEST(Pbps, AgreesWithGaussianLimitOnLinearModel) {
    const auto model = scalar_linear_model();
    RngStream sim(19);
    const auto traj = model.simulate(10, sim);
    const std::size_t n = 20000;
    for (const auto mode : {smc::OffspringMode::deterministic_mean, smc::OffspringMode::stochastic}) {
        const auto limit = pbps_limit(model, traj.observations, mode);
        smc::ParticleFilterOptions options;
        options.kind = smc::FilterKind::pbps;
        options.offspring = mode;
        RngStream rng(20);
        const auto out = smc::run_filter(model, traj.observations, n, options, rng);
        ASSERT_FALSE(out.failed);
        for (std::size_t k = 0; k < limit.size(); ++k) {
            const double se = std::sqrt(limit[k].cov(0, 0) / static_cast<double>(n));
            EXPECT_NEAR(out.estimates[k][0], limit[k].mean[0], 6.0 * se)
                << "mode=" << static_cast<int>(mode) << " k=" << k + 1;
        }
    }
}

TEST(Pbps, EstimateLeansOnTheNextObservation) {
    // PBPS weights include y_{k+1}, so it is not a filter for X_k given y_{1:k}.
    const auto model = scalar_linear_model();
    const auto ys = scalar_observations({0.0, 6.0});
    RngStream rng(21);
    smc::ParticleFilterOptions options;
    options.kind = smc::FilterKind::pbps;
    const auto out = smc::run_filter(model, ys, 20000, options, rng);
    ASSERT_FALSE(out.failed);
    const auto limit = pbps_limit(model, ys, smc::OffspringMode::deterministic_mean);
    EXPECT_GT(out.estimates[0][0], 1.0);
    EXPECT_NEAR(out.estimates[0][0], limit[0].mean[0], 0.05);
}

}  // namespace
