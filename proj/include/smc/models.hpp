#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "smc/ssm.hpp"

namespace smc {

/// Ground truth X_0..X_K and observations Y_1..Y_K.
struct Trajectory {
    std::vector<Vector> states;
    std::vector<Vector> observations;

    [[nodiscard]] int horizon() const noexcept { return static_cast<int>(observations.size()); }
};

/// Trajectory dump: `k,x0..x{n-1},y0..y{d-1}`; the k=0 row has empty
/// observation fields.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& is, int state_dim);

// ---------------------------------------------------------------------------
// Linear-Gaussian test model

/// x_k = F x_{k-1} + s * w, w ~ N(0, Q); y_k = H x_k + v, v ~ N(0, R).
/// The scale s is 1 nominally and is replaced by the regime when one is given.
class LinearGaussianModel final : public StateSpaceModel, public GaussianStructure {
public:
    LinearGaussianModel(Matrix transition, Matrix process_cov, Matrix observation, Matrix obs_cov,
                        Vector initial_mean, Matrix initial_cov);

    [[nodiscard]] int state_dim() const override { return static_cast<int>(f_.rows()); }
    [[nodiscard]] int obs_dim() const override { return static_cast<int>(h_.rows()); }
    void sample_initial(RngStream& rng, VectorRef out) const override;
    void sample_transition(int k, ConstVectorRef x_prev, std::optional<double> regime, RngStream& rng,
                           VectorRef out) const override;
    void transition_mean(int k, ConstVectorRef x_prev, VectorRef out) const override;
    [[nodiscard]] double log_likelihood(int k, ConstVectorRef x, ConstVectorRef y) const override;

    [[nodiscard]] Vector mean_fn(int k, const Vector& x_prev) const override;
    [[nodiscard]] Matrix mean_jacobian(int k, const Vector& x_prev) const override;
    [[nodiscard]] Matrix process_cov(int k, const Vector& x_prev) const override;
    [[nodiscard]] Vector obs_fn(const Vector& x) const override;
    [[nodiscard]] Matrix obs_jacobian(const Vector& x) const override;
    [[nodiscard]] Matrix obs_cov() const override { return r_; }
    [[nodiscard]] Vector initial_mean() const override { return m0_; }
    [[nodiscard]] Matrix initial_cov() const override { return p0_; }

    [[nodiscard]] const Matrix& transition() const { return f_; }
    [[nodiscard]] const Matrix& observation() const { return h_; }

    Trajectory simulate(int horizon, RngStream& rng) const;

private:
    Matrix f_, q_, h_, r_, p0_;
    Vector m0_;
    Matrix q_root_, r_root_, p0_root_;
    Eigen::LLT<Matrix> r_llt_;
    double r_log_norm_ = 0.0;
};

// ---------------------------------------------------------------------------
// Model 1: scalar growth model observed through x^2 / 20

struct Model1Spec {
    int horizon = 50;
    double process_std = 3.0;
    double obs_std = 1.0;
    double initial_mean = 0.0;
    double initial_std = 1.0;
};

/// E[X_k | X_{k-1} = x] = x/2 + 25x/(1+x^2) + 8 cos(1.2 (k-1)).
double model1_mean(double x, int k);
/// d/dx of model1_mean.
double model1_mean_derivative(double x);
double model1_obs_mean(double x);

class Model1 final : public StateSpaceModel, public GaussianStructure {
public:
    explicit Model1(Model1Spec spec = {});

    [[nodiscard]] const Model1Spec& spec() const noexcept { return spec_; }

    [[nodiscard]] int state_dim() const override { return 1; }
    [[nodiscard]] int obs_dim() const override { return 1; }
    void sample_initial(RngStream& rng, VectorRef out) const override;
    void sample_transition(int k, ConstVectorRef x_prev, std::optional<double> regime, RngStream& rng,
                           VectorRef out) const override;
    void transition_mean(int k, ConstVectorRef x_prev, VectorRef out) const override;
    [[nodiscard]] double log_likelihood(int k, ConstVectorRef x, ConstVectorRef y) const override;

    [[nodiscard]] Vector mean_fn(int k, const Vector& x_prev) const override;
    [[nodiscard]] Matrix mean_jacobian(int k, const Vector& x_prev) const override;
    [[nodiscard]] Matrix process_cov(int k, const Vector& x_prev) const override;
    [[nodiscard]] Vector obs_fn(const Vector& x) const override;
    [[nodiscard]] Matrix obs_jacobian(const Vector& x) const override;
    [[nodiscard]] Matrix obs_cov() const override;
    [[nodiscard]] Vector initial_mean() const override;
    [[nodiscard]] Matrix initial_cov() const override;

private:
    Model1Spec spec_;
    double obs_var_;
};

Trajectory simulate_model1(const Model1Spec& spec, RngStream& rng);

// ---------------------------------------------------------------------------
// Model 2: constant-velocity target seen through wrapped-Cauchy bearings

class BearingError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct Model2Spec {
    int horizon = 40;
    double sigma_w = 0.001;
    double rho = 1.0 - 0.005 * 0.005;
    Vector initial_mean = (Vector(4) << -0.05, 0.2, 0.001, -0.055).finished();
    Matrix initial_cov =
        0.01 * Vector((Vector(4) << 0.5 * 0.5, 0.3 * 0.3, 0.005 * 0.005, 0.01 * 0.01).finished()).asDiagonal();
};

enum class TruthMode { stochastic, maneuvering_deterministic };

struct ScenarioSpec {
    bool turn = false;
    /// Defaults to floor(K / 2).
    std::optional<int> turn_time;
    double turn_angle = kPi / 3.0;
    TruthMode truth_mode = TruthMode::maneuvering_deterministic;
    /// Process-noise scale of the truth in stochastic mode.
    double truth_sigma_w = 0.001;

    [[nodiscard]] int resolved_turn_time(int horizon) const { return turn_time.value_or(horizon / 2); }
};

/// Constant-velocity transition matrix (positions advance by velocities).
Matrix model2_transition();
/// Noise input matrix mapping the 2-D acceleration noise into the state.
Matrix model2_noise_input();

/// Full-quadrant bearing atan2(x[0], x[1]) of the position, in [-pi, pi).
/// Throws BearingError at the origin.
double bearing(ConstVectorRef x);

class Model2 final : public StateSpaceModel {
public:
    explicit Model2(Model2Spec spec = {});

    [[nodiscard]] const Model2Spec& spec() const noexcept { return spec_; }

    [[nodiscard]] int state_dim() const override { return 4; }
    [[nodiscard]] int obs_dim() const override { return 1; }
    void sample_initial(RngStream& rng, VectorRef out) const override;
    void sample_transition(int k, ConstVectorRef x_prev, std::optional<double> regime, RngStream& rng,
                           VectorRef out) const override;
    void transition_mean(int k, ConstVectorRef x_prev, VectorRef out) const override;
    [[nodiscard]] double log_likelihood(int k, ConstVectorRef x, ConstVectorRef y) const override;

private:
    Model2Spec spec_;
    Matrix initial_root_;
    double log_norm_;
};

/// Gaussian stand-in for Model 2 so EKF/UKF can run on it: the bearing noise
/// is a wrapped normal with the same mean resultant length (variance -2 ln rho)
/// and innovations are wrapped into [-pi, pi).
class Model2GaussianApprox final : public GaussianStructure {
public:
    explicit Model2GaussianApprox(Model2Spec spec = {});

    [[nodiscard]] Vector mean_fn(int k, const Vector& x_prev) const override;
    [[nodiscard]] Matrix mean_jacobian(int k, const Vector& x_prev) const override;
    [[nodiscard]] Matrix process_cov(int k, const Vector& x_prev) const override;
    [[nodiscard]] Vector obs_fn(const Vector& x) const override;
    [[nodiscard]] Matrix obs_jacobian(const Vector& x) const override;
    [[nodiscard]] Matrix obs_cov() const override;
    [[nodiscard]] Vector innovation(const Vector& y, const Vector& predicted) const override;
    [[nodiscard]] Vector initial_mean() const override { return spec_.initial_mean; }
    [[nodiscard]] Matrix initial_cov() const override { return spec_.initial_cov; }

private:
    Model2Spec spec_;
    Matrix process_cov_;
};

Trajectory simulate_model2(const Model2Spec& spec, const ScenarioSpec& scenario, RngStream& rng);

}  // namespace smc
