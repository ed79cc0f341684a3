#include "smc/models.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace smc {

// ---------------------------------------------------------------------------
// Trajectory CSV

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    if (traj.states.empty()) {
        throw std::invalid_argument("write_trajectory_csv: empty trajectory");
    }
    const auto n = traj.states.front().size();
    const auto d = traj.observations.empty() ? Eigen::Index{0} : traj.observations.front().size();
    os << 'k';
    for (Eigen::Index i = 0; i < n; ++i) {
        os << ",x" << i;
    }
    for (Eigen::Index j = 0; j < d; ++j) {
        os << ",y" << j;
    }
    os << '\n';
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        os << k;
        for (Eigen::Index i = 0; i < n; ++i) {
            fmt::print(os, ",{}", traj.states[k][i]);
        }
        for (Eigen::Index j = 0; j < d; ++j) {
            if (k == 0) {
                os << ',';
            } else {
                fmt::print(os, ",{}", traj.observations[k - 1][j]);
            }
        }
        os << '\n';
    }
}

Trajectory read_trajectory_csv(std::istream& is, int state_dim) {
    std::string line;
    if (!std::getline(is, line)) {
        throw std::runtime_error("read_trajectory_csv: missing header");
    }
    const auto columns = std::count(line.begin(), line.end(), ',') + 1;
    const int obs_dim = static_cast<int>(columns) - 1 - state_dim;
    if (obs_dim < 0) {
        throw std::runtime_error("read_trajectory_csv: header has too few columns");
    }
    Trajectory traj;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');
        const int k = std::stoi(field);
        Vector x(state_dim);
        for (int i = 0; i < state_dim; ++i) {
            std::getline(ss, field, ',');
            x[i] = std::stod(field);
        }
        traj.states.push_back(std::move(x));
        if (k > 0) {
            Vector y(obs_dim);
            for (int j = 0; j < obs_dim; ++j) {
                std::getline(ss, field, ',');
                y[j] = std::stod(field);
            }
            traj.observations.push_back(std::move(y));
        }
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Linear-Gaussian

LinearGaussianModel::LinearGaussianModel(Matrix transition, Matrix process_cov, Matrix observation,
                                         Matrix obs_cov, Vector initial_mean, Matrix initial_cov)
    : f_(std::move(transition)),
      q_(std::move(process_cov)),
      h_(std::move(observation)),
      r_(std::move(obs_cov)),
      p0_(std::move(initial_cov)),
      m0_(std::move(initial_mean)) {
    const auto n = f_.rows();
    if (f_.cols() != n || q_.rows() != n || q_.cols() != n || h_.cols() != n || r_.rows() != h_.rows() ||
        r_.cols() != h_.rows() || m0_.size() != n || p0_.rows() != n || p0_.cols() != n) {
        throw std::invalid_argument("LinearGaussianModel: inconsistent dimensions");
    }
    q_root_ = cholesky_factor(q_);
    r_root_ = cholesky_factor(r_);
    p0_root_ = cholesky_factor(p0_);
    r_llt_.compute(r_);
    if (r_llt_.info() != Eigen::Success) {
        throw std::invalid_argument("LinearGaussianModel: observation covariance must be positive definite");
    }
    r_log_norm_ = -0.5 * (static_cast<double>(r_.rows()) * std::log(kTwoPi) +
                          2.0 * r_llt_.matrixLLT().diagonal().array().log().sum());
}

void LinearGaussianModel::sample_initial(RngStream& rng, VectorRef out) const {
    out = gaussian_sample_factored(m0_, p0_root_, rng);
}

void LinearGaussianModel::sample_transition(int, ConstVectorRef x_prev, std::optional<double> regime,
                                            RngStream& rng, VectorRef out) const {
    const double scale = regime.value_or(1.0);
    Vector z(f_.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        z[i] = rng.normal();
    }
    out = f_ * x_prev + scale * (q_root_ * z);
}

void LinearGaussianModel::transition_mean(int, ConstVectorRef x_prev, VectorRef out) const {
    out = f_ * x_prev;
}

double LinearGaussianModel::log_likelihood(int, ConstVectorRef x, ConstVectorRef y) const {
    const Vector z = r_llt_.matrixL().solve(y - h_ * x);
    return r_log_norm_ - 0.5 * z.squaredNorm();
}

Vector LinearGaussianModel::mean_fn(int, const Vector& x_prev) const { return f_ * x_prev; }
Matrix LinearGaussianModel::mean_jacobian(int, const Vector&) const { return f_; }
Matrix LinearGaussianModel::process_cov(int, const Vector&) const { return q_; }
Vector LinearGaussianModel::obs_fn(const Vector& x) const { return h_ * x; }
Matrix LinearGaussianModel::obs_jacobian(const Vector&) const { return h_; }

Trajectory LinearGaussianModel::simulate(int horizon, RngStream& rng) const {
    Trajectory traj;
    Vector x(state_dim());
    sample_initial(rng, x);
    traj.states.push_back(x);
    for (int k = 1; k <= horizon; ++k) {
        Vector next(state_dim());
        sample_transition(k, x, std::nullopt, rng, next);
        x = next;
        traj.states.push_back(x);
        traj.observations.push_back(gaussian_sample_factored(h_ * x, r_root_, rng));
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Model 1

double model1_mean(double x, int k) {
    return 0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * std::cos(1.2 * static_cast<double>(k - 1));
}

double model1_mean_derivative(double x) {
    const double d = 1.0 + x * x;
    return 0.5 + 25.0 * (1.0 - x * x) / (d * d);
}

double model1_obs_mean(double x) { return x * x / 20.0; }

Model1::Model1(Model1Spec spec) : spec_(spec), obs_var_(spec.obs_std * spec.obs_std) {
    if (!(spec_.process_std >= 0.0) || !(spec_.obs_std > 0.0) || !(spec_.initial_std >= 0.0)) {
        throw std::invalid_argument("Model1: standard deviations must be positive");
    }
}

void Model1::sample_initial(RngStream& rng, VectorRef out) const {
    out[0] = spec_.initial_mean + spec_.initial_std * rng.normal();
}

void Model1::sample_transition(int k, ConstVectorRef x_prev, std::optional<double> regime, RngStream& rng,
                               VectorRef out) const {
    const double sd = regime.value_or(spec_.process_std);
    out[0] = model1_mean(x_prev[0], k) + sd * rng.normal();
}

void Model1::transition_mean(int k, ConstVectorRef x_prev, VectorRef out) const {
    out[0] = model1_mean(x_prev[0], k);
}

double Model1::log_likelihood(int, ConstVectorRef x, ConstVectorRef y) const {
    const double d = y[0] - model1_obs_mean(x[0]);
    return -0.5 * d * d / obs_var_;
}

Vector Model1::mean_fn(int k, const Vector& x_prev) const {
    return Vector::Constant(1, model1_mean(x_prev[0], k));
}

Matrix Model1::mean_jacobian(int, const Vector& x_prev) const {
    return Matrix::Constant(1, 1, model1_mean_derivative(x_prev[0]));
}

Matrix Model1::process_cov(int, const Vector&) const {
    return Matrix::Constant(1, 1, spec_.process_std * spec_.process_std);
}

Vector Model1::obs_fn(const Vector& x) const { return Vector::Constant(1, model1_obs_mean(x[0])); }

Matrix Model1::obs_jacobian(const Vector& x) const { return Matrix::Constant(1, 1, x[0] / 10.0); }

Matrix Model1::obs_cov() const { return Matrix::Constant(1, 1, obs_var_); }

Vector Model1::initial_mean() const { return Vector::Constant(1, spec_.initial_mean); }

Matrix Model1::initial_cov() const {
    return Matrix::Constant(1, 1, spec_.initial_std * spec_.initial_std);
}

Trajectory simulate_model1(const Model1Spec& spec, RngStream& rng) {
    Trajectory traj;
    double x = spec.initial_mean + spec.initial_std * rng.normal();
    traj.states.push_back(Vector::Constant(1, x));
    for (int k = 1; k <= spec.horizon; ++k) {
        x = model1_mean(x, k) + spec.process_std * rng.normal();
        traj.states.push_back(Vector::Constant(1, x));
        traj.observations.push_back(Vector::Constant(1, model1_obs_mean(x) + spec.obs_std * rng.normal()));
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Model 2

Matrix model2_transition() {
    Matrix f = Matrix::Identity(4, 4);
    f(0, 2) = 1.0;
    f(1, 3) = 1.0;
    return f;
}

Matrix model2_noise_input() {
    Matrix g = Matrix::Zero(4, 2);
    g(0, 0) = 0.5;
    g(1, 1) = 0.5;
    g(2, 0) = 1.0;
    g(3, 1) = 1.0;
    return g;
}

double bearing(ConstVectorRef x) {
    if (x[0] == 0.0 && x[1] == 0.0) {
        throw BearingError("bearing: undefined at the origin");
    }
    return wrap_angle(std::atan2(x[0], x[1]));
}

Model2::Model2(Model2Spec spec) : spec_(std::move(spec)) {
    if (!(spec_.rho >= 0.0 && spec_.rho < 1.0)) {
        throw std::invalid_argument("Model2: rho must lie in [0, 1)");
    }
    if (!(spec_.sigma_w >= 0.0)) {
        throw std::invalid_argument("Model2: sigma_w must be nonnegative");
    }
    initial_root_ = cholesky_factor(spec_.initial_cov);
    log_norm_ = std::log1p(-spec_.rho * spec_.rho) - std::log(kTwoPi);
}

void Model2::sample_initial(RngStream& rng, VectorRef out) const {
    out = gaussian_sample_factored(spec_.initial_mean, initial_root_, rng);
}

void Model2::sample_transition(int, ConstVectorRef x, std::optional<double> regime, RngStream& rng,
                               VectorRef out) const {
    const double s = regime.value_or(spec_.sigma_w);
    const double w0 = s * rng.normal();
    const double w1 = s * rng.normal();
    out[0] = x[0] + x[2] + 0.5 * w0;
    out[1] = x[1] + x[3] + 0.5 * w1;
    out[2] = x[2] + w0;
    out[3] = x[3] + w1;
}

void Model2::transition_mean(int, ConstVectorRef x, VectorRef out) const {
    out[0] = x[0] + x[2];
    out[1] = x[1] + x[3];
    out[2] = x[2];
    out[3] = x[3];
}

double Model2::log_likelihood(int, ConstVectorRef x, ConstVectorRef y) const {
    // sin^2(d/2) is 2*pi periodic, so the angle difference needs no wrapping.
    const double d = y[0] - std::atan2(x[0], x[1]);
    const double s = std::sin(0.5 * d);
    const double rho = spec_.rho;
    return log_norm_ - std::log((1.0 - rho) * (1.0 - rho) + 4.0 * rho * s * s);
}

Model2GaussianApprox::Model2GaussianApprox(Model2Spec spec) : spec_(std::move(spec)) {
    if (!(spec_.rho > 0.0 && spec_.rho < 1.0)) {
        throw std::invalid_argument("Model2GaussianApprox: rho must lie in (0, 1)");
    }
    const Matrix g = model2_noise_input();
    process_cov_ = spec_.sigma_w * spec_.sigma_w * g * g.transpose();
}

Vector Model2GaussianApprox::mean_fn(int, const Vector& x_prev) const { return model2_transition() * x_prev; }
Matrix Model2GaussianApprox::mean_jacobian(int, const Vector&) const { return model2_transition(); }
Matrix Model2GaussianApprox::process_cov(int, const Vector&) const { return process_cov_; }

Vector Model2GaussianApprox::obs_fn(const Vector& x) const {
    return Vector::Constant(1, wrap_angle(std::atan2(x[0], x[1])));
}

Matrix Model2GaussianApprox::obs_jacobian(const Vector& x) const {
    const double r2 = x[0] * x[0] + x[1] * x[1];
    Matrix h = Matrix::Zero(1, 4);
    if (r2 > 0.0) {
        h(0, 0) = x[1] / r2;
        h(0, 1) = -x[0] / r2;
    }
    return h;
}

Matrix Model2GaussianApprox::obs_cov() const {
    return Matrix::Constant(1, 1, -2.0 * std::log(spec_.rho));
}

Vector Model2GaussianApprox::innovation(const Vector& y, const Vector& predicted) const {
    return Vector::Constant(1, wrap_angle(y[0] - predicted[0]));
}

namespace {

Trajectory simulate_model2_once(const Model2Spec& spec, const ScenarioSpec& scenario, RngStream& rng) {
    const int turn_time = scenario.resolved_turn_time(spec.horizon);
    if (scenario.turn && (turn_time < 1 || turn_time > spec.horizon)) {
        throw std::invalid_argument("simulate_model2: turn_time must lie in [1, K]");
    }
    const Matrix root = cholesky_factor(spec.initial_cov);
    const Matrix g = model2_noise_input();
    const Matrix f = model2_transition();
    const double c = std::cos(scenario.turn_angle);
    const double s = std::sin(scenario.turn_angle);

    Trajectory traj;
    Vector x = gaussian_sample_factored(spec.initial_mean, root, rng);
    traj.states.push_back(x);
    for (int k = 1; k <= spec.horizon; ++k) {
        Vector next = f * x;
        if (scenario.truth_mode == TruthMode::stochastic) {
            Vector w(2);
            w[0] = rng.normal();
            w[1] = rng.normal();
            next += scenario.truth_sigma_w * (g * w);
        }
        if (scenario.turn && k == turn_time) {
            const double vx = next[2];
            const double vy = next[3];
            next[2] = c * vx - s * vy;
            next[3] = s * vx + c * vy;
        }
        x = next;
        traj.states.push_back(x);
        const WrappedCauchyParams noise(bearing(x), spec.rho);
        traj.observations.push_back(Vector::Constant(1, wrapped_cauchy_sample(noise, rng)));
    }
    return traj;
}

}  // namespace

Trajectory simulate_model2(const Model2Spec& spec, const ScenarioSpec& scenario, RngStream& rng) {
    constexpr int kMaxAttempts = 16;
    RngStream stream = rng;
    for (int attempt = 0;; ++attempt) {
        try {
            Trajectory traj = simulate_model2_once(spec, scenario, stream);
            rng = stream;
            return traj;
        } catch (const BearingError&) {
            if (attempt + 1 >= kMaxAttempts) {
                throw;
            }
            std::clog << "simulate_model2: trajectory crossed the observer, resimulating (attempt "
                      << attempt + 1 << ")\n";
            stream = rng.child(static_cast<std::uint64_t>(attempt));
        }
    }
}

}  // namespace smc
