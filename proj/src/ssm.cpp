#include "smc/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace smc {

RegimeSet::RegimeSet(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) {
        throw std::invalid_argument("RegimeSet: at least one regime is required");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw std::invalid_argument("RegimeSet: regime values must be finite");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (values_[i] == values_[j]) {
                throw std::invalid_argument(fmt::format("RegimeSet: duplicate regime {}", values_[i]));
            }
        }
    }
}

std::optional<std::size_t> RegimeSet::index_of(double value) const {
    for (std::size_t l = 0; l < values_.size(); ++l) {
        if (values_[l] == value) {
            return l;
        }
    }
    return std::nullopt;
}

ParticleCloud::ParticleCloud(int time_index, Matrix xs)
    : k(time_index), particles(std::move(xs)), log_weights(Vector::Zero(particles.cols())) {
    if (particles.cols() < 1) {
        throw std::invalid_argument("ParticleCloud: N must be at least 1");
    }
}

Vector ParticleCloud::normalized_weights() const { return normalize_log_weights(log_weights, k); }

bool ParticleCloud::uniform_weights() const {
    return log_weights.size() == 0 || (log_weights.array() == log_weights[0]).all();
}

Vector normalize_log_weights(const Vector& raw, int k) {
    if (raw.size() == 0) {
        throw std::invalid_argument("normalize_log_weights: empty weight vector");
    }
    const double top = raw.maxCoeff();
    if (std::isnan(top) || top == -std::numeric_limits<double>::infinity()) {
        throw DegeneracyError(k, fmt::format("all importance weights vanished at k={}", k));
    }
    if (top == std::numeric_limits<double>::infinity()) {
        throw DegeneracyError(k, fmt::format("infinite importance weight at k={}", k));
    }
    // Vectorized exp clamps very negative inputs, so -inf entries are zeroed explicitly.
    Vector w = (raw.array() == -std::numeric_limits<double>::infinity()).select(0.0, (raw.array() - top).exp());
    const double total = w.sum();
    if (!std::isfinite(total) || !(total > 0.0)) {
        throw DegeneracyError(k, fmt::format("weights cannot be normalized at k={}", k));
    }
    w /= total;
    return w;
}

std::vector<std::size_t> draw_ancestors(std::span<const double> weights, std::size_t n,
                                        ResamplingScheme scheme, RngStream& rng) {
    switch (scheme) {
        case ResamplingScheme::systematic:
            return systematic_indices(weights, n, rng);
        case ResamplingScheme::multinomial:
        default:
            return multinomial_indices(weights, n, rng);
    }
}

ParticleCloud resample(const ParticleCloud& cloud, RngStream& rng, ResamplingScheme scheme) {
    const Vector w = cloud.normalized_weights();
    const auto n = cloud.size();
    const auto ancestors = draw_ancestors(std::span<const double>(w.data(), n), n, scheme, rng);

    ParticleCloud out;
    out.k = cloud.k;
    out.particles.resize(cloud.particles.rows(), static_cast<Eigen::Index>(n));
    out.log_weights = Vector::Zero(static_cast<Eigen::Index>(n));
    if (cloud.has_regimes()) {
        out.regimes.resize(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = ancestors[i];
        out.particles.col(static_cast<Eigen::Index>(i)) = cloud.particles.col(static_cast<Eigen::Index>(a));
        if (cloud.has_regimes()) {
            out.regimes[i] = cloud.regimes[a];
        }
    }
    return out;
}

Vector weighted_mean(const Matrix& particles, const Vector& weights) {
    return particles * weights;
}

Vector posterior_mean(const ParticleCloud& cloud) {
    return weighted_mean(cloud.particles, cloud.normalized_weights());
}

double effective_sample_size(const Vector& weights) { return 1.0 / weights.squaredNorm(); }

double effective_sample_size(const ParticleCloud& cloud) {
    return effective_sample_size(cloud.normalized_weights());
}

void write_cloud_csv(std::ostream& os, const ParticleCloud& cloud, const RegimeSet* regimes,
                     bool header) {
    const int n = cloud.dim();
    if (header) {
        os << "k,i,weight";
        for (int d = 0; d < n; ++d) {
            os << ",x" << d;
        }
        if (cloud.has_regimes()) {
            os << ",regime";
        }
        os << '\n';
    }
    const Vector w = cloud.normalized_weights();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        fmt::print(os, "{},{},{}", cloud.k, i, w[col]);
        for (int d = 0; d < n; ++d) {
            fmt::print(os, ",{}", cloud.particles(d, col));
        }
        if (cloud.has_regimes()) {
            if (regimes != nullptr) {
                fmt::print(os, ",{}", (*regimes)[cloud.regimes[i]]);
            } else {
                fmt::print(os, ",{}", cloud.regimes[i]);
            }
        }
        os << '\n';
    }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

}  // namespace

ParticleCloud read_cloud_csv(std::istream& is, const RegimeSet* regimes) {
    std::string line;
    if (!std::getline(is, line)) {
        throw std::runtime_error("read_cloud_csv: missing header");
    }
    const auto head = split_csv(line);
    if (head.size() < 3 || head[0] != "k" || head[1] != "i" || head[2] != "weight") {
        throw std::runtime_error("read_cloud_csv: unexpected header '" + line + "'");
    }
    const bool labeled = head.back() == "regime";
    const int dim = static_cast<int>(head.size()) - 3 - (labeled ? 1 : 0);

    std::vector<std::vector<double>> cols;
    std::vector<double> weights;
    std::vector<std::size_t> labels;
    int k = 0;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv(line);
        if (f.size() != head.size()) {
            throw std::runtime_error("read_cloud_csv: ragged row '" + line + "'");
        }
        k = std::stoi(f[0]);
        weights.push_back(std::stod(f[2]));
        std::vector<double> x(static_cast<std::size_t>(dim));
        for (int d = 0; d < dim; ++d) {
            x[static_cast<std::size_t>(d)] = std::stod(f[3 + static_cast<std::size_t>(d)]);
        }
        cols.push_back(std::move(x));
        if (labeled) {
            const double v = std::stod(f.back());
            if (regimes != nullptr) {
                const auto idx = regimes->index_of(v);
                if (!idx) {
                    throw std::runtime_error("read_cloud_csv: regime value not in set");
                }
                labels.push_back(*idx);
            } else {
                labels.push_back(static_cast<std::size_t>(v));
            }
        }
    }
    Matrix xs(dim, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) {
        for (int d = 0; d < dim; ++d) {
            xs(d, static_cast<Eigen::Index>(i)) = cols[i][static_cast<std::size_t>(d)];
        }
    }
    ParticleCloud cloud(k, std::move(xs));
    for (std::size_t i = 0; i < weights.size(); ++i) {
        cloud.log_weights[static_cast<Eigen::Index>(i)] = std::log(weights[i]);
    }
    cloud.regimes = std::move(labels);
    return cloud;
}

}  // namespace smc
