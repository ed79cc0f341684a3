#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smc/gaussian_filters.hpp"
#include "smc/models.hpp"
#include "smc/particle_filters.hpp"
#include "smc/robust_filters.hpp"

namespace smc {

enum class ModelKind { m1, m2 };

enum class FilterName { bpf, apf, pbps, rs_bpf, rs_apf, rs_pbps, dma_bpf, ekf, ukf };

std::string to_string(FilterName name);
FilterName parse_filter_name(const std::string& name);

struct FilterConfig {
    FilterName name = FilterName::bpf;
    /// Row label in the outputs; defaults to the canonical filter name.
    std::string label;
    /// Model 2 process-noise scale assumed by the filter.
    double sigma_w = 0.001;
    /// Regime set for RS-* and DMA-BPF. Model 2 defaults to {0.0005, 0.001, 0.003, 0.005}.
    std::vector<double> regimes;
    OffspringMode offspring = OffspringMode::deterministic_mean;
    ResamplingPolicy resampling;
    UTParams ut;
    /// Required to run EKF/UKF on model 2 (Gaussian stand-in for the bearing noise).
    bool gaussian_approximation = false;

    [[nodiscard]] bool is_gaussian() const noexcept {
        return name == FilterName::ekf || name == FilterName::ukf;
    }
    [[nodiscard]] bool is_robust() const noexcept;
};

struct ExperimentConfig {
    ModelKind model = ModelKind::m1;
    ScenarioSpec scenario;
    std::vector<FilterConfig> filters;
    std::vector<std::size_t> n_values;
    int trajectories = 1;  ///< S
    int repetitions = 1;   ///< R
    int horizon = 50;      ///< K
    std::uint64_t master_seed = 0;
    /// When false no wall-clock times are recorded (the time columns read 0),
    /// which makes every output file reproducible byte for byte.
    bool timing = true;
};

/// Parses the JSON config. Unknown keys and invalid values raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& config);

/// RMSE at one time index over the completed (s, r) runs.
struct RmseAtK {
    double value = 0.0;
    std::size_t completed = 0;
    std::size_t missing = 0;
};

/// estimates[s][r] is the run's state estimate at k, or nullopt if the run
/// failed; truths[s] is X_k of trajectory s. Each trajectory's mean squared
/// Euclidean error is averaged over its completed runs, then over the
/// trajectories with at least one completed run.
RmseAtK rmse_at_k(const std::vector<std::vector<std::optional<Vector>>>& estimates,
                  const std::vector<Vector>& truths);

double global_rmse(const std::vector<double>& rmse_k);

struct ReportRow {
    std::string filter;
    std::string model;
    std::string scenario;
    std::optional<double> sigma_w;
    std::size_t n = 0;  ///< 0 for EKF/UKF, which have no particles
    std::vector<double> rmse_k;
    double global_rmse = 0.0;
    double mean_wall_ms = 0.0;
    double median_wall_ms = 0.0;
    std::size_t runs = 0;
    std::size_t failures = 0;
};

struct RMSEReport {
    std::vector<ReportRow> rows;

    [[nodiscard]] const ReportRow* find(const std::string& filter, std::size_t n) const;
};

/// Runs the full sweep on `workers` threads. Output is independent of the
/// worker count and of scheduling.
RMSEReport run_experiment(const ExperimentConfig& config, unsigned workers = 1);

inline constexpr const char* kSummaryHeader =
    "filter,model,scenario,sigma_w,N,global_rmse,mean_wall_ms,failures";
inline constexpr const char* kRmseByKHeader = "filter,model,scenario,sigma_w,N,k,rmse_k";
inline constexpr const char* kTimingHeader =
    "filter,model,scenario,sigma_w,N,runs,mean_wall_ms,median_wall_ms";

/// Writes summary.csv, rmse_by_k.csv, timing.csv and plot_results.py.
void emit_outputs(const RMSEReport& report, const std::filesystem::path& out_dir);

/// The matplotlib script emit_outputs writes next to the CSVs.
std::string plot_script();

/// Reads rmse_by_k.csv back into report rows (rmse_k only).
RMSEReport read_rmse_by_k(const std::filesystem::path& path);

}  // namespace smc
