#include "smc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace smc {

namespace {

using json = nlohmann::json;

const std::vector<double> kDefaultRegimes = {0.0005, 0.001, 0.003, 0.005};

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (allowed.count(key) == 0) {
            throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
        }
    }
}

template <typename T>
T get_as(const json& j, const std::string& key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("{}: bad value for '{}': {}", where, key, e.what()));
    }
}

int positive_int(const json& j, const std::string& key) {
    const auto v = get_as<long long>(j, key, "config");
    if (v < 1 || v > std::numeric_limits<int>::max()) {
        throw ConfigError(fmt::format("config: '{}' must be a positive integer", key));
    }
    return static_cast<int>(v);
}

FilterConfig parse_filter(const json& j, std::size_t index) {
    const std::string where = fmt::format("filters[{}]", index);
    if (j.is_string()) {
        FilterConfig f;
        f.name = parse_filter_name(j.get<std::string>());
        f.label = to_string(f.name);
        return f;
    }
    reject_unknown_keys(j,
                        {"name", "label", "sigma_w", "regimes", "offspring", "resampling", "ess_threshold",
                         "ut", "gaussian_approximation"},
                        where);
    FilterConfig f;
    if (!j.contains("name")) {
        throw ConfigError(where + ": missing 'name'");
    }
    f.name = parse_filter_name(get_as<std::string>(j, "name", where));
    f.label = j.contains("label") ? get_as<std::string>(j, "label", where) : to_string(f.name);
    if (j.contains("sigma_w")) {
        f.sigma_w = get_as<double>(j, "sigma_w", where);
    }
    if (j.contains("regimes")) {
        f.regimes = get_as<std::vector<double>>(j, "regimes", where);
    }
    if (j.contains("offspring")) {
        const auto mode = get_as<std::string>(j, "offspring", where);
        if (mode == "deterministic" || mode == "deterministic-mean") {
            f.offspring = OffspringMode::deterministic_mean;
        } else if (mode == "stochastic") {
            f.offspring = OffspringMode::stochastic;
        } else {
            throw ConfigError(where + ": offspring must be 'deterministic' or 'stochastic'");
        }
    }
    if (j.contains("resampling")) {
        const auto scheme = get_as<std::string>(j, "resampling", where);
        if (scheme == "multinomial") {
            f.resampling.scheme = ResamplingScheme::multinomial;
        } else if (scheme == "systematic") {
            f.resampling.scheme = ResamplingScheme::systematic;
        } else {
            throw ConfigError(where + ": resampling must be 'multinomial' or 'systematic'");
        }
    }
    if (j.contains("ess_threshold")) {
        f.resampling.ess_fraction = get_as<double>(j, "ess_threshold", where);
    }
    if (j.contains("ut")) {
        const auto& ut = j.at("ut");
        reject_unknown_keys(ut, {"alpha", "beta", "kappa"}, where + ".ut");
        if (ut.contains("alpha")) {
            f.ut.alpha = get_as<double>(ut, "alpha", where + ".ut");
        }
        if (ut.contains("beta")) {
            f.ut.beta = get_as<double>(ut, "beta", where + ".ut");
        }
        if (ut.contains("kappa")) {
            f.ut.kappa = get_as<double>(ut, "kappa", where + ".ut");
        }
    }
    if (j.contains("gaussian_approximation")) {
        f.gaussian_approximation = get_as<bool>(j, "gaussian_approximation", where);
    }
    return f;
}

std::string scenario_name(const ExperimentConfig& c) {
    if (c.model == ModelKind::m1) {
        return "none";
    }
    return c.scenario.turn ? "turn" : "straight";
}

std::string fmt_optional(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

RobustKind robust_kind(FilterName n) {
    switch (n) {
        case FilterName::rs_bpf:
            return RobustKind::rs_bpf;
        case FilterName::rs_apf:
            return RobustKind::rs_apf;
        case FilterName::rs_pbps:
            return RobustKind::rs_pbps;
        default:
            return RobustKind::dma_bpf;
    }
}

FilterKind base_kind(FilterName n) {
    switch (n) {
        case FilterName::apf:
            return FilterKind::apf;
        case FilterName::pbps:
            return FilterKind::pbps;
        default:
            return FilterKind::bpf;
    }
}

// Everything one filter entry needs at run time.
struct PreparedFilter {
    FilterConfig config;
    std::unique_ptr<StateSpaceModel> model;
    std::unique_ptr<GaussianStructure> gaussian;
    std::optional<RegimeSet> regimes;
    std::vector<std::size_t> n_values;  // {0} for EKF/UKF
    int repetitions = 1;
};

PreparedFilter prepare(const ExperimentConfig& c, const FilterConfig& f) {
    PreparedFilter p;
    p.config = f;
    if (c.model == ModelKind::m1) {
        Model1Spec spec;
        spec.horizon = c.horizon;
        auto m = std::make_unique<Model1>(spec);
        if (f.is_gaussian()) {
            p.gaussian = std::make_unique<Model1>(spec);
        }
        p.model = std::move(m);
    } else {
        Model2Spec spec;
        spec.horizon = c.horizon;
        spec.sigma_w = f.sigma_w;
        p.model = std::make_unique<Model2>(spec);
        if (f.is_gaussian()) {
            p.gaussian = std::make_unique<Model2GaussianApprox>(spec);
        }
    }
    if (f.is_robust()) {
        p.regimes.emplace(f.regimes.empty() ? kDefaultRegimes : f.regimes);
    }
    if (f.is_gaussian()) {
        p.n_values = {0};
        p.repetitions = 1;
    } else {
        p.n_values = c.n_values;
        p.repetitions = c.repetitions;
    }
    return p;
}

struct Cell {
    std::size_t filter = 0;
    std::size_t n_index = 0;
    int s = 0;
    int r = 0;
};

struct CellResult {
    bool failed = false;
    double wall_ms = 0.0;
    std::vector<double> sq_errors;  // per k
};

CellResult run_cell(const PreparedFilter& pf, std::size_t n, const Trajectory& truth, RngStream rng) {
    const std::span<const Vector> ys(truth.observations);
    std::vector<Vector> estimates;
    CellResult out;
    const auto& f = pf.config;
    if (f.is_gaussian()) {
        const auto kind = f.name == FilterName::ekf ? GaussianFilterKind::ekf : GaussianFilterKind::ukf;
        auto g = run_gaussian_filter(*pf.gaussian, ys, kind, f.ut);
        out.failed = g.failed;
        out.wall_ms = g.wall_ms;
        for (auto& b : g.beliefs) {
            estimates.push_back(std::move(b.mean));
        }
    } else if (f.is_robust()) {
        RobustFilterOptions opts;
        opts.kind = robust_kind(f.name);
        opts.offspring = f.offspring;
        opts.resampling = f.resampling;
        auto r = run_robust_filter(*pf.model, *pf.regimes, ys, n, opts, rng);
        out.failed = r.failed;
        out.wall_ms = r.wall_ms;
        estimates = std::move(r.estimates);
    } else {
        ParticleFilterOptions opts;
        opts.kind = base_kind(f.name);
        opts.offspring = f.offspring;
        opts.resampling = f.resampling;
        auto r = run_filter(*pf.model, ys, n, opts, rng);
        out.failed = r.failed;
        out.wall_ms = r.wall_ms;
        estimates = std::move(r.estimates);
    }
    if (!out.failed) {
        out.sq_errors.resize(estimates.size());
        for (std::size_t t = 0; t < estimates.size(); ++t) {
            out.sq_errors[t] = (estimates[t] - truth.states[t + 1]).squaredNorm();
        }
    }
    return out;
}

// RMSE_k over [s][r] squared errors; failed runs are empty.
RmseAtK reduce_rmse(const std::vector<std::vector<std::optional<double>>>& sq) {
    RmseAtK out;
    double sum_over_s = 0.0;
    std::size_t counted_s = 0;
    for (const auto& runs : sq) {
        double sum = 0.0;
        std::size_t done = 0;
        for (const auto& e : runs) {
            if (e) {
                sum += *e;
                ++done;
            } else {
                ++out.missing;
            }
        }
        out.completed += done;
        if (done > 0) {
            sum_over_s += sum / static_cast<double>(done);
            ++counted_s;
        }
    }
    out.value = counted_s > 0 ? std::sqrt(sum_over_s / static_cast<double>(counted_s))
                              : std::numeric_limits<double>::quiet_NaN();
    return out;
}

double median(std::vector<double> v) {
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    const auto mid = v.size() / 2;
    return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    return os;
}

}  // namespace

std::string to_string(FilterName name) {
    switch (name) {
        case FilterName::bpf:
            return "BPF";
        case FilterName::apf:
            return "APF";
        case FilterName::pbps:
            return "PBPS";
        case FilterName::rs_bpf:
            return "RS-BPF";
        case FilterName::rs_apf:
            return "RS-APF";
        case FilterName::rs_pbps:
            return "RS-PBPS";
        case FilterName::dma_bpf:
            return "DMA-BPF";
        case FilterName::ekf:
            return "EKF";
        case FilterName::ukf:
            return "UKF";
    }
    return "?";
}

FilterName parse_filter_name(const std::string& name) {
    for (auto f : {FilterName::bpf, FilterName::apf, FilterName::pbps, FilterName::rs_bpf, FilterName::rs_apf,
                   FilterName::rs_pbps, FilterName::dma_bpf, FilterName::ekf, FilterName::ukf}) {
        if (to_string(f) == name) {
            return f;
        }
    }
    throw ConfigError("unknown filter '" + name + "'");
}

bool FilterConfig::is_robust() const noexcept {
    return name == FilterName::rs_bpf || name == FilterName::rs_apf || name == FilterName::rs_pbps ||
           name == FilterName::dma_bpf;
}

ExperimentConfig parse_config(const json& j) {
    reject_unknown_keys(j, {"model", "scenario", "filters", "N_values", "S", "R", "K", "master_seed", "timing"},
                        "config");
    ExperimentConfig c;
    if (!j.contains("model")) {
        throw ConfigError("config: missing 'model'");
    }
    const auto model = get_as<std::string>(j, "model", "config");
    if (model == "m1") {
        c.model = ModelKind::m1;
        c.horizon = 50;
    } else if (model == "m2") {
        c.model = ModelKind::m2;
        c.horizon = 40;
    } else {
        throw ConfigError("config: model must be 'm1' or 'm2'");
    }
    if (j.contains("scenario")) {
        const auto& s = j.at("scenario");
        reject_unknown_keys(s, {"turn", "turn_time", "turn_angle", "truth_mode", "truth_sigma_w"}, "scenario");
        if (s.contains("turn")) {
            c.scenario.turn = get_as<bool>(s, "turn", "scenario");
        }
        if (s.contains("turn_time")) {
            c.scenario.turn_time = get_as<int>(s, "turn_time", "scenario");
        }
        if (s.contains("turn_angle")) {
            c.scenario.turn_angle = get_as<double>(s, "turn_angle", "scenario");
        }
        if (s.contains("truth_sigma_w")) {
            c.scenario.truth_sigma_w = get_as<double>(s, "truth_sigma_w", "scenario");
        }
        if (s.contains("truth_mode")) {
            const auto mode = get_as<std::string>(s, "truth_mode", "scenario");
            if (mode == "stochastic") {
                c.scenario.truth_mode = TruthMode::stochastic;
            } else if (mode == "maneuvering-deterministic") {
                c.scenario.truth_mode = TruthMode::maneuvering_deterministic;
            } else {
                throw ConfigError("scenario: truth_mode must be 'stochastic' or 'maneuvering-deterministic'");
            }
        }
    }
    if (!j.contains("filters") || !j.at("filters").is_array()) {
        throw ConfigError("config: 'filters' must be an array");
    }
    for (std::size_t i = 0; i < j.at("filters").size(); ++i) {
        c.filters.push_back(parse_filter(j.at("filters")[i], i));
    }
    if (j.contains("N_values")) {
        for (const auto& v : j.at("N_values")) {
            if (!v.is_number_integer() || v.get<long long>() < 1) {
                throw ConfigError("config: N_values must be positive integers");
            }
            c.n_values.push_back(v.get<std::size_t>());
        }
    }
    if (j.contains("S")) {
        c.trajectories = positive_int(j, "S");
    }
    if (j.contains("R")) {
        c.repetitions = positive_int(j, "R");
    }
    if (j.contains("K")) {
        c.horizon = positive_int(j, "K");
    }
    if (j.contains("master_seed")) {
        const auto& seed = j.at("master_seed");
        if (!seed.is_number_integer() || (seed.is_number_integer() && !seed.is_number_unsigned() && seed.get<long long>() < 0)) {
            throw ConfigError("config: master_seed must be a nonnegative 64-bit integer");
        }
        c.master_seed = seed.get<std::uint64_t>();
    }
    if (j.contains("timing")) {
        c.timing = get_as<bool>(j, "timing", "config");
    }
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot read config '" + path.string() + "'");
    }
    json j;
    try {
        is >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

void validate(const ExperimentConfig& c) {
    if (c.trajectories < 1 || c.repetitions < 1 || c.horizon < 1) {
        throw ConfigError("config: S, R and K must be at least 1");
    }
    if (c.filters.empty()) {
        throw ConfigError("config: at least one filter is required");
    }
    const bool needs_particles = std::any_of(c.filters.begin(), c.filters.end(),
                                             [](const FilterConfig& f) { return !f.is_gaussian(); });
    if (needs_particles && c.n_values.empty()) {
        throw ConfigError("config: N_values is required for particle filters");
    }
    if (std::any_of(c.n_values.begin(), c.n_values.end(), [](std::size_t n) { return n < 1; })) {
        throw ConfigError("config: every N must be at least 1");
    }
    if (c.model == ModelKind::m2 && c.scenario.turn) {
        const int t = c.scenario.resolved_turn_time(c.horizon);
        if (t < 1 || t > c.horizon) {
            throw ConfigError("scenario: turn_time must lie in [1, K]");
        }
    }
    std::set<std::string> labels;
    for (const auto& f : c.filters) {
        if (!labels.insert(f.label).second) {
            throw ConfigError("config: duplicate filter label '" + f.label + "'");
        }
        if (f.is_robust() && c.model == ModelKind::m1 && f.regimes.empty()) {
            throw ConfigError("config: " + f.label + " on model m1 needs an explicit 'regimes' list");
        }
        if (f.is_robust()) {
            try {
                RegimeSet check(f.regimes.empty() ? kDefaultRegimes : f.regimes);
            } catch (const std::invalid_argument& e) {
                throw ConfigError("config: " + f.label + ": " + e.what());
            }
        }
        if (f.is_gaussian() && c.model == ModelKind::m2 && !f.gaussian_approximation) {
            throw ConfigError("config: " + f.label +
                              " on model m2 requires \"gaussian_approximation\": true");
        }
        if (!(f.sigma_w >= 0.0)) {
            throw ConfigError("config: sigma_w must be nonnegative");
        }
        if (f.is_gaussian() && !(f.ut.lambda(c.model == ModelKind::m1 ? 1 : 4) + (c.model == ModelKind::m1 ? 1 : 4) > 0.0)) {
            throw ConfigError("config: UT parameters give n + lambda <= 0");
        }
    }
}

RmseAtK rmse_at_k(const std::vector<std::vector<std::optional<Vector>>>& estimates,
                  const std::vector<Vector>& truths) {
    if (estimates.size() != truths.size()) {
        throw std::invalid_argument("rmse_at_k: one truth per trajectory is required");
    }
    std::vector<std::vector<std::optional<double>>> sq(estimates.size());
    for (std::size_t s = 0; s < estimates.size(); ++s) {
        for (const auto& e : estimates[s]) {
            sq[s].push_back(e ? std::optional<double>((*e - truths[s]).squaredNorm()) : std::nullopt);
        }
    }
    return reduce_rmse(sq);
}

double global_rmse(const std::vector<double>& rmse_k) {
    if (rmse_k.empty()) {
        throw std::invalid_argument("global_rmse: empty RMSE sequence");
    }
    double sum = 0.0;
    for (double v : rmse_k) {
        sum += v;
    }
    return sum / static_cast<double>(rmse_k.size());
}

const ReportRow* RMSEReport::find(const std::string& filter, std::size_t n) const {
    for (const auto& row : rows) {
        if (row.filter == filter && row.n == n) {
            return &row;
        }
    }
    return nullptr;
}

RMSEReport run_experiment(const ExperimentConfig& config, unsigned workers) {
    validate(config);
    workers = std::max(1u, workers);
    const RngStream master(config.master_seed);
    const RngStream truth_root = master.child(0);
    const RngStream filter_root = master.child(1);

    // Ground truth.
    std::vector<Trajectory> truths(static_cast<std::size_t>(config.trajectories));
    for (int s = 0; s < config.trajectories; ++s) {
        RngStream rng = truth_root.child(static_cast<std::uint64_t>(s));
        if (config.model == ModelKind::m1) {
            Model1Spec spec;
            spec.horizon = config.horizon;
            truths[static_cast<std::size_t>(s)] = simulate_model1(spec, rng);
        } else {
            Model2Spec spec;
            spec.horizon = config.horizon;
            truths[static_cast<std::size_t>(s)] = simulate_model2(spec, config.scenario, rng);
        }
    }

    std::vector<PreparedFilter> prepared;
    prepared.reserve(config.filters.size());
    for (const auto& f : config.filters) {
        prepared.push_back(prepare(config, f));
    }

    std::vector<Cell> cells;
    for (std::size_t fi = 0; fi < prepared.size(); ++fi) {
        for (std::size_t ni = 0; ni < prepared[fi].n_values.size(); ++ni) {
            for (int s = 0; s < config.trajectories; ++s) {
                for (int r = 0; r < prepared[fi].repetitions; ++r) {
                    cells.push_back(Cell{fi, ni, s, r});
                }
            }
        }
    }

    std::vector<CellResult> results(cells.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) {
                return;
            }
            const Cell& c = cells[i];
            const auto& pf = prepared[c.filter];
            const std::size_t n = pf.n_values[c.n_index];
            const RngStream rng = filter_root.child(c.filter)
                                      .child(n)
                                      .child(static_cast<std::uint64_t>(c.s))
                                      .child(static_cast<std::uint64_t>(c.r));
            try {
                results[i] = run_cell(pf, n, truths[static_cast<std::size_t>(c.s)], rng);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                next.store(cells.size());
                return;
            }
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }

    // Ordered reduction over the cell list.
    RMSEReport report;
    const std::string model_name = config.model == ModelKind::m1 ? "m1" : "m2";
    std::size_t cursor = 0;
    for (std::size_t fi = 0; fi < prepared.size(); ++fi) {
        const auto& pf = prepared[fi];
        for (std::size_t ni = 0; ni < pf.n_values.size(); ++ni) {
            ReportRow row;
            row.filter = pf.config.label;
            row.model = model_name;
            row.scenario = scenario_name(config);
            if (config.model == ModelKind::m2 && !pf.config.is_robust()) {
                row.sigma_w = pf.config.sigma_w;
            }
            row.n = pf.n_values[ni];
            std::vector<std::vector<std::optional<double>>> sq_by_s(
                static_cast<std::size_t>(config.trajectories));
            std::vector<std::vector<const CellResult*>> by_s(static_cast<std::size_t>(config.trajectories));
            std::vector<double> walls;
            for (int s = 0; s < config.trajectories; ++s) {
                for (int r = 0; r < pf.repetitions; ++r) {
                    const CellResult& res = results[cursor++];
                    by_s[static_cast<std::size_t>(s)].push_back(&res);
                    ++row.runs;
                    if (res.failed) {
                        ++row.failures;
                    } else {
                        walls.push_back(res.wall_ms);
                    }
                }
            }
            for (int k = 1; k <= config.horizon; ++k) {
                for (int s = 0; s < config.trajectories; ++s) {
                    auto& v = sq_by_s[static_cast<std::size_t>(s)];
                    v.clear();
                    for (const CellResult* res : by_s[static_cast<std::size_t>(s)]) {
                        v.push_back(res->failed ? std::nullopt
                                                : std::optional<double>(res->sq_errors[static_cast<std::size_t>(k - 1)]));
                    }
                }
                row.rmse_k.push_back(reduce_rmse(sq_by_s).value);
            }
            row.global_rmse = global_rmse(row.rmse_k);
            if (config.timing && !walls.empty()) {
                double sum = 0.0;
                for (double w : walls) {
                    sum += w;
                }
                row.mean_wall_ms = sum / static_cast<double>(walls.size());
                row.median_wall_ms = median(walls);
            }
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

void emit_outputs(const RMSEReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw std::runtime_error("cannot create '" + out_dir.string() + "': " + ec.message());
    }
    auto summary = open_for_write(out_dir / "summary.csv");
    auto by_k = open_for_write(out_dir / "rmse_by_k.csv");
    auto timing = open_for_write(out_dir / "timing.csv");
    summary << kSummaryHeader << '\n';
    by_k << kRmseByKHeader << '\n';
    timing << kTimingHeader << '\n';
    for (const auto& row : report.rows) {
        const auto sw = fmt_optional(row.sigma_w);
        fmt::print(summary, "{},{},{},{},{},{},{},{}\n", row.filter, row.model, row.scenario, sw, row.n,
                   row.global_rmse, row.mean_wall_ms, row.failures);
        for (std::size_t t = 0; t < row.rmse_k.size(); ++t) {
            fmt::print(by_k, "{},{},{},{},{},{},{}\n", row.filter, row.model, row.scenario, sw, row.n, t + 1,
                       row.rmse_k[t]);
        }
        fmt::print(timing, "{},{},{},{},{},{},{},{}\n", row.filter, row.model, row.scenario, sw, row.n, row.runs,
                   row.mean_wall_ms, row.median_wall_ms);
    }
    auto script = open_for_write(out_dir / "plot_results.py");
    script << plot_script();
    for (auto* os : {&summary, &by_k, &timing, &script}) {
        os->flush();
        if (!*os) {
            throw std::runtime_error("write failed in '" + out_dir.string() + "'");
        }
    }
}

RMSEReport read_rmse_by_k(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot read '" + path.string() + "'");
    }
    std::string line;
    std::getline(is, line);
    if (line != kRmseByKHeader) {
        throw std::runtime_error("'" + path.string() + "' does not have the rmse_by_k header");
    }
    RMSEReport report;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            f.push_back(field);
        }
        if (f.size() == 6) {
            f.emplace_back();
        }
        if (f.size() != 7) {
            throw std::runtime_error("malformed rmse_by_k row: " + line);
        }
        std::optional<double> sw;
        if (!f[3].empty()) {
            sw = std::stod(f[3]);
        }
        const auto n = static_cast<std::size_t>(std::stoull(f[4]));
        ReportRow* row = nullptr;
        if (!report.rows.empty()) {
            auto& last = report.rows.back();
            if (last.filter == f[0] && last.model == f[1] && last.scenario == f[2] && last.n == n &&
                last.sigma_w == sw) {
                row = &last;
            }
        }
        if (row == nullptr) {
            report.rows.emplace_back();
            row = &report.rows.back();
            row->filter = f[0];
            row->model = f[1];
            row->scenario = f[2];
            row->sigma_w = sw;
            row->n = n;
        }
        row->rmse_k.push_back(std::stod(f[6]));
    }
    for (auto& row : report.rows) {
        row.global_rmse = global_rmse(row.rmse_k);
    }
    return report;
}

std::string plot_script() {
    return R"PY(#!/usr/bin/env python3
"""Renders RMSE-vs-N, RMSE_k-vs-k and time-vs-N charts from the CSVs in this directory."""
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

if len(sys.argv) > 1:
    here = os.path.abspath(sys.argv[1])
else:
    here = os.path.dirname(os.path.abspath(__file__))

summary = pd.read_csv(os.path.join(here, "summary.csv"))
by_k = pd.read_csv(os.path.join(here, "rmse_by_k.csv"))
timing = pd.read_csv(os.path.join(here, "timing.csv"))


def key(df):
    sw = df["sigma_w"].astype(str).replace("nan", "")
    return df["filter"] + sw.map(lambda s: f" (sigma_w={s})" if s else "")


summary["series"] = key(summary)
by_k["series"] = key(by_k)
timing["series"] = key(timing)

particles = summary[summary["N"] > 0]
gaussian = summary[summary["N"] == 0]

fig, ax = plt.subplots()
for name, g in particles.groupby("series"):
    ax.plot(g["N"], g["global_rmse"], marker="o", label=name)
for _, row in gaussian.iterrows():
    ax.axhline(row["global_rmse"], linestyle="--", label=row["series"])
ax.set_xscale("log")
ax.set_xlabel("N")
ax.set_ylabel("global RMSE")
ax.legend()
fig.savefig(os.path.join(here, "rmse_vs_n.png"), dpi=120)

fig, ax = plt.subplots()
for name, g in by_k.groupby("series"):
    largest = g["N"].max()
    g = g[g["N"] == largest]
    label = name if largest == 0 else f"{name} N={largest}"
    ax.plot(g["k"], g["rmse_k"], label=label)
ax.set_xlabel("k")
ax.set_ylabel("RMSE_k")
ax.legend()
fig.savefig(os.path.join(here, "rmse_by_k.png"), dpi=120)

fig, ax = plt.subplots()
for name, g in timing[timing["N"] > 0].groupby("series"):
    ax.plot(g["N"], g["median_wall_ms"], marker="o", label=name)
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("N")
ax.set_ylabel("wall time per trajectory [ms]")
ax.legend()
fig.savefig(os.path.join(here, "time_vs_n.png"), dpi=120)
print("wrote rmse_vs_n.png, rmse_by_k.png, time_vs_n.png to", here)
)PY";
}

}  // namespace smc
