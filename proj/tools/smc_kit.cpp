// smc-kit: run filter benchmark sweeps, simulate trajectories, render plots.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "smc/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

int cmd_run(const std::string& config_path, const std::string& out_dir, unsigned workers,
            std::optional<std::uint64_t> seed, bool no_timing) {
    smc::ExperimentConfig config;
    try {
        config = smc::load_config(config_path);
        if (seed) {
            config.master_seed = *seed;
        }
        if (no_timing) {
            config.timing = false;
        }
    } catch (const smc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    }
    try {
        const auto report = smc::run_experiment(config, workers);
        smc::emit_outputs(report, out_dir);
        for (const auto& row : report.rows) {
            std::cout << fmt::format("{:<10} N={:<6} global_rmse={:.4f} mean_wall_ms={:.3f} failures={}\n",
                                     row.filter, row.n, row.global_rmse, row.mean_wall_ms, row.failures);
        }
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}

int cmd_simulate(const std::string& model, bool turn, std::uint64_t seed, const std::string& out,
                 std::optional<int> horizon) {
    try {
        smc::RngStream rng = smc::RngStream(seed).child(0).child(0);
        smc::Trajectory traj;
        if (model == "m1") {
            smc::Model1Spec spec;
            spec.horizon = horizon.value_or(spec.horizon);
            traj = smc::simulate_model1(spec, rng);
        } else {
            smc::Model2Spec spec;
            spec.horizon = horizon.value_or(spec.horizon);
            smc::ScenarioSpec scenario;
            scenario.turn = turn;
            traj = smc::simulate_model2(spec, scenario, rng);
        }
        std::ofstream os(out);
        if (!os) {
            std::cerr << "cannot open '" << out << "' for writing\n";
            return kRuntimeError;
        }
        smc::write_trajectory_csv(os, traj);
    } catch (const std::exception& e) {
        std::cerr << "simulate failed: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}

int cmd_plot(const std::string& in_dir) {
    const std::filesystem::path dir(in_dir);
    if (!std::filesystem::exists(dir / "summary.csv")) {
        std::cerr << "no summary.csv in '" << in_dir << "'\n";
        return kRuntimeError;
    }
    const auto script = dir / "plot_results.py";
    {
        std::ofstream os(script);
        if (!os) {
            std::cerr << "cannot write '" << script.string() << "'\n";
            return kRuntimeError;
        }
        os << smc::plot_script();
    }
    const std::string cmd = "python3 \"" + script.string() + "\" \"" + dir.string() + "\"";
    if (std::system(cmd.c_str()) != 0) {
        std::cerr << "plot script failed; run it manually: " << cmd << '\n';
        return kRuntimeError;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Particle filter / predictive smoother benchmark kit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    unsigned workers = 1;
    std::uint64_t seed = 0;
    bool no_timing = false;
    auto* run = app.add_subcommand("run", "Run an experiment sweep from a JSON config");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--out", out_dir, "Output directory")->required();
    run->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    auto* seed_opt = run->add_option("--seed", seed, "Override master_seed");
    run->add_flag("--no-timing", no_timing, "Write 0 in the wall-time columns (byte-reproducible outputs)");

    std::string model = "m1";
    bool turn = false;
    std::uint64_t sim_seed = 0;
    std::string sim_out;
    int sim_horizon = 0;
    auto* simulate = app.add_subcommand("simulate", "Simulate one ground-truth trajectory");
    simulate->add_option("--model", model, "m1 or m2")->check(CLI::IsMember({"m1", "m2"}));
    simulate->add_flag("--turn", turn, "Model 2: heading change at mid-horizon");
    simulate->add_option("--seed", sim_seed, "Seed")->required();
    simulate->add_option("--out", sim_out, "Output CSV path")->required();
    auto* k_opt = simulate->add_option("--K", sim_horizon, "Horizon (default 50 for m1, 40 for m2)")
                      ->check(CLI::PositiveNumber);

    std::string in_dir;
    auto* plot = app.add_subcommand("plot", "Render charts from a run's CSVs");
    plot->add_option("--in", in_dir, "Directory written by 'run'")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    if (*run) {
        return cmd_run(config_path, out_dir, workers,
                       seed_opt->count() > 0 ? std::optional<std::uint64_t>(seed) : std::nullopt, no_timing);
    }
    if (*simulate) {
        return cmd_simulate(model, turn, sim_seed, sim_out,
                            k_opt->count() > 0 ? std::optional<int>(sim_horizon) : std::nullopt);
    }
    return cmd_plot(in_dir);
}
