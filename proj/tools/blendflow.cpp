#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "blendflow/blendflow.hpp"

namespace fs = std::filesystem;
using namespace blendflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConditionFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

Scenario load_with_seed(const std::string& path, const std::optional<std::uint64_t>& seed) {
    Scenario sc = load_scenario(path);
    if (seed) {
        sc.noise.seed = *seed;
        if (!sc.resolved.contains("noise")) {
            sc.resolved["noise"] = {{"amplitude", sc.noise.amplitude},
                                    {"seed", *seed},
                                    {"modes", sc.noise.modes},
                                    {"ramp_time", sc.noise.ramp_time}};
        } else {
            sc.resolved["noise"]["seed"] = *seed;
        }
    }
    return sc;
}

nlohmann::ordered_json constants_json(const TheoryConstants& c) {
    nlohmann::ordered_json j;
    j["c"] = c.c;
    j["eps0"] = c.eps0;
    j["M"] = c.m;
    j["M_hat"] = c.m_hat;
    j["beta"] = c.beta;
    j["v_low"] = c.v_low;
    j["v_high"] = c.v_high;
    j["chi"] = c.chi;
    j["chi0"] = c.chi0;
    j["eta_sigma"] = c.eta_sigma;
    j["eta_zero"] = c.eta_zero;
    j["D0"] = c.d0;
    j["zeta"] = c.zeta;
    return j;
}

// Runs one scenario into out_dir (diagnostics CSV, snapshots, manifest).
RunResult simulate_into(const Scenario& sc, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    RunManifest man;
    man.scenario = sc.resolved;
    man.seed = sc.noise.seed;
    man.started_at = iso8601_now();

    const fs::path csv_path = out_dir / sc.output.path;
    std::ofstream csv(csv_path);
    if (!csv) throw ConfigError("cannot write diagnostics file '" + csv_path.string() + "'");
    man.outputs.push_back(sc.output.path);

    RunHooks hooks;
    hooks.on_snapshot = [&](double t, const TwinState& tw) {
        char name[64];
        std::snprintf(name, sizeof name, "state_t%g.csv", t);
        std::ofstream snap(out_dir / name);
        write_state_snapshot(snap, tw, sc.net);
        man.outputs.push_back(name);
    };

    try {
        RunResult res = run_twin(sc, &csv, &hooks);
        man.finished_at = iso8601_now();
        man.diagnostics["max_kirchhoff_rel"] = res.series.max_kirchhoff_rel;
        man.diagnostics["max_pressure_rel"] = res.series.max_pressure_rel;
        man.diagnostics["max_diff_identity"] = res.series.max_diff_identity;
        man.diagnostics["constants"] = constants_json(res.constants);
        man.diagnostics["fit"] = {{"chi_fit", res.fit.chi_fit},
                                  {"plateau", res.fit.plateau},
                                  {"r_squared", res.fit.r_squared},
                                  {"degenerate", res.fit.degenerate},
                                  {"non_decaying", res.fit.non_decaying}};
        man.diagnostics["warnings"] = res.series.warnings;
        write_manifest_atomic(out_dir / "manifest.json", man);
        return res;
    } catch (const std::exception& e) {
        man.finished_at = iso8601_now();
        man.status = std::string("error: ") + e.what();
        write_manifest_atomic(out_dir / "manifest.json", man);
        throw;
    }
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir,
                 const std::optional<std::uint64_t>& seed) {
    const Scenario sc = load_with_seed(scenario_path, seed);
    const RunResult res = simulate_into(sc, out_dir);
    std::printf("simulate: %zu samples, final E_sigma = %s, outputs in %s\n",
                res.series.samples.size(),
                format_g17(res.series.samples.back().e_sigma).c_str(), out_dir.c_str());
    for (const std::string& w : res.series.warnings) {
        std::fprintf(stderr, "warning: %s\n", w.c_str());
    }
    return kExitOk;
}

int cmd_check(const std::string& scenario_path, const std::optional<std::uint64_t>& seed) {
    const Scenario sc = load_with_seed(scenario_path, seed);
    const SteadyProfile steady = steady_from_boundary_signals(sc.net, sc.law, sc.gamma);
    const SystemState base = state_from_profile(steady, sc.net);

    ConstantsAccumulator acc(sc.net, sc.law, sc.gamma);
    acc.add_state(base);
    const TheoryConstants consts = acc.finalize(sc.weights);
    const PsiConditionReport psi = check_psi_condition(sc.net, sc.weights, consts);

    std::printf("theory constants: c=%g eps0=%g M=%g M_hat=%g beta=%g v=[%g, %g]\n", consts.c,
                consts.eps0, consts.m, consts.m_hat, consts.beta, consts.v_low, consts.v_high);
    std::printf("decay rates: chi=%g chi0=%g D0=%g zeta=%g\n", consts.chi, consts.chi0,
                consts.d0, consts.zeta);
    std::printf("%-16s %12s %12s\n", "pipe", "kappa", "psi-margin");
    bool all_positive = true;
    for (const auto& m : psi.pipes) {
        std::printf("%-16s %12.6g %12.6g\n", m.pipe.c_str(), m.kappa, m.margin);
        all_positive = all_positive && m.margin > 0;
    }
    std::printf("%-16s %12s %12s\n", "node", "mu", "mu-margin");
    for (const auto& [vid, node] : sc.net.nodes) {
        if (node.degree() < 2) continue;
        const double margin = check_mu_condition(vid, base, sc.weights, sc.net, sc.law, sc.gamma);
        std::printf("%-16s %12.6g %12.6g\n", vid.c_str(), node.mu, margin);
        all_positive = all_positive && margin > 0;
    }
    for (const std::string& f : steady.flags) std::fprintf(stderr, "warning: %s\n", f.c_str());
    std::printf("conditions %s\n", all_positive ? "hold" : "FAIL");
    return all_positive ? kExitOk : kExitConditionFailed;
}

int cmd_steady(const std::string& scenario_path, const std::string& out_dir) {
    const Scenario sc = load_scenario(scenario_path);
    const SteadyProfile steady = steady_from_boundary_signals(sc.net, sc.law, sc.gamma);
    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / "steady.csv";
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    write_steady_csv(out, steady, sc.net);
    std::printf("%-16s %16s %16s\n", "node", "density", "pressure");
    for (const auto& [vid, rho] : steady.node_density) {
        std::printf("%-16s %16.10g %16.10g\n", vid.c_str(), rho, steady.node_pressure.at(vid));
    }
    std::printf("min velocity gap: %g, subsonic: %s\n", steady.min_velocity_gap,
                steady.subsonic ? "yes" : "no");
    for (const std::string& f : steady.flags) std::fprintf(stderr, "warning: %s\n", f.c_str());
    std::printf("steady profile written to %s\n", path.string().c_str());
    return kExitOk;
}

int cmd_sweep(const std::string& scenario_path, const std::string& param,
              const std::string& values_csv, const std::string& out_dir, int jobs,
              const std::optional<std::uint64_t>& seed) {
    std::vector<double> values;
    std::stringstream ss(values_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t pos = 0;
        const double v = std::stod(item, &pos);
        if (pos != item.size()) throw ConfigError("sweep: bad value '" + item + "'");
        values.push_back(v);
    }
    if (values.empty()) throw ConfigError("sweep: empty value list");
    // Validate parameter name and scenario before spawning workers.
    {
        Scenario probe = load_with_seed(scenario_path, seed);
        apply_sweep_value(probe, param, values.front());
    }
    fs::create_directories(out_dir);

    struct Row {
        double value = 0;
        DecayFit fit;
        std::string status = "ok";
    };
    std::vector<Row> rows(values.size());
    std::atomic<std::size_t> cursor{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= values.size()) return;
            Row& row = rows[i];
            row.value = values[i];
            char sub[32];
            std::snprintf(sub, sizeof sub, "run_%03zu", i);
            try {
                Scenario sc = load_with_seed(scenario_path, seed);
                apply_sweep_value(sc, param, values[i]);
                const RunResult res = simulate_into(sc, fs::path(out_dir) / sub);
                row.fit = res.fit;
            } catch (const std::exception& e) {
                row.status = std::string("error: ") + e.what();
                row.fit.chi_fit = std::numeric_limits<double>::quiet_NaN();
                row.fit.plateau = std::numeric_limits<double>::quiet_NaN();
                row.fit.r_squared = std::numeric_limits<double>::quiet_NaN();
            }
        }
    };
    std::vector<std::thread> pool;
    const int n_jobs = std::max(1, jobs);
    for (int k = 0; k < n_jobs; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    const fs::path summary_path = fs::path(out_dir) / "summary.csv";
    std::ofstream summary(summary_path);
    summary << "value,chi_fit,plateau,r_squared,status\n";
    for (const Row& row : rows) {
        summary << format_g17(row.value) << ',' << format_g17(row.fit.chi_fit) << ','
                << format_g17(row.fit.plateau) << ',' << format_g17(row.fit.r_squared) << ','
                << (row.status == "ok" ? "ok" : "error") << '\n';
        if (row.status != "ok") {
            std::fprintf(stderr, "sweep %s=%g: %s\n", param.c_str(), row.value,
                         row.status.c_str());
        }
    }
    std::printf("sweep: %zu runs, summary in %s\n", rows.size(), summary_path.string().c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gas network twin simulation with nodal observers"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir = "out", param, values_csv;
    int jobs = 1;
    std::optional<std::uint64_t> seed;

    auto add_common = [&](CLI::App* cmd, bool with_out) {
        cmd->add_option("--scenario", scenario_path, "scenario JSON file")->required();
        if (with_out) cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "override the scenario noise seed");
    };

    CLI::App* sim = app.add_subcommand("simulate", "run the twin simulation");
    add_common(sim, true);
    CLI::App* chk = app.add_subcommand("check", "evaluate the decay conditions at t=0");
    add_common(chk, false);
    CLI::App* swp = app.add_subcommand("sweep", "run a one-parameter scenario sweep");
    add_common(swp, true);
    swp->add_option("--param", param, "scenario field to sweep (e.g. noise.amplitude, mu)")
        ->required();
    swp->add_option("--values", values_csv, "comma-separated values")->required();
    swp->add_option("--jobs", jobs, "parallel runs");
    CLI::App* std_cmd = app.add_subcommand("steady", "export the stationary profile");
    std_cmd->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    std_cmd->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (sim->parsed()) return cmd_simulate(scenario_path, out_dir, seed);
        if (chk->parsed()) return cmd_check(scenario_path, seed);
        if (swp->parsed()) return cmd_sweep(scenario_path, param, values_csv, out_dir, jobs, seed);
        if (std_cmd->parsed()) return cmd_steady(scenario_path, out_dir);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const SimulationError& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitConfig;
}
