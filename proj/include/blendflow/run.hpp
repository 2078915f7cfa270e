#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "blendflow/io.hpp"
#include "blendflow/lyapunov.hpp"
#include "blendflow/observer.hpp"
#include "blendflow/scenario.hpp"
#include "blendflow/solver.hpp"
#include "blendflow/steady.hpp"

namespace blendflow {

struct RunHooks {
    // Called after every accepted step.
    std::function<void(const TwinState&, const TwinStepInfo&, double dt)> on_step;
    // Called at each configured snapshot time.
    std::function<void(double t, const TwinState&)> on_snapshot;
};

struct RunResult {
    ErrorSeries series;
    SteadyProfile steady;
    TheoryConstants constants;
    DecayFit fit;                      // over [0.05 T, 0.95 T]
    std::map<std::string, int> s_sign;
    bool e_zero_defined = true;
};

namespace detail {

inline double min_mu_margin(const SystemState& state, const WeightConfig& weights,
                            const Network& net, const PressureLaw& law, double gamma) {
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& [vid, node] : net.nodes) {
        if (node.degree() < 2) continue;
        margin = std::min(margin, check_mu_condition(vid, state, weights, net, law, gamma));
    }
    return margin;
}

}  // namespace detail

// Twin experiment driver: steady base state, bumped observer, shared-clock
// stepping, diagnostics sampled at the configured cadence. If `csv` is given,
// rows are streamed and flushed as they are produced, so an aborted run still
// leaves a usable partial series on disk.
inline RunResult run_twin(const Scenario& sc, std::ostream* csv = nullptr,
                          const RunHooks* hooks = nullptr) {
    RunResult res;
    res.steady = steady_from_boundary_signals(sc.net, sc.law, sc.gamma);
    res.s_sign = res.steady.s_sign;
    for (const std::string& f : res.steady.flags) res.series.warnings.push_back(f);
    for (const auto& [id, s] : res.s_sign) {
        if (s == 0) res.e_zero_defined = false;
    }
    if (!res.e_zero_defined) {
        res.series.warnings.push_back(
            "hydrogen transport sign undefined on a stagnant pipe; E_zero reported as nan");
    }

    TwinState tw;
    tw.plant = state_from_profile(res.steady, sc.net);
    tw.observer = tw.plant;
    if (sc.initial.bump_amplitude != 0 || sc.initial.bump_amplitude_zero != 0) {
        tw.observer = apply_bump(std::move(tw.observer), sc.net, sc.initial.bump_pipe,
                                 sc.initial.bump_amplitude, sc.initial.bump_amplitude_zero);
    }

    const NoiseField noise(sc.noise);
    ConstantsAccumulator acc(sc.net, sc.law, sc.gamma);
    acc.add_state(tw.plant, &tw.observer);

    double eta_sigma_sup = 0, eta_zero_sup = 0;

    // Residual maxima since the previous sample.
    double acc_kirchhoff = 0, acc_pressure = 0, acc_diff = 0;

    auto take_sample = [&](double t) {
        const SystemState delta = difference(tw.observer, tw.plant);
        ErrorSample s;
        s.t = t;
        s.e_sigma = energy_sigma(delta, sc.weights, sc.net);
        s.e_zero = res.e_zero_defined
                       ? energy_zero(delta, sc.weights.psi0, res.s_sign, sc.net)
                       : std::numeric_limits<double>::quiet_NaN();
        s.l2_delta_plus = l2_norm(delta, Family::plus);
        s.l2_delta_minus = l2_norm(delta, Family::minus);
        s.l2_delta_zero = l2_norm(delta, Family::zero);
        s.eta_sigma = perturbation_level_sigma(noise, sc.net, t);
        s.eta_zero = (sc.noise.amplitude == 0)
                         ? 0.0
                         : (res.e_zero_defined
                                ? perturbation_level_zero(noise, sc.net, tw.observer, sc.law,
                                                          sc.gamma, sc.weights.psi0, res.s_sign,
                                                          t, sc.solver.lambda_tol)
                                : std::numeric_limits<double>::quiet_NaN());
        s.min_mu_margin = detail::min_mu_margin(tw.observer, sc.weights, sc.net, sc.law, sc.gamma);
        s.kirchhoff_rel = acc_kirchhoff;
        s.pressure_rel = acc_pressure;
        s.diff_identity = acc_diff;
        acc_kirchhoff = acc_pressure = acc_diff = 0;
        if (std::isfinite(s.eta_sigma)) eta_sigma_sup = std::max(eta_sigma_sup, s.eta_sigma);
        if (std::isfinite(s.eta_zero)) eta_zero_sup = std::max(eta_zero_sup, s.eta_zero);
        res.series.samples.push_back(s);
        if (csv) write_diagnostics_row(*csv, s);
        acc.add_state(tw.plant, &tw.observer);
    };

    if (csv) *csv << diagnostics_csv_header() << '\n';
    take_sample(0.0);

    std::set<double> snapshot_times(sc.output.snapshots.begin(), sc.output.snapshots.end());
    if (hooks && hooks->on_snapshot && snapshot_times.count(0.0)) {
        hooks->on_snapshot(0.0, tw);
    }

    const double T = sc.horizon;
    const double t_eps = 1e-12 * std::max(1.0, T);
    double next_sample = sc.output.cadence;
    std::map<std::string, std::vector<std::string>> last_inflow;
    std::map<std::string, int> flip_counts;
    std::set<std::string> seen_flags;

    while (tw.t() < T - t_eps) {
        double target = std::min(next_sample, T);
        for (double ts : snapshot_times) {
            if (ts > tw.t() + t_eps) {
                target = std::min(target, ts);
                break;
            }
        }
        const double dt_cfl = std::min(cfl_dt(tw.plant, sc.net, sc.law, sc.gamma, sc.cfl),
                                       cfl_dt(tw.observer, sc.net, sc.law, sc.gamma, sc.cfl));
        const double dt = std::min(dt_cfl, target - tw.t());

        TwinStepInfo info;
        tw = twin_step(tw, sc.net, sc.law, sc.gamma, dt, noise, sc.solver, &info);
        acc_kirchhoff = std::max(acc_kirchhoff, info.plant_residuals.kirchhoff_rel);
        acc_pressure = std::max(acc_pressure, info.plant_residuals.pressure_rel);
        acc_diff = std::max(acc_diff, info.diff_identity);
        res.series.max_kirchhoff_rel =
            std::max(res.series.max_kirchhoff_rel, info.plant_residuals.kirchhoff_rel);
        res.series.max_pressure_rel =
            std::max(res.series.max_pressure_rel, info.plant_residuals.pressure_rel);
        res.series.max_diff_identity = std::max(res.series.max_diff_identity, info.diff_identity);

        // The analysis assumes frozen inflow sets; flips are legal for the
        // scheme but worth a warning.
        for (const auto& [vid, entry] : info.plant_trace.nodes) {
            auto it = last_inflow.find(vid);
            if (it != last_inflow.end() && it->second != entry.inflow) {
                if (flip_counts[vid]++ == 0) {
                    res.series.warnings.push_back("inflow set flipped at node '" + vid +
                                                  "' (t = " + std::to_string(tw.t()) + ")");
                }
            }
            last_inflow[vid] = entry.inflow;
        }
        for (const auto& [vid, entry] : info.plant_trace.nodes) {
            for (const std::string& f : entry.flags) {
                if (seen_flags.insert(f).second && res.series.warnings.size() < 200) {
                    res.series.warnings.push_back(f);
                }
            }
        }

        if (hooks && hooks->on_step) hooks->on_step(tw, info, dt);

        if (tw.t() >= next_sample - t_eps) {
            take_sample(tw.t());
            while (next_sample <= tw.t() + t_eps) next_sample += sc.output.cadence;
        }
        for (double ts : snapshot_times) {
            if (std::abs(tw.t() - ts) <= t_eps && hooks && hooks->on_snapshot) {
                hooks->on_snapshot(ts, tw);
            }
        }
    }
    if (res.series.samples.empty() || res.series.samples.back().t < T - t_eps) {
        take_sample(tw.t());
    }

    res.constants = acc.finalize(sc.weights);
    res.constants.eta_sigma = eta_sigma_sup;
    res.constants.eta_zero = eta_zero_sup;
    for (const std::string& w : acc.warnings()) res.series.warnings.push_back(w);

    try {
        res.fit = fit_decay_rate(res.series, 0.05 * T, 0.95 * T);
    } catch (const ConfigError&) {
        res.fit = DecayFit{};
        res.fit.degenerate = true;
    }
    return res;
}

}  // namespace blendflow
