#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "blendflow/gas_physics.hpp"
#include "blendflow/lyapunov.hpp"
#include "blendflow/network.hpp"
#include "blendflow/observer.hpp"
#include "blendflow/solver.hpp"
#include "json.hpp"

namespace blendflow {

struct InitialSpec {
    std::string kind = "steady_plus_bump";
    double bump_amplitude = 0;       // added to both acoustic invariants
    double bump_amplitude_zero = 0;  // added to the hydrogen fraction
    std::string bump_pipe;
};

struct OutputSpec {
    double cadence = 0;  // s between diagnostics samples; 0 means T/500
    std::string path = "diagnostics.csv";
    std::vector<double> snapshots;  // sim times at which to dump full states
};

struct Scenario {
    nlohmann::ordered_json resolved;  // full config snapshot, network embedded
    std::string network_path;         // as given in the file ("" when inline)
    Network net;
    PressureLaw law = PressureLaw::ideal(1.0);
    double gamma = 0;
    double horizon = 0;  // T
    double cfl = 0.9;
    NoiseModel noise;
    InitialSpec initial;
    OutputSpec output;
    WeightConfig weights;
    SolverOptions solver;
};

inline PressureLaw parse_pressure_law(const nlohmann::json& j) {
    using detail::require_number;
    using detail::require_string;
    const std::string kind = require_string(j, "kind", "pressure_law");
    if (kind == "ideal") return PressureLaw::ideal(require_number(j, "rs_t", "pressure_law"));
    if (kind == "aga") {
        return PressureLaw::aga(require_number(j, "rs_t", "pressure_law"),
                                require_number(j, "alpha_tilde", "pressure_law"));
    }
    if (kind == "isentropic") {
        return PressureLaw::isentropic(require_number(j, "a", "pressure_law"),
                                       require_number(j, "gamma_exp", "pressure_law"));
    }
    throw ConfigError("pressure_law: unknown kind '" + kind + "'");
}

// `network` may be a path (resolved against base_dir) or an inline object.
inline Scenario parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    using detail::require_key;
    using detail::require_number;

    Scenario sc;
    sc.resolved = nlohmann::ordered_json(j);

    const auto& netref = require_key(j, "network", "scenario");
    nlohmann::json network_doc;
    if (netref.is_string()) {
        sc.network_path = netref.get<std::string>();
        const std::filesystem::path p = base_dir / sc.network_path;
        std::ifstream in(p);
        if (!in) throw ConfigError("scenario: cannot open network file '" + p.string() + "'");
        try {
            network_doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("network config '" + p.string() + "': " + e.what());
        }
        sc.resolved["network"] = network_doc;  // embed for reproducibility
    } else if (netref.is_object()) {
        network_doc = netref;
    } else {
        throw ConfigError("scenario.network: expected a path or an inline object");
    }
    sc.net = parse_network_json(network_doc);

    sc.law = parse_pressure_law(require_key(j, "pressure_law", "scenario"));
    sc.gamma = j.contains("gamma") ? require_number(j, "gamma", "scenario") : sc.net.gamma;
    if (!(sc.gamma >= 0)) throw ConfigError("scenario.gamma must be >= 0");
    sc.horizon = require_number(j, "T", "scenario");
    if (!(sc.horizon >= 0)) throw ConfigError("scenario.T must be >= 0");
    sc.cfl = j.contains("cfl") ? require_number(j, "cfl", "scenario") : 0.9;
    if (!(sc.cfl > 0) || !(sc.cfl <= 1)) throw ConfigError("scenario.cfl must lie in (0, 1]");

    if (j.contains("noise")) {
        const auto& nj = j.at("noise");
        sc.noise.amplitude = require_number(nj, "amplitude", "scenario.noise");
        if (!(sc.noise.amplitude >= 0)) throw ConfigError("scenario.noise.amplitude must be >= 0");
        sc.noise.seed = static_cast<std::uint64_t>(require_number(nj, "seed", "scenario.noise"));
        sc.noise.modes = static_cast<int>(require_number(nj, "modes", "scenario.noise"));
        if (sc.noise.modes < 1) throw ConfigError("scenario.noise.modes must be >= 1");
        sc.noise.ramp_time = require_number(nj, "ramp_time", "scenario.noise");
        if (!(sc.noise.ramp_time > 0)) throw ConfigError("scenario.noise.ramp_time must be > 0");
    }

    const auto& ij = require_key(j, "initial", "scenario");
    sc.initial.kind = detail::require_string(ij, "kind", "scenario.initial");
    if (sc.initial.kind != "steady_plus_bump") {
        throw ConfigError("scenario.initial.kind: unknown kind '" + sc.initial.kind + "'");
    }
    sc.initial.bump_amplitude = require_number(ij, "bump_amplitude", "scenario.initial");
    sc.initial.bump_pipe = detail::require_string(ij, "bump_pipe", "scenario.initial");
    if (ij.contains("bump_amplitude_zero")) {
        sc.initial.bump_amplitude_zero =
            require_number(ij, "bump_amplitude_zero", "scenario.initial");
    }
    sc.net.pipe(sc.initial.bump_pipe);  // id check

    if (j.contains("output")) {
        const auto& oj = j.at("output");
        if (oj.contains("cadence")) sc.output.cadence = require_number(oj, "cadence", "scenario.output");
        if (oj.contains("path")) sc.output.path = detail::require_string(oj, "path", "scenario.output");
        if (oj.contains("snapshots")) {
            for (const auto& v : oj.at("snapshots")) sc.output.snapshots.push_back(v.get<double>());
        }
    }
    if (sc.output.cadence <= 0) {
        sc.output.cadence = sc.horizon > 0 ? sc.horizon / 500.0 : 1.0;
    }

    if (j.contains("lyapunov")) {
        const auto& lj = j.at("lyapunov");
        if (lj.contains("psi")) sc.weights.psi = require_number(lj, "psi", "scenario.lyapunov");
        if (lj.contains("psi0")) sc.weights.psi0 = require_number(lj, "psi0", "scenario.lyapunov");
        if (!(sc.weights.psi >= 0) || !(sc.weights.psi0 >= 0)) {
            throw ConfigError("scenario.lyapunov: psi and psi0 must be >= 0");
        }
        for (const char* key : {"b_plus", "b_minus"}) {
            if (!lj.contains(key)) continue;
            for (const auto& [pipe, val] : lj.at(key).items()) {
                const double b = val.get<double>();
                if (!(b > 0)) throw ConfigError(std::string("scenario.lyapunov.") + key +
                                                ": weights must be > 0");
                (std::string(key) == "b_plus" ? sc.weights.b_plus : sc.weights.b_minus)[pipe] = b;
            }
        }
    }
    return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file '" + path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("scenario '" + path.string() + "': " + e.what());
    }
    return parse_scenario(j, path.parent_path());
}

// Smooth bump that vanishes with zero slope at both pipe ends, so bumped
// initial data stay C1-compatible with the node conditions.
inline SystemState apply_bump(SystemState state, const Network& net, const std::string& pipe,
                              double amp_acoustic, double amp_zero) {
    const Pipe& p = net.pipe(pipe);
    PipeField& f = state.fields.at(pipe);
    for (int i = 0; i <= p.cells; ++i) {
        const double s = std::sin(M_PI * i / static_cast<double>(p.cells));
        const double bump = s * s;
        f.r_plus[i] += amp_acoustic * bump;
        f.r_minus[i] += amp_acoustic * bump;
        f.r_zero[i] += amp_zero * bump;
    }
    return state;
}

// Applies one sweep parameter to a parsed scenario (and its resolved snapshot).
// "mu" sets every node's blending weight; the dotted names address scenario
// fields directly.
inline void apply_sweep_value(Scenario& sc, const std::string& param, double value) {
    auto set_resolved = [&sc](std::initializer_list<const char*> path, double v) {
        nlohmann::ordered_json* j = &sc.resolved;
        auto it = path.begin();
        for (; std::next(it) != path.end(); ++it) j = &(*j)[*it];
        (*j)[*it] = v;
    };
    if (param == "noise.amplitude") {
        if (!(value >= 0)) throw ConfigError("sweep: noise.amplitude must be >= 0");
        sc.noise.amplitude = value;
        set_resolved({"noise", "amplitude"}, value);
    } else if (param == "noise.ramp_time") {
        if (!(value > 0)) throw ConfigError("sweep: noise.ramp_time must be > 0");
        sc.noise.ramp_time = value;
        set_resolved({"noise", "ramp_time"}, value);
    } else if (param == "initial.bump_amplitude") {
        sc.initial.bump_amplitude = value;
        set_resolved({"initial", "bump_amplitude"}, value);
    } else if (param == "initial.bump_amplitude_zero") {
        sc.initial.bump_amplitude_zero = value;
        set_resolved({"initial", "bump_amplitude_zero"}, value);
    } else if (param == "lyapunov.psi") {
        if (!(value >= 0)) throw ConfigError("sweep: lyapunov.psi must be >= 0");
        sc.weights.psi = value;
        set_resolved({"lyapunov", "psi"}, value);
    } else if (param == "lyapunov.psi0") {
        if (!(value >= 0)) throw ConfigError("sweep: lyapunov.psi0 must be >= 0");
        sc.weights.psi0 = value;
        set_resolved({"lyapunov", "psi0"}, value);
    } else if (param == "cfl") {
        if (!(value > 0) || !(value <= 1)) throw ConfigError("sweep: cfl must lie in (0, 1]");
        sc.cfl = value;
        set_resolved({"cfl"}, value);
    } else if (param == "T") {
        if (!(value >= 0)) throw ConfigError("sweep: T must be >= 0");
        sc.horizon = value;
        set_resolved({"T"}, value);
    } else if (param == "mu") {
        if (!(value >= 0 && value <= 1)) throw ConfigError("sweep: mu must lie in [0, 1]");
        for (auto& [id, node] : sc.net.nodes) node.mu = value;
        if (sc.resolved.contains("network") && sc.resolved["network"].is_object()) {
            for (auto& nj : sc.resolved["network"]["nodes"]) nj["mu"] = value;
        }
    } else {
        throw ConfigError("sweep: unknown parameter '" + param + "'");
    }
}

}  // namespace blendflow
