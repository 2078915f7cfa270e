#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "blendflow/gas_physics.hpp"
#include "blendflow/network.hpp"

namespace blendflow {

// Grid functions of the three Riemann invariants on one pipe, stored at the
// cells+1 interface points including both endpoints.
struct PipeField {
    std::vector<double> r_plus;
    std::vector<double> r_minus;
    std::vector<double> r_zero;
    double dx = 0;

    static PipeField zeros(const Pipe& p) {
        PipeField f;
        f.r_plus.assign(p.cells + 1, 0.0);
        f.r_minus.assign(p.cells + 1, 0.0);
        f.r_zero.assign(p.cells + 1, 0.0);
        f.dx = p.dx();
        return f;
    }
};

struct SystemState {
    double t = 0;
    std::map<std::string, PipeField> fields;
};

struct SolverOptions {
    double lambda_tol = 1e-8;   // m/s; hydrogen transport slower than this is flagged
    double denom_tol = 1e-12;   // mixing-weight denominator guard
};

// Per-step nodal bookkeeping: inflow sets, transport signs, applied values.
struct NodeTrace {
    struct Entry {
        std::vector<std::string> inflow;             // E_in members
        std::map<std::string, int> lambda_sign;      // sign of lambda_0 at the node end
        std::map<std::string, double> applied_out;   // acoustic endpoint writes
        std::map<std::string, double> applied_zero;  // hydrogen endpoint writes
        std::vector<std::string> flags;
    };
    std::map<std::string, Entry> nodes;
};

inline int end_index(const Pipe& p, PipeEnd end) {
    return end == PipeEnd::left ? 0 : p.cells;
}

inline int end_sign(PipeEnd end) { return end == PipeEnd::left ? -1 : 1; }

// Invariant running toward the node (trace the node condition consumes).
inline double incoming_value(const PipeField& f, const Pipe& p, PipeEnd end) {
    return end == PipeEnd::left ? f.r_minus.front() : f.r_plus[p.cells];
}

// Invariant running away from the node (slot the node condition overwrites).
inline double& outgoing_slot(PipeField& f, const Pipe& p, PipeEnd end) {
    return end == PipeEnd::left ? f.r_plus.front() : f.r_minus[p.cells];
}

inline double outgoing_value(const PipeField& f, const Pipe& p, PipeEnd end) {
    return end == PipeEnd::left ? f.r_plus.front() : f.r_minus[p.cells];
}

inline RiemannState end_state(const PipeField& f, const Pipe& p, PipeEnd end) {
    const int i = end_index(p, end);
    return {f.r_plus[i], f.r_minus[i], f.r_zero[i]};
}

// Largest stable explicit step: cfl_factor * min over all interface points of
// dx / max(|lambda_+|, |lambda_-|, |lambda_0|).
inline double cfl_dt(const SystemState& state, const Network& net,
                     const PressureLaw& law, double gamma, double cfl_factor) {
    if (!(cfl_factor > 0) || !(cfl_factor <= 1)) {
        throw ConfigError("cfl_factor must lie in (0, 1]");
    }
    double dt = std::numeric_limits<double>::infinity();
    for (const auto& [id, f] : state.fields) {
        net.pipe(id);  // id check
        for (std::size_t i = 0; i < f.r_plus.size(); ++i) {
            const CharacteristicSpeeds ev =
                eigenvalues(law, {f.r_plus[i], f.r_minus[i], f.r_zero[i]}, gamma);
            const double speed = std::max({std::abs(ev.lambda_plus),
                                           std::abs(ev.lambda_minus),
                                           std::abs(ev.lambda_zero)});
            if (!(speed > 0)) {
                throw SimulationError("cfl_dt: degenerate state with zero wave speeds on pipe '" +
                                      id + "'");
            }
            dt = std::min(dt, cfl_factor * f.dx / speed);
        }
    }
    if (!std::isfinite(dt)) throw SimulationError("cfl_dt: empty state");
    return dt;
}

// One first-order upwind step on a single pipe with coefficients frozen at
// the old time level. Updates interior points plus the endpoint values whose
// characteristics leave the pipe; the remaining endpoint slots keep their old
// values and are overwritten by the node conditions afterwards.
inline PipeField step_interior(const PipeField& f, const PressureLaw& law,
                               double nu, double gamma, double dt) {
    const int n = static_cast<int>(f.r_plus.size()) - 1;
    PipeField out = f;
    const double r = dt / f.dx;

    std::vector<double> lp(n + 1), lm(n + 1), l0(n + 1), sig(n + 1);
    for (int i = 0; i <= n; ++i) {
        const CharacteristicSpeeds ev =
            eigenvalues(law, {f.r_plus[i], f.r_minus[i], f.r_zero[i]}, gamma);
        if (!(ev.lambda_plus > 0) || !(ev.lambda_minus < 0)) {
            throw SimulationError("subsonic regime violated at cell " + std::to_string(i) +
                                  " (lambda_+ = " + std::to_string(ev.lambda_plus) +
                                  ", lambda_- = " + std::to_string(ev.lambda_minus) + ")");
        }
        lp[i] = ev.lambda_plus;
        lm[i] = ev.lambda_minus;
        l0[i] = ev.lambda_zero;
        sig[i] = source_sigma(nu, f.r_plus[i], f.r_minus[i]);
    }

    for (int i = 1; i <= n; ++i) {
        out.r_plus[i] = f.r_plus[i] - r * lp[i] * (f.r_plus[i] - f.r_plus[i - 1]) - dt * sig[i];
    }
    for (int i = 0; i < n; ++i) {
        out.r_minus[i] = f.r_minus[i] - r * lm[i] * (f.r_minus[i + 1] - f.r_minus[i]) + dt * sig[i];
    }
    for (int i = 0; i <= n; ++i) {
        if (l0[i] > 0 && i >= 1) {
            out.r_zero[i] = f.r_zero[i] - r * l0[i] * (f.r_zero[i] - f.r_zero[i - 1]);
        } else if (l0[i] < 0 && i < n) {
            out.r_zero[i] = f.r_zero[i] - r * l0[i] * (f.r_zero[i + 1] - f.r_zero[i]);
        }
    }
    return out;
}

// E_in(v): incident pipes whose hydrogen characteristic carries information
// into the node, i.e. n(v,e) * lambda_0 >= 0 at the node end.
inline std::vector<std::string> inflow_set(const std::string& v, const SystemState& state,
                                           const Network& net, const PressureLaw& law,
                                           double gamma, double lambda_tol,
                                           NodeTrace::Entry* entry = nullptr) {
    const NodeSpec& node = net.node(v);
    std::vector<std::string> members;
    for (const Incident& inc : node.incident) {
        const Pipe& p = net.pipe(inc.pipe);
        const PipeField& f = state.fields.at(inc.pipe);
        const CharacteristicSpeeds ev = eigenvalues(law, end_state(f, p, inc.end), gamma);
        const double oriented = end_sign(inc.end) * ev.lambda_zero;
        if (oriented >= 0) members.push_back(inc.pipe);
        if (entry) {
            entry->lambda_sign[inc.pipe] =
                ev.lambda_zero > 0 ? 1 : (ev.lambda_zero < 0 ? -1 : 0);
            if (std::abs(ev.lambda_zero) < lambda_tol) {
                entry->flags.push_back("pipe '" + inc.pipe +
                                       "': |lambda_0| below lambda_tol at node " + v);
            }
        }
    }
    if (entry) {
        entry->inflow = members;
        // An empty set is normal at an inflow boundary; interior mixing
        // needs at least one carrier.
        if (members.empty() && node.degree() >= 2) {
            entry->flags.push_back("empty inflow set at node " + v +
                                   " (mixing not well-posed)");
        }
    }
    return members;
}

// Reflection/transmission map that enforces mass conservation and pressure
// continuity: out_e = -in_e + omega_v * sum_g D_g^2 * in_g.
inline std::map<std::string, double> junction_coupling_sigma(
    const std::string& v, const std::map<std::string, double>& r_in, const Network& net) {
    const NodeSpec& node = net.node(v);
    if (node.degree() < 2) {
        throw ConfigError("junction_coupling_sigma: node '" + v + "' has degree < 2");
    }
    double dsum = 0, mix = 0;
    for (const Incident& inc : node.incident) {
        const double d2 = net.pipe(inc.pipe).diameter * net.pipe(inc.pipe).diameter;
        dsum += d2;
        mix += d2 * r_in.at(inc.pipe);
    }
    const double omega = 2.0 / dsum;
    std::map<std::string, double> out;
    for (const Incident& inc : node.incident) {
        out[inc.pipe] = -r_in.at(inc.pipe) + omega * mix;
    }
    return out;
}

// Perfect-mixing value for the hydrogen fraction on every outgoing pipe:
// flux-weighted convex combination of the incoming fractions.
inline std::map<std::string, double> junction_coupling_hydrogen(
    const std::string& v, const SystemState& state, const std::vector<std::string>& inflow,
    const Network& net, const PressureLaw& law, double gamma,
    const SolverOptions& opts = {}) {
    const NodeSpec& node = net.node(v);
    if (inflow.empty()) {
        throw SimulationError("mixing singularity at node '" + v + "': empty inflow set");
    }
    double denom = 0, mix = 0, max_speed = 0;
    for (const std::string& e : inflow) {
        const Pipe& p = net.pipe(e);
        PipeEnd end = PipeEnd::left;
        for (const Incident& inc : node.incident) {
            if (inc.pipe == e) end = inc.end;
        }
        const PipeField& f = state.fields.at(e);
        const CharacteristicSpeeds ev = eigenvalues(law, end_state(f, p, end), gamma);
        const double w = p.diameter * p.diameter * std::abs(ev.lambda_zero);
        denom += w;
        mix += w * f.r_zero[end_index(p, end)];
        max_speed = std::max(max_speed, std::abs(ev.lambda_zero));
    }
    if (denom < opts.denom_tol || max_speed < opts.lambda_tol) {
        throw SimulationError("mixing singularity at node '" + v +
                              "': inflow velocities vanish (denominator " +
                              std::to_string(denom) + ")");
    }
    const double value = mix / denom;
    std::map<std::string, double> out;
    for (const Incident& inc : node.incident) {
        if (std::find(inflow.begin(), inflow.end(), inc.pipe) == inflow.end()) {
            out[inc.pipe] = value;
        }
    }
    return out;
}

struct BoundaryValues {
    double r_out = 0;
    std::optional<double> r_zero;  // set only when the pipe is not in E_in
};

// Degree-1 node conditions: blended Dirichlet data for the incoming acoustic
// invariant, plus the hydrogen fraction where the flow enters the pipe.
inline BoundaryValues boundary_conditions(const std::string& v, const SystemState& state,
                                          double t, const Network& net,
                                          const PressureLaw& law, double gamma) {
    const NodeSpec& node = net.node(v);
    if (node.degree() != 1 || !node.boundary) {
        throw ConfigError("boundary_conditions: node '" + v + "' has no boundary data");
    }
    const Incident& inc = node.incident.front();
    const Pipe& p = net.pipe(inc.pipe);
    const PipeField& f = state.fields.at(inc.pipe);

    BoundaryValues bv;
    const double r_in = incoming_value(f, p, inc.end);
    bv.r_out = (1.0 - node.mu) * node.boundary.value().u_sigma(t) + node.mu * r_in;

    const CharacteristicSpeeds ev = eigenvalues(law, end_state(f, p, inc.end), gamma);
    if (end_sign(inc.end) * ev.lambda_zero < 0) {
        bv.r_zero = node.boundary.value().u_zero(t);
    }
    return bv;
}

// One full step of the plant system: interior upwind update on every pipe,
// then the node conditions overwrite the endpoint values.
inline SystemState advance_plant(const SystemState& state, const Network& net,
                                 const PressureLaw& law, double gamma, double dt,
                                 const SolverOptions& opts = {},
                                 NodeTrace* trace = nullptr) {
    SystemState out;
    out.t = state.t + dt;
    for (const auto& [id, f] : state.fields) {
        out.fields[id] = step_interior(f, law, net.pipe(id).nu, gamma, dt);
    }
    const double t_new = out.t;

    for (const auto& [vid, node] : net.nodes) {
        NodeTrace::Entry* entry = trace ? &trace->nodes[vid] : nullptr;
        if (node.degree() == 1) {
            const Incident& inc = node.incident.front();
            const Pipe& p = net.pipe(inc.pipe);
            PipeField& f = out.fields.at(inc.pipe);
            const double r_in = incoming_value(f, p, inc.end);
            const double r_out =
                (1.0 - node.mu) * node.boundary.value().u_sigma(t_new) + node.mu * r_in;
            outgoing_slot(f, p, inc.end) = r_out;
            if (entry) entry->applied_out[inc.pipe] = r_out;
        } else {
            std::map<std::string, double> r_in;
            for (const Incident& inc : node.incident) {
                r_in[inc.pipe] =
                    incoming_value(out.fields.at(inc.pipe), net.pipe(inc.pipe), inc.end);
            }
            const auto r_out = junction_coupling_sigma(vid, r_in, net);
            for (const Incident& inc : node.incident) {
                outgoing_slot(out.fields.at(inc.pipe), net.pipe(inc.pipe), inc.end) =
                    r_out.at(inc.pipe);
                if (entry) entry->applied_out[inc.pipe] = r_out.at(inc.pipe);
            }
        }
    }

    // Hydrogen conditions use the post-coupling acoustic values.
    for (const auto& [vid, node] : net.nodes) {
        NodeTrace::Entry* entry = trace ? &trace->nodes[vid] : nullptr;
        const auto inflow = inflow_set(vid, out, net, law, gamma, opts.lambda_tol, entry);
        if (inflow.size() == node.incident.size()) continue;  // nothing outgoing
        if (node.degree() == 1) {
            const Incident& inc = node.incident.front();
            const Pipe& p = net.pipe(inc.pipe);
            const double value = node.boundary.value().u_zero(t_new);
            out.fields.at(inc.pipe).r_zero[end_index(p, inc.end)] = value;
            if (entry) entry->applied_zero[inc.pipe] = value;
        } else {
            const auto zero_values =
                junction_coupling_hydrogen(vid, out, inflow, net, law, gamma, opts);
            for (const auto& [pid, value] : zero_values) {
                PipeEnd end = PipeEnd::left;
                for (const Incident& inc : node.incident) {
                    if (inc.pipe == pid) end = inc.end;
                }
                out.fields.at(pid).r_zero[end_index(net.pipe(pid), end)] = value;
                if (entry) entry->applied_zero[pid] = value;
            }
        }
    }
    return out;
}

struct NodeResiduals {
    double kirchhoff_rel = 0;  // relative to the area-weighted flux scale
    double pressure_rel = 0;   // relative pressure spread across incident ends
};

// Verifies mass conservation and pressure continuity at every interior node
// after conversion to physical variables.
inline NodeResiduals check_node_conditions(const SystemState& state, const Network& net,
                                           const PressureLaw& law, double gamma) {
    NodeResiduals res;
    for (const auto& [vid, node] : net.nodes) {
        if (node.degree() < 2) continue;
        double flux_sum = 0, flux_scale = 0;
        double p_min = std::numeric_limits<double>::infinity();
        double p_max = -std::numeric_limits<double>::infinity();
        for (const Incident& inc : node.incident) {
            const Pipe& p = net.pipe(inc.pipe);
            const PipeField& f = state.fields.at(inc.pipe);
            const PhysicalState phys =
                physical_from_riemann(law, end_state(f, p, inc.end), gamma);
            const double d2 = p.diameter * p.diameter;
            flux_sum += end_sign(inc.end) * d2 * phys.q;
            flux_scale += d2 * std::abs(phys.q);
            const double pr = law.pressure(phys.rho);
            p_min = std::min(p_min, pr);
            p_max = std::max(p_max, pr);
        }
        const double kr = std::abs(flux_sum) / std::max(flux_scale, 1e-300);
        const double pr = (p_max - p_min) / std::max(std::abs(p_max), 1e-300);
        res.kirchhoff_rel = std::max(res.kirchhoff_rel, kr);
        res.pressure_rel = std::max(res.pressure_rel, pr);
    }
    return res;
}

}  // namespace blendflow
