#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "blendflow/detail/rng.hpp"
#include "blendflow/lyapunov.hpp"
#include "blendflow/network.hpp"
#include "blendflow/solver.hpp"

namespace blendflow {

// Smoothed measurement perturbation: seeded sum of sines under a C1 ramp, so
// the signal and its derivative vanish at t = 0 and |Z| never exceeds the
// amplitude.
struct NoiseModel {
    double amplitude = 0;
    std::uint64_t seed = 0;
    int modes = 4;
    double ramp_time = 1.0;  // s
};

inline double smooth_noise(const NoiseModel& model, double t) {
    if (!(t >= 0)) throw ConfigError("smooth_noise: t must be >= 0");
    if (!(model.ramp_time > 0)) throw ConfigError("smooth_noise: ramp_time must be > 0");
    if (model.modes < 1) throw ConfigError("smooth_noise: modes must be >= 1");
    if (model.amplitude == 0) return 0;
    detail::SplitMix64 rng(model.seed);
    double sum = 0;
    for (int k = 0; k < model.modes; ++k) {
        const double omega = 2.0 * M_PI * rng.uniform(0.05, 0.5);
        const double phase = 2.0 * M_PI * rng.uniform();
        sum += std::sin(omega * t + phase);
    }
    double s = std::min(t / model.ramp_time, 1.0);
    const double ramp = s * s * (3.0 - 2.0 * s);
    return model.amplitude * ramp * sum / model.modes;
}

// One perturbation stream per (node, incident pipe, invariant), all derived
// from a single base seed.
class NoiseField {
public:
    NoiseField() = default;
    explicit NoiseField(const NoiseModel& base) : base_(base) {}

    double z_out(const std::string& node, const std::string& pipe, double t) const {
        return eval(node, pipe, "out", t);
    }
    double z_zero(const std::string& node, const std::string& pipe, double t) const {
        return eval(node, pipe, "zero", t);
    }
    const NoiseModel& base() const { return base_; }

private:
    double eval(const std::string& node, const std::string& pipe, const char* channel,
                double t) const {
        if (base_.amplitude == 0) return 0;
        NoiseModel m = base_;
        m.seed = detail::fnv1a64(base_.seed, node + "\x1f" + pipe + "\x1f" + channel);
        return smooth_noise(m, t);
    }

    NoiseModel base_;
};

// Endpoint values the observer applies at one node: the nodal coupling of its
// own traces blended with the measured plant values plus noise.
struct ObserverNodeValues {
    std::map<std::string, double> out;   // acoustic outgoing value per incident pipe
    std::map<std::string, double> zero;  // hydrogen value per outgoing pipe
};

namespace detail {

inline PipeEnd incident_end(const NodeSpec& node, const std::string& pipe) {
    for (const Incident& inc : node.incident) {
        if (inc.pipe == pipe) return inc.end;
    }
    throw ConfigError("pipe '" + pipe + "' not incident to node '" + node.id + "'");
}

inline std::map<std::string, double> observer_sigma_values(
    const NodeSpec& node, const SystemState& observer, const SystemState& plant,
    const NoiseField& noise, double t, const Network& net) {
    std::map<std::string, double> out;
    if (node.degree() == 1) {
        const Incident& inc = node.incident.front();
        const Pipe& p = net.pipe(inc.pipe);
        const double r_in = incoming_value(observer.fields.at(inc.pipe), p, inc.end);
        const double u_sigma = node.boundary.value().u_sigma(t);
        out[inc.pipe] = (1.0 - node.mu) * (u_sigma + noise.z_out(node.id, inc.pipe, t)) +
                        node.mu * r_in;
        return out;
    }
    std::map<std::string, double> r_in;
    for (const Incident& inc : node.incident) {
        r_in[inc.pipe] = incoming_value(observer.fields.at(inc.pipe), net.pipe(inc.pipe), inc.end);
    }
    const auto coupled = junction_coupling_sigma(node.id, r_in, net);
    for (const Incident& inc : node.incident) {
        const double s_out = outgoing_value(plant.fields.at(inc.pipe), net.pipe(inc.pipe), inc.end);
        out[inc.pipe] = node.mu * coupled.at(inc.pipe) +
                        (1.0 - node.mu) * (s_out + noise.z_out(node.id, inc.pipe, t));
    }
    return out;
}

inline std::map<std::string, double> observer_zero_values(
    const NodeSpec& node, const SystemState& observer, const SystemState& plant,
    const NoiseField& noise, double t, const Network& net, const PressureLaw& law,
    double gamma, const SolverOptions& opts, NodeTrace::Entry* entry) {
    std::map<std::string, double> out;
    const auto inflow = inflow_set(node.id, observer, net, law, gamma, opts.lambda_tol, entry);
    if (inflow.size() == node.incident.size()) return out;
    if (node.degree() == 1) {
        const Incident& inc = node.incident.front();
        out[inc.pipe] =
            node.boundary.value().u_zero(t) + noise.z_zero(node.id, inc.pipe, t);
        return out;
    }
    const auto coupled =
        junction_coupling_hydrogen(node.id, observer, inflow, net, law, gamma, opts);
    for (const auto& [pid, value] : coupled) {
        const Pipe& p = net.pipe(pid);
        const PipeEnd end = incident_end(node, pid);
        const double s_zero = plant.fields.at(pid).r_zero[end_index(p, end)];
        out[pid] = node.mu * value +
                   (1.0 - node.mu) * (s_zero + noise.z_zero(node.id, pid, t));
    }
    return out;
}

}  // namespace detail

// Both families of observer endpoint values at one node, evaluated on the
// given pair of states.
inline ObserverNodeValues observer_node_values(const std::string& v,
                                               const SystemState& observer,
                                               const SystemState& plant,
                                               const NoiseField& noise, double t,
                                               const Network& net, const PressureLaw& law,
                                               double gamma, const SolverOptions& opts = {}) {
    const NodeSpec& node = net.node(v);
    ObserverNodeValues vals;
    vals.out = detail::observer_sigma_values(node, observer, plant, noise, t, net);
    vals.zero = detail::observer_zero_values(node, observer, plant, noise, t, net, law,
                                             gamma, opts, nullptr);
    return vals;
}

struct TwinState {
    SystemState plant;
    SystemState observer;
    double t() const { return plant.t; }
};

struct TwinStepInfo {
    NodeTrace plant_trace;
    NodeTrace observer_trace;
    // Max |delta_out - mu K_sigma(delta) - (1-mu) Z_out| over interior nodes.
    double diff_identity = 0;
    NodeResiduals plant_residuals;
};

// Advances plant and observer by the same dt on the shared clock. The plant
// moves first; the observer's node conditions then read the plant's fresh
// endpoint values as measurements.
inline TwinState twin_step(const TwinState& tw, const Network& net, const PressureLaw& law,
                           double gamma, double dt, const NoiseField& noise,
                           const SolverOptions& opts = {}, TwinStepInfo* info = nullptr) {
    TwinState out;
    out.plant = advance_plant(tw.plant, net, law, gamma, dt, opts,
                              info ? &info->plant_trace : nullptr);
    const double t_new = out.plant.t;

    out.observer.t = t_new;
    for (const auto& [id, f] : tw.observer.fields) {
        out.observer.fields[id] = step_interior(f, law, net.pipe(id).nu, gamma, dt);
    }
    for (const auto& [vid, node] : net.nodes) {
        const auto vals =
            detail::observer_sigma_values(node, out.observer, out.plant, noise, t_new, net);
        for (const auto& [pid, value] : vals) {
            outgoing_slot(out.observer.fields.at(pid), net.pipe(pid),
                          detail::incident_end(node, pid)) = value;
        }
    }
    for (const auto& [vid, node] : net.nodes) {
        NodeTrace::Entry* entry = info ? &info->observer_trace.nodes[vid] : nullptr;
        const auto vals = detail::observer_zero_values(node, out.observer, out.plant, noise,
                                                       t_new, net, law, gamma, opts, entry);
        for (const auto& [pid, value] : vals) {
            const Pipe& p = net.pipe(pid);
            out.observer.fields.at(pid).r_zero[end_index(p, detail::incident_end(node, pid))] =
                value;
        }
    }

    if (info) {
        info->plant_residuals = check_node_conditions(out.plant, net, law, gamma);
        for (const auto& [vid, node] : net.nodes) {
            if (node.degree() < 2) continue;
            std::map<std::string, double> delta_in;
            for (const Incident& inc : node.incident) {
                const Pipe& p = net.pipe(inc.pipe);
                delta_in[inc.pipe] =
                    incoming_value(out.observer.fields.at(inc.pipe), p, inc.end) -
                    incoming_value(out.plant.fields.at(inc.pipe), p, inc.end);
            }
            const auto coupled = junction_coupling_sigma(vid, delta_in, net);
            for (const Incident& inc : node.incident) {
                const Pipe& p = net.pipe(inc.pipe);
                const double lhs =
                    outgoing_value(out.observer.fields.at(inc.pipe), p, inc.end) -
                    outgoing_value(out.plant.fields.at(inc.pipe), p, inc.end);
                const double rhs =
                    node.mu * coupled.at(inc.pipe) +
                    (1.0 - node.mu) * noise.z_out(vid, inc.pipe, t_new);
                info->diff_identity = std::max(info->diff_identity, std::abs(lhs - rhs));
            }
        }
    }
    return out;
}

// Measured perturbation level sum_v 2 ||Z_out^v(t)||^2.
inline double perturbation_level_sigma(const NoiseField& noise, const Network& net, double t) {
    double total = 0;
    for (const auto& [vid, node] : net.nodes) {
        double norm2 = 0;
        for (const Incident& inc : node.incident) {
            const double z = noise.z_out(vid, inc.pipe, t);
            norm2 += z * z;
        }
        total += 2.0 * norm2;
    }
    return total;
}

// Measured hydrogen perturbation level: weighted by the outgoing transport
// speeds and the exponential weights at the node ends.
inline double perturbation_level_zero(const NoiseField& noise, const Network& net,
                                      const SystemState& observer, const PressureLaw& law,
                                      double gamma, double psi0,
                                      const std::map<std::string, int>& s_sign, double t,
                                      double lambda_tol = 1e-8) {
    double total = 0;
    for (const auto& [vid, node] : net.nodes) {
        const auto inflow = inflow_set(vid, observer, net, law, gamma, lambda_tol);
        for (const Incident& inc : node.incident) {
            if (std::find(inflow.begin(), inflow.end(), inc.pipe) != inflow.end()) continue;
            const Pipe& p = net.pipe(inc.pipe);
            const PipeField& f = observer.fields.at(inc.pipe);
            const CharacteristicSpeeds ev = eigenvalues(law, end_state(f, p, inc.end), gamma);
            auto it = s_sign.find(inc.pipe);
            const double s = (it != s_sign.end()) ? it->second : 0;
            const double x = inc.end == PipeEnd::left ? 0.0 : p.length;
            const double z = noise.z_zero(vid, inc.pipe, t);
            total += 3.0 * std::exp(-s * psi0 * x) * std::abs(ev.lambda_zero) *
                     (1.0 - node.mu) * z * z;
        }
    }
    return total;
}

// One diagnostics record of a twin run.
struct ErrorSample {
    double t = 0;
    double e_sigma = 0;
    double e_zero = 0;
    double l2_delta_plus = 0;
    double l2_delta_minus = 0;
    double l2_delta_zero = 0;
    double eta_sigma = 0;
    double eta_zero = 0;
    double min_mu_margin = 0;
    // Maxima since the previous sample.
    double kirchhoff_rel = 0;
    double pressure_rel = 0;
    double diff_identity = 0;
};

struct ErrorSeries {
    std::vector<ErrorSample> samples;
    double max_kirchhoff_rel = 0;
    double max_pressure_rel = 0;
    double max_diff_identity = 0;
    std::vector<std::string> warnings;

    std::vector<double> times() const {
        std::vector<double> v;
        v.reserve(samples.size());
        for (const auto& s : samples) v.push_back(s.t);
        return v;
    }
    std::vector<double> energy_sigma_trace() const {
        std::vector<double> v;
        v.reserve(samples.size());
        for (const auto& s : samples) v.push_back(s.e_sigma);
        return v;
    }
    std::vector<double> energy_zero_trace() const {
        std::vector<double> v;
        v.reserve(samples.size());
        for (const auto& s : samples) v.push_back(s.e_zero);
        return v;
    }
};

inline DecayFit fit_decay_rate(const ErrorSeries& series, double t_begin, double t_end,
                               Family family = Family::plus) {
    return fit_decay_rate(series.times(),
                          family == Family::zero ? series.energy_zero_trace()
                                                 : series.energy_sigma_trace(),
                          t_begin, t_end);
}

}  // namespace blendflow
