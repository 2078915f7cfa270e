#pragma once

#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "blendflow/detail/linalg.hpp"
#include "blendflow/gas_physics.hpp"
#include "blendflow/network.hpp"
#include "blendflow/solver.hpp"

namespace blendflow {

struct SteadyPipe {
    std::vector<double> j_plus;   // on the solver grid, cells+1 points
    std::vector<double> j_minus;
    std::vector<double> j_zero;
    double flux = 0;  // kg/(m^2 s), constant along the pipe, positive toward x = L
};

struct SteadyProfile {
    std::map<std::string, SteadyPipe> pipes;
    std::map<std::string, double> node_density;
    std::map<std::string, double> node_pressure;
    std::map<std::string, int> s_sign;  // sign of lambda_0 per pipe (0 when stagnant)
    double min_velocity_gap = 0;        // min over the grid of |J_+ - J_-|
    bool subsonic = true;
    double max_kirchhoff_residual = 0;
    std::vector<std::string> flags;
};

namespace detail {

// Right side of the stationary density equation: mass flux is constant, so the
// momentum balance reduces to d(rho)/dx = -theta/2 * q|q|/rho / (p' - q^2/rho^2).
inline double steady_density_slope(const PressureLaw& law, double rho, double q,
                                   double theta, double x) {
    const double pd = law.pressure_deriv(rho);
    const double denom = pd - q * q / (rho * rho);
    if (!(denom > 1e-10 * pd)) {
        throw SimulationError("sonic transition in steady profile at x = " + std::to_string(x));
    }
    return -0.5 * theta * q * std::abs(q) / rho / denom;
}

// Integrates the stationary density from x0 over a span with classic RK4 and
// step-doubling error control.
inline double integrate_steady_density(const PressureLaw& law, double rho0, double q,
                                       double theta, double x0, double span, double tol) {
    if (span == 0 || (q == 0) || theta == 0) return rho0;  // slope vanishes
    auto rk4 = [&](double rho, double x, double h) {
        // x0 offsets the position reported on a sonic transition.
        const double k1 = steady_density_slope(law, rho, q, theta, x0 + x);
        const double k2 =
            steady_density_slope(law, rho + 0.5 * h * k1, q, theta, x0 + x + 0.5 * h);
        const double k3 =
            steady_density_slope(law, rho + 0.5 * h * k2, q, theta, x0 + x + 0.5 * h);
        const double k4 = steady_density_slope(law, rho + h * k3, q, theta, x0 + x + h);
        return rho + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    };
    double x = 0, rho = rho0;
    double h = span / 8.0;
    int guard = 0;
    while (x < span) {
        if (++guard > 2000000) throw SimulationError("steady integration stalled");
        h = std::min(h, span - x);
        const double full = rk4(rho, x, h);
        const double mid = rk4(rho, x, 0.5 * h);
        const double half = rk4(mid, x + 0.5 * h, 0.5 * h);
        const double err = std::abs(half - full) / 15.0;
        const double tol_step = tol * std::max(1.0, std::abs(rho)) * (h / span);
        if (err <= tol_step || h <= 1e-14 * span) {
            x += h;
            rho = half + (half - full) / 15.0;
            if (err > 0) h *= std::min(2.0, 0.9 * std::pow(tol_step / err, 0.25));
            else h *= 2.0;
        } else {
            h *= std::max(0.1, 0.9 * std::pow(tol_step / err, 0.25));
        }
    }
    return rho;
}

}  // namespace detail

// Density run along one pipe for a prescribed inlet density and mass flux.
inline std::vector<double> steady_pipe_density(const PressureLaw& law, double rho_inlet,
                                               double flux, double nu, const Pipe& pipe,
                                               double tol = 1e-10) {
    const double theta = 8.0 * nu;
    std::vector<double> rho(pipe.cells + 1);
    rho[0] = rho_inlet;
    const double dx = pipe.dx();
    for (int i = 0; i < pipe.cells; ++i) {
        rho[i + 1] = detail::integrate_steady_density(law, rho[i], flux, theta,
                                                      i * dx, dx, tol);
    }
    return rho;
}

inline SteadyPipe steady_pipe(const PressureLaw& law, double rho_inlet, double flux,
                              double nu, const Pipe& pipe, double tol = 1e-10) {
    const auto rho = steady_pipe_density(law, rho_inlet, flux, nu, pipe, tol);
    SteadyPipe out;
    out.flux = flux;
    out.j_plus.resize(rho.size());
    out.j_minus.resize(rho.size());
    out.j_zero.assign(rho.size(), 0.0);
    for (std::size_t i = 0; i < rho.size(); ++i) {
        const double w = law.rtilde(rho[i]);
        const double u = flux / rho[i];
        out.j_plus[i] = w + u;
        out.j_minus[i] = w - u;
    }
    return out;
}

// Boundary data for the stationary solve: exactly one of a pressure or a mass
// flux into the network at each degree-1 node.
struct SteadyBoundary {
    std::optional<double> pressure;     // Pa
    std::optional<double> inflow_flux;  // kg/(m^2 s), positive into the network
};

namespace detail {

struct SteadyUnknowns {
    std::vector<std::string> node_ids;   // ordered
    std::vector<std::string> pipe_ids;   // ordered
    std::map<std::string, std::size_t> node_index;
    std::map<std::string, std::size_t> pipe_index;
};

inline SteadyUnknowns steady_unknowns(const Network& net) {
    SteadyUnknowns u;
    for (const auto& [id, n] : net.nodes) {
        u.node_index[id] = u.node_ids.size();
        u.node_ids.push_back(id);
    }
    for (const auto& [id, p] : net.pipes) {
        u.pipe_index[id] = u.pipe_ids.size();
        u.pipe_ids.push_back(id);
    }
    return u;
}

// Node claiming the given end of a pipe.
inline const NodeSpec& claiming_node(const Network& net, const std::string& pipe, PipeEnd end) {
    for (const auto& [id, n] : net.nodes) {
        for (const Incident& inc : n.incident) {
            if (inc.pipe == pipe && inc.end == end) return n;
        }
    }
    throw ConfigError("pipe '" + pipe + "' has an unclaimed end");
}

// Boundary residual: one scalar equation at a degree-1 node, as a function of
// the nodal density and the incident pipe's flux.
using BoundaryResidualFn =
    std::function<double(const NodeSpec& node, double rho_v, double q_e, int n_sign)>;

inline SteadyProfile solve_steady_core(
    const Network& net, const PressureLaw& law,
    const std::map<std::string, BoundaryResidualFn>& boundary,
    const std::map<std::string, double>& rho_guess, double q_guess) {
    const SteadyUnknowns idx = steady_unknowns(net);
    const std::size_t nn = idx.node_ids.size(), np = idx.pipe_ids.size();
    const std::size_t dim = nn + np;
    const double ode_tol = 1e-12;

    std::vector<double> x(dim);
    for (std::size_t i = 0; i < nn; ++i) {
        auto it = rho_guess.find(idx.node_ids[i]);
        x[i] = it != rho_guess.end() ? it->second : 1.0;
    }
    for (std::size_t i = 0; i < np; ++i) x[nn + i] = q_guess;

    auto residual = [&](const std::vector<double>& y) {
        std::vector<double> f(dim, 0.0);
        // Pipe rows: profile integrated from the left node must hit the right node.
        for (std::size_t i = 0; i < np; ++i) {
            const Pipe& p = net.pipe(idx.pipe_ids[i]);
            const NodeSpec& left = claiming_node(net, p.id, PipeEnd::left);
            const NodeSpec& right = claiming_node(net, p.id, PipeEnd::right);
            const double rho0 = y[idx.node_index.at(left.id)];
            const double q = y[nn + i];
            const double rho_end = integrate_steady_density(law, rho0, q, p.friction_theta,
                                                            0.0, p.length, ode_tol);
            f[i] = rho_end - y[idx.node_index.at(right.id)];
        }
        // Node rows: Kirchhoff at interior nodes, boundary closure otherwise.
        for (std::size_t i = 0; i < nn; ++i) {
            const NodeSpec& node = net.node(idx.node_ids[i]);
            if (node.degree() >= 2) {
                double sum = 0;
                for (const Incident& inc : node.incident) {
                    const Pipe& p = net.pipe(inc.pipe);
                    sum += end_sign(inc.end) * p.diameter * p.diameter *
                           y[nn + idx.pipe_index.at(inc.pipe)];
                }
                f[np + i] = sum;
            } else {
                const Incident& inc = node.incident.front();
                const double q = y[nn + idx.pipe_index.at(inc.pipe)];
                f[np + i] = boundary.at(node.id)(node, y[i], q, end_sign(inc.end));
            }
        }
        return f;
    };

    auto norm_inf = [](const std::vector<double>& v) {
        double m = 0;
        for (double a : v) m = std::max(m, std::abs(a));
        return m;
    };

    std::vector<double> f = residual(x);
    double fnorm = norm_inf(f);
    std::vector<double> history{fnorm};
    const double target = 1e-11;
    int stalled = 0;

    for (int iter = 0; iter < 200 && fnorm > target; ++iter) {
        Matrix jac(dim, dim);
        for (std::size_t j = 0; j < dim; ++j) {
            const double h = 1e-7 * std::max(1.0, std::abs(x[j]));
            std::vector<double> xp = x;
            xp[j] += h;
            const std::vector<double> fp = residual(xp);
            for (std::size_t i = 0; i < dim; ++i) jac(i, j) = (fp[i] - f[i]) / h;
        }
        std::vector<double> rhs(dim);
        for (std::size_t i = 0; i < dim; ++i) rhs[i] = -f[i];
        std::vector<double> step;
        try {
            step = solve_dense(jac, rhs);
        } catch (const SimulationError&) {
            throw SimulationError("steady_network: singular Jacobian (check boundary data)");
        }
        double alpha = 1.0;
        std::vector<double> x_new, f_new;
        double fnorm_new = fnorm;
        while (alpha >= 1.0 / 1024.0) {
            x_new = x;
            for (std::size_t i = 0; i < dim; ++i) x_new[i] += alpha * step[i];
            bool ok = true;
            try {
                f_new = residual(x_new);
            } catch (const SimulationError&) {
                ok = false;  // stepped into a sonic or inadmissible state
            }
            if (ok) {
                fnorm_new = norm_inf(f_new);
                if (fnorm_new <= (1.0 - 0.25 * alpha) * fnorm || fnorm_new < target) break;
            }
            alpha *= 0.5;
        }
        if (fnorm_new >= fnorm) {
            if (++stalled >= 3) break;
        } else {
            stalled = 0;
        }
        x = x_new;
        f = f_new;
        fnorm = fnorm_new;
        history.push_back(fnorm);
    }
    if (fnorm > 1e-10) {
        std::string hist;
        for (double h : history) hist += std::to_string(h) + " ";
        throw SimulationError("steady_network: Newton did not converge, residual history: " +
                              hist);
    }

    // Pressure-driven residuals scale with q|q|, so Newton cannot resolve a
    // truly stagnant pipe below sqrt(tol). Snap near-zero fluxes to exactly
    // zero when the residual allows it.
    {
        double q_max = 0;
        for (std::size_t i = 0; i < np; ++i) q_max = std::max(q_max, std::abs(x[nn + i]));
        bool any_small = false;
        std::vector<double> x_snap = x;
        for (std::size_t i = 0; i < np; ++i) {
            if (std::abs(x[nn + i]) < 1e-3 * std::max(1.0, q_max)) {
                x_snap[nn + i] = 0.0;
                any_small = true;
            }
        }
        if (any_small) {
            const std::vector<double> f_snap = residual(x_snap);
            if (norm_inf(f_snap) <= std::max(fnorm, target)) x = x_snap;
        }
    }

    // Assemble the profile.
    SteadyProfile prof;
    for (std::size_t i = 0; i < nn; ++i) {
        prof.node_density[idx.node_ids[i]] = x[i];
        prof.node_pressure[idx.node_ids[i]] = law.pressure(x[i]);
    }
    prof.min_velocity_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < np; ++i) {
        const Pipe& p = net.pipe(idx.pipe_ids[i]);
        const NodeSpec& left = claiming_node(net, p.id, PipeEnd::left);
        const double q = x[nn + i];
        SteadyPipe sp = steady_pipe(law, x[idx.node_index.at(left.id)], q, p.nu, p, ode_tol);
        for (std::size_t k = 0; k < sp.j_plus.size(); ++k) {
            const double gap = std::abs(sp.j_plus[k] - sp.j_minus[k]);
            prof.min_velocity_gap = std::min(prof.min_velocity_gap, gap);
            const double rho = law.rtilde_inv(0.5 * (sp.j_plus[k] + sp.j_minus[k]));
            const double u = 0.5 * (sp.j_plus[k] - sp.j_minus[k]);
            if (!(u * u < law.pressure_deriv(rho))) prof.subsonic = false;
        }
        prof.s_sign[p.id] = q > 0 ? 1 : (q < 0 ? -1 : 0);
        prof.pipes[p.id] = std::move(sp);
    }
    if (!prof.subsonic) prof.flags.push_back("subsonic condition violated");
    if (!(prof.min_velocity_gap > 0)) {
        prof.flags.push_back("zero velocity somewhere: nonzero-velocity hypothesis violated");
    }

    // Kirchhoff bookkeeping for the report.
    for (const auto& [vid, node] : net.nodes) {
        if (node.degree() < 2) continue;
        double sum = 0;
        for (const Incident& inc : node.incident) {
            const Pipe& p = net.pipe(inc.pipe);
            sum += end_sign(inc.end) * p.diameter * p.diameter * prof.pipes.at(inc.pipe).flux;
        }
        prof.max_kirchhoff_residual = std::max(prof.max_kirchhoff_residual, std::abs(sum));
    }

    // Hydrogen fractions: constant along each pipe, mixed at nodes, fed by the
    // u_0 boundary signals at inflow boundaries. Linear in the unknowns.
    Matrix hm(np, np);
    std::vector<double> hrhs(np, 0.0);
    for (std::size_t i = 0; i < np; ++i) {
        const Pipe& p = net.pipe(idx.pipe_ids[i]);
        const double q = prof.pipes.at(p.id).flux;
        hm(i, i) = 1.0;
        if (q == 0) {
            prof.flags.push_back("pipe '" + p.id +
                                 "': hydrogen fraction undetermined (zero flux), set to 0");
            continue;
        }
        const NodeSpec& upstream =
            claiming_node(net, p.id, q > 0 ? PipeEnd::left : PipeEnd::right);
        if (upstream.degree() == 1) {
            hrhs[i] = upstream.boundary.value().u_zero(0.0);
            continue;
        }
        double denom = 0;
        std::vector<std::pair<std::size_t, double>> weights;
        for (const Incident& inc : upstream.incident) {
            const Pipe& pf = net.pipe(inc.pipe);
            const double qf = prof.pipes.at(inc.pipe).flux;
            const bool into_node = end_sign(inc.end) * qf > 0;
            if (!into_node) continue;
            const double w = pf.diameter * pf.diameter * std::abs(qf);
            denom += w;
            weights.push_back({idx.pipe_index.at(inc.pipe), w});
        }
        if (denom == 0) {
            prof.flags.push_back("node '" + upstream.id +
                                 "': hydrogen mixing undetermined (no inflow)");
            continue;
        }
        for (const auto& [j, w] : weights) hm(i, j) -= w / denom;
    }
    std::vector<double> j_zero = solve_dense(hm, hrhs);
    for (std::size_t i = 0; i < np; ++i) {
        auto& arr = prof.pipes.at(idx.pipe_ids[i]).j_zero;
        arr.assign(arr.size(), j_zero[i]);
    }
    return prof;
}

}  // namespace detail

// Stationary network state for explicit pressure/flux boundary data.
inline SteadyProfile steady_network(const Network& net, const PressureLaw& law,
                                    const std::map<std::string, SteadyBoundary>& boundary,
                                    double gamma) {
    std::map<std::string, detail::BoundaryResidualFn> fns;
    std::map<std::string, double> rho_guess;
    int pressure_refs = 0;
    double net_flux = 0;
    bool any_flux = false;
    for (const auto& [vid, node] : net.nodes) {
        if (node.degree() != 1) continue;
        auto it = boundary.find(vid);
        if (it == boundary.end()) {
            throw ConfigError("steady_network: no boundary data for node '" + vid + "'");
        }
        const SteadyBoundary& spec = it->second;
        if (spec.pressure.has_value() == spec.inflow_flux.has_value()) {
            throw ConfigError("steady_network: node '" + vid +
                              "' needs exactly one of pressure or inflow_flux");
        }
        if (spec.pressure) {
            pressure_refs++;
            const double target = *spec.pressure;
            // Invert the pressure law by bisection for the initial guess.
            double lo = law.range().rho_min, hi = law.range().rho_max;
            for (int k = 0; k < 200; ++k) {
                const double mid = 0.5 * (lo + hi);
                (law.pressure(mid) < target ? lo : hi) = mid;
            }
            rho_guess[vid] = 0.5 * (lo + hi);
            fns[vid] = [target, &law](const NodeSpec&, double rho_v, double, int) {
                return (law.pressure(rho_v) - target) / std::max(1.0, std::abs(target));
            };
        } else {
            const double target = *spec.inflow_flux;
            any_flux = true;
            net_flux += target;
            fns[vid] = [target](const NodeSpec&, double, double q_e, int n_sign) {
                return -n_sign * q_e - target;
            };
        }
    }
    if (pressure_refs == 0) {
        throw ConfigError("steady_network: at least one pressure reference is required");
    }
    (void)any_flux;
    (void)net_flux;
    (void)gamma;
    return detail::solve_steady_core(net, law, fns, rho_guess, 0.01);
}

// Stationary state compatible with the network's own boundary signals at t=0:
// at each degree-1 node the outgoing invariant matches the blended Dirichlet
// condition, so feeding the profile back into the solver is drift-free up to
// truncation error.
inline SteadyProfile steady_from_boundary_signals(const Network& net, const PressureLaw& law,
                                                  double gamma) {
    std::map<std::string, detail::BoundaryResidualFn> fns;
    double mean_u = 0;
    int count = 0;
    for (const auto& [vid, node] : net.nodes) {
        if (node.degree() != 1) continue;
        mean_u += node.boundary.value().u_sigma(0.0);
        count++;
        fns[vid] = [&law](const NodeSpec& node, double rho_v, double q_e, int n_sign) {
            const double w = law.rtilde(rho_v);
            const double u = q_e / rho_v;
            const double j_out = n_sign < 0 ? w + u : w - u;
            const double j_in = n_sign < 0 ? w - u : w + u;
            const double u_sigma = node.boundary.value().u_sigma(0.0);
            return j_out - (1.0 - node.mu) * u_sigma - node.mu * j_in;
        };
    }
    std::map<std::string, double> rho_guess;
    if (count > 0) {
        const double w0 = mean_u / count;
        double rho0 = 1.0;
        try {
            rho0 = law.rtilde_inv(w0);
        } catch (const SimulationError&) {
            rho0 = 1.0;
        }
        for (const auto& [vid, node] : net.nodes) rho_guess[vid] = rho0;
    }
    (void)gamma;
    return detail::solve_steady_core(net, law, fns, rho_guess, 0.01);
}

inline SystemState state_from_profile(const SteadyProfile& prof, const Network& net) {
    SystemState s;
    s.t = 0;
    for (const auto& [id, sp] : prof.pipes) {
        PipeField f;
        f.r_plus = sp.j_plus;
        f.r_minus = sp.j_minus;
        f.r_zero = sp.j_zero;
        f.dx = net.pipe(id).dx();
        s.fields[id] = f;
    }
    return s;
}

inline void write_steady_csv(std::ostream& os, const SteadyProfile& prof, const Network& net) {
    os << "pipe,x,J_plus,J_minus,J_zero\n";
    char buf[128];
    for (const auto& [id, sp] : prof.pipes) {
        const double dx = net.pipe(id).dx();
        for (std::size_t i = 0; i < sp.j_plus.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g\n", id.c_str(),
                          i * dx, sp.j_plus[i], sp.j_minus[i], sp.j_zero[i]);
            os << buf;
        }
    }
}

inline SteadyProfile read_steady_csv(std::istream& is, const Network& net,
                                     const PressureLaw& law, double gamma) {
    SteadyProfile prof;
    std::string line;
    if (!std::getline(is, line) || line != "pipe,x,J_plus,J_minus,J_zero") {
        throw ConfigError("steady profile csv: bad header");
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string pipe, field;
        std::getline(ss, pipe, ',');
        double vals[4];
        for (double& v : vals) {
            if (!std::getline(ss, field, ',')) throw ConfigError("steady profile csv: short row");
            v = std::strtod(field.c_str(), nullptr);
        }
        SteadyPipe& sp = prof.pipes[pipe];
        sp.j_plus.push_back(vals[1]);
        sp.j_minus.push_back(vals[2]);
        sp.j_zero.push_back(vals[3]);
    }
    for (auto& [id, sp] : prof.pipes) {
        const Pipe& p = net.pipe(id);
        if (sp.j_plus.size() != static_cast<std::size_t>(p.cells) + 1) {
            throw ConfigError("steady profile csv: row count does not match grid of pipe '" +
                              id + "'");
        }
        const std::size_t mid = sp.j_plus.size() / 2;
        const double rho = law.rtilde_inv(0.5 * (sp.j_plus[mid] + sp.j_minus[mid]));
        sp.flux = rho * 0.5 * (sp.j_plus[mid] - sp.j_minus[mid]);
        prof.s_sign[id] = sp.flux > 0 ? 1 : (sp.flux < 0 ? -1 : 0);
    }
    (void)gamma;
    return prof;
}

}  // namespace blendflow
