#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "blendflow/detail/linalg.hpp"
#include "blendflow/gas_physics.hpp"
#include "blendflow/network.hpp"
#include "blendflow/solver.hpp"

namespace blendflow {

// Exponential weight configuration: h_+ = B_+ exp(-psi x), h_- = B_- exp(psi x)
// per pipe, and the corresponding rate psi0 for the hydrogen energy.
struct WeightConfig {
    double psi = 0;   // 1/m
    double psi0 = 0;  // 1/m
    std::map<std::string, double> b_plus;   // per pipe, default 1
    std::map<std::string, double> b_minus;  // per pipe, default 1

    double bplus(const std::string& pipe) const {
        auto it = b_plus.find(pipe);
        return it == b_plus.end() ? 1.0 : it->second;
    }
    double bminus(const std::string& pipe) const {
        auto it = b_minus.find(pipe);
        return it == b_minus.end() ? 1.0 : it->second;
    }
};

struct WeightPair {
    double h_plus = 1;
    double h_minus = 1;
};

inline WeightPair weights(const WeightConfig& cfg, const Pipe& pipe, double x) {
    if (!(x >= 0) || !(x <= pipe.length)) {
        throw ConfigError("weights: x outside [0, L] on pipe '" + pipe.id + "'");
    }
    return {cfg.bplus(pipe.id) * std::exp(-cfg.psi * x),
            cfg.bminus(pipe.id) * std::exp(cfg.psi * x)};
}

// kappa = max over the pipe of the two weight ratios. Each ratio is monotone
// in x, so the maximum is attained at an endpoint.
inline double kappa(const WeightConfig& cfg, const Pipe& pipe) {
    const double r0 = cfg.bplus(pipe.id) / cfg.bminus(pipe.id);
    const double rl = r0 * std::exp(-2.0 * cfg.psi * pipe.length);
    return std::max({r0, 1.0 / r0, rl, 1.0 / rl});
}

namespace detail {

// Trapezoidal rule weight for interface point i of n+1 points.
inline double trap_w(std::size_t i, std::size_t n) {
    return (i == 0 || i == n) ? 0.5 : 1.0;
}

}  // namespace detail

// Weighted acoustic error energy: sum_e int h_+ |delta_+|^2 + h_- |delta_-|^2.
// `delta` holds the pointwise difference of the twin states.
inline double energy_sigma(const SystemState& delta, const WeightConfig& cfg,
                           const Network& net) {
    double total = 0;
    for (const auto& [id, f] : delta.fields) {
        const Pipe& p = net.pipe(id);
        const std::size_t n = f.r_plus.size() - 1;
        double acc = 0;
        for (std::size_t i = 0; i <= n; ++i) {
            const WeightPair h = weights(cfg, p, i * f.dx);
            acc += detail::trap_w(i, n) *
                   (h.h_plus * f.r_plus[i] * f.r_plus[i] +
                    h.h_minus * f.r_minus[i] * f.r_minus[i]);
        }
        total += acc * f.dx;
    }
    return total;
}

// Weighted hydrogen error energy: sum_e int exp(-s_e psi0 x) |delta_0|^2.
// s_e is the transport direction sign and must be +-1.
inline double energy_zero(const SystemState& delta, double psi0,
                          const std::map<std::string, int>& s_sign, const Network& net) {
    double total = 0;
    for (const auto& [id, f] : delta.fields) {
        net.pipe(id);
        auto it = s_sign.find(id);
        if (it == s_sign.end() || (it->second != 1 && it->second != -1)) {
            throw SimulationError(
                "energy_zero: transport sign undefined on pipe '" + id +
                "' (nonzero-velocity hypothesis violated)");
        }
        const double s = it->second;
        const std::size_t n = f.r_zero.size() - 1;
        double acc = 0;
        for (std::size_t i = 0; i <= n; ++i) {
            acc += detail::trap_w(i, n) * std::exp(-s * psi0 * i * f.dx) *
                   f.r_zero[i] * f.r_zero[i];
        }
        total += acc * f.dx;
    }
    return total;
}

// Unweighted L2 norm of one invariant family of a difference state.
enum class Family { plus, minus, zero };

inline double l2_norm(const SystemState& delta, Family family) {
    double total = 0;
    for (const auto& [id, f] : delta.fields) {
        const std::vector<double>& arr = family == Family::plus    ? f.r_plus
                                         : family == Family::minus ? f.r_minus
                                                                   : f.r_zero;
        const std::size_t n = arr.size() - 1;
        double acc = 0;
        for (std::size_t i = 0; i <= n; ++i) acc += detail::trap_w(i, n) * arr[i] * arr[i];
        total += acc * f.dx;
    }
    return std::sqrt(total);
}

// Pointwise difference a - b of two states on the same grid.
inline SystemState difference(const SystemState& a, const SystemState& b) {
    SystemState d;
    d.t = a.t;
    for (const auto& [id, fa] : a.fields) {
        const PipeField& fb = b.fields.at(id);
        PipeField fd = fa;
        for (std::size_t i = 0; i < fd.r_plus.size(); ++i) {
            fd.r_plus[i] -= fb.r_plus[i];
            fd.r_minus[i] -= fb.r_minus[i];
            fd.r_zero[i] -= fb.r_zero[i];
        }
        d.fields[id] = std::move(fd);
    }
    return d;
}

// Closed-form Gronwall bound E(0) e^{-chi t} + eta/chi (1 - e^{-chi t}).
inline double gronwall_envelope(double e_at_0, double chi, double eta, double t) {
    if (!(chi > 0)) throw ConfigError("gronwall_envelope: chi must be > 0");
    if (!(eta >= 0)) throw ConfigError("gronwall_envelope: eta must be >= 0");
    if (!(t >= 0)) throw ConfigError("gronwall_envelope: t must be >= 0");
    const double decay = std::exp(-chi * t);
    return e_at_0 * decay + eta / chi * (1.0 - decay);
}

// Empirical bounds extracted from steady profiles and run snapshots, plus the
// decay rates and envelope parameters derived from them.
struct TheoryConstants {
    double c = 0;        // m/s, acoustic speed scale
    double eps0 = 0;     // 1/s, max |d/dx lambda|
    double m = 0;        // m/s, max |R_+ - R_-|
    double m_hat = 0;    // 1/s, max |d/dx S_+-|
    double beta = 0;     // max eigenvalue sensitivity to the invariants
    double v_low = 0;    // m/s, min |lambda_0|
    double v_high = 0;   // m/s, max |lambda_0|
    double chi = 0;      // 1/s, acoustic decay rate
    double chi0 = 0;     // 1/s, hydrogen decay rate
    double eta_sigma = 0;
    double eta_zero = 0;
    double d0 = 0;       // cross-coupling constant in the hydrogen bound
    double zeta = 0;     // evaluation rate for the hydrogen envelope
};

// Two-rate envelope for the hydrogen energy with the acoustic forcing term.
inline double gronwall_envelope_zero(double e_at_0, const TheoryConstants& c, double t) {
    if (!(t >= 0)) throw ConfigError("gronwall_envelope_zero: t must be >= 0");
    if (!(c.zeta < c.chi0)) {
        throw ConfigError("gronwall_envelope_zero: zeta must be < chi0");
    }
    if (c.zeta == c.chi) {
        throw ConfigError("gronwall_envelope_zero: zeta must differ from chi");
    }
    const double ez = std::exp(-c.zeta * t);
    const double ec = std::exp(-c.chi * t);
    const double bracket =
        c.d0 * c.d0 / (4.0 * (c.chi0 - c.zeta)) / (c.zeta - c.chi) + c.d0;
    const double kernel = (ec - ez) / (c.zeta - c.chi) +
                          c.eta_sigma / c.zeta * (1.0 - ez);
    return e_at_0 * ez + c.eta_zero / c.zeta + bracket * kernel;
}

struct PsiPipeMargin {
    std::string pipe;
    double kappa = 1;
    double margin = 0;  // positive iff the decay condition holds on this pipe
};

struct PsiConditionReport {
    std::vector<PsiPipeMargin> pipes;
    double chi = 0;  // min over pipes of the decay-rate expression
    bool holds = false;
};

// Per-pipe margin of the weighted decay condition
//   eps0 + (12 nu M + 4 beta M_hat) kappa < (3/4) psi c.
inline PsiConditionReport check_psi_condition(const Network& net, const WeightConfig& cfg,
                                              const TheoryConstants& consts) {
    PsiConditionReport rep;
    rep.chi = std::numeric_limits<double>::infinity();
    for (const auto& [id, p] : net.pipes) {
        PsiPipeMargin m;
        m.pipe = id;
        m.kappa = kappa(cfg, p);
        const double coupling = (12.0 * p.nu * consts.m + 4.0 * consts.beta * consts.m_hat);
        m.margin = 0.75 * cfg.psi * consts.c - consts.eps0 - coupling * m.kappa;
        // Same expression written as in the decay-rate definition.
        const double rate = 0.75 * cfg.psi * consts.c - consts.eps0 -
                            (6.0 * p.nu * consts.m + 2.0 * consts.beta * consts.m_hat) *
                                2.0 * m.kappa;
        rep.chi = std::min(rep.chi, rate);
        rep.pipes.push_back(m);
    }
    rep.holds = !rep.pipes.empty();
    for (const auto& m : rep.pipes) rep.holds = rep.holds && m.margin > 0;
    return rep;
}

// Nodal damping margin C_lower - 2 C_upper C_hat mu^2 evaluated on a state
// snapshot; positive means the node terms dissipate.
inline double check_mu_condition(const std::string& v, const SystemState& state,
                                 const WeightConfig& cfg, const Network& net,
                                 const PressureLaw& law, double gamma) {
    const NodeSpec& node = net.node(v);
    if (node.degree() < 2) {
        throw ConfigError("check_mu_condition: node '" + v + "' is not interior");
    }
    double c_lower = std::numeric_limits<double>::infinity();
    double c_upper = 0;
    for (const Incident& inc : node.incident) {
        const Pipe& p = net.pipe(inc.pipe);
        const PipeField& f = state.fields.at(inc.pipe);
        const CharacteristicSpeeds ev = eigenvalues(law, end_state(f, p, inc.end), gamma);
        if (!(ev.lambda_plus > 0) || !(ev.lambda_minus < 0)) {
            throw SimulationError("check_mu_condition: state not subsonic at node '" + v + "'");
        }
        const double x = inc.end == PipeEnd::left ? 0.0 : p.length;
        const WeightPair h = weights(cfg, p, x);
        if (inc.end == PipeEnd::right) {
            c_lower = std::min(c_lower, h.h_plus * ev.lambda_plus);
            c_upper = std::max(c_upper, h.h_minus * std::abs(ev.lambda_minus));
        } else {
            c_lower = std::min(c_lower, h.h_minus * std::abs(ev.lambda_minus));
            c_upper = std::max(c_upper, h.h_plus * ev.lambda_plus);
        }
    }
    // Operator norm of the junction reflection map.
    const std::size_t deg = node.incident.size();
    detail::Matrix a(deg, deg);
    double dsum = 0;
    std::vector<double> d2(deg);
    for (std::size_t j = 0; j < deg; ++j) {
        const Pipe& p = net.pipe(node.incident[j].pipe);
        d2[j] = p.diameter * p.diameter;
        dsum += d2[j];
    }
    const double omega = 2.0 / dsum;
    for (std::size_t i = 0; i < deg; ++i) {
        for (std::size_t j = 0; j < deg; ++j) {
            a(i, j) = omega * d2[j] - (i == j ? 1.0 : 0.0);
        }
    }
    const double c_hat = detail::spectral_norm(a, 1e-10);
    return c_lower - 2.0 * c_upper * c_hat * node.mu * node.mu;
}

struct DecayFit {
    double chi_fit = 0;
    double plateau = 0;
    double r_squared = 0;
    bool degenerate = false;     // all samples at or below the log floor
    bool non_decaying = false;   // fitted rate indistinguishable from zero
};

// Least-squares exponential fit of an energy trace: the plateau is the mean of
// the final tenth of the series, the rate comes from log(E - plateau) on the
// requested window.
inline DecayFit fit_decay_rate(const std::vector<double>& times,
                               const std::vector<double>& energies, double t_begin,
                               double t_end) {
    if (times.size() != energies.size() || times.empty()) {
        throw ConfigError("fit_decay_rate: empty or mismatched series");
    }
    DecayFit fit;
    const std::size_t n = times.size();
    const std::size_t tail = std::max<std::size_t>(1, n / 10);
    double plateau = 0;
    for (std::size_t i = n - tail; i < n; ++i) plateau += energies[i];
    plateau /= static_cast<double>(tail);
    fit.plateau = plateau;

    const double floor = 1e-16;
    std::vector<double> xs, ys;
    bool any_above_floor = false;
    bool any_raw_signal = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (times[i] < t_begin || times[i] > t_end) continue;
        if (!(energies[i] >= 0)) throw ConfigError("fit_decay_rate: negative energy sample");
        const double excess = energies[i] - plateau;
        if (excess > floor) any_above_floor = true;
        if (energies[i] > floor) any_raw_signal = true;
        xs.push_back(times[i]);
        ys.push_back(std::log(std::max(excess, floor)));
    }
    if (xs.size() < 10) {
        throw ConfigError("fit_decay_rate: need at least 10 samples in the window");
    }
    if (!any_raw_signal) {
        // Nothing ever decayed: report the sentinel.
        fit.chi_fit = std::numeric_limits<double>::infinity();
        fit.degenerate = true;
        fit.r_squared = 0;
        return fit;
    }
    if (!any_above_floor) {
        // Flat at its own plateau: no measurable rate.
        fit.chi_fit = 0;
        fit.non_decaying = true;
        fit.r_squared = 0;
        return fit;
    }

    const double m = static_cast<double>(xs.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    const double slope = sxy / sxx;
    fit.chi_fit = -slope;
    if (syy > 0) {
        double ss_res = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double pred = my + slope * (xs[i] - mx);
            ss_res += (ys[i] - pred) * (ys[i] - pred);
        }
        fit.r_squared = 1.0 - ss_res / syy;
    } else {
        fit.r_squared = 0;
    }
    fit.non_decaying = !(fit.chi_fit > 1e-10);
    return fit;
}

// Accumulates the empirical bounds that enter the decay conditions. Feed it
// the steady state and run snapshots, then finalize.
class ConstantsAccumulator {
public:
    ConstantsAccumulator(const Network& net, const PressureLaw& law, double gamma)
        : net_(&net), law_(&law), gamma_(gamma) {}

    // `plant` supplies the d/dx S and |S_+ - S_-| bounds; `observer` (if given)
    // supplies the eigenvalue band; both feed the sensitivity bound.
    void add_state(const SystemState& plant, const SystemState* observer = nullptr) {
        scan_gradients(plant);
        scan_band(observer ? *observer : plant);
        scan_sensitivity(plant);
        if (observer) scan_sensitivity(*observer);
    }

    TheoryConstants finalize(const WeightConfig& cfg, double zeta_factor = 0.5) {
        TheoryConstants c;
        const double lo = lambda_abs_max_ / 1.25;
        const double hi = lambda_abs_min_ / 0.75;
        if (lo <= hi) {
            c.c = 0.5 * (lo + hi);
        } else {
            c.c = 0.5 * (lambda_abs_min_ + lambda_abs_max_);
            warnings_.push_back("eigenvalue band too wide for the 3/4..5/4 speed bounds");
        }
        c.eps0 = dx_lambda_max_;
        c.m = gap_max_;
        c.m_hat = dx_s_max_;
        c.beta = beta_max_;
        c.v_low = v0_min_;
        c.v_high = v0_max_;
        c.chi = std::numeric_limits<double>::infinity();
        double l_max = 0;
        for (const auto& [id, p] : net_->pipes) {
            const double k = kappa(cfg, p);
            c.chi = std::min(c.chi, 0.75 * cfg.psi * c.c - c.eps0 -
                                        (6.0 * p.nu * c.m + 2.0 * c.beta * c.m_hat) * 2.0 * k);
            l_max = std::max(l_max, p.length);
        }
        c.chi0 = cfg.psi0 * c.v_low - c.eps0;
        c.d0 = 2.0 * std::sqrt(2.0) * std::exp((cfg.psi + cfg.psi0) * l_max) * c.beta * c.m_hat;
        c.zeta = zeta_factor * c.chi0;
        if (std::abs(c.zeta - c.chi) < 1e-9) c.zeta *= 0.95;
        return c;
    }

    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    void scan_gradients(const SystemState& s) {
        for (const auto& [id, f] : s.fields) {
            for (std::size_t i = 0; i < f.r_plus.size(); ++i) {
                gap_max_ = std::max(gap_max_, std::abs(f.r_plus[i] - f.r_minus[i]));
                if (i + 1 < f.r_plus.size()) {
                    dx_s_max_ = std::max(
                        {dx_s_max_, std::abs(f.r_plus[i + 1] - f.r_plus[i]) / f.dx,
                         std::abs(f.r_minus[i + 1] - f.r_minus[i]) / f.dx});
                }
            }
        }
    }

    void scan_band(const SystemState& s) {
        for (const auto& [id, f] : s.fields) {
            CharacteristicSpeeds prev{};
            for (std::size_t i = 0; i < f.r_plus.size(); ++i) {
                const CharacteristicSpeeds ev =
                    eigenvalues(*law_, {f.r_plus[i], f.r_minus[i], f.r_zero[i]}, gamma_);
                lambda_abs_min_ = std::min({lambda_abs_min_, std::abs(ev.lambda_plus),
                                            std::abs(ev.lambda_minus)});
                lambda_abs_max_ = std::max({lambda_abs_max_, std::abs(ev.lambda_plus),
                                            std::abs(ev.lambda_minus)});
                v0_min_ = std::min(v0_min_, std::abs(ev.lambda_zero));
                v0_max_ = std::max(v0_max_, std::abs(ev.lambda_zero));
                if (i > 0) {
                    dx_lambda_max_ = std::max(
                        {dx_lambda_max_,
                         std::abs(ev.lambda_plus - prev.lambda_plus) / f.dx,
                         std::abs(ev.lambda_minus - prev.lambda_minus) / f.dx,
                         std::abs(ev.lambda_zero - prev.lambda_zero) / f.dx});
                }
                prev = ev;
            }
        }
    }

    void scan_sensitivity(const SystemState& s) {
        const double h = 1e-6;
        for (const auto& [id, f] : s.fields) {
            for (std::size_t i = 0; i < f.r_plus.size(); ++i) {
                const RiemannState r{f.r_plus[i], f.r_minus[i], f.r_zero[i]};
                const CharacteristicSpeeds ep =
                    eigenvalues(*law_, {r.r_plus + h, r.r_minus, r.r_zero}, gamma_);
                const CharacteristicSpeeds em =
                    eigenvalues(*law_, {r.r_plus - h, r.r_minus, r.r_zero}, gamma_);
                const CharacteristicSpeeds fp =
                    eigenvalues(*law_, {r.r_plus, r.r_minus + h, r.r_zero}, gamma_);
                const CharacteristicSpeeds fm =
                    eigenvalues(*law_, {r.r_plus, r.r_minus - h, r.r_zero}, gamma_);
                beta_max_ = std::max(
                    {beta_max_, std::abs(ep.lambda_plus - em.lambda_plus) / (2 * h),
                     std::abs(ep.lambda_minus - em.lambda_minus) / (2 * h),
                     std::abs(ep.lambda_zero - em.lambda_zero) / (2 * h),
                     std::abs(fp.lambda_plus - fm.lambda_plus) / (2 * h),
                     std::abs(fp.lambda_minus - fm.lambda_minus) / (2 * h),
                     std::abs(fp.lambda_zero - fm.lambda_zero) / (2 * h)});
            }
        }
    }

    const Network* net_;
    const PressureLaw* law_;
    double gamma_;
    double lambda_abs_min_ = std::numeric_limits<double>::infinity();
    double lambda_abs_max_ = 0;
    double dx_lambda_max_ = 0;
    double gap_max_ = 0;
    double dx_s_max_ = 0;
    double beta_max_ = 0;
    double v0_min_ = std::numeric_limits<double>::infinity();
    double v0_max_ = 0;
    std::vector<std::string> warnings_;
};

}  // namespace blendflow
