#pragma once

#include <cmath>
#include <string>

#include "blendflow/detail/quadrature.hpp"
#include "blendflow/errors.hpp"

namespace blendflow {

// Densities outside this window are rejected by the invariant maps, which
// also keeps every root-finding bracket finite.
struct DensityRange {
    double rho_min = 0.01;   // kg/m^3
    double rho_max = 100.0;  // kg/m^3
};

// Pressure as a strictly increasing function of mixture density.
//
// Supported laws:
//   ideal       p = rs_t * rho
//   aga         p = rs_t * rho / (1 - alpha_tilde * rho),  alpha_tilde <= 0
//   isentropic  p = a * rho^gamma_exp,                     a > 0, gamma_exp > 1
//
// rtilde is the velocity-like potential int_1^rho sqrt(p'(r))/r dr that
// enters the Riemann invariants. Ideal and isentropic have closed forms;
// AGA uses adaptive quadrature and a bracketed Newton inverse.
class PressureLaw {
public:
    enum class Kind { ideal, aga, isentropic };

    static PressureLaw ideal(double rs_t, DensityRange range = {}) {
        if (!(rs_t > 0)) throw ConfigError("ideal law: rs_t must be > 0");
        PressureLaw law(Kind::ideal, range);
        law.rs_t_ = rs_t;
        law.finish();
        return law;
    }

    static PressureLaw aga(double rs_t, double alpha_tilde, DensityRange range = {}) {
        if (!(rs_t > 0)) throw ConfigError("aga law: rs_t must be > 0");
        if (!(alpha_tilde <= 0)) throw ConfigError("aga law: alpha_tilde must be <= 0");
        PressureLaw law(Kind::aga, range);
        law.rs_t_ = rs_t;
        law.alpha_ = alpha_tilde;
        law.finish();
        return law;
    }

    static PressureLaw isentropic(double a, double gamma_exp, DensityRange range = {}) {
        if (!(a > 0)) throw ConfigError("isentropic law: a must be > 0");
        if (!(gamma_exp > 1)) throw ConfigError("isentropic law: gamma_exp must be > 1");
        PressureLaw law(Kind::isentropic, range);
        law.a_ = a;
        law.gexp_ = gamma_exp;
        law.finish();
        return law;
    }

    Kind kind() const { return kind_; }
    const DensityRange& range() const { return range_; }

    double pressure(double rho) const {
        check_positive(rho);
        switch (kind_) {
            case Kind::ideal:
                return rs_t_ * rho;
            case Kind::aga: {
                const double denom = 1.0 - alpha_ * rho;
                if (!(denom > 0)) throw SimulationError("aga law: 1 - alpha*rho <= 0");
                return rs_t_ * rho / denom;
            }
            case Kind::isentropic:
                return a_ * std::pow(rho, gexp_);
        }
        return 0;  // unreachable
    }

    double pressure_deriv(double rho) const {
        check_positive(rho);
        switch (kind_) {
            case Kind::ideal:
                return rs_t_;
            case Kind::aga: {
                const double denom = 1.0 - alpha_ * rho;
                if (!(denom > 0)) throw SimulationError("aga law: 1 - alpha*rho <= 0");
                return rs_t_ / (denom * denom);
            }
            case Kind::isentropic:
                return a_ * gexp_ * std::pow(rho, gexp_ - 1.0);
        }
        return 0;  // unreachable
    }

    double sound_speed(double rho) const { return std::sqrt(pressure_deriv(rho)); }

    // rtilde(rho) = int_1^rho sqrt(p'(r)) / r dr
    double rtilde(double rho) const {
        check_admissible(rho);
        switch (kind_) {
            case Kind::ideal:
                return std::sqrt(rs_t_) * std::log(rho);
            case Kind::isentropic: {
                const double half = 0.5 * (gexp_ - 1.0);
                return std::sqrt(a_ * gexp_) / half * (std::pow(rho, half) - 1.0);
            }
            case Kind::aga:
                return rtilde_quadrature(rho);
        }
        return 0;  // unreachable
    }

    double rtilde_inv(double w) const {
        switch (kind_) {
            case Kind::ideal: {
                const double rho = std::exp(w / std::sqrt(rs_t_));
                check_admissible(rho);
                return rho;
            }
            case Kind::isentropic: {
                const double half = 0.5 * (gexp_ - 1.0);
                const double base = 1.0 + w * half / std::sqrt(a_ * gexp_);
                if (!(base > 0)) {
                    throw SimulationError("isentropic law: value outside the range of rtilde");
                }
                const double rho = std::pow(base, 1.0 / half);
                check_admissible(rho);
                return rho;
            }
            case Kind::aga:
                return rtilde_inv_newton(w);
        }
        return 0;  // unreachable
    }

private:
    PressureLaw(Kind kind, DensityRange range) : kind_(kind), range_(range) {}

    void finish() {
        if (!(range_.rho_min > 0) || !(range_.rho_max > range_.rho_min)) {
            throw ConfigError("pressure law: invalid admissible density range");
        }
        if (kind_ == Kind::aga) {
            w_min_ = rtilde_quadrature(range_.rho_min);
            w_max_ = rtilde_quadrature(range_.rho_max);
        }
    }

    void check_positive(double rho) const {
        if (!(rho > 0) || !std::isfinite(rho)) {
            throw SimulationError("pressure law: density must be positive, got " +
                                  std::to_string(rho));
        }
    }

    void check_admissible(double rho) const {
        if (!(rho >= range_.rho_min) || !(rho <= range_.rho_max)) {
            throw SimulationError("density " + std::to_string(rho) +
                                  " outside admissible range [" +
                                  std::to_string(range_.rho_min) + ", " +
                                  std::to_string(range_.rho_max) + "]");
        }
    }

    double rtilde_quadrature(double rho) const {
        if (!(rho > 0)) check_positive(rho);
        auto f = [this](double r) { return std::sqrt(pressure_deriv(r)) / r; };
        if (rho >= 1.0) return detail::integrate_adaptive(f, 1.0, rho, 1e-13);
        return -detail::integrate_adaptive(f, rho, 1.0, 1e-13);
    }

    double rtilde_inv_newton(double w) const {
        if (!(w >= w_min_) || !(w <= w_max_)) {
            throw SimulationError("value " + std::to_string(w) +
                                  " outside the range of rtilde on the admissible bracket [" +
                                  std::to_string(range_.rho_min) + ", " +
                                  std::to_string(range_.rho_max) + "]");
        }
        double lo = range_.rho_min, hi = range_.rho_max;
        // Ideal-law profile as the starting guess.
        double x = std::exp(w / std::sqrt(rs_t_));
        if (!(x > lo) || !(x < hi)) x = 0.5 * (lo + hi);
        const double tol = 1e-12 * std::max(1.0, std::abs(w));
        for (int it = 0; it < 200; ++it) {
            const double fx = rtilde_quadrature(x) - w;
            if (std::abs(fx) <= tol) return x;
            if (fx > 0) hi = x; else lo = x;
            const double deriv = std::sqrt(pressure_deriv(x)) / x;
            double next = x - fx / deriv;
            if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
            if (next == x) return x;
            x = next;
        }
        throw SimulationError("rtilde_inv: root find did not converge, bracket [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }

    Kind kind_;
    DensityRange range_;
    double rs_t_ = 0;   // R_s * T  [m^2/s^2]
    double alpha_ = 0;  // AGA alpha_tilde [m^3/kg]
    double a_ = 0;      // isentropic coefficient
    double gexp_ = 0;   // isentropic exponent
    double w_min_ = 0, w_max_ = 0;  // rtilde range endpoints (AGA only)
};

// Mixture density, mixture mass flux, and hydrogen partial density.
struct PhysicalState {
    double rho = 0;    // kg/m^3
    double q = 0;      // kg/(m^2 s)
    double rho_h = 0;  // kg/m^3, 0 <= rho_h <= rho
};

struct RiemannState {
    double r_plus = 0;   // m/s
    double r_minus = 0;  // m/s
    double r_zero = 0;   // hydrogen fraction rho_h / (rho + gamma)
};

struct CharacteristicSpeeds {
    double lambda_plus = 0;
    double lambda_minus = 0;
    double lambda_zero = 0;
};

inline RiemannState riemann_from_physical(const PressureLaw& law,
                                          const PhysicalState& s, double gamma) {
    if (!(s.rho > 0)) throw SimulationError("riemann_from_physical: rho must be > 0");
    if (s.rho_h < 0 || s.rho_h > s.rho) {
        throw SimulationError("riemann_from_physical: rho_h outside [0, rho]");
    }
    const double w = law.rtilde(s.rho);
    const double u = s.q / s.rho;
    return {w + u, w - u, s.rho_h / (s.rho + gamma)};
}

inline PhysicalState physical_from_riemann(const PressureLaw& law,
                                           const RiemannState& r, double gamma) {
    const double rho = law.rtilde_inv(0.5 * (r.r_plus + r.r_minus));
    const double q = rho * 0.5 * (r.r_plus - r.r_minus);
    return {rho, q, r.r_zero * (rho + gamma)};
}

inline CharacteristicSpeeds eigenvalues(const PressureLaw& law,
                                        const RiemannState& r, double gamma) {
    const double rho = law.rtilde_inv(0.5 * (r.r_plus + r.r_minus));
    const double u = 0.5 * (r.r_plus - r.r_minus);
    const double c = std::sqrt(law.pressure_deriv(rho));
    return {u + c, u - c, rho * u / (rho + gamma)};
}

// Friction source nu * |r_plus - r_minus| * (r_plus - r_minus); applied with
// opposite signs to the two acoustic invariants.
inline double source_sigma(double nu, double r_plus, double r_minus) {
    const double d = r_plus - r_minus;
    return nu * std::abs(d) * d;
}

}  // namespace blendflow
