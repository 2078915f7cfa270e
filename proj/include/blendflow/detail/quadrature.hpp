#pragma once
#include <limits>

#include <cmath>
#include <cstddef>

#include "blendflow/errors.hpp"

namespace blendflow::detail {

// Adaptive Gauss-Kronrod (G7, K15) quadrature for smooth integrands.
template <typename F>
struct GaussKronrod {
    // K15 abscissae on [-1, 1] (symmetric, nonnegative half).
    static constexpr double xk[8] = {
        0.991455371120813, 0.949107912342759, 0.864864423359769,
        0.741531185599394, 0.586087235467691, 0.405845151377397,
        0.207784955007898, 0.0};
    static constexpr double wk[8] = {
        0.022935322010529, 0.063092092629979, 0.104790010322250,
        0.140653259715525, 0.169004726639267, 0.190350578064785,
        0.204432940075298, 0.209482141084728};
    // G7 weights for the embedded Gauss rule (abscissae xk[1], xk[3], ...).
    static constexpr double wg[4] = {
        0.129484966168870, 0.279705391489277, 0.381830050505119,
        0.417959183673469};

    const F& f;

    // Returns the K15 estimate, |K15 - G7| as the error estimate, and the
    // K15 integral of |f| as the roundoff scale of the panel.
    void panel(double a, double b, double& value, double& error, double& magnitude) const {
        const double half = 0.5 * (b - a);
        const double mid = 0.5 * (a + b);
        double fv[15];
        for (int i = 0; i < 7; ++i) {
            fv[i] = f(mid - half * xk[i]);
            fv[14 - i] = f(mid + half * xk[i]);
        }
        fv[7] = f(mid);
        double k15 = wk[7] * fv[7];
        double k15_abs = wk[7] * std::abs(fv[7]);
        double g7 = wg[3] * fv[7];
        for (int i = 0; i < 7; ++i) {
            k15 += wk[i] * (fv[i] + fv[14 - i]);
            k15_abs += wk[i] * (std::abs(fv[i]) + std::abs(fv[14 - i]));
            if (i % 2 == 1) g7 += wg[i / 2] * (fv[i] + fv[14 - i]);
        }
        value = half * k15;
        error = std::abs(half * (k15 - g7));
        magnitude = half * k15_abs;
    }
};

// Integrates f over [a, b] (a <= b) to absolute tolerance tol by recursive
// panel bisection.
template <typename F>
double integrate_adaptive(const F& f, double a, double b, double tol,
                          int max_depth = 48) {
    GaussKronrod<F> rule{f};
    struct Frame {
        double a, b, tol;
        int depth;
    };
    double total = 0.0;
    // Explicit stack; depth is bounded so a fixed array suffices.
    Frame stack[64];
    int top = 0;
    stack[top++] = {a, b, tol, 0};
    const double eps = std::numeric_limits<double>::epsilon();
    while (top > 0) {
        Frame fr = stack[--top];
        double value, error, magnitude;
        rule.panel(fr.a, fr.b, value, error, magnitude);
        // The |K15 - G7| estimate bottoms out at the roundoff of the two rule
        // sums (tens of eps times the |f| integral); accept such panels or the
        // tolerance splitting can never be met.
        const double floor = 64.0 * eps * magnitude;
        const bool width_exhausted =
            fr.b - fr.a <= 4.0 * eps * std::max(std::abs(fr.a), std::abs(fr.b));
        if (error <= std::max(fr.tol, floor) || width_exhausted || fr.depth >= max_depth) {
            if (fr.depth >= max_depth && error > std::max(fr.tol * 16, floor)) {
                throw SimulationError("adaptive quadrature failed to converge");
            }
            total += value;
            continue;
        }
        const double mid = 0.5 * (fr.a + fr.b);
        if (top + 2 > 64) throw SimulationError("adaptive quadrature stack overflow");
        stack[top++] = {fr.a, mid, 0.5 * fr.tol, fr.depth + 1};
        stack[top++] = {mid, fr.b, 0.5 * fr.tol, fr.depth + 1};
    }
    return total;
}

}  // namespace blendflow::detail
