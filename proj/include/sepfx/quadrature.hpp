#pragma once

#include <array>
#include <cmath>
#include <functional>

#include "types.hpp"

namespace sepfx {

namespace detail {

template <class F>
double simpson_rec(const F& f, double a, double b, double fa, double fm,
                   double fb, double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double h = b - a;
    double left = h / 12.0 * (fa + 4.0 * flm + fm);
    double right = h / 12.0 * (fm + 4.0 * frm + fb);
    double err = left + right - whole;
    if (depth <= 0 || std::abs(err) <= 15.0 * tol)
        return left + right + err / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Adaptive Simpson with absolute tolerance.
template <class F>
double integrate(const F& f, double a, double b, double abs_tol = 1e-6) {
    if (!(b > a)) return 0.0;
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::simpson_rec(f, a, b, fa, fm, fb, whole, abs_tol, 48);
}

// 64-point Gauss-Legendre nodes/weights on [-1, 1], computed once by Newton
// iteration on the Legendre recurrence.
struct GaussLegendre64 {
    std::array<double, 64> x{};
    std::array<double, 64> w{};

    GaussLegendre64() {
        constexpr int n = 64;
        for (int i = 0; i < (n + 1) / 2; ++i) {
            double xi = std::cos(M_PI * (i + 0.75) / (n + 0.5));
            double pp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p0 = 1.0, p1 = 0.0;
                for (int j = 0; j < n; ++j) {
                    double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j + 1.0) * xi * p1 - j * p2) / (j + 1.0);
                }
                pp = n * (xi * p0 - p1) / (xi * xi - 1.0);
                double dx = p0 / pp;
                xi -= dx;
                if (std::abs(dx) < 1e-15) break;
            }
            x[i] = -xi;
            x[n - 1 - i] = xi;
            w[i] = 2.0 / ((1.0 - xi * xi) * pp * pp);
            w[n - 1 - i] = w[i];
        }
    }

    static const GaussLegendre64& get() {
        static const GaussLegendre64 g;
        return g;
    }
};

// integral of f over [a, b] by 64-point Gauss-Legendre
template <class F>
double gauss64(const F& f, double a, double b) {
    const auto& g = GaussLegendre64::get();
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < 64; ++i) s += g.w[i] * f(mid + half * g.x[i]);
    return s * half;
}

}  // namespace sepfx
