#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "sepfx/csv.hpp"
#include "sepfx/nuisance.hpp"

namespace sepfx {

// Targeted estimate of the direct effect at one horizon, plus the fluctuation
// trajectory for diagnostics.
struct TmleResult {
    double time = 0.0;
    double estimate = 0.0;
    std::vector<double> gammas;  // fitted fluctuation coefficient per pass
    int iterations = 0;          // hazard updates actually applied
    bool converged = false;
    double mean_score0 = 0.0;    // |U(0)|/n at the final hazards
};

// Final per-subject hazard increments on the merged grid columns up to the
// horizon, one row per subject.
struct TmleDiagnostics {
    std::vector<double> grid_times;
    std::vector<std::vector<double>> dL1_arm1;
    std::vector<std::vector<double>> dL2_arm1;
    std::vector<std::vector<double>> dL1_arm0;
    std::vector<std::vector<double>> dL2_arm0;
};

// Clever covariates (H1, H2) for one subject at time s, targeting the direct
// effect at horizon t.  Zero beyond the horizon.  On arm 1
//   H1 = (1/pi) (1 - (F1(t|1) - F1(s|1)) / S(s-|1)) / K_C(s-|1)
//   H2 = (1/pi) ((P(t) - P(s)) - (F1(t|1) - F1(s|1))) / S(s-|1) / K_C(s-|1)
// and on arm 0
//   H1 = -(1/(1-pi)) (Z(s) - (P(t) - P(s)) / S(s-|0)) / K_C(s-|0),  H2 = 0,
// where P pairs the arm-0 cause-1 hazard with the arm-1 cause-2 hazard and
// Z(s) = exp(L2(s|0) - L2(s|1)).
inline std::pair<double, double> clever_covariates(double s, double t,
                                                   const ObservedRecord& rec,
                                                   const NuisanceSet& nuis) {
    if (s > t) return {0.0, 0.0};
    MergedGrid grid = make_merged_grid(nuis.cause1, nuis.cause2);
    double e10 = arm_multiplier(nuis.cause1, rec, 0);
    double e11 = arm_multiplier(nuis.cause1, rec, 1);
    double e20 = arm_multiplier(nuis.cause2, rec, 0);
    double e21 = arm_multiplier(nuis.cause2, rec, 1);
    SubjectCurves top, mix, bot;
    fill_curves(grid, e11, e21, Pairing::exponential, top);
    fill_curves(grid, e10, e21, Pairing::exponential, mix);
    fill_curves(grid, e10, e20, Pairing::exponential, bot);

    std::size_t jt = grid.index_at(t);
    std::size_t js = grid.index_at(s);
    double f1t = jt == MergedGrid::npos ? 0.0 : top.F1[jt];
    double pt = jt == MergedGrid::npos ? 0.0 : mix.F1[jt];

    bool arm1 = rec.treatment == 1;
    double f1s = 0.0, ps = 0.0, z = 1.0;
    double sm = 1.0;
    if (js != MergedGrid::npos) {
        f1s = top.F1[js];
        ps = mix.F1[js];
        const SubjectCurves& own = arm1 ? top : bot;
        sm = grid.times[js] == s ? own.Sm[js] : own.S[js];
        if (!arm1) {
            double l20 = 0.0, l21 = 0.0;
            for (std::size_t j = 0; j <= js; ++j) {
                l20 += bot.dL2[j];
                l21 += mix.dL2[j];
            }
            z = std::exp(l20 - l21);
        }
    }
    if (sm < kPositivityFloor)
        throw positivity_error("event-free survival below 1e-10 at s=" +
                               detail::fmt17(s));
    double kc = 1.0;
    if (nuis.censoring) {
        double rate = nuis.censor_rate(arm1 ? 1.0 : 0.0, rec.covariates);
        kc = std::exp(-rate * nuis.censoring->baseline.left_value(s));
    }
    if (kc < kPositivityFloor)
        throw positivity_error("censoring survival below 1e-10 at s=" +
                               detail::fmt17(s));

    double pi = nuis.propensity_at(rec.covariates);
    double f1d = f1t - f1s;
    double pbar = pt - ps;
    if (arm1) {
        double g = 1.0 / pi;
        return {g * (1.0 - f1d / sm) / kc, g * (pbar - f1d) / sm / kc};
    }
    double g = 1.0 / (1.0 - pi);
    return {-g * (z - pbar / sm) / kc, 0.0};
}

namespace detail {

// Iteration state for the targeting step: per-subject arm-specific hazard
// increments on the merged grid columns up to the horizon, fluctuated in
// place, plus the clever covariate rows recomputed from them each pass.
struct TmleEngine {
    std::size_t n = 0;
    std::size_t cols = 0;  // grid columns with times[j] <= t
    MergedGrid grid;

    std::vector<double> g1, g0;          // 1/pi and 1/(1-pi) per subject
    std::vector<double> crate1, crate0;  // censoring exp(lp) per subject arm
    std::vector<double> lc0m;            // censoring baseline cumhaz, left limit
    std::vector<std::size_t> jend;       // last column at risk, npos if none
    std::vector<std::size_t> evcol;      // event column if on the grid <= t
    std::vector<int> evcause;
    std::vector<int> arm;

    // n x cols, row-major; a11/a21 arm-1 hazards, a10/a20 arm-0
    std::vector<double> a11, a21, a10, a20;
    std::vector<double> H11, H21, H10;

    std::vector<double> s1m, s0m, f11, pmx, z0;  // per-subject scratch

    TmleEngine(const Dataset& d, const NuisanceSet& nuis, double t) {
        grid = make_merged_grid(nuis.cause1, nuis.cause2);
        std::size_t jt = grid.index_at(t);
        cols = jt == MergedGrid::npos ? 0 : jt + 1;
        n = d.size();

        g1.resize(n);
        g0.resize(n);
        crate1.resize(n);
        crate0.resize(n);
        jend.resize(n);
        evcol.resize(n);
        evcause.resize(n);
        arm.resize(n);
        a11.resize(n * cols);
        a21.resize(n * cols);
        a10.resize(n * cols);
        a20.resize(n * cols);
        H11.resize(n * cols);
        H21.resize(n * cols);
        H10.resize(n * cols);
        s1m.resize(cols);
        s0m.resize(cols);
        f11.resize(cols);
        pmx.resize(cols);
        z0.resize(cols);

        lc0m.assign(cols, 0.0);
        if (nuis.censoring)
            for (std::size_t j = 0; j < cols; ++j)
                lc0m[j] = nuis.censoring->baseline.left_value(grid.times[j]);

        for (std::size_t i = 0; i < n; ++i) {
            ObservedRecord rec = d.record(i);
            double pi = nuis.propensity_at(rec.covariates);
            g1[i] = 1.0 / pi;
            g0[i] = 1.0 / (1.0 - pi);
            crate1[i] = nuis.censor_rate(1.0, rec.covariates);
            crate0[i] = nuis.censor_rate(0.0, rec.covariates);
            arm[i] = rec.treatment;

            double e11 = arm_multiplier(nuis.cause1, rec, 1);
            double e21 = arm_multiplier(nuis.cause2, rec, 1);
            double e10 = arm_multiplier(nuis.cause1, rec, 0);
            double e20 = arm_multiplier(nuis.cause2, rec, 0);
            for (std::size_t j = 0; j < cols; ++j) {
                a11[i * cols + j] = e11 * grid.base1[j];
                a21[i * cols + j] = e21 * grid.base2[j];
                a10[i * cols + j] = e10 * grid.base1[j];
                a20[i * cols + j] = e20 * grid.base2[j];
            }

            std::size_t idx = grid.index_at(rec.time);
            jend[i] = idx == MergedGrid::npos || cols == 0
                          ? MergedGrid::npos
                          : std::min(idx, cols - 1);
            bool jump = idx != MergedGrid::npos && idx < cols &&
                        grid.times[idx] == rec.time &&
                        (rec.event == 1 || rec.event == 2);
            evcol[i] = jump ? idx : MergedGrid::npos;
            evcause[i] = rec.event;
        }
    }

    // Rebuild the clever covariate rows from the current increments and
    // return the targeted plug-in estimate mean(F1(t|1) - P(t)).
    double kernels() {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* r11 = a11.data() + i * cols;
            const double* r21 = a21.data() + i * cols;
            const double* r10 = a10.data() + i * cols;
            const double* r20 = a20.data() + i * cols;
            double L11 = 0.0, L21 = 0.0, L10 = 0.0, L20 = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                s1m[j] = std::exp(-(L11 + L21));
                s0m[j] = std::exp(-(L10 + L20));
                double smix = std::exp(-(L10 + L21));
                f11[j] = (j ? f11[j - 1] : 0.0) + s1m[j] * r11[j];
                pmx[j] = (j ? pmx[j - 1] : 0.0) + smix * r10[j];
                L11 += r11[j];
                L21 += r21[j];
                L10 += r10[j];
                L20 += r20[j];
                z0[j] = std::exp(L20 - L21);
            }
            double f1t = cols ? f11[cols - 1] : 0.0;
            double pt = cols ? pmx[cols - 1] : 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                if (s1m[j] < kPositivityFloor || s0m[j] < kPositivityFloor)
                    throw positivity_error(
                        "event-free survival below 1e-10 at s=" +
                        fmt17(grid.times[j]));
                double kc1 = std::exp(-crate1[i] * lc0m[j]);
                double kc0 = std::exp(-crate0[i] * lc0m[j]);
                if (kc1 < kPositivityFloor || kc0 < kPositivityFloor)
                    throw positivity_error(
                        "censoring survival below 1e-10 at s=" +
                        fmt17(grid.times[j]));
                double f1d = f1t - f11[j];
                double pbar = pt - pmx[j];
                H11[i * cols + j] = g1[i] * (1.0 - f1d / s1m[j]) / kc1;
                H21[i * cols + j] = g1[i] * (pbar - f1d) / s1m[j] / kc1;
                H10[i * cols + j] = -g0[i] * (z0[j] - pbar / s0m[j]) / kc0;
            }
            sum += f1t - pt;
        }
        return n ? sum / static_cast<double>(n) : 0.0;
    }

    // Fluctuation score and its derivative in gamma: the observed jumps minus
    // the fluctuated own-arm compensator, both weighted by the clever
    // covariates.
    std::pair<double, double> score(double gamma) const {
        double U = 0.0, dU = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            bool arm1 = arm[i] == 1;
            const double* h1 = (arm1 ? H11 : H10).data() + i * cols;
            const double* h2 = arm1 ? H21.data() + i * cols : nullptr;
            const double* r1 = (arm1 ? a11 : a10).data() + i * cols;
            const double* r2 = (arm1 ? a21 : a20).data() + i * cols;
            if (evcol[i] != MergedGrid::npos) {
                if (evcause[i] == 1)
                    U += h1[evcol[i]];
                else if (h2)
                    U += h2[evcol[i]];
            }
            if (jend[i] == MergedGrid::npos) continue;
            for (std::size_t j = 0; j <= jend[i]; ++j) {
                if (r1[j] != 0.0 && h1[j] != 0.0) {
                    double e = std::exp(gamma * h1[j]);
                    U -= h1[j] * e * r1[j];
                    dU -= h1[j] * h1[j] * e * r1[j];
                }
                if (h2 && r2[j] != 0.0 && h2[j] != 0.0) {
                    double e = std::exp(gamma * h2[j]);
                    U -= h2[j] * e * r2[j];
                    dU -= h2[j] * h2[j] * e * r2[j];
                }
            }
        }
        return {U, dU};
    }

    // Safeguarded Newton root of the fluctuation score on [-10, 10].
    double solve(double* score0_abs) const {
        auto sign = [](double v) { return v > 0.0 ? 1 : v < 0.0 ? -1 : 0; };
        double ulo = score(-10.0).first;
        double uhi = score(10.0).first;
        if (sign(ulo) == sign(uhi) && sign(ulo) != 0 &&
            std::min(std::abs(ulo), std::abs(uhi)) >= 1e-8)
            throw fit_error(
                "solve_fluctuation: score has no sign change on [-10, 10]");
        double lo = -10.0, hi = 10.0, gamma = 0.0;
        for (int it = 0; it < 100; ++it) {
            auto [u, du] = score(gamma);
            if (it == 0 && score0_abs) *score0_abs = std::abs(u);
            if (std::abs(u) < 1e-8) return gamma;
            if (u > 0.0)
                lo = gamma;
            else
                hi = gamma;
            double cand = gamma - u / du;
            gamma = std::isfinite(cand) && cand > lo && cand < hi
                        ? cand
                        : 0.5 * (lo + hi);
        }
        throw fit_error(
            "solve_fluctuation: no root to |score| < 1e-8 in 100 iterations");
    }

    // Multiply the fluctuated increments by exp(gamma * H).  The arm-0
    // cause-2 covariate is identically zero, so a20 never moves.
    void update(double gamma) {
        for (std::size_t k = 0; k < n * cols; ++k) {
            a11[k] *= std::exp(gamma * H11[k]);
            a21[k] *= std::exp(gamma * H21[k]);
            a10[k] *= std::exp(gamma * H10[k]);
        }
    }

    void export_diag(TmleDiagnostics& diag) const {
        diag.grid_times.assign(grid.times.begin(), grid.times.begin() + cols);
        auto rows = [&](const std::vector<double>& flat) {
            std::vector<std::vector<double>> out(n);
            for (std::size_t i = 0; i < n; ++i)
                out[i].assign(flat.begin() + i * cols,
                              flat.begin() + (i + 1) * cols);
            return out;
        };
        diag.dL1_arm1 = rows(a11);
        diag.dL2_arm1 = rows(a21);
        diag.dL1_arm0 = rows(a10);
        diag.dL2_arm0 = rows(a20);
    }
};

}  // namespace detail

// Fit the one-dimensional fluctuation at the given fits without updating
// them, returning the coefficient that zeroes the weighted score.
inline double solve_fluctuation(const Dataset& d, const NuisanceSet& nuis,
                                double t) {
    if (d.size() == 0) throw data_error("solve_fluctuation: empty dataset");
    detail::TmleEngine eng(d, nuis, t);
    eng.kernels();
    return eng.solve(nullptr);
}

// Targeted maximum likelihood estimate of the direct effect at horizon t.
// Repeats fluctuation passes until the fitted coefficient is below tol in
// absolute value; each completed pass multiplies the per-subject hazard
// increments by exp(gamma * H).
inline TmleResult tmle_estimate(const Dataset& d, const NuisanceSet& nuis,
                                double t, int max_iter = 20, double tol = 1e-6,
                                TmleDiagnostics* diag = nullptr) {
    if (d.size() == 0) throw data_error("tmle_estimate: empty dataset");
    detail::TmleEngine eng(d, nuis, t);
    TmleResult out;
    out.time = t;
    for (int m = 0; m < max_iter; ++m) {
        out.estimate = eng.kernels();
        double s0 = 0.0;
        double gamma = eng.solve(&s0);
        out.mean_score0 = s0 / static_cast<double>(eng.n);
        out.gammas.push_back(gamma);
        if (std::abs(gamma) < tol) {
            out.converged = true;
            break;
        }
        eng.update(gamma);
        ++out.iterations;
    }
    if (!out.converged) {
        std::string traj;
        for (std::size_t k = 0; k < out.gammas.size(); ++k)
            traj += (k ? ", " : "") + detail::fmt17(out.gammas[k]);
        throw fit_error("tmle_estimate: |gamma| still >= " +
                        detail::fmt17(tol) + " after " +
                        std::to_string(max_iter) +
                        " iterations; trajectory: " + traj);
    }
    if (diag) eng.export_diag(*diag);
    return out;
}

}  // namespace sepfx
