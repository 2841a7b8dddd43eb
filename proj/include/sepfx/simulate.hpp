#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sepfx/eif.hpp"
#include "sepfx/functionals.hpp"
#include "sepfx/normal.hpp"
#include "sepfx/rng.hpp"
#include "sepfx/tmle.hpp"

namespace sepfx {

// Data-generating scenarios: constant cause-specific hazards in t given
// (A, W) with W ~ U(0,1).  The *1 variants censor administratively at 12,
// the *2 variants add exponential censoring min(C, 12) with a W-dependent
// rate, and Table1 censors at min(7, Exp(mean 12)).
enum class Scenario { Table1, A1, A2, B1, B2, C1, C2 };

inline const std::vector<std::pair<Scenario, std::string>>& scenario_table() {
    static const std::vector<std::pair<Scenario, std::string>> table = {
        {Scenario::Table1, "Table1"}, {Scenario::A1, "A1"},
        {Scenario::A2, "A2"},         {Scenario::B1, "B1"},
        {Scenario::B2, "B2"},         {Scenario::C1, "C1"},
        {Scenario::C2, "C2"}};
    return table;
}

inline std::string scenario_name(Scenario sc) {
    for (const auto& [s, name] : scenario_table())
        if (s == sc) return name;
    return "?";
}

inline std::string scenario_list() {
    std::string out;
    for (const auto& [s, name] : scenario_table())
        out += (out.empty() ? "" : ", ") + name;
    return out;
}

inline Scenario parse_scenario(const std::string& id) {
    for (const auto& [s, name] : scenario_table())
        if (name == id) return s;
    throw config_error("unknown scenario '" + id + "' (valid: " +
                       scenario_list() + ")");
}

namespace detail {

constexpr double kBase1 = 0.05;
constexpr double kBase2 = 0.10;

inline double sim_lambda1(Scenario sc, int a, double w) {
    const double log2 = std::log(2.0), log5 = std::log(5.0);
    switch (sc) {
        case Scenario::Table1:
            return kBase1 * std::exp(-log2 * a + 0.5 * log2 * w);
        case Scenario::C1:
        case Scenario::C2:
            if (a == 1) {
                double shift = w > 0.5 ? -log5 : log5;
                return kBase1 * std::exp(shift + log2 * w);
            }
            return kBase1 * std::exp(log2 * w);
        default:  // A and B share one hazard law
            return kBase1 * std::exp(-log5 * a + log2 * w);
    }
}

inline double sim_lambda2(Scenario sc, int /*a*/, double w) {
    const double log2 = std::log(2.0);
    return kBase2 * std::exp(0.5 * log2 * w);
}

inline double sim_propensity(Scenario sc, double w) {
    switch (sc) {
        case Scenario::Table1:
            return 0.5;
        case Scenario::B1:
        case Scenario::B2:
            return w > 0.5 ? 0.7 : 0.1;
        default: {
            double lp = std::log(2.0) * (w - 0.5);
            return 1.0 / (1.0 + std::exp(-lp));
        }
    }
}

// Draw one subject's censoring time.  The per-subject draw order (W, A,
// event time, cause, censoring) is part of the seeded contract.
inline double sim_censoring(Scenario sc, double w, Rng& rng) {
    switch (sc) {
        case Scenario::Table1:
            return std::min(7.0, rng.exponential(1.0 / 12.0));
        case Scenario::A2:
        case Scenario::B2:
        case Scenario::C2:
            return std::min(rng.exponential(std::exp(0.2 * w) / 12.0), 12.0);
        default:
            return 12.0;
    }
}

inline Dataset generate_rng(Scenario sc, std::size_t n, Rng& rng) {
    Dataset d;
    d.covariate_names = {"w"};
    for (std::size_t i = 0; i < n; ++i) {
        double w = rng.uniform();
        int a = rng.bernoulli(sim_propensity(sc, w)) ? 1 : 0;
        double l1 = sim_lambda1(sc, a, w);
        double l2 = sim_lambda2(sc, a, w);
        double tev = rng.exponential(l1 + l2);
        int cause = rng.uniform() < l1 / (l1 + l2) ? 1 : 2;
        double c = sim_censoring(sc, w, rng);
        ObservedRecord rec;
        rec.time = std::min(tev, c);
        rec.event = tev <= c ? cause : 0;
        rec.treatment = a;
        rec.covariates = {w};
        d.push_back(rec);
    }
    return d;
}

// Adaptive Simpson on [a, b] to absolute tolerance tol.
inline double simpson_step(const std::function<double(double)>& f, double a,
                           double fa, double b, double fb, double m, double fm,
                           double whole, double tol, int depth) {
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson_step(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) +
           simpson_step(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a,
                        double b, double tol) {
    double m = 0.5 * (a + b);
    double fa = f(a), fb = f(b), fm = f(m);
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_step(f, a, fa, b, fb, m, fm, whole, tol, 48);
}

// Conditional cause-1 risk under constant hazards.
inline double sim_p1_cond(Scenario sc, double t, int a_y, int a_d, double w) {
    double l1 = sim_lambda1(sc, a_y, w);
    double l2 = sim_lambda2(sc, a_d, w);
    return l1 / (l1 + l2) * (1.0 - std::exp(-(l1 + l2) * t));
}

// Integrate f over w in (0,1), split at 1/2 where the C hazards jump.
inline double integrate_w(const std::function<double(double)>& f, double tol) {
    return integrate(f, 0.0, 0.5, tol / 2.0) + integrate(f, 0.5, 1.0, tol / 2.0);
}

}  // namespace detail

// Simulated dataset for a scenario, deterministic given the seed.
inline Dataset generate(Scenario sc, std::size_t n, std::uint32_t seed) {
    if (n < 1) throw config_error("generate: n must be at least 1");
    Rng rng(seed, 0);
    return detail::generate_rng(sc, n, rng);
}

// Exact P1(t, a_y, a_d) marginalized over W by adaptive quadrature.
inline double true_p1(Scenario sc, double t, int a_y, int a_d,
                      double tol = 1e-6) {
    if (t < 0.0) throw config_error("true_p1: t must be nonnegative");
    return detail::integrate_w(
        [&](double w) { return detail::sim_p1_cond(sc, t, a_y, a_d, w); }, tol);
}

// Exact separable effect value for a scenario.
inline double true_effect(Scenario sc, double t, const EffectSpec& spec = {},
                          double tol = 1e-6) {
    if (t < 0.0) throw config_error("true_effect: t must be nonnegative");
    auto cond = [&](double w) {
        if (spec.kind == EffectKind::direct)
            return detail::sim_p1_cond(sc, t, 1, spec.fixed_arm, w) -
                   detail::sim_p1_cond(sc, t, 0, spec.fixed_arm, w);
        return detail::sim_p1_cond(sc, t, spec.fixed_arm, 1, w) -
               detail::sim_p1_cond(sc, t, spec.fixed_arm, 0, w);
    };
    return detail::integrate_w(cond, tol);
}

enum class EstimatorKind { plugin, onestep, tmle };

inline std::string estimator_name(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::plugin: return "plugin";
        case EstimatorKind::onestep: return "onestep";
        default: return "tmle";
    }
}

inline EstimatorKind parse_estimator(const std::string& id) {
    if (id == "plugin") return EstimatorKind::plugin;
    if (id == "onestep") return EstimatorKind::onestep;
    if (id == "tmle") return EstimatorKind::tmle;
    throw config_error("unknown estimator '" + id +
                       "' (valid: plugin, onestep, tmle)");
}

// One (estimator, target, time) row of a replication study.
struct StudyCell {
    EstimatorKind estimator = EstimatorKind::plugin;
    std::string target;  // "p11", "p01", or "delta"
    double time = 0.0;
    double true_value = 0.0;
    std::size_t used = 0;  // replicates with a finite estimate
    double mean = 0.0;
    double sd = 0.0;
    std::optional<double> mean_see;       // analytic (plugin) or EIF
    std::optional<double> coverage;       // nominal-95% normal intervals
    std::optional<double> mean_see_boot;
    std::optional<double> coverage_boot;
};

struct StudyReport {
    std::string scenario;
    std::size_t n = 0;
    std::size_t replicates = 0;
    std::size_t failures = 0;
    std::uint32_t seed = 0;
    std::size_t bootstrap_B = 0;
    double level = 0.95;
    std::vector<double> times;
    std::vector<std::string> estimators;
    std::vector<StudyCell> cells;
    std::vector<std::string> failure_messages;
};

namespace detail {

struct RepRow {
    bool failed = false;
    std::string message;
    std::vector<double> est;   // per cell, NaN when unavailable
    std::vector<double> see;
    std::vector<double> boot;  // bootstrap se per cell
};

}  // namespace detail

// Replication study over simulated datasets: per replicate, generate data,
// fit the working models (Cox with A and W for both causes, Cox with A for
// censoring, logistic with W for treatment), evaluate the requested
// estimators of the direct effect, and aggregate against the exact truth.
// Per-replicate RNG streams derive from (seed, replicate), so results do not
// depend on the worker count.
inline StudyReport run_study(Scenario sc, std::size_t n, std::size_t replicates,
                             const std::vector<double>& t_grid,
                             const std::vector<EstimatorKind>& estimators,
                             std::uint32_t seed, std::size_t bootstrap_B = 0,
                             int threads = 1) {
    if (replicates < 1)
        throw config_error("run_study: replicates must be at least 1");
    if (t_grid.empty()) throw config_error("run_study: empty time grid");
    if (estimators.empty()) throw config_error("run_study: no estimators");

    StudyReport rep;
    rep.scenario = scenario_name(sc);
    rep.n = n;
    rep.replicates = replicates;
    rep.seed = seed;
    rep.bootstrap_B = bootstrap_B;
    rep.times = t_grid;
    for (auto k : estimators) rep.estimators.push_back(estimator_name(k));

    bool table1 = sc == Scenario::Table1;
    for (auto kind : estimators) {
        std::vector<std::string> targets =
            kind == EstimatorKind::plugin && table1
                ? std::vector<std::string>{"p11", "p01", "delta"}
                : std::vector<std::string>{"delta"};
        for (const auto& target : targets)
            for (double t : t_grid) {
                StudyCell cell;
                cell.estimator = kind;
                cell.target = target;
                cell.time = t;
                cell.true_value = target == "p11" ? true_p1(sc, t, 1, 1)
                                : target == "p01" ? true_p1(sc, t, 0, 1)
                                                  : true_effect(sc, t);
                rep.cells.push_back(cell);
            }
    }
    const std::size_t n_cells = rep.cells.size();

    // one replicate: fill est/see (+ bootstrap se) for every cell
    auto run_rep = [&](std::size_t r, detail::RepRow& row) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.est.assign(n_cells, nan);
        row.see.assign(n_cells, nan);
        row.boot.assign(n_cells, nan);

        Rng rng(seed, static_cast<std::uint32_t>(r));
        Dataset d;
        NuisanceSet nuis;
        try {
            d = detail::generate_rng(sc, n, rng);
            nuis = fit_nuisances(d);
        } catch (const std::exception& e) {
            row.failed = true;
            row.message = e.what();
            return;
        }

        auto evaluate = [&](const Dataset& data, const NuisanceSet& fits,
                            std::vector<double>& est_out,
                            std::vector<double>* see_out) {
            std::size_t c = 0;
            for (auto kind : estimators) {
                std::vector<std::string> targets =
                    kind == EstimatorKind::plugin && table1
                        ? std::vector<std::string>{"p11", "p01", "delta"}
                        : std::vector<std::string>{"delta"};
                if (kind == EstimatorKind::plugin) {
                    auto ps = plug_in_with_see(fits, data, t_grid);
                    for (const auto& target : targets) {
                        const auto& col = target == "p11"   ? ps.p_treated
                                          : target == "p01" ? ps.p_control
                                                            : ps.delta;
                        for (std::size_t k = 0; k < t_grid.size(); ++k, ++c) {
                            est_out[c] = col[k].estimate;
                            if (see_out)
                                (*see_out)[c] = col[k].se_analytic.value_or(nan);
                        }
                    }
                } else if (kind == EstimatorKind::onestep) {
                    auto curve = one_step_direct(data, fits, t_grid);
                    for (std::size_t k = 0; k < t_grid.size(); ++k, ++c) {
                        est_out[c] = curve.values[k];
                        if (see_out) (*see_out)[c] = curve.se[k];
                    }
                } else {
                    for (std::size_t k = 0; k < t_grid.size(); ++k, ++c) {
                        try {
                            auto res = tmle_estimate(data, fits, t_grid[k]);
                            est_out[c] = res.estimate;
                            if (see_out) {
                                auto contrib = eif_contributions(
                                    data, fits, t_grid[k],
                                    InfluenceTarget::direct_effect);
                                (*see_out)[c] =
                                    std::sqrt(eif_variance(contrib));
                            }
                        } catch (const fit_error&) {
                        } catch (const positivity_error&) {
                        }
                    }
                }
            }
        };
        evaluate(d, nuis, row.est, &row.see);

        if (bootstrap_B > 0) {
            std::vector<std::vector<double>> resampled(
                n_cells, std::vector<double>());
            std::size_t dropped = 0;
            for (std::size_t b = 0; b < bootstrap_B; ++b) {
                Rng brng(seed, static_cast<std::uint32_t>(r),
                         static_cast<std::uint32_t>(b + 1));
                Dataset ds;
                for (std::size_t i = 0; i < d.size(); ++i)
                    ds.push_back(d.record(brng.below(d.size())));
                std::vector<double> est_b(n_cells,
                                          std::numeric_limits<double>::quiet_NaN());
                try {
                    NuisanceSet nb = fit_nuisances(ds);
                    evaluate(ds, nb, est_b, nullptr);
                } catch (const std::exception&) {
                    ++dropped;
                    continue;
                }
                for (std::size_t c = 0; c < n_cells; ++c)
                    if (std::isfinite(est_b[c])) resampled[c].push_back(est_b[c]);
            }
            if (dropped <= bootstrap_B / 10)
                for (std::size_t c = 0; c < n_cells; ++c) {
                    if (rep.cells[c].estimator == EstimatorKind::tmle) continue;
                    const auto& v = resampled[c];
                    if (v.size() < 2) continue;
                    double m = 0.0;
                    for (double x : v) m += x;
                    m /= static_cast<double>(v.size());
                    double ss = 0.0;
                    for (double x : v) ss += (x - m) * (x - m);
                    row.boot[c] =
                        std::sqrt(ss / static_cast<double>(v.size() - 1));
                }
        }
    };

    std::vector<detail::RepRow> rows(replicates);
    int workers = std::max(1, threads);
    if (workers == 1) {
        for (std::size_t r = 0; r < replicates; ++r) run_rep(r, rows[r]);
    } else {
        std::vector<std::thread> pool;
        std::size_t wk = static_cast<std::size_t>(workers);
        std::size_t per = (replicates + wk - 1) / wk;
        for (std::size_t wkr = 0; wkr < wk; ++wkr) {
            std::size_t lo = wkr * per;
            std::size_t hi = std::min(replicates, lo + per);
            if (lo >= hi) break;
            pool.emplace_back([&, lo, hi] {
                for (std::size_t r = lo; r < hi; ++r) run_rep(r, rows[r]);
            });
        }
        for (auto& th : pool) th.join();
    }

    for (const auto& row : rows)
        if (row.failed) {
            ++rep.failures;
            if (rep.failure_messages.size() < 5)
                rep.failure_messages.push_back(row.message);
        }
    if (static_cast<double>(rep.failures) >
        0.05 * static_cast<double>(replicates))
        throw error("run_study: " + std::to_string(rep.failures) + " of " +
                    std::to_string(replicates) + " replicates failed" +
                    (rep.failure_messages.empty()
                         ? ""
                         : " (first: " + rep.failure_messages.front() + ")"));

    double z = normal_quantile(0.5 + rep.level / 2.0);
    for (std::size_t c = 0; c < n_cells; ++c) {
        StudyCell& cell = rep.cells[c];
        std::vector<double> est, see, boot;
        for (const auto& row : rows) {
            if (row.failed) continue;
            if (std::isfinite(row.est[c])) est.push_back(row.est[c]);
            if (std::isfinite(row.see[c])) see.push_back(row.see[c]);
            if (std::isfinite(row.boot[c])) boot.push_back(row.boot[c]);
        }
        cell.used = est.size();
        if (est.empty()) continue;
        double m = 0.0;
        for (double x : est) m += x;
        m /= static_cast<double>(est.size());
        cell.mean = m;
        double ss = 0.0;
        for (double x : est) ss += (x - m) * (x - m);
        cell.sd = est.size() > 1
                      ? std::sqrt(ss / static_cast<double>(est.size() - 1))
                      : 0.0;

        if (!see.empty()) {
            double ms = 0.0;
            for (double x : see) ms += x;
            cell.mean_see = ms / static_cast<double>(see.size());
            std::size_t cov = 0, cnt = 0;
            for (const auto& row : rows) {
                if (row.failed || !std::isfinite(row.est[c]) ||
                    !std::isfinite(row.see[c]))
                    continue;
                ++cnt;
                if (std::abs(row.est[c] - cell.true_value) <=
                    z * row.see[c])
                    ++cov;
            }
            if (cnt)
                cell.coverage = static_cast<double>(cov) /
                                static_cast<double>(cnt);
        }
        if (!boot.empty()) {
            double mb = 0.0;
            for (double x : boot) mb += x;
            cell.mean_see_boot = mb / static_cast<double>(boot.size());
            std::size_t cov = 0, cnt = 0;
            for (const auto& row : rows) {
                if (row.failed || !std::isfinite(row.est[c]) ||
                    !std::isfinite(row.boot[c]))
                    continue;
                ++cnt;
                if (std::abs(row.est[c] - cell.true_value) <=
                    z * row.boot[c])
                    ++cov;
            }
            if (cnt)
                cell.coverage_boot = static_cast<double>(cov) /
                                     static_cast<double>(cnt);
        }
    }
    return rep;
}

}  // namespace sepfx
