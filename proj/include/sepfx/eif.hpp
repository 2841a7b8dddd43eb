#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "sepfx/csv.hpp"
#include "sepfx/normal.hpp"
#include "sepfx/nuisance.hpp"

namespace sepfx {

// Which estimand the influence contributions target.  Direct and indirect use
// their canonical arm pairings (cause-2 arm fixed at 1 for direct, cause-1 arm
// fixed at 0 for indirect); the opposite pairings are obtained by relabeling
// treatment before fitting.
enum class InfluenceTarget { direct_effect, indirect_effect, total_effect };

struct EifComponents {
    double mart1 = 0.0;  // cause-1 martingale integral
    double mart2 = 0.0;  // cause-2 martingale integral
    double cond = 0.0;   // conditional-effect term
};

// One subject's uncentered influence contribution: value = mart1 + mart2 +
// cond, so that the one-step estimate is the plain mean of values.
struct EifContribution {
    double value = 0.0;
    EifComponents components;
};

constexpr double kPositivityFloor = 1e-10;

namespace detail {

// Per-subject rows on the merged grid, reused across subjects.
struct EifWork {
    MergedGrid grid;
    std::vector<double> lc0m;  // censoring baseline cumhaz, left limit
    SubjectCurves own;         // subject's own arm, both causes
    SubjectCurves mix;         // cause-1 arm 0, cause-2 arm 1
    SubjectCurves top;         // both causes arm 1
    SubjectCurves bot;         // both causes arm 0
    std::vector<double> z;     // e^{L2(s|A,W) - L2(s|1,W)}, current value
    std::vector<double> kc;    // K_C(s- | A, censoring covariates)
};

inline void eif_prepare(const NuisanceSet& nuis, EifWork& w) {
    w.grid = make_merged_grid(nuis.cause1, nuis.cause2);
    w.lc0m.assign(w.grid.size(), 0.0);
    if (nuis.censoring)
        for (std::size_t j = 0; j < w.grid.size(); ++j)
            w.lc0m[j] = nuis.censoring->baseline.left_value(w.grid.times[j]);
}

inline void eif_fill_subject(const NuisanceSet& nuis, const ObservedRecord& rec,
                             EifWork& w) {
    double e1o = arm_multiplier(nuis.cause1, rec, -1);
    double e2o = arm_multiplier(nuis.cause2, rec, -1);
    double e10 = arm_multiplier(nuis.cause1, rec, 0);
    double e11 = arm_multiplier(nuis.cause1, rec, 1);
    double e20 = arm_multiplier(nuis.cause2, rec, 0);
    double e21 = arm_multiplier(nuis.cause2, rec, 1);
    fill_curves(w.grid, e1o, e2o, Pairing::exponential, w.own);
    fill_curves(w.grid, e10, e21, Pairing::exponential, w.mix);
    fill_curves(w.grid, e11, e21, Pairing::exponential, w.top);
    fill_curves(w.grid, e10, e20, Pairing::exponential, w.bot);

    const std::size_t J = w.grid.size();
    w.z.resize(J);
    w.kc.resize(J);
    double l2_own = 0.0, l2_1 = 0.0;
    double crate = nuis.censoring ? nuis.censor_rate(rec.treatment, rec.covariates)
                                  : 1.0;
    for (std::size_t j = 0; j < J; ++j) {
        l2_own += w.own.dL2[j];
        l2_1 += w.mix.dL2[j];
        w.z[j] = std::exp(l2_own - l2_1);
        w.kc[j] = nuis.censoring ? std::exp(-crate * w.lc0m[j]) : 1.0;
    }
}

// Martingale kernel pair (k1, k2) at one grid point, before the censoring
// weight.  inv_p is 1/pi on arm 1 and 1/(1-pi) on arm 0; f1d and pbar are the
// current-value tail masses F1(t)-F1(s) and P(t)-P(s); sm is S(s-) on the
// subject's own arm; z the cause-2 hazard-shift factor.
inline std::pair<double, double> eif_kernels(InfluenceTarget kind, bool arm1,
                                             double inv_p, double f1d,
                                             double pbar, double sm, double z) {
    switch (kind) {
        case InfluenceTarget::direct_effect:
            if (arm1)
                return {inv_p * (1.0 - f1d / sm), inv_p * (pbar - f1d) / sm};
            return {-inv_p * (z - pbar / sm), 0.0};
        case InfluenceTarget::indirect_effect:
            if (arm1) return {0.0, -inv_p * pbar / sm};
            return {inv_p * ((z - 1.0) - (pbar - f1d) / sm), inv_p * f1d / sm};
        default:  // total effect
            if (arm1) return {inv_p * (1.0 - f1d / sm), -inv_p * f1d / sm};
            return {-inv_p * (1.0 - f1d / sm), inv_p * f1d / sm};
    }
}

inline EifContribution eif_eval(const EifWork& w, const ObservedRecord& rec,
                                double pi, InfluenceTarget kind, double t) {
    const auto& g = w.grid;
    std::size_t jt = g.index_at(t);
    auto row_at = [&](const std::vector<double>& row) {
        return jt == MergedGrid::npos ? 0.0 : row[jt];
    };
    double f1t_own = row_at(w.own.F1);
    double p_mix_t = row_at(w.mix.F1);
    double p_top_t = row_at(w.top.F1);
    double p_bot_t = row_at(w.bot.F1);

    EifContribution out;
    switch (kind) {
        case InfluenceTarget::direct_effect:
            out.components.cond = p_top_t - p_mix_t;
            break;
        case InfluenceTarget::indirect_effect:
            out.components.cond = p_mix_t - p_bot_t;
            break;
        default:
            out.components.cond = p_top_t - p_bot_t;
    }

    bool arm1 = rec.treatment == 1;
    double inv_p = arm1 ? 1.0 / pi : 1.0 / (1.0 - pi);
    double m1 = 0.0, m2 = 0.0;
    std::size_t end = jt == MergedGrid::npos ? 0 : jt + 1;
    for (std::size_t j = 0; j < end; ++j) {
        double s = g.times[j];
        if (s > rec.time) break;  // past the at-risk window
        if (w.kc[j] < kPositivityFloor)
            throw positivity_error("censoring survival below 1e-10 at s=" +
                                   detail::fmt17(s));
        if (w.own.Sm[j] < kPositivityFloor)
            throw positivity_error("event-free survival below 1e-10 at s=" +
                                   detail::fmt17(s));
        auto [k1, k2] = eif_kernels(kind, arm1, inv_p, f1t_own - w.own.F1[j],
                                    p_mix_t - w.mix.F1[j], w.own.Sm[j], w.z[j]);
        k1 /= w.kc[j];
        k2 /= w.kc[j];
        m1 -= k1 * w.own.dL1[j];
        m2 -= k2 * w.own.dL2[j];
        if (s == rec.time) {
            if (rec.event == 1) m1 += k1;
            if (rec.event == 2) m2 += k2;
        }
    }
    out.components.mart1 = m1;
    out.components.mart2 = m2;
    out.value = m1 + m2 + out.components.cond;
    return out;
}

}  // namespace detail

// Single-record contributions.  The record's covariates must be ordered like
// the dataset the nuisance models were fitted on.
inline EifContribution eif_contribution(double t, const ObservedRecord& rec,
                                        const NuisanceSet& nuis,
                                        InfluenceTarget kind) {
    detail::EifWork w;
    detail::eif_prepare(nuis, w);
    detail::eif_fill_subject(nuis, rec, w);
    double pi = nuis.propensity_at(rec.covariates);
    return detail::eif_eval(w, rec, pi, kind, t);
}

inline EifContribution eif_direct_contribution(double t, const ObservedRecord& rec,
                                               const NuisanceSet& nuis) {
    return eif_contribution(t, rec, nuis, InfluenceTarget::direct_effect);
}

inline EifContribution eif_indirect_contribution(double t,
                                                 const ObservedRecord& rec,
                                                 const NuisanceSet& nuis) {
    return eif_contribution(t, rec, nuis, InfluenceTarget::indirect_effect);
}

// All subjects at one time point.
inline std::vector<EifContribution> eif_contributions(const Dataset& d,
                                                      const NuisanceSet& nuis,
                                                      double t,
                                                      InfluenceTarget kind) {
    detail::EifWork w;
    detail::eif_prepare(nuis, w);
    std::vector<EifContribution> out;
    out.reserve(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        ObservedRecord rec = d.record(i);
        detail::eif_fill_subject(nuis, rec, w);
        double pi = nuis.propensity_at(rec.covariates);
        out.push_back(detail::eif_eval(w, rec, pi, kind, t));
    }
    return out;
}

// se^2 of the one-step estimate: sample variance of contributions over n.
inline double eif_variance(const std::vector<EifContribution>& c) {
    if (c.size() < 2)
        throw error("eif_variance needs at least 2 contributions, got " +
                    std::to_string(c.size()));
    double n = static_cast<double>(c.size());
    double mean = 0.0;
    for (const auto& e : c) mean += e.value;
    mean /= n;
    double ssq = 0.0;
    for (const auto& e : c) ssq += (e.value - mean) * (e.value - mean);
    return ssq / (n - 1.0) / n;
}

inline RiskCurve one_step_curve(const Dataset& d, const NuisanceSet& nuis,
                                const std::vector<double>& t_grid,
                                InfluenceTarget kind, double level = 0.95) {
    detail::EifWork w;
    detail::eif_prepare(nuis, w);
    const std::size_t n = d.size(), T = t_grid.size();
    std::vector<std::vector<EifContribution>> per_t(T);
    for (auto& v : per_t) v.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ObservedRecord rec = d.record(i);
        detail::eif_fill_subject(nuis, rec, w);
        double pi = nuis.propensity_at(rec.covariates);
        for (std::size_t k = 0; k < T; ++k)
            per_t[k].push_back(detail::eif_eval(w, rec, pi, kind, t_grid[k]));
    }
    RiskCurve out;
    out.times = t_grid;
    out.values.resize(T);
    out.se.resize(T);
    out.lo.resize(T);
    out.hi.resize(T);
    for (std::size_t k = 0; k < T; ++k) {
        double mean = 0.0;
        for (const auto& e : per_t[k]) mean += e.value;
        mean /= static_cast<double>(n);
        out.values[k] = mean;
        out.se[k] = std::sqrt(eif_variance(per_t[k]));
        Interval ci = confidence_interval(mean, out.se[k], level);
        out.lo[k] = ci.lo;
        out.hi[k] = ci.hi;
    }
    return out;
}

inline RiskCurve one_step_direct(const Dataset& d, const NuisanceSet& nuis,
                                 const std::vector<double>& t_grid,
                                 double level = 0.95) {
    return one_step_curve(d, nuis, t_grid, InfluenceTarget::direct_effect, level);
}

inline RiskCurve one_step_indirect(const Dataset& d, const NuisanceSet& nuis,
                                   const std::vector<double>& t_grid,
                                   double level = 0.95) {
    return one_step_curve(d, nuis, t_grid, InfluenceTarget::indirect_effect,
                          level);
}

inline RiskCurve one_step_total(const Dataset& d, const NuisanceSet& nuis,
                                const std::vector<double>& t_grid,
                                double level = 0.95) {
    return one_step_curve(d, nuis, t_grid, InfluenceTarget::total_effect, level);
}

// Per-subject diagnostic dump.
inline void dump_contributions_csv(const std::string& path,
                                   const std::vector<EifContribution>& c) {
    std::ofstream out(path);
    if (!out) throw error("cannot open '" + path + "' for writing");
    out << "subject,value,mart1,mart2,cond\n";
    for (std::size_t i = 0; i < c.size(); ++i)
        out << i << ',' << detail::fmt17(c[i].value) << ','
            << detail::fmt17(c[i].components.mart1) << ','
            << detail::fmt17(c[i].components.mart2) << ','
            << detail::fmt17(c[i].components.cond) << '\n';
}

}  // namespace sepfx
