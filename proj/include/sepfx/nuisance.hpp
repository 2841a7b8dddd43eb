#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cox.hpp"
#include "logistic.hpp"
#include "types.hpp"

namespace sepfx {

// How subject-level survival is paired with hazard increments on a grid:
//   Exponential:  S(s) = exp(-L1(s) - L2(s))
//   ProductLimit: S(s) = prod_{u<=s} (1 - dL1(u) - dL2(u))
// Either way dF1(s) = S(s-) dL1(s).
enum class Pairing { exponential, product_limit };

// Known constant P(A=1), as an alternative to a fitted propensity model.
using PropensityModel = std::variant<LogisticFit, double>;

struct NuisanceSet {
    CoxFit cause1;
    CoxFit cause2;
    std::optional<CoxFit> censoring;  // none when the data has no censoring
    PropensityModel propensity = 0.5;
    // covariate columns (by dataset position) in the censoring design,
    // after the treatment column
    std::vector<std::size_t> censor_covar_idx;

    double propensity_at(const std::vector<double>& covariates,
                         bool* clipped = nullptr) const {
        double pi;
        if (std::holds_alternative<double>(propensity))
            pi = std::get<double>(propensity);
        else
            pi = std::get<LogisticFit>(propensity).prob(covariates);
        bool clip = pi < kPropensityClipLo || pi > kPropensityClipHi;
        if (clipped) *clipped = clip;
        return std::min(std::max(pi, kPropensityClipLo), kPropensityClipHi);
    }

    // K_C(s- | a, censoring covariates) by left-limit lookup; 1 when no
    // censoring model is present.
    double censor_survival_left(double s, int a,
                                const std::vector<double>& censor_covars = {}) const {
        if (!censoring) return 1.0;
        std::vector<double> x;
        x.reserve(1 + censor_covars.size());
        x.push_back(static_cast<double>(a));
        x.insert(x.end(), censor_covars.begin(), censor_covars.end());
        double lc = std::exp(censoring->linear_predictor(x)) *
                    censoring->baseline.left_value(s);
        return std::exp(-lc);
    }

    // exp(lp_C) for one subject, selecting the censoring covariates out of the
    // full covariate vector by censor_covar_idx; 1 when no censoring model.
    double censor_rate(double a, const std::vector<double>& covariates) const {
        if (!censoring) return 1.0;
        std::vector<double> x;
        x.reserve(1 + censor_covar_idx.size());
        x.push_back(a);
        for (std::size_t idx : censor_covar_idx) x.push_back(covariates.at(idx));
        return std::exp(censoring->linear_predictor(x));
    }
};

struct NuisanceOptions {
    std::optional<double> known_propensity;       // skip the logistic fit
    std::vector<std::string> censor_covars;       // besides treatment
};

inline Eigen::MatrixXd cause_design(const Dataset& d) {
    Eigen::MatrixXd X(d.size(), 1 + d.n_covariates());
    for (std::size_t i = 0; i < d.size(); ++i) {
        X(i, 0) = d.treatment[i];
        for (std::size_t j = 0; j < d.n_covariates(); ++j)
            X(i, j + 1) = d.covariates[j][i];
    }
    return X;
}

inline std::vector<double> status_vector(const Dataset& d, int code) {
    std::vector<double> s(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) s[i] = d.event[i] == code ? 1.0 : 0.0;
    return s;
}

inline CoxFit fit_cause(const Dataset& d, int cause) {
    CoxFit fit = cox_fit(d.time, status_vector(d, cause), cause_design(d));
    fit.target = cause == 1 ? FitTarget::cause1 : FitTarget::cause2;
    return fit;
}

// Cox model for the censoring hazard on treatment plus the named covariates.
inline CoxFit fit_censoring(const Dataset& d,
                            const std::vector<std::string>& extra_covars = {}) {
    auto status = status_vector(d, 0);
    bool any = false;
    for (double s : status) any = any || s > 0.0;
    if (!any)
        throw fit_error("fit_censoring: data has no censored records, the "
                        "censoring distribution is degenerate");
    Eigen::MatrixXd X(d.size(), 1 + extra_covars.size());
    for (std::size_t i = 0; i < d.size(); ++i) X(i, 0) = d.treatment[i];
    for (std::size_t j = 0; j < extra_covars.size(); ++j) {
        std::size_t col = d.n_covariates();
        for (std::size_t c = 0; c < d.n_covariates(); ++c)
            if (d.covariate_names[c] == extra_covars[j]) col = c;
        if (col == d.n_covariates())
            throw config_error("fit_censoring: no covariate named '" +
                               extra_covars[j] + "'");
        for (std::size_t i = 0; i < d.size(); ++i)
            X(i, j + 1) = d.covariates[col][i];
    }
    CoxFit fit = cox_fit(d.time, status, X);
    fit.target = FitTarget::censoring;
    return fit;
}

inline LogisticFit fit_propensity(const Dataset& d) {
    return logistic_fit(d.covariates, d.treatment);
}

inline NuisanceSet fit_nuisances(const Dataset& d,
                                 const NuisanceOptions& opt = {},
                                 std::vector<std::string>* warnings = nullptr) {
    NuisanceSet nuis;
    nuis.cause1 = fit_cause(d, 1);
    nuis.cause2 = fit_cause(d, 2);
    bool any_censored = false;
    for (int e : d.event) any_censored = any_censored || e == 0;
    if (any_censored) {
        nuis.censoring = fit_censoring(d, opt.censor_covars);
        for (const auto& name : opt.censor_covars)
            for (std::size_t c = 0; c < d.n_covariates(); ++c)
                if (d.covariate_names[c] == name) nuis.censor_covar_idx.push_back(c);
    } else if (warnings) {
        warnings->push_back("no censored records: censoring weights fixed at 1");
    }
    if (opt.known_propensity) {
        double p = *opt.known_propensity;
        if (!(p > 0.0 && p < 1.0))
            throw config_error("known propensity must lie in (0, 1), got " +
                               std::to_string(p));
        nuis.propensity = p;
    } else {
        nuis.propensity = fit_propensity(d);
    }
    return nuis;
}

// Union of both causes' baseline jump times, with each cause's increments
// scattered onto it.
struct MergedGrid {
    std::vector<double> times;
    std::vector<double> base1;  // cause-1 baseline increments on the union
    std::vector<double> base2;
    std::vector<std::size_t> pos1;  // cause-1 jump index -> union index
    std::vector<std::size_t> pos2;

    std::size_t size() const { return times.size(); }

    // last union index with times[k] <= t, or npos if t precedes all jumps
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t index_at(double t) const {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return npos;
        return static_cast<std::size_t>(it - times.begin()) - 1;
    }
};

inline MergedGrid make_merged_grid(const CoxFit& f1, const CoxFit& f2) {
    MergedGrid g;
    const auto& t1 = f1.baseline.times();
    const auto& t2 = f2.baseline.times();
    g.times.reserve(t1.size() + t2.size());
    std::merge(t1.begin(), t1.end(), t2.begin(), t2.end(),
               std::back_inserter(g.times));
    g.times.erase(std::unique(g.times.begin(), g.times.end()), g.times.end());
    g.base1.assign(g.times.size(), 0.0);
    g.base2.assign(g.times.size(), 0.0);
    auto scatter = [&](const CoxFit& f, std::vector<double>& base,
                       std::vector<std::size_t>& pos) {
        const auto& ft = f.baseline.times();
        const auto& fd = f.baseline.increments();
        pos.resize(ft.size());
        for (std::size_t k = 0; k < ft.size(); ++k) {
            auto it = std::lower_bound(g.times.begin(), g.times.end(), ft[k]);
            pos[k] = static_cast<std::size_t>(it - g.times.begin());
            base[pos[k]] = fd[k];
        }
    };
    scatter(f1, g.base1, g.pos1);
    scatter(f2, g.base2, g.pos2);
    return g;
}

// One subject's hazard-increment rows and the curves they imply.
struct SubjectCurves {
    std::vector<double> dL1, dL2;
    std::vector<double> S;    // S(s) at grid points
    std::vector<double> Sm;   // S(s-)
    std::vector<double> F1;   // cumulative incidence, cause 1

    void resize(std::size_t J) {
        dL1.resize(J);
        dL2.resize(J);
        S.resize(J);
        Sm.resize(J);
        F1.resize(J);
    }
};

// Fill curves for one subject given hazard multipliers e_j = exp(lp_j).
inline void fill_curves(const MergedGrid& g, double e1, double e2,
                        Pairing pairing, SubjectCurves& c) {
    const std::size_t J = g.size();
    c.resize(J);
    if (pairing == Pairing::exponential) {
        double L = 0.0, F = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            double d1 = e1 * g.base1[j], d2 = e2 * g.base2[j];
            c.dL1[j] = d1;
            c.dL2[j] = d2;
            double Sm = std::exp(-L);
            L += d1 + d2;
            c.Sm[j] = Sm;
            c.S[j] = std::exp(-L);
            F += Sm * d1;
            c.F1[j] = F;
        }
    } else {
        double S = 1.0, F = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            double d1 = e1 * g.base1[j], d2 = e2 * g.base2[j];
            c.dL1[j] = d1;
            c.dL2[j] = d2;
            c.Sm[j] = S;
            F += S * d1;
            S *= (1.0 - d1 - d2);
            c.S[j] = S;
            c.F1[j] = F;
        }
    }
}

// exp(lp) under a fixed or the subject's own treatment arm
inline double arm_multiplier(const CoxFit& fit, const Dataset& d, std::size_t i,
                             int arm /* 0, 1, or -1 for own */) {
    if (fit.p() == 0) return 1.0;
    if (static_cast<std::size_t>(fit.p()) != 1 + d.n_covariates())
        throw error("arm_multiplier: fit has " + std::to_string(fit.p()) +
                    " coefficients, dataset implies " +
                    std::to_string(1 + d.n_covariates()));
    double lp = 0.0;
    double a = arm < 0 ? static_cast<double>(d.treatment[i])
                       : static_cast<double>(arm);
    lp += fit.beta[0] * a;
    for (std::size_t j = 0; j < d.n_covariates(); ++j)
        lp += fit.beta[j + 1] * d.covariates[j][i];
    return std::exp(lp);
}

inline double arm_multiplier(const CoxFit& fit, const ObservedRecord& rec,
                             int arm /* 0, 1, or -1 for own */) {
    if (fit.p() == 0) return 1.0;
    if (static_cast<std::size_t>(fit.p()) != 1 + rec.covariates.size())
        throw error("arm_multiplier: fit has " + std::to_string(fit.p()) +
                    " coefficients, record implies " +
                    std::to_string(1 + rec.covariates.size()));
    double a = arm < 0 ? rec.treatment : static_cast<double>(arm);
    double lp = fit.beta[0] * a;
    for (std::size_t j = 0; j < rec.covariates.size(); ++j)
        lp += fit.beta[j + 1] * rec.covariates[j];
    return std::exp(lp);
}

}  // namespace sepfx
