#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nuisance.hpp"
#include "types.hpp"

namespace sepfx {

enum class EffectKind { direct, indirect };

// direct:   P1(t, 1, fixed_arm) - P1(t, 0, fixed_arm)   (cause-1 arm varies)
// indirect: P1(t, fixed_arm, 1) - P1(t, fixed_arm, 0)   (cause-2 arm varies)
struct EffectSpec {
    EffectKind kind = EffectKind::direct;
    int fixed_arm = 1;
};

inline std::string effect_name(const EffectSpec& spec) {
    return (spec.kind == EffectKind::direct ? "direct" : "indirect") +
           std::to_string(spec.fixed_arm);
}

// Marginal P1(t, aY, aD): cumulative incidence of cause 1 with the cause-1
// hazard from arm aY and the cause-2 hazard from arm aD, averaged over the
// empirical covariate distribution.  Arm -1 means each subject's own arm.
inline std::vector<double> plug_in_p1(const NuisanceSet& nuis, const Dataset& d,
                                      int aY, int aD,
                                      const std::vector<double>& times,
                                      Pairing pairing = Pairing::exponential,
                                      std::vector<std::vector<double>>* per_subject = nullptr) {
    const std::size_t n = d.size();
    if (n == 0) throw error("plug_in_p1: empty dataset");
    MergedGrid grid = make_merged_grid(nuis.cause1, nuis.cause2);
    std::vector<std::size_t> tidx(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) tidx[k] = grid.index_at(times[k]);

    std::vector<double> out(times.size(), 0.0);
    if (per_subject) per_subject->assign(times.size(), std::vector<double>(n));
    SubjectCurves c;
    for (std::size_t i = 0; i < n; ++i) {
        double e1 = arm_multiplier(nuis.cause1, d, i, aY);
        double e2 = arm_multiplier(nuis.cause2, d, i, aD);
        fill_curves(grid, e1, e2, pairing, c);
        for (std::size_t k = 0; k < times.size(); ++k) {
            double v = tidx[k] == MergedGrid::npos ? 0.0 : c.F1[tidx[k]];
            out[k] += v;
            if (per_subject) (*per_subject)[k][i] = v;
        }
    }
    for (double& v : out) v /= static_cast<double>(n);
    return out;
}

// Same construction for the competing cause (used for mirror curves).
inline std::vector<double> plug_in_p2(const NuisanceSet& nuis, const Dataset& d,
                                      int aY, int aD,
                                      const std::vector<double>& times,
                                      Pairing pairing = Pairing::exponential) {
    const std::size_t n = d.size();
    if (n == 0) throw error("plug_in_p2: empty dataset");
    MergedGrid grid = make_merged_grid(nuis.cause1, nuis.cause2);
    std::vector<std::size_t> tidx(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) tidx[k] = grid.index_at(times[k]);
    std::vector<double> out(times.size(), 0.0);
    SubjectCurves c;
    std::vector<double> F2(grid.size());
    for (std::size_t i = 0; i < n; ++i) {
        double e1 = arm_multiplier(nuis.cause1, d, i, aY);
        double e2 = arm_multiplier(nuis.cause2, d, i, aD);
        fill_curves(grid, e1, e2, pairing, c);
        double acc = 0.0;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            acc += c.Sm[j] * c.dL2[j];
            F2[j] = acc;
        }
        for (std::size_t k = 0; k < times.size(); ++k)
            out[k] += tidx[k] == MergedGrid::npos ? 0.0 : F2[tidx[k]];
    }
    for (double& v : out) v /= static_cast<double>(n);
    return out;
}

inline std::vector<double> plug_in_effect(const NuisanceSet& nuis, const Dataset& d,
                                          const EffectSpec& spec,
                                          const std::vector<double>& times,
                                          Pairing pairing = Pairing::exponential) {
    std::vector<double> hi, lo;
    if (spec.kind == EffectKind::direct) {
        hi = plug_in_p1(nuis, d, 1, spec.fixed_arm, times, pairing);
        lo = plug_in_p1(nuis, d, 0, spec.fixed_arm, times, pairing);
    } else {
        hi = plug_in_p1(nuis, d, spec.fixed_arm, 1, times, pairing);
        lo = plug_in_p1(nuis, d, spec.fixed_arm, 0, times, pairing);
    }
    std::vector<double> out(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) out[k] = hi[k] - lo[k];
    return out;
}

// Conditional cumulative incidence P1(t, aY, aD | covariates) for one profile.
inline RiskCurve p1_conditional(const NuisanceSet& nuis,
                                const std::vector<double>& covariates, int aY,
                                int aD, const std::vector<double>& times,
                                Pairing pairing = Pairing::exponential) {
    MergedGrid grid = make_merged_grid(nuis.cause1, nuis.cause2);
    auto mult = [&](const CoxFit& fit, int arm) {
        double lp = fit.beta[0] * arm;
        for (std::size_t j = 0; j < covariates.size(); ++j)
            lp += fit.beta[j + 1] * covariates[j];
        return std::exp(lp);
    };
    SubjectCurves c;
    fill_curves(grid, mult(nuis.cause1, aY), mult(nuis.cause2, aD), pairing, c);
    RiskCurve out;
    out.times = times;
    out.values.resize(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        std::size_t j = grid.index_at(times[k]);
        out.values[k] = j == MergedGrid::npos ? 0.0 : c.F1[j];
    }
    return out;
}

struct PlugInSeeResult {
    std::vector<EffectEstimate> p_treated;  // P1(t, 1, aD)
    std::vector<EffectEstimate> p_control;  // P1(t, 0, aD)
    std::vector<EffectEstimate> delta;      // direct effect
    std::vector<std::vector<double>> delta_influence;  // per time, per subject
};

// Plug-in direct-effect estimates with analytic (delta-method) standard
// errors, propagating the Cox score and baseline influences.
inline PlugInSeeResult plug_in_with_see(const NuisanceSet& nuis, const Dataset& d,
                                        const std::vector<double>& times,
                                        int aD = 1,
                                        Pairing pairing = Pairing::exponential) {
    const std::size_t n = d.size();
    const CoxFit& f1 = nuis.cause1;
    const CoxFit& f2 = nuis.cause2;
    const Eigen::Index p = f1.p();
    if (p != static_cast<Eigen::Index>(1 + d.n_covariates()) || f2.p() != p)
        throw error("plug_in_with_see: cause fits must model treatment plus "
                    "the dataset covariates");
    MergedGrid grid = make_merged_grid(f1, f2);
    const std::size_t J = grid.size();

    Eigen::MatrixXd eps1 = static_cast<double>(n) * f1.score_residuals();
    Eigen::MatrixXd eps2 = static_cast<double>(n) * f2.score_residuals();

    std::vector<std::size_t> tidx(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) tidx[k] = grid.index_at(times[k]);

    PlugInSeeResult res;
    res.p_treated.resize(times.size());
    res.p_control.resize(times.size());
    res.delta.resize(times.size());
    res.delta_influence.assign(times.size(), std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> phi_arm[2];  // [aY index][time][subject]

    for (int aYi = 0; aYi < 2; ++aYi) {
        const int aY = aYi == 0 ? 1 : 0;
        // per-grid-point accumulators (means over subjects)
        std::vector<double> m_g1(J, 0.0);   // E[S(s-) g1]
        std::vector<double> T1(J, 0.0);     // E[S(s-) g1 dL1]
        std::vector<double> T2(J, 0.0);     // E[S(s-) g2 dL1]
        Eigen::MatrixXd b1 = Eigen::MatrixXd::Zero(J, p);
        Eigen::MatrixXd b2 = Eigen::MatrixXd::Zero(J, p);
        std::vector<std::vector<double>> F1t(times.size(),
                                             std::vector<double>(n, 0.0));
        SubjectCurves c;
        Eigen::VectorXd l1(p), l2(p);
        for (std::size_t i = 0; i < n; ++i) {
            double g1 = arm_multiplier(f1, d, i, aY);
            double g2 = arm_multiplier(f2, d, i, aD);
            fill_curves(grid, g1, g2, pairing, c);
            l1[0] = aY;
            l2[0] = aD;
            for (std::size_t j = 0; j < d.n_covariates(); ++j) {
                l1[j + 1] = d.covariates[j][i];
                l2[j + 1] = d.covariates[j][i];
            }
            double L1m = 0.0, L2m = 0.0;
            for (std::size_t j = 0; j < J; ++j) {
                double dF1 = c.Sm[j] * c.dL1[j];
                m_g1[j] += c.Sm[j] * g1;
                T1[j] += c.Sm[j] * g1 * c.dL1[j];
                T2[j] += c.Sm[j] * g2 * c.dL1[j];
                b1.row(j) += dF1 * (1.0 - L1m) * l1.transpose();
                b2.row(j) -= dF1 * L2m * l2.transpose();
                L1m += c.dL1[j];
                L2m += c.dL2[j];
            }
            for (std::size_t k = 0; k < times.size(); ++k)
                F1t[k][i] = tidx[k] == MergedGrid::npos ? 0.0 : c.F1[tidx[k]];
        }
        const double dn = static_cast<double>(n);
        for (std::size_t j = 0; j < J; ++j) {
            m_g1[j] /= dn;
            T1[j] /= dn;
            T2[j] /= dn;
        }
        b1 /= dn;
        b2 /= dn;
        // prefix sums over the grid
        std::vector<double> cT1(J + 1, 0.0), cT2(J + 1, 0.0);
        Eigen::MatrixXd cb1 = Eigen::MatrixXd::Zero(J + 1, p);
        Eigen::MatrixXd cb2 = Eigen::MatrixXd::Zero(J + 1, p);
        for (std::size_t j = 0; j < J; ++j) {
            cT1[j + 1] = cT1[j] + T1[j];
            cT2[j + 1] = cT2[j] + T2[j];
            cb1.row(j + 1) = cb1.row(j) + b1.row(j);
            cb2.row(j + 1) = cb2.row(j) + b2.row(j);
        }

        phi_arm[aYi].assign(times.size(), std::vector<double>(n, 0.0));
        for (std::size_t k = 0; k < times.size(); ++k) {
            const std::size_t jt = tidx[k] == MergedGrid::npos ? 0 : tidx[k] + 1;
            double est = 0.0;
            for (std::size_t i = 0; i < n; ++i) est += F1t[k][i];
            est /= dn;
            Eigen::VectorXd B1 = cb1.row(jt).transpose();
            Eigen::VectorXd B2 = cb2.row(jt).transpose();
            // kernels on each cause's own jump grid
            std::vector<double> K1(f1.baseline.n_jumps(), 0.0);
            for (std::size_t m = 0; m < grid.pos1.size(); ++m) {
                std::size_t v = grid.pos1[m];
                if (v + 1 <= jt) K1[m] = m_g1[v] - (cT1[jt] - cT1[v + 1]);
            }
            std::vector<double> K2(f2.baseline.n_jumps(), 0.0);
            for (std::size_t m = 0; m < grid.pos2.size(); ++m) {
                std::size_t v = grid.pos2[m];
                if (v + 1 <= jt) K2[m] = cT2[jt] - cT2[v + 1];
            }
            auto base1 = f1.baseline_if_integral(K1, times[k], eps1);
            auto base2 = f2.baseline_if_integral(K2, times[k], eps2);
            auto& phi = phi_arm[aYi][k];
            for (std::size_t i = 0; i < n; ++i)
                phi[i] = (F1t[k][i] - est) + eps1.row(i).dot(B1) +
                         eps2.row(i).dot(B2) + base1[i] - base2[i];
            double var = 0.0;
            for (double v : phi) var += v * v;
            var /= (dn - 1.0);
            auto& slot = aY == 1 ? res.p_treated[k] : res.p_control[k];
            slot.time = times[k];
            slot.estimate = est;
            slot.se_analytic = std::sqrt(var / dn);
        }
    }
    for (std::size_t k = 0; k < times.size(); ++k) {
        res.delta[k].time = times[k];
        res.delta[k].estimate =
            res.p_treated[k].estimate - res.p_control[k].estimate;
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double v = phi_arm[0][k][i] - phi_arm[1][k][i];
            res.delta_influence[k][i] = v;
            var += v * v;
        }
        var /= (static_cast<double>(n) - 1.0);
        res.delta[k].se_analytic = std::sqrt(var / static_cast<double>(n));
    }
    return res;
}

}  // namespace sepfx
