#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "types.hpp"

namespace sepfx {

enum class FitTarget { cause1, cause2, censoring };

struct CoxObjective {
    double loglik = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd information;
};

namespace detail {

// Sorted working arrays for the Breslow partial likelihood.
struct CoxWork {
    std::size_t n = 0;
    Eigen::Index p = 0;
    std::vector<double> t_s, d_s;   // time, event status, ascending in time
    Eigen::MatrixXd X_s;
    std::vector<double> uniq;       // unique times
    std::vector<std::size_t> first; // first sorted index of each unique time
    std::vector<double> d_k;        // events per unique time
    Eigen::MatrixXd sx;             // per-unique-time sum of event x's

    CoxWork(const std::vector<double>& time, const std::vector<double>& status,
            const Eigen::MatrixXd& X) {
        n = time.size();
        p = X.cols();
        if (status.size() != n ||
            (p > 0 && static_cast<std::size_t>(X.rows()) != n))
            throw error("cox: time/status/X row counts differ");
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return time[a] < time[b];
        });
        t_s.resize(n);
        d_s.resize(n);
        X_s.resize(n, p);
        for (std::size_t i = 0; i < n; ++i) {
            t_s[i] = time[order[i]];
            d_s[i] = status[order[i]];
            if (p > 0) X_s.row(i) = X.row(order[i]);
        }
        for (std::size_t i = 0; i < n; ++i)
            if (uniq.empty() || t_s[i] != uniq.back()) {
                uniq.push_back(t_s[i]);
                first.push_back(i);
            }
        const std::size_t K = uniq.size();
        d_k.assign(K, 0.0);
        sx = Eigen::MatrixXd::Zero(K, p);
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i) {
            while (k + 1 < K && first[k + 1] <= i) ++k;
            d_k[k] += d_s[i];
            if (p > 0 && d_s[i] > 0.0) sx.row(k) += d_s[i] * X_s.row(i);
        }
    }

    // Evaluate loglik/score/information and snapshot the risk sums S0, S1.
    CoxObjective eval(const Eigen::VectorXd& beta, std::vector<double>& S0,
                      Eigen::MatrixXd& S1) const {
        const std::size_t K = uniq.size();
        Eigen::VectorXd lp_s =
            p > 0 ? Eigen::VectorXd(X_s * beta) : Eigen::VectorXd::Zero(n);
        S0.assign(K, 0.0);
        S1.setZero(K, p);
        std::vector<Eigen::MatrixXd> S2k;
        if (p > 0) S2k.assign(K, Eigen::MatrixXd::Zero(p, p));
        double a0 = 0.0;
        Eigen::VectorXd a1 = Eigen::VectorXd::Zero(p);
        Eigen::MatrixXd a2 = Eigen::MatrixXd::Zero(p, p);
        std::size_t k = K;
        for (std::size_t ii = n; ii-- > 0;) {
            double e = std::exp(lp_s[ii]);
            a0 += e;
            if (p > 0) {
                a1 += e * X_s.row(ii).transpose();
                a2 += e * X_s.row(ii).transpose() * X_s.row(ii);
            }
            while (k > 0 && first[k - 1] == ii) {
                --k;
                S0[k] = a0;
                if (p > 0) {
                    S1.row(k) = a1;
                    S2k[k] = a2;
                }
            }
        }
        CoxObjective obj;
        obj.score = Eigen::VectorXd::Zero(p);
        obj.information = Eigen::MatrixXd::Zero(p, p);
        for (std::size_t i = 0; i < n; ++i) obj.loglik += d_s[i] * lp_s[i];
        for (std::size_t g = 0; g < K; ++g) {
            if (d_k[g] <= 0.0) continue;
            obj.loglik -= d_k[g] * std::log(S0[g]);
            if (p > 0) {
                Eigen::VectorXd Ebar = S1.row(g).transpose() / S0[g];
                obj.score += sx.row(g).transpose() - d_k[g] * Ebar;
                obj.information +=
                    d_k[g] * (S2k[g] / S0[g] - Ebar * Ebar.transpose());
            }
        }
        return obj;
    }
};

}  // namespace detail

// Breslow partial log-likelihood, score, and information at beta.
inline CoxObjective cox_objective(const std::vector<double>& time,
                                  const std::vector<double>& status,
                                  const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& beta) {
    detail::CoxWork work(time, status, X);
    std::vector<double> S0;
    Eigen::MatrixXd S1;
    return work.eval(beta, S0, S1);
}

// Proportional-hazards fit with Breslow baseline.  Keeps the data it was fit
// to so that influence pieces can be evaluated later.
struct CoxFit {
    FitTarget target = FitTarget::cause1;
    Eigen::VectorXd beta;
    StepFunction baseline;        // event times and Breslow increments
    Eigen::MatrixXd information;  // observed information at beta (sum scale)
    int iterations = 0;

    // internals on the event-time grid
    std::vector<double> S0;  // risk-set exp(lp) sums at event times
    Eigen::MatrixXd S1;      // (K, p) risk-set x-weighted sums
    std::vector<double> lp;  // linear predictor per subject, input order

    // data copy
    std::vector<double> time;
    std::vector<double> status;
    Eigen::MatrixXd X;

    std::size_t n() const { return time.size(); }
    Eigen::Index p() const { return beta.size(); }

    double linear_predictor(const std::vector<double>& x) const {
        if (static_cast<Eigen::Index>(x.size()) != beta.size())
            throw error("linear_predictor: expected " + std::to_string(beta.size()) +
                        " covariates, got " + std::to_string(x.size()));
        double s = 0.0;
        for (Eigen::Index j = 0; j < beta.size(); ++j) s += beta[j] * x[j];
        return s;
    }

    // cumulative hazard at t for covariate vector x
    double cumhaz(double t, const std::vector<double>& x) const {
        return std::exp(linear_predictor(x)) * baseline.value(t);
    }

    // Per-subject score residuals: information(beta)^-1 U_i, rows sum to ~0.
    Eigen::MatrixXd score_residuals() const {
        const std::size_t nn = n();
        const Eigen::Index pp = p();
        Eigen::MatrixXd U = Eigen::MatrixXd::Zero(nn, pp);
        if (pp == 0) return U;
        const auto& times = baseline.times();
        const auto& dL0 = baseline.increments();
        const std::size_t K = times.size();

        Eigen::MatrixXd Ebar(K, pp);
        for (std::size_t k = 0; k < K; ++k)
            Ebar.row(k) = S1.row(k) / S0[k];
        std::vector<double> cum_dL0(K + 1, 0.0);
        Eigen::MatrixXd cum_EdL0 = Eigen::MatrixXd::Zero(K + 1, pp);
        for (std::size_t k = 0; k < K; ++k) {
            cum_dL0[k + 1] = cum_dL0[k] + dL0[k];
            cum_EdL0.row(k + 1) = cum_EdL0.row(k) + Ebar.row(k) * dL0[k];
        }
        for (std::size_t i = 0; i < nn; ++i) {
            auto it = std::upper_bound(times.begin(), times.end(), time[i]);
            std::size_t idx = static_cast<std::size_t>(it - times.begin());
            double elp = std::exp(lp[i]);
            U.row(i) = -elp * (cum_dL0[idx] * X.row(i) - cum_EdL0.row(idx));
            if (status[i] > 0.0) {
                auto jt = std::lower_bound(times.begin(), times.end(), time[i]);
                if (jt != times.end() && *jt == time[i]) {
                    std::size_t k = static_cast<std::size_t>(jt - times.begin());
                    U.row(i) += X.row(i) - Ebar.row(k);
                }
            }
        }
        return information.ldlt().solve(U.transpose()).transpose();
    }

    // int_0^t K(u) d eps_i^{Lambda0}(u) for K given at the event times;
    // eps_beta holds n * score_residuals (per-subject, mean scale).
    std::vector<double> baseline_if_integral(const std::vector<double>& K_vals,
                                             double t,
                                             const Eigen::MatrixXd& eps_beta) const {
        const auto& times = baseline.times();
        const auto& dL0 = baseline.increments();
        const std::size_t K = times.size();
        if (K_vals.size() != K)
            throw error("baseline_if_integral: kernel has " +
                        std::to_string(K_vals.size()) + " values, baseline has " +
                        std::to_string(K) + " jumps");
        const std::size_t nn = n();
        const Eigen::Index pp = p();

        std::vector<double> Kt(K);
        for (std::size_t k = 0; k < K; ++k)
            Kt[k] = times[k] <= t ? K_vals[k] : 0.0;
        std::vector<double> cum(K + 1, 0.0);
        for (std::size_t k = 0; k < K; ++k)
            cum[k + 1] = cum[k] + Kt[k] * dL0[k] / S0[k];
        Eigen::VectorXd hK = Eigen::VectorXd::Zero(pp);
        if (pp > 0)
            for (std::size_t k = 0; k < K && times[k] <= t; ++k)
                hK += (Kt[k] * dL0[k]) * (S1.row(k).transpose() / S0[k]);

        std::vector<double> out(nn, 0.0);
        const double dn = static_cast<double>(nn);
        for (std::size_t i = 0; i < nn; ++i) {
            double jump = 0.0;
            if (status[i] > 0.0 && time[i] <= t) {
                auto jt = std::lower_bound(times.begin(), times.end(), time[i]);
                if (jt != times.end() && *jt == time[i]) {
                    std::size_t k = static_cast<std::size_t>(jt - times.begin());
                    jump = Kt[k] / S0[k];
                }
            }
            double ub = std::min(time[i], t);
            auto it = std::upper_bound(times.begin(), times.end(), ub);
            double comp =
                std::exp(lp[i]) * cum[static_cast<std::size_t>(it - times.begin())];
            out[i] = dn * (jump - comp);
            if (pp > 0) out[i] -= eps_beta.row(i).dot(hK);
        }
        return out;
    }
};

// Breslow-ties Cox partial likelihood via safeguarded Newton.  X may have
// zero columns, in which case the baseline is the Nelson-Aalen estimator.
inline CoxFit cox_fit(const std::vector<double>& time,
                      const std::vector<double>& status,
                      const Eigen::MatrixXd& X, int max_iter = 50,
                      double tol = 1e-9) {
    const std::size_t n = time.size();
    const Eigen::Index p = X.cols();
    detail::CoxWork work(time, status, X);
    const std::size_t K = work.uniq.size();

    std::vector<double> S0;
    Eigen::MatrixXd S1;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    CoxObjective cur = work.eval(beta, S0, S1);
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        if (p == 0 || cur.score.lpNorm<Eigen::Infinity>() < tol) break;
        Eigen::VectorXd step = cur.information.ldlt().solve(cur.score);
        if (step.lpNorm<Eigen::Infinity>() < 1e-10)
            break;  // score stuck at float-cancellation floor
        bool accepted = false;
        for (int h = 0; h < 30; ++h) {
            Eigen::VectorXd cand = beta + step;
            CoxObjective next = work.eval(cand, S0, S1);
            if (next.loglik >= cur.loglik - 1e-9 * (1.0 + std::abs(cur.loglik))) {
                beta = cand;
                cur = next;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted)
            throw fit_error("cox_fit: step-halving failed at iteration " +
                            std::to_string(iter + 1));
    }
    if (p > 0 && iter == max_iter && cur.score.lpNorm<Eigen::Infinity>() >= tol)
        throw fit_error("cox_fit: no convergence in " + std::to_string(max_iter) +
                        " iterations (score sup-norm " +
                        std::to_string(cur.score.lpNorm<Eigen::Infinity>()) + ")");
    // make the stored risk sums match the final beta
    cur = work.eval(beta, S0, S1);

    CoxFit fit;
    fit.beta = beta;
    fit.information = cur.information;
    fit.iterations = iter;
    std::vector<double> ev_times, ev_dL0, ev_S0;
    std::vector<std::size_t> ev_idx;
    for (std::size_t g = 0; g < K; ++g)
        if (work.d_k[g] > 0.0) {
            ev_times.push_back(work.uniq[g]);
            ev_dL0.push_back(work.d_k[g] / S0[g]);
            ev_S0.push_back(S0[g]);
            ev_idx.push_back(g);
        }
    fit.baseline = StepFunction(ev_times, ev_dL0);
    fit.S0 = std::move(ev_S0);
    fit.S1.resize(static_cast<Eigen::Index>(ev_idx.size()), p);
    for (std::size_t k = 0; k < ev_idx.size(); ++k)
        fit.S1.row(static_cast<Eigen::Index>(k)) =
            S1.row(static_cast<Eigen::Index>(ev_idx[k]));
    fit.lp.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        fit.lp[i] = p > 0 ? X.row(i).dot(beta) : 0.0;
    fit.time = time;
    fit.status = status;
    fit.X = X;
    return fit;
}

}  // namespace sepfx
