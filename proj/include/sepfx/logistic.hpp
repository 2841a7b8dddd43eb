#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "types.hpp"

namespace sepfx {

inline constexpr double kPropensityClipLo = 0.01;
inline constexpr double kPropensityClipHi = 0.99;

struct LogisticFit {
    Eigen::VectorXd alpha;  // intercept first, then covariate coefficients
    int iterations = 0;

    // P(A=1 | w), unclipped
    double prob(const std::vector<double>& w) const {
        if (static_cast<Eigen::Index>(w.size()) + 1 != alpha.size())
            throw error("logistic prob: expected " + std::to_string(alpha.size() - 1) +
                        " covariates, got " + std::to_string(w.size()));
        double eta = alpha[0];
        for (std::size_t j = 0; j < w.size(); ++j) eta += alpha[j + 1] * w[j];
        return 1.0 / (1.0 + std::exp(-eta));
    }
};

// Logistic regression of a binary response on an intercept plus covariate
// columns, by Newton-Raphson on the log-likelihood.
inline LogisticFit logistic_fit(const std::vector<std::vector<double>>& covariates,
                                const std::vector<int>& response,
                                int max_iter = 50, double tol = 1e-8) {
    const std::size_t n = response.size();
    const Eigen::Index p = static_cast<Eigen::Index>(covariates.size()) + 1;
    Eigen::MatrixXd X(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (std::size_t j = 0; j < covariates.size(); ++j)
            X(i, j + 1) = covariates[j][i];
    }
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = response[i];

    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(p);
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        Eigen::VectorXd mu(n);
        for (std::size_t i = 0; i < n; ++i)
            mu[i] = 1.0 / (1.0 + std::exp(-X.row(i).dot(alpha)));
        Eigen::VectorXd g = X.transpose() * (y - mu);
        if (g.lpNorm<Eigen::Infinity>() < tol) break;
        Eigen::MatrixXd H = X.transpose() *
                            (mu.array() * (1.0 - mu.array())).matrix().asDiagonal() * X;
        alpha += H.ldlt().solve(g);
    }
    if (iter == max_iter)
        throw fit_error("logistic_fit: no convergence in " +
                        std::to_string(max_iter) + " iterations");
    LogisticFit fit;
    fit.alpha = alpha;
    fit.iterations = iter;
    return fit;
}

}  // namespace sepfx
