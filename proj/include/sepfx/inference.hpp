#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "normal.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace sepfx {

// Summary of one estimator bootstrapped over subject-level resamples.
// `estimates` holds the full-sample values the normal intervals centre on.
struct BootstrapResult {
    std::vector<double> times;
    std::vector<double> estimates;
    std::vector<double> se;
    std::vector<Interval> ci_normal;
    std::vector<Interval> ci_percentile;
    std::size_t requested = 0;
    std::size_t used = 0;
    std::size_t dropped = 0;
    double level = 0.95;
};

// Draw size(d) subjects with replacement.
inline Dataset resample_subjects(const Dataset& d, Rng& rng) {
    Dataset out;
    out.covariate_names = d.covariate_names;
    for (std::size_t i = 0; i < d.size(); ++i)
        out.push_back(d.record(rng.below(d.size())));
    return out;
}

namespace detail {

// Linearly interpolated empirical quantile on ascending values.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
    double h = q * (static_cast<double>(sorted.size()) - 1.0);
    auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] +
           (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

// Nonparametric bootstrap of one estimator.  The callback must refit every
// model it needs on the resample it is handed and return one value per entry
// of `times`.  Resamples where the callback raises a library error are
// dropped and counted; more than 10% dropped aborts.  Replicate b draws its
// indices from Rng(seed, b), so the result is independent of the thread
// schedule.
inline BootstrapResult bootstrap(
    const Dataset& d,
    const std::function<std::vector<double>(const Dataset&)>& estimator,
    const std::vector<double>& times, std::size_t B, std::uint32_t seed,
    double level = 0.95, int threads = 1) {
    if (d.size() == 0) throw data_error("bootstrap: dataset is empty");
    if (B < 2)
        throw config_error("bootstrap: need at least 2 resamples, got " +
                           std::to_string(B));
    if (times.empty()) throw config_error("bootstrap: no time points");
    if (!(level > 0.0 && level < 1.0))
        throw config_error("confidence level must lie in (0, 1), got " +
                           std::to_string(level));

    BootstrapResult out;
    out.times = times;
    out.level = level;
    out.requested = B;
    out.estimates = estimator(d);
    if (out.estimates.size() != times.size())
        throw data_error("bootstrap: estimator returned " +
                         std::to_string(out.estimates.size()) +
                         " values for " + std::to_string(times.size()) +
                         " time points");

    std::vector<std::vector<double>> draws(B);
    std::vector<std::string> failures(B);
    std::vector<char> failed(B, 0);
    auto run_one = [&](std::size_t b) {
        Rng rng(seed, static_cast<std::uint32_t>(b));
        Dataset res = resample_subjects(d, rng);
        try {
            draws[b] = estimator(res);
        } catch (const error& e) {
            failed[b] = 1;
            failures[b] = e.what();
        }
    };
    auto workers = static_cast<std::size_t>(std::max(threads, 1));
    workers = std::min(workers, B);
    if (workers <= 1) {
        for (std::size_t b = 0; b < B; ++b) run_one(b);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t b = w; b < B; b += workers) run_one(b);
            });
        for (auto& th : pool) th.join();
    }

    for (std::size_t b = 0; b < B; ++b) {
        if (failed[b]) {
            ++out.dropped;
        } else if (draws[b].size() != times.size()) {
            throw data_error("bootstrap: estimator returned " +
                             std::to_string(draws[b].size()) + " values for " +
                             std::to_string(times.size()) + " time points");
        }
    }
    out.used = B - out.dropped;
    if (out.dropped * 10 > B) {
        std::string first;
        for (std::size_t b = 0; b < B && first.empty(); ++b)
            if (failed[b]) first = failures[b];
        throw error("bootstrap: " + std::to_string(out.dropped) + " of " +
                    std::to_string(B) + " resamples failed (first: " + first +
                    ")");
    }

    const std::size_t k = times.size();
    out.se.resize(k);
    out.ci_normal.resize(k);
    out.ci_percentile.resize(k);
    std::vector<double> col;
    col.reserve(out.used);
    for (std::size_t j = 0; j < k; ++j) {
        col.clear();
        for (std::size_t b = 0; b < B; ++b)
            if (!failed[b]) col.push_back(draws[b][j]);
        double mean = 0.0;
        for (double v : col) mean += v;
        mean /= static_cast<double>(col.size());
        double ss = 0.0;
        for (double v : col) ss += (v - mean) * (v - mean);
        out.se[j] = std::sqrt(ss / (static_cast<double>(col.size()) - 1.0));
        out.ci_normal[j] =
            confidence_interval(out.estimates[j], out.se[j], level);
        std::sort(col.begin(), col.end());
        double alpha = 0.5 * (1.0 - level);
        out.ci_percentile[j] = {detail::sorted_quantile(col, alpha),
                                detail::sorted_quantile(col, 1.0 - alpha)};
    }
    return out;
}

}  // namespace sepfx
