#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "sepfx/simulate.hpp"

using namespace sepfx;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

// Aalen-Johansen cause-1 cumulative incidence at t, product-limit form,
// built from raw counting so it is independent of the library's estimators.
double aj_cif1(std::vector<std::pair<double, int>> rows, double t) {
    std::sort(rows.begin(), rows.end());
    double surv = 1.0, cif = 0.0;
    std::size_t i = 0;
    while (i < rows.size() && rows[i].first <= t) {
        double s = rows[i].first;
        double at_risk = static_cast<double>(rows.size() - i);
        int d1 = 0, d2 = 0;
        std::size_t j = i;
        while (j < rows.size() && rows[j].first == s) {
            if (rows[j].second == 1) ++d1;
            if (rows[j].second == 2) ++d2;
            ++j;
        }
        cif += surv * d1 / at_risk;
        surv *= 1.0 - (d1 + d2) / at_risk;
        i = j;
    }
    return cif;
}

// Exact cause-1 incidence among subjects observed on arm a.
double arm_cif_truth(Scenario sc, int a, double t) {
    auto weight = [&](double w) {
        double pi = detail::sim_propensity(sc, w);
        return a == 1 ? pi : 1.0 - pi;
    };
    double num = detail::integrate_w(
        [&](double w) {
            return weight(w) * detail::sim_p1_cond(sc, t, a, a, w);
        },
        1e-8);
    double den = detail::integrate_w(weight, 1e-8);
    return num / den;
}

const StudyCell& find_cell(const StudyReport& rep, EstimatorKind kind,
                           const std::string& target, double t) {
    for (const auto& c : rep.cells)
        if (c.estimator == kind && c.target == target && c.time == t) return c;
    FAIL("no such cell");
    return rep.cells.front();
}

}  // namespace

TEST_CASE("exact truths reproduce the frozen quadrature") {
    auto want = testutil::load_json("true_values.json");

    auto t1 = want["T1"];
    auto times1 = testutil::as_vec(t1["times"]);
    for (std::size_t k = 0; k < times1.size(); ++k) {
        double t = times1[k];
        CHECK_THAT(true_p1(Scenario::Table1, t, 1, 1),
                   WithinAbs(testutil::as_vec(t1["p11"])[k], 2e-6));
        CHECK_THAT(true_p1(Scenario::Table1, t, 0, 1),
                   WithinAbs(testutil::as_vec(t1["p01"])[k], 2e-6));
        CHECK_THAT(true_effect(Scenario::Table1, t),
                   WithinAbs(testutil::as_vec(t1["delta"])[k], 2e-6));
    }

    for (const char* block : {"A", "C"}) {
        Scenario sc = block[0] == 'A' ? Scenario::A1 : Scenario::C1;
        auto node = want[block];
        auto times = testutil::as_vec(node["times"]);
        for (std::size_t k = 0; k < times.size(); ++k) {
            double t = times[k];
            CHECK_THAT(true_p1(sc, t, 1, 1),
                       WithinAbs(testutil::as_vec(node["p11"])[k], 2e-6));
            CHECK_THAT(true_p1(sc, t, 0, 1),
                       WithinAbs(testutil::as_vec(node["p01"])[k], 2e-6));
            CHECK_THAT(true_effect(sc, t),
                       WithinAbs(testutil::as_vec(node["delta"])[k], 2e-6));
        }
    }

    for (double t : {1.0, 5.0, 9.0}) {
        CHECK(true_effect(Scenario::A2, t) == true_effect(Scenario::A1, t));
        CHECK(true_effect(Scenario::B1, t) == true_effect(Scenario::A1, t));
        CHECK(true_effect(Scenario::B2, t) == true_effect(Scenario::A1, t));
        CHECK(true_effect(Scenario::C2, t) == true_effect(Scenario::C1, t));
    }

    EffectSpec indirect{EffectKind::indirect, 0};
    double by_parts = true_p1(Scenario::A1, 5.0, 0, 1) -
                      true_p1(Scenario::A1, 5.0, 0, 0);
    CHECK_THAT(true_effect(Scenario::A1, 5.0, indirect),
               WithinAbs(by_parts, 2e-6));
}

TEST_CASE("truth starts at zero and grows with the horizon") {
    for (Scenario sc : {Scenario::Table1, Scenario::A1, Scenario::C1}) {
        CHECK(true_p1(sc, 0.0, 1, 1) == 0.0);
        CHECK(true_effect(sc, 0.0) == 0.0);
        double prev = 0.0;
        for (double t : {1.0, 2.0, 4.0, 6.0, 9.0}) {
            double cur = true_p1(sc, t, 0, 1);
            CHECK(cur >= prev);
            prev = cur;
        }
    }
    CHECK_THROWS_AS(true_p1(Scenario::A1, -1.0, 1, 1), config_error);
}

TEST_CASE("the generator hits its design margins") {
    auto d = generate(Scenario::Table1, 1000000, 314159);
    double treated = 0.0;
    for (int a : d.treatment) treated += a;
    CHECK_THAT(treated / static_cast<double>(d.size()), WithinAbs(0.5, 0.002));
    double wbar = 0.0;
    for (double w : d.covariates[0]) wbar += w;
    CHECK_THAT(wbar / static_cast<double>(d.size()), WithinAbs(0.5, 0.002));

    auto b = generate(Scenario::B1, 400000, 271828);
    std::size_t hi_n = 0, hi_a = 0, lo_n = 0, lo_a = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (b.covariates[0][i] > 0.5) {
            ++hi_n;
            hi_a += b.treatment[i];
        } else {
            ++lo_n;
            lo_a += b.treatment[i];
        }
    }
    CHECK_THAT(static_cast<double>(hi_a) / hi_n, WithinAbs(0.7, 0.004));
    CHECK_THAT(static_cast<double>(lo_a) / lo_n, WithinAbs(0.1, 0.004));
}

TEST_CASE("generated incidence matches the analytic risk") {
    // Scenarios whose censoring is independent of W, so the arm-wise
    // Aalen-Johansen estimate targets the arm's marginal risk.  Table1's
    // random censoring widens the band beyond the binomial 3-sigma.
    struct Case {
        Scenario sc;
        std::uint32_t seed;
        double t_max;
        double z;
    };
    const std::vector<Case> cases = {
        {Scenario::Table1, 11, 6.0, 4.0},
        {Scenario::A1, 12, 9.0, 3.0},
        {Scenario::B1, 14, 9.0, 3.0},
        {Scenario::C1, 16, 9.0, 3.0},
    };
    const std::size_t n = 1000000;
    for (const auto& cs : cases) {
        auto d = generate(cs.sc, n, cs.seed);
        for (int a : {0, 1}) {
            std::vector<std::pair<double, int>> rows;
            for (std::size_t i = 0; i < d.size(); ++i)
                if (d.treatment[i] == a)
                    rows.emplace_back(d.time[i], d.event[i]);
            for (double t = 1.0; t <= cs.t_max + 0.5; t += 1.0) {
                double truth = arm_cif_truth(cs.sc, a, t);
                double se = std::sqrt(truth * (1.0 - truth) /
                                      static_cast<double>(rows.size()));
                INFO(scenario_name(cs.sc) << " arm " << a << " t=" << t);
                CHECK_THAT(aj_cif1(rows, t), WithinAbs(truth, cs.z * se));
            }
        }
    }
}

TEST_CASE("censored scenarios keep the exact crude incidence") {
    // The *2 scenarios censor with rate exp(0.2 W)/12, which is informative
    // marginally (W drives the hazards too), so a naive Aalen-Johansen no
    // longer targets the marginal risk there.  The observable with an exact
    // closed form is the crude incidence P(time <= t, event = j | A = a):
    // under constant per-W hazards it is the mixture of
    //   lambda_j / (lambda + rc) * (1 - exp(-(lambda + rc) * min(t, cap)))
    // over the arm's tilted W law, and the empirical count is binomial.
    struct Case {
        Scenario sc;
        std::uint32_t seed;
        double cap;  // administrative bound on the censoring time
        bool w_rate;
    };
    const std::vector<Case> cases = {
        {Scenario::Table1, 21, 7.0, false},
        {Scenario::A2, 22, 12.0, true},
        {Scenario::B2, 23, 12.0, true},
        {Scenario::C2, 24, 12.0, true},
    };
    const std::size_t n = 1000000;
    for (const auto& cs : cases) {
        auto d = generate(cs.sc, n, cs.seed);
        for (int a : {0, 1}) {
            std::size_t n_arm = 0;
            for (std::size_t i = 0; i < n; ++i) n_arm += d.treatment[i] == a;
            auto weight = [&](double w) {
                double pi = detail::sim_propensity(cs.sc, w);
                return a == 1 ? pi : 1.0 - pi;
            };
            double den = detail::integrate_w(weight, 1e-10);
            for (int cause : {1, 2})
                for (double t = 1.0; t <= 9.5; t += 1.0) {
                    std::size_t hits = 0;
                    for (std::size_t i = 0; i < n; ++i)
                        hits += d.treatment[i] == a && d.event[i] == cause &&
                                d.time[i] <= t;
                    double te = std::min(t, cs.cap);
                    double truth =
                        detail::integrate_w(
                            [&](double w) {
                                double l1 = detail::sim_lambda1(cs.sc, a, w);
                                double l2 = detail::sim_lambda2(cs.sc, a, w);
                                double rc = cs.w_rate
                                                ? std::exp(0.2 * w) / 12.0
                                                : 1.0 / 12.0;
                                double lj = cause == 1 ? l1 : l2;
                                double tot = l1 + l2 + rc;
                                return weight(w) * lj / tot *
                                       (1.0 - std::exp(-tot * te));
                            },
                            1e-10) /
                        den;
                    double frac =
                        static_cast<double>(hits) / static_cast<double>(n_arm);
                    double se = std::sqrt(truth * (1.0 - truth) /
                                          static_cast<double>(n_arm));
                    INFO(scenario_name(cs.sc) << " arm " << a << " cause "
                                              << cause << " t=" << t);
                    CHECK_THAT(frac, WithinAbs(truth, 3.0 * se));
                }
        }
    }
}

TEST_CASE("treated C1 strata reverse their cause-1 rates") {
    auto d = generate(Scenario::C1, 1000000, 161803);
    const double tau = 1.0;
    double ev_hi = 0.0, ex_hi = 0.0, ev_lo = 0.0, ex_lo = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.treatment[i] != 1) continue;
        bool hi = d.covariates[0][i] > 0.5;
        double expo = std::min(d.time[i], tau);
        bool event = d.event[i] == 1 && d.time[i] <= tau;
        (hi ? ev_hi : ev_lo) += event ? 1.0 : 0.0;
        (hi ? ex_hi : ex_lo) += expo;
    }

    auto stratum_truth = [&](double lo, double hi) {
        auto pi = [&](double w) { return detail::sim_propensity(Scenario::C1, w); };
        double events = detail::integrate(
            [&](double w) {
                double l1 = detail::sim_lambda1(Scenario::C1, 1, w);
                double l2 = detail::sim_lambda2(Scenario::C1, 1, w);
                double lam = l1 + l2;
                return pi(w) * l1 / lam * (1.0 - std::exp(-lam * tau));
            },
            lo, hi, 1e-9);
        double exposure = detail::integrate(
            [&](double w) {
                double l1 = detail::sim_lambda1(Scenario::C1, 1, w);
                double l2 = detail::sim_lambda2(Scenario::C1, 1, w);
                double lam = l1 + l2;
                return pi(w) * (1.0 - std::exp(-lam * tau)) / lam;
            },
            lo, hi, 1e-9);
        return events / exposure;
    };

    double rate_hi = ev_hi / ex_hi, rate_lo = ev_lo / ex_lo;
    CHECK_THAT(rate_hi / stratum_truth(0.5, 1.0), WithinAbs(1.0, 0.05));
    CHECK_THAT(rate_lo / stratum_truth(0.0, 0.5), WithinAbs(1.0, 0.05));
    CHECK(rate_hi / rate_lo < 0.1);
}

TEST_CASE("generation is deterministic and validates its inputs") {
    auto a = generate(Scenario::A1, 500, 99);
    auto b = generate(Scenario::A1, 500, 99);
    CHECK(a.time == b.time);
    CHECK(a.event == b.event);
    CHECK(a.treatment == b.treatment);
    CHECK(a.covariates[0] == b.covariates[0]);
    auto c = generate(Scenario::A1, 500, 100);
    CHECK(a.time != c.time);

    CHECK_THROWS_AS(generate(Scenario::A1, 0, 1), config_error);
    CHECK_THROWS_AS(parse_scenario("Q9"), config_error);
    CHECK_THROWS_WITH(parse_scenario("Q9"), ContainsSubstring("A1"));
    CHECK(parse_scenario("C2") == Scenario::C2);
    CHECK_THROWS_AS(parse_estimator("ipw"), config_error);
    CHECK(parse_estimator("tmle") == EstimatorKind::tmle);
    CHECK(scenario_name(Scenario::B2) == "B2");
}

TEST_CASE("studies are reproducible") {
    std::vector<EstimatorKind> kinds = {EstimatorKind::plugin,
                                        EstimatorKind::onestep};
    auto r1 = run_study(Scenario::A1, 60, 3, {1.0, 5.0}, kinds, 11);
    auto r2 = run_study(Scenario::A1, 60, 3, {1.0, 5.0}, kinds, 11);
    REQUIRE(r1.cells.size() == r2.cells.size());
    REQUIRE(r1.cells.size() == 4);
    for (std::size_t c = 0; c < r1.cells.size(); ++c) {
        CHECK(r1.cells[c].mean == r2.cells[c].mean);
        CHECK(r1.cells[c].sd == r2.cells[c].sd);
        CHECK(r1.cells[c].used == r2.cells[c].used);
        REQUIRE(r1.cells[c].mean_see.has_value());
        CHECK(*r1.cells[c].mean_see == *r2.cells[c].mean_see);
    }
    CHECK(r1.failures == r2.failures);

    // a worker split must not change the aggregate
    auto r3 = run_study(Scenario::A1, 60, 3, {1.0, 5.0}, kinds, 11, 0, 3);
    for (std::size_t c = 0; c < r1.cells.size(); ++c) {
        CHECK(r1.cells[c].mean == r3.cells[c].mean);
        CHECK(r1.cells[c].sd == r3.cells[c].sd);
    }
}

TEST_CASE("excess replicate failures abort the study") {
    std::vector<EstimatorKind> kinds = {EstimatorKind::plugin};
    CHECK_THROWS_AS(run_study(Scenario::A1, 3, 30, {1.0}, kinds, 7), error);
    CHECK_THROWS_WITH(run_study(Scenario::A1, 3, 30, {1.0}, kinds, 7),
                      ContainsSubstring("replicates failed"));
    CHECK_THROWS_AS(
        run_study(Scenario::A1, 100, 0, {1.0}, kinds, 7), config_error);
    CHECK_THROWS_AS(
        run_study(Scenario::A1, 100, 2, {}, kinds, 7), config_error);
    CHECK_THROWS_AS(run_study(Scenario::A1, 100, 2, {1.0}, {}, 7),
                    config_error);
}

TEST_CASE("study means land near the truth") {
    std::vector<EstimatorKind> kinds = {EstimatorKind::plugin,
                                        EstimatorKind::onestep};
    auto rep = run_study(Scenario::A1, 300, 40, {1.0, 5.0}, kinds, 2024);
    CHECK(rep.failures == 0);
    for (double t : {1.0, 5.0}) {
        double truth = true_effect(Scenario::A1, t);
        const auto& pi = find_cell(rep, EstimatorKind::plugin, "delta", t);
        const auto& os = find_cell(rep, EstimatorKind::onestep, "delta", t);
        CHECK(pi.used == 40);
        CHECK(os.used == 40);
        CHECK_THAT(pi.mean, WithinAbs(truth, 0.02));
        CHECK_THAT(os.mean, WithinAbs(truth, 0.02));
        CHECK(pi.true_value == truth);
        REQUIRE(os.coverage.has_value());
        CHECK(*os.coverage >= 0.8);
        CHECK(os.sd > 0.0);
        CHECK(os.sd < 0.2);
    }
}

TEST_CASE("tmle cells converge and track the one-step") {
    std::vector<EstimatorKind> kinds = {EstimatorKind::onestep,
                                        EstimatorKind::tmle};
    auto rep = run_study(Scenario::A1, 150, 15, {5.0}, kinds, 77);
    const auto& os = find_cell(rep, EstimatorKind::onestep, "delta", 5.0);
    const auto& tm = find_cell(rep, EstimatorKind::tmle, "delta", 5.0);
    CHECK(tm.used >= 14);
    CHECK(std::abs(tm.mean - os.mean) < 0.01);
    REQUIRE(tm.mean_see.has_value());
    CHECK(*tm.mean_see > 0.0);
}

TEST_CASE("plug-in intervals cover at the published rate") {
    for (auto sc : {Scenario::A1, Scenario::A2}) {
        auto rep = run_study(sc, 800, 1000, {4.0, 6.0}, {EstimatorKind::plugin},
                             606);
        for (double t : {4.0, 6.0}) {
            const auto& cell = find_cell(rep, EstimatorKind::plugin, "delta", t);
            REQUIRE(cell.coverage.has_value());
            INFO(scenario_name(sc) << " t=" << t << " coverage "
                                   << *cell.coverage);
            CHECK(*cell.coverage >= 0.93);
            CHECK(*cell.coverage <= 0.97);
        }
    }
}

TEST_CASE("bootstrap sees are plausible") {
    std::vector<EstimatorKind> kinds = {EstimatorKind::onestep};
    auto rep = run_study(Scenario::A1, 120, 8, {3.0}, kinds, 5150, 40);
    const auto& os = find_cell(rep, EstimatorKind::onestep, "delta", 3.0);
    REQUIRE(os.mean_see_boot.has_value());
    REQUIRE(os.mean_see.has_value());
    double ratio = *os.mean_see_boot / *os.mean_see;
    CHECK(ratio > 0.5);
    CHECK(ratio < 2.0);
    REQUIRE(os.coverage_boot.has_value());
}
