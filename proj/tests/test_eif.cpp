#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "sepfx/eif.hpp"
#include "sepfx/functionals.hpp"
#include "sepfx/rng.hpp"

using namespace sepfx;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

CoxFit truncate_baseline(CoxFit f, double cut) {
    std::vector<double> ts, inc;
    const auto& T = f.baseline.times();
    const auto& I = f.baseline.increments();
    for (std::size_t k = 0; k < T.size(); ++k)
        if (T[k] <= cut) {
            ts.push_back(T[k]);
            inc.push_back(I[k]);
        }
    f.baseline = StepFunction(ts, inc);
    return f;
}

}  // namespace

TEST_CASE("one-step direct effect matches the reference fit") {
    auto d = testutil::load_fixture();
    auto expect = testutil::load_json("expected_t1_n120.json");
    auto nuis = fit_nuisances(d);
    std::vector<double> times = {2.0, 4.0, 6.0};

    auto curve = one_step_direct(d, nuis, times);
    auto want = testutil::as_vec(expect["onestep_delta"]);
    auto want_se = testutil::as_vec(expect["onestep_see"]);
    for (std::size_t k = 0; k < times.size(); ++k) {
        CHECK_THAT(curve.values[k], WithinAbs(want[k], 1e-7));
        CHECK_THAT(curve.se[k], WithinAbs(want_se[k], 1e-7));
        double z = 1.959963984540054;
        CHECK_THAT(curve.lo[k], WithinAbs(curve.values[k] - z * curve.se[k], 1e-12));
        CHECK_THAT(curve.hi[k], WithinAbs(curve.values[k] + z * curve.se[k], 1e-12));
    }

    auto contribs = eif_contributions(d, nuis, 4.0, InfluenceTarget::direct_effect);
    REQUIRE(contribs.size() == d.size());
    auto phi5 = testutil::as_vec(expect["onestep_phi_t4_first5"]);
    for (std::size_t i = 0; i < phi5.size(); ++i)
        CHECK_THAT(contribs[i].value, WithinAbs(phi5[i], 1e-6));

    double mean = 0.0;
    for (const auto& c : contribs) mean += c.value;
    mean /= static_cast<double>(contribs.size());
    CHECK_THAT(mean, WithinAbs(curve.values[1], 1e-14));
    CHECK_THAT(std::sqrt(eif_variance(contribs)), WithinAbs(curve.se[1], 1e-14));

    // the single-record entry point walks the same path
    auto c0 = eif_direct_contribution(4.0, d.record(0), nuis);
    CHECK_THAT(c0.value, WithinAbs(contribs[0].value, 1e-14));
}

TEST_CASE("one-step indirect and total effects match the reference fit") {
    auto d = testutil::load_fixture();
    auto expect = testutil::load_json("expected_t1_n120.json");
    auto nuis = fit_nuisances(d);

    auto ind = one_step_indirect(d, nuis, {4.0});
    CHECK_THAT(ind.values[0], WithinAbs(expect["indirect_t4"].get<double>(), 1e-7));
    CHECK_THAT(ind.se[0], WithinAbs(expect["indirect_see_t4"].get<double>(), 1e-7));

    auto tot = one_step_total(d, nuis, {4.0});
    CHECK_THAT(tot.values[0], WithinAbs(expect["total_t4"].get<double>(), 1e-7));
    CHECK_THAT(tot.se[0], WithinAbs(expect["total_see_t4"].get<double>(), 1e-7));

    auto c0 = eif_indirect_contribution(4.0, d.record(0), nuis);
    auto batch = eif_contributions(d, nuis, 4.0, InfluenceTarget::indirect_effect);
    CHECK_THAT(c0.value, WithinAbs(batch[0].value, 1e-14));
}

TEST_CASE("direct and indirect contributions add up to the total effect") {
    auto d = testutil::load_fixture();
    auto nuis = fit_nuisances(d);
    for (double t : {2.0, 4.0, 6.0}) {
        auto dir = eif_contributions(d, nuis, t, InfluenceTarget::direct_effect);
        auto ind = eif_contributions(d, nuis, t, InfluenceTarget::indirect_effect);
        auto tot = eif_contributions(d, nuis, t, InfluenceTarget::total_effect);
        for (std::size_t i = 0; i < d.size(); ++i) {
            REQUIRE(std::isfinite(dir[i].value));
            REQUIRE(std::abs(dir[i].value + ind[i].value - tot[i].value) < 1e-12);
            REQUIRE(dir[i].components.cond >= -1.0);
            REQUIRE(dir[i].components.cond <= 1.0);
            REQUIRE(std::abs(dir[i].value - dir[i].components.mart1 -
                             dir[i].components.mart2 - dir[i].components.cond) <
                    1e-15);
        }
    }
}

TEST_CASE("influence variance is the sample variance over n") {
    Rng rng(91, 3);
    std::vector<EifContribution> c(37);
    for (auto& e : c) e.value = rng.uniform() * 4.0 - 2.0;
    double mean = 0.0;
    for (const auto& e : c) mean += e.value;
    mean /= 37.0;
    double ssq = 0.0;
    for (const auto& e : c) ssq += (e.value - mean) * (e.value - mean);
    CHECK_THAT(eif_variance(c), WithinAbs(ssq / 36.0 / 37.0, 1e-14));

    std::vector<EifContribution> same(9);
    for (auto& e : same) e.value = 0.73;
    CHECK(eif_variance(same) == 0.0);

    std::vector<EifContribution> one(1);
    CHECK_THROWS_AS(eif_variance(one), error);

    // centering: contributions recentered at their mean sum to zero
    auto d = testutil::load_fixture();
    auto nuis = fit_nuisances(d);
    auto contribs = eif_contributions(d, nuis, 4.0, InfluenceTarget::direct_effect);
    double m = 0.0;
    for (const auto& e : contribs) m += e.value;
    m /= static_cast<double>(contribs.size());
    double resid = 0.0;
    for (const auto& e : contribs) resid += e.value - m;
    CHECK(std::abs(resid / static_cast<double>(contribs.size())) < 1e-12);
}

TEST_CASE("a subject censored before the first jump keeps only the conditional term") {
    auto d = testutil::load_fixture();
    auto nuis = fit_nuisances(d);
    auto grid = make_merged_grid(nuis.cause1, nuis.cause2);
    ObservedRecord rec;
    rec.time = grid.times.front() / 2.0;
    rec.event = 0;
    rec.treatment = 1;
    rec.covariates = {0.4};

    auto c = eif_direct_contribution(4.0, rec, nuis);
    CHECK(c.components.mart1 == 0.0);
    CHECK(c.components.mart2 == 0.0);
    CHECK(c.value == c.components.cond);

    auto hi = p1_conditional(nuis, rec.covariates, 1, 1, {4.0});
    auto lo = p1_conditional(nuis, rec.covariates, 0, 1, {4.0});
    CHECK_THAT(c.components.cond, WithinAbs(hi.values[0] - lo.values[0], 1e-14));
}

TEST_CASE("contributions ignore baseline jumps beyond max(t, observed time)") {
    auto d = testutil::load_fixture();
    auto nuis = fit_nuisances(d);
    const double t = 4.0;
    for (std::size_t i = 0; i < d.size(); i += 7) {
        ObservedRecord rec = d.record(i);
        double cut = std::max(t, rec.time);
        NuisanceSet trunc = nuis;
        trunc.cause1 = truncate_baseline(nuis.cause1, cut);
        trunc.cause2 = truncate_baseline(nuis.cause2, cut);
        if (trunc.censoring)
            trunc.censoring = truncate_baseline(*nuis.censoring, cut);
        for (auto kind : {InfluenceTarget::direct_effect,
                          InfluenceTarget::indirect_effect,
                          InfluenceTarget::total_effect}) {
            auto full = eif_contribution(t, rec, nuis, kind);
            auto cutc = eif_contribution(t, rec, trunc, kind);
            REQUIRE_THAT(cutc.value, WithinAbs(full.value, 1e-14));
        }
    }
}

TEST_CASE("martingale kernel form reproduces the pre-rewrite influence function") {
    // Uncensored, no covariates, treatment probability known to be 1/2.  Under
    // the product-limit pairing with post-jump survival denominators, the
    // kernel form and the raw counting-process form are the same numbers
    // subject by subject.
    Rng rng(42, 7);
    Dataset d;
    for (int i = 0; i < 80; ++i) {
        ObservedRecord r;
        r.treatment = rng.bernoulli(0.5) ? 1 : 0;
        double r1 = r.treatment ? 0.08 : 0.12;
        double r2 = r.treatment ? 0.10 : 0.07;
        r.time = rng.exponential(r1 + r2);
        r.event = rng.bernoulli(r1 / (r1 + r2)) ? 1 : 2;
        d.push_back(r);
    }
    NuisanceOptions opt;
    opt.known_propensity = 0.5;
    auto nuis = fit_nuisances(d, opt);
    REQUIRE(!nuis.censoring);

    auto grid = make_merged_grid(nuis.cause1, nuis.cause2);
    const std::size_t J = grid.size();
    const double t = 5.0;
    std::size_t jt = grid.index_at(t);
    REQUIRE(jt != MergedGrid::npos);

    SubjectCurves own;
    std::vector<double> z(J), p01(J), dL1_0(J), dL2_1(J);
    for (std::size_t i = 0; i < d.size(); ++i) {
        ObservedRecord rec = d.record(i);
        fill_curves(grid, arm_multiplier(nuis.cause1, rec, -1),
                    arm_multiplier(nuis.cause2, rec, -1),
                    Pairing::product_limit, own);
        double e10 = arm_multiplier(nuis.cause1, rec, 0);
        double e21 = arm_multiplier(nuis.cause2, rec, 1);
        double l2o = 0.0, l21 = 0.0, acc = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            dL1_0[j] = e10 * grid.base1[j];
            dL2_1[j] = e21 * grid.base2[j];
            l2o += own.dL2[j];
            l21 += dL2_1[j];
            z[j] = std::exp(l2o - l21);
            acc += z[j] * own.Sm[j] * dL1_0[j];
            p01[j] = acc;
        }
        double f1t = own.F1[jt], p01t = p01[jt];
        bool arm1 = rec.treatment == 1;
        double g = 2.0;  // 1/pi = 1/(1-pi) = 2

        double kernel_form = 0.0, raw_form = 0.0;
        double mart2_shared = 0.0;
        for (std::size_t j = 0; j <= jt; ++j) {
            double s = grid.times[j];
            if (s > rec.time) break;
            double dn1 = (s == rec.time && rec.event == 1) ? 1.0 : 0.0;
            double dn2 = (s == rec.time && rec.event == 2) ? 1.0 : 0.0;
            double dm1 = dn1 - own.dL1[j];
            double dm2 = dn2 - own.dL2[j];
            double f1d = f1t - own.F1[j];
            double pbar = p01t - p01[j];
            double S = own.S[j];
            if (arm1) {
                kernel_form += g * (1.0 - f1d / S) * dm1;
                kernel_form += g * ((pbar - f1d) / S) * dm2;
            } else {
                kernel_form += -g * (z[j] - pbar / S) * dm1;
            }
            mart2_shared += (pbar / S) * dm2;
        }
        if (arm1) {
            double n1t = (rec.time <= t && rec.event == 1) ? 1.0 : 0.0;
            raw_form = g * (n1t - f1t) + g * mart2_shared;
        } else {
            double zdn1 = 0.0;
            if (rec.time <= t && rec.event == 1) {
                std::size_t col = grid.index_at(rec.time);
                REQUIRE(grid.times[col] == rec.time);
                zdn1 = z[col];
            }
            raw_form = -g * (zdn1 - p01t) - g * mart2_shared;
        }
        REQUIRE_THAT(kernel_form, WithinAbs(raw_form, 1e-10));
    }

    // the one-step estimate is the plug-in estimate plus the mean augmentation
    auto contribs = eif_contributions(d, nuis, t, InfluenceTarget::direct_effect);
    double cond_mean = 0.0;
    for (const auto& c : contribs) cond_mean += c.components.cond;
    cond_mean /= static_cast<double>(contribs.size());
    EffectSpec spec;
    auto plug = plug_in_effect(nuis, d, spec, {t});
    CHECK_THAT(cond_mean, WithinAbs(plug[0], 1e-12));
}

TEST_CASE("positivity violations name the offending time") {
    auto d = testutil::load_fixture();
    auto nuis = fit_nuisances(d);
    ObservedRecord rec;
    rec.time = 2.0;
    rec.event = 0;
    rec.treatment = 1;
    rec.covariates = {0.5};

    NuisanceSet bad = nuis;
    bad.censoring->baseline = StepFunction({1.0}, {60.0});
    CHECK_THROWS_AS(eif_direct_contribution(4.0, rec, bad), positivity_error);
    CHECK_THROWS_WITH(eif_direct_contribution(4.0, rec, bad),
                      ContainsSubstring("censoring survival below 1e-10 at s="));

    NuisanceSet bad2 = nuis;
    bad2.cause1.baseline = StepFunction({0.5, 0.9}, {200.0, 200.0});
    CHECK_THROWS_AS(eif_direct_contribution(4.0, rec, bad2), positivity_error);
    CHECK_THROWS_WITH(eif_direct_contribution(4.0, rec, bad2),
                      ContainsSubstring("event-free survival below 1e-10 at s="));
}

TEST_CASE("contribution dump round-trips through CSV") {
    auto d = testutil::load_fixture();
    auto nuis = fit_nuisances(d);
    auto contribs = eif_contributions(d, nuis, 4.0, InfluenceTarget::direct_effect);
    std::string path = "eif_dump_tmp.csv";
    dump_contributions_csv(path, contribs);

    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "subject,value,mart1,mart2,cond");
    std::size_t rows = 0;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            std::istringstream ss(line);
            std::string field;
            std::getline(ss, field, ',');
            CHECK(field == "0");
            std::getline(ss, field, ',');
            CHECK(std::stod(field) == contribs[0].value);
            std::getline(ss, field, ',');
            CHECK(std::stod(field) == contribs[0].components.mart1);
            first = false;
        }
        ++rows;
    }
    CHECK(rows == contribs.size());
    std::remove(path.c_str());
}

TEST_CASE("treatment relabeling flips the one-step total effect") {
    auto d = testutil::load_fixture();
    auto nuis = fit_nuisances(d);
    auto flipped = d.relabeled();
    auto nuis_f = fit_nuisances(flipped);
    std::vector<double> times = {2.0, 4.0, 6.0};

    auto tot = one_step_total(d, nuis, times);
    auto tot_f = one_step_total(flipped, nuis_f, times);
    for (std::size_t k = 0; k < times.size(); ++k) {
        CHECK_THAT(tot_f.values[k], WithinAbs(-tot.values[k], 1e-7));
        CHECK_THAT(tot_f.se[k], WithinAbs(tot.se[k], 1e-7));
    }

    // the relabeled fit reproduces the opposite-arm cumulative incidence
    auto orig = plug_in_p1(nuis, d, 0, 0, {4.0});
    auto flip = plug_in_p1(nuis_f, flipped, 1, 1, {4.0});
    CHECK_THAT(flip[0], WithinAbs(orig[0], 1e-7));
}
