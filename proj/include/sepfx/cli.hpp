#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "csv.hpp"
#include "eif.hpp"
#include "functionals.hpp"
#include "inference.hpp"
#include "nuisance.hpp"
#include "report.hpp"
#include "simulate.hpp"
#include "tmle.hpp"
#include "types.hpp"

namespace sepfx::cli {

struct RunConfig {
    // shared
    std::string out_dir = ".";
    std::uint32_t seed = 42;
    int threads = 1;
    std::size_t bootstrap_B = 0;
    double ci_level = 0.95;
    std::vector<double> times;
    std::vector<std::string> estimators = {"plugin", "onestep"};
    // estimate / cif input
    std::string input;
    std::string time_col = "time";
    std::string event_col = "event";
    std::string treat_col = "treatment";
    std::vector<std::string> covars;
    std::string effect = "direct1";
    std::string propensity = "fit";
    std::vector<std::string> censor_covars;
    // simulate
    std::string scenario;
    std::size_t n = 400;
    std::size_t replicates = 1000;
    std::string out_json;
};

namespace detail {

inline void validate_times(const std::vector<double>& ts) {
    if (ts.empty()) throw config_error("no time points given");
    for (std::size_t k = 0; k < ts.size(); ++k) {
        if (!(ts[k] >= 0.0))
            throw config_error("time points must be nonnegative, got " +
                               std::to_string(ts[k]));
        if (k > 0 && ts[k] <= ts[k - 1])
            throw config_error("time grid must be strictly increasing");
    }
}

inline std::vector<EstimatorKind> parse_estimators(
    const std::vector<std::string>& names) {
    if (names.empty()) throw config_error("estimator set must not be empty");
    std::vector<EstimatorKind> out;
    for (const auto& s : names) {
        EstimatorKind k = parse_estimator(s);
        if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
    }
    return out;
}

// direct1/indirect0 are the natively estimated pair; direct0/indirect1 are
// obtained by relabeling the arms once and negating the results.
inline bool effect_flip(const std::string& e) {
    if (e == "direct1" || e == "indirect0") return false;
    if (e == "direct0" || e == "indirect1") return true;
    throw config_error("unknown effect '" + e +
                       "' (valid: direct0, direct1, indirect0, indirect1)");
}

inline std::optional<double> parse_propensity_flag(const std::string& s) {
    if (s == "fit") return std::nullopt;
    const std::string prefix = "known:";
    if (s.rfind(prefix, 0) == 0) {
        std::size_t pos = 0;
        double p = 0.0;
        std::string rest = s.substr(prefix.size());
        try {
            p = std::stod(rest, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != rest.size() || rest.empty())
            throw config_error("cannot parse propensity '" + s + "'");
        return p;
    }
    throw config_error("propensity must be 'fit' or 'known:<p>', got '" + s +
                       "'");
}

inline void validate_treatment(const Dataset& d) {
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d.treatment[i] != 0 && d.treatment[i] != 1)
            throw data_error("treatment must be 0 or 1, got " +
                             std::to_string(d.treatment[i]) + " for subject " +
                             std::to_string(i + 1));
}

inline Dataset relabel_arms(Dataset d) {
    for (auto& a : d.treatment) a = 1 - a;
    return d;
}

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write '" + path + "'");
    out << content;
    if (!out) throw data_error("short write to '" + path + "'");
}

inline std::string json_text(const nlohmann::ordered_json& j) {
    return j.dump(2) + "\n";
}

// Coefficient table for one fitted Cox model; a model with no events has no
// curvature, so it gets point values only.
inline nlohmann::ordered_json cox_table(const CoxFit& fit,
                                        const std::vector<std::string>& terms,
                                        double level) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    bool have_info = !fit.baseline.times().empty();
    Eigen::MatrixXd cov;
    if (have_info) cov = fit.information.inverse();
    for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
        nlohmann::ordered_json row;
        row["term"] = terms[static_cast<std::size_t>(j)];
        row["coef"] = fit.beta[j];
        row["hr"] = std::exp(fit.beta[j]);
        if (have_info && cov(j, j) > 0.0 && std::isfinite(cov(j, j))) {
            double se = std::sqrt(cov(j, j));
            row["se"] = se;
            Interval ci = confidence_interval(fit.beta[j], se, level);
            row["hr_ci"] =
                interval_to_json({std::exp(ci.lo), std::exp(ci.hi)});
        }
        rows.push_back(row);
    }
    return rows;
}

inline void flip_sign(std::vector<EffectEstimate>& rows) {
    for (auto& e : rows) {
        e.estimate = -e.estimate;
        if (e.ci) e.ci = Interval{-e.ci->hi, -e.ci->lo};
        if (e.ci_percentile)
            e.ci_percentile =
                Interval{-e.ci_percentile->hi, -e.ci_percentile->lo};
    }
}

// Default cif grid: the fitted models' jump times, thinned to at most 100
// points, starting at 0.
inline std::vector<double> default_grid(const NuisanceSet& nuis) {
    MergedGrid g = make_merged_grid(nuis.cause1, nuis.cause2);
    std::vector<double> ts;
    if (g.times.empty()) return {0.0};
    std::size_t stride = (g.times.size() + 99) / 100;
    for (std::size_t i = 0; i < g.times.size(); i += stride)
        ts.push_back(g.times[i]);
    if (ts.back() != g.times.back()) ts.push_back(g.times.back());
    if (ts.front() > 0.0) ts.insert(ts.begin(), 0.0);
    return ts;
}

}  // namespace detail

inline int cmd_estimate(const RunConfig& cfg) {
    detail::validate_times(cfg.times);
    auto kinds = detail::parse_estimators(cfg.estimators);
    bool flip = detail::effect_flip(cfg.effect);
    auto known_p = detail::parse_propensity_flag(cfg.propensity);

    Dataset d = load_csv(cfg.input, cfg.time_col, cfg.event_col, cfg.treat_col,
                         cfg.covars);
    if (d.size() == 0)
        throw data_error("'" + cfg.input + "' has no data rows");
    detail::validate_treatment(d);

    NuisanceOptions base_opt;
    base_opt.known_propensity = known_p;
    base_opt.censor_covars = cfg.censor_covars;

    std::vector<std::string> warnings;
    NuisanceSet nuis0 = fit_nuisances(d, base_opt, &warnings);
    for (const auto& w : warnings) std::cerr << "sepfx: warning: " << w << "\n";

    NuisanceOptions opt = base_opt;
    if (flip && known_p) opt.known_propensity = 1.0 - *known_p;
    Dataset dw = flip ? detail::relabel_arms(d) : d;
    NuisanceSet nuisw = flip ? fit_nuisances(dw, opt, nullptr) : nuis0;

    const std::string dname = flip ? "direct0" : "direct1";
    const std::string iname = flip ? "indirect1" : "indirect0";
    const auto& times = cfg.times;
    const std::size_t nt = times.size();

    std::vector<std::vector<EffectEstimate>> direct_rows(kinds.size()),
        indirect_rows(kinds.size());
    nlohmann::ordered_json tmle_fits = nlohmann::ordered_json::array();

    for (std::size_t q = 0; q < kinds.size(); ++q) {
        auto& dr = direct_rows[q];
        auto& ir = indirect_rows[q];
        switch (kinds[q]) {
            case EstimatorKind::plugin: {
                auto see = plug_in_with_see(nuisw, dw, times);
                dr = see.delta;
                for (auto& e : dr)
                    e.ci = confidence_interval(e.estimate, *e.se_analytic,
                                               cfg.ci_level);
                auto iv = plug_in_effect(nuisw, dw,
                                         {EffectKind::indirect, 0}, times);
                ir.resize(nt);
                for (std::size_t k = 0; k < nt; ++k) {
                    ir[k].time = times[k];
                    ir[k].estimate = iv[k];
                }
                break;
            }
            case EstimatorKind::onestep: {
                auto cd = one_step_direct(dw, nuisw, times, cfg.ci_level);
                auto ci = one_step_indirect(dw, nuisw, times, cfg.ci_level);
                dr.resize(nt);
                ir.resize(nt);
                for (std::size_t k = 0; k < nt; ++k) {
                    dr[k].time = times[k];
                    dr[k].estimate = cd.values[k];
                    dr[k].se_eif = cd.se[k];
                    dr[k].ci = Interval{cd.lo[k], cd.hi[k]};
                    ir[k].time = times[k];
                    ir[k].estimate = ci.values[k];
                    ir[k].se_eif = ci.se[k];
                    ir[k].ci = Interval{ci.lo[k], ci.hi[k]};
                }
                break;
            }
            case EstimatorKind::tmle: {
                for (double t : times) {
                    try {
                        auto res = tmle_estimate(dw, nuisw, t);
                        EffectEstimate e;
                        e.time = t;
                        e.estimate = res.estimate;
                        auto contrib = eif_contributions(
                            dw, nuisw, t, InfluenceTarget::direct_effect);
                        e.se_eif = std::sqrt(eif_variance(contrib));
                        e.ci = confidence_interval(e.estimate, *e.se_eif,
                                                   cfg.ci_level);
                        dr.push_back(e);
                        tmle_fits.push_back({{"time", t},
                                             {"converged", res.converged},
                                             {"iterations", res.iterations},
                                             {"mean_score0", res.mean_score0},
                                             {"gammas", res.gammas}});
                    } catch (const fit_error& ex) {
                        tmle_fits.push_back({{"time", t}, {"error", ex.what()}});
                    } catch (const positivity_error& ex) {
                        tmle_fits.push_back({{"time", t}, {"error", ex.what()}});
                    }
                }
                break;
            }
        }
    }

    nlohmann::ordered_json boot_info;
    if (cfg.bootstrap_B > 0) {
        for (std::size_t q = 0; q < kinds.size(); ++q) {
            EstimatorKind kind = kinds[q];
            bool with_indirect = kind != EstimatorKind::tmle;
            auto cb = [kind, times, opt,
                       with_indirect](const Dataset& rd) {
                NuisanceSet nu = fit_nuisances(rd, opt, nullptr);
                std::vector<double> out;
                if (kind == EstimatorKind::plugin) {
                    out = plug_in_effect(nu, rd, {EffectKind::direct, 1},
                                         times);
                    auto iv = plug_in_effect(nu, rd,
                                             {EffectKind::indirect, 0}, times);
                    out.insert(out.end(), iv.begin(), iv.end());
                } else if (kind == EstimatorKind::onestep) {
                    out = one_step_direct(rd, nu, times).values;
                    auto iv = one_step_indirect(rd, nu, times).values;
                    out.insert(out.end(), iv.begin(), iv.end());
                } else {
                    for (double t : times)
                        out.push_back(tmle_estimate(rd, nu, t).estimate);
                }
                return out;
            };
            std::vector<double> tgrid = times;
            if (with_indirect)
                tgrid.insert(tgrid.end(), times.begin(), times.end());
            auto br = bootstrap(dw, cb, tgrid, cfg.bootstrap_B, cfg.seed,
                                cfg.ci_level, cfg.threads);
            for (std::size_t k = 0; k < direct_rows[q].size(); ++k) {
                // tmle rows can be sparse after failed horizons; match by time
                std::size_t g = 0;
                while (g < nt && times[g] != direct_rows[q][k].time) ++g;
                direct_rows[q][k].se_bootstrap = br.se[g];
                direct_rows[q][k].ci_percentile = br.ci_percentile[g];
                if (!direct_rows[q][k].ci)
                    direct_rows[q][k].ci = br.ci_normal[g];
            }
            for (std::size_t k = 0; k < indirect_rows[q].size(); ++k) {
                indirect_rows[q][k].se_bootstrap = br.se[nt + k];
                indirect_rows[q][k].ci_percentile = br.ci_percentile[nt + k];
                if (!indirect_rows[q][k].ci)
                    indirect_rows[q][k].ci = br.ci_normal[nt + k];
            }
            boot_info[estimator_name(kind)] = {{"used", br.used},
                                               {"dropped", br.dropped}};
        }
    }

    if (flip) {
        for (auto& rows : direct_rows) detail::flip_sign(rows);
        for (auto& rows : indirect_rows) detail::flip_sign(rows);
    }

    std::vector<std::string> cause_terms = {"treatment"};
    cause_terms.insert(cause_terms.end(), d.covariate_names.begin(),
                       d.covariate_names.end());
    nlohmann::ordered_json hrs;
    hrs["cause1"] = detail::cox_table(nuis0.cause1, cause_terms, cfg.ci_level);
    hrs["cause2"] = detail::cox_table(nuis0.cause2, cause_terms, cfg.ci_level);
    if (nuis0.censoring) {
        std::vector<std::string> cterms = {"treatment"};
        cterms.insert(cterms.end(), cfg.censor_covars.begin(),
                      cfg.censor_covars.end());
        hrs["censoring"] = detail::cox_table(*nuis0.censoring, cterms,
                                             cfg.ci_level);
    }

    nlohmann::ordered_json conf;
    conf["input"] = cfg.input;
    conf["time_col"] = cfg.time_col;
    conf["event_col"] = cfg.event_col;
    conf["treat_col"] = cfg.treat_col;
    conf["covars"] = d.covariate_names;
    conf["times"] = cfg.times;
    conf["estimators"] = cfg.estimators;
    conf["effect"] = cfg.effect;
    conf["propensity"] = cfg.propensity;
    conf["censor_covars"] = cfg.censor_covars;
    conf["bootstrap_B"] = cfg.bootstrap_B;
    conf["ci_level"] = cfg.ci_level;
    conf["seed"] = cfg.seed;
    conf["threads"] = cfg.threads;
    conf["out_dir"] = cfg.out_dir;

    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["manifest"] = make_manifest("estimate", conf, hash_file(cfg.input));
    j["n"] = d.size();
    j["hazard_ratios"] = hrs;
    nlohmann::ordered_json eff;
    for (std::size_t q = 0; q < kinds.size(); ++q) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& e : direct_rows[q]) arr.push_back(effect_to_json(e));
        eff[dname][estimator_name(kinds[q])] = arr;
    }
    for (std::size_t q = 0; q < kinds.size(); ++q) {
        if (kinds[q] == EstimatorKind::tmle) continue;
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& e : indirect_rows[q]) arr.push_back(effect_to_json(e));
        eff[iname][estimator_name(kinds[q])] = arr;
    }
    j["effects"] = eff;
    if (std::find(kinds.begin(), kinds.end(), EstimatorKind::tmle) !=
        kinds.end())
        j["tmle"] = {{"effect", dname}, {"fits", tmle_fits}};
    if (cfg.bootstrap_B > 0)
        j["bootstrap"] = {{"B", cfg.bootstrap_B}, {"runs", boot_info}};

    std::filesystem::create_directories(cfg.out_dir);
    std::string jpath = cfg.out_dir + "/results.json";
    detail::write_text(jpath, detail::json_text(j));

    // plot-ready curves: per-arm cause-1/2 incidence plus the effect rows
    std::vector<std::vector<double>> cifs = {
        plug_in_p1(nuis0, d, 0, 0, times), plug_in_p1(nuis0, d, 1, 1, times),
        plug_in_p2(nuis0, d, 0, 0, times), plug_in_p2(nuis0, d, 1, 1, times)};
    std::string csv = "time,cif1_arm0,cif1_arm1,cif2_arm0,cif2_arm1";
    for (std::size_t q = 0; q < kinds.size(); ++q) {
        std::string base = estimator_name(kinds[q]);
        csv += "," + base + "_" + dname + "," + base + "_" + dname + "_lo," +
               base + "_" + dname + "_hi";
        if (kinds[q] != EstimatorKind::tmle)
            csv += "," + base + "_" + iname + "," + base + "_" + iname +
                   "_lo," + base + "_" + iname + "_hi";
    }
    csv += "\n";
    for (std::size_t k = 0; k < nt; ++k) {
        csv += sepfx::detail::fmt17(times[k]);
        csv += "," + sepfx::detail::fmt17(cifs[0][k]) + "," +
               sepfx::detail::fmt17(cifs[1][k]) + "," +
               sepfx::detail::fmt17(cifs[2][k]) + "," +
               sepfx::detail::fmt17(cifs[3][k]);
        auto emit = [&](const std::vector<EffectEstimate>& rows) {
            const EffectEstimate* e = nullptr;
            for (const auto& r : rows)
                if (r.time == times[k]) e = &r;
            if (!e) {
                csv += ",,,";
                return;
            }
            csv += "," + sepfx::detail::fmt17(e->estimate);
            if (e->ci)
                csv += "," + sepfx::detail::fmt17(e->ci->lo) + "," +
                       sepfx::detail::fmt17(e->ci->hi);
            else
                csv += ",,";
        };
        for (std::size_t q = 0; q < kinds.size(); ++q) {
            emit(direct_rows[q]);
            if (kinds[q] != EstimatorKind::tmle) emit(indirect_rows[q]);
        }
        csv += "\n";
    }
    std::string cpath = cfg.out_dir + "/curves.csv";
    detail::write_text(cpath, csv);
    std::cout << "wrote " << jpath << " and " << cpath << "\n";
    return 0;
}

inline int cmd_simulate(const RunConfig& cfg) {
    Scenario sc = parse_scenario(cfg.scenario);
    auto kinds = detail::parse_estimators(cfg.estimators);
    auto rep = run_study(sc, cfg.n, cfg.replicates, cfg.times, kinds, cfg.seed,
                         cfg.bootstrap_B, cfg.threads);

    nlohmann::ordered_json conf;
    conf["scenario"] = cfg.scenario;
    conf["n"] = cfg.n;
    conf["replicates"] = cfg.replicates;
    conf["times"] = cfg.times;
    conf["estimators"] = cfg.estimators;
    conf["seed"] = cfg.seed;
    conf["bootstrap_B"] = cfg.bootstrap_B;
    conf["threads"] = cfg.threads;

    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["manifest"] = make_manifest("simulate", conf, hash_bytes(rep.scenario));
    nlohmann::ordered_json body = study_to_json(rep);
    for (const auto& [key, value] : body.items())
        if (key != "schema_version") j[key] = value;

    std::filesystem::create_directories(cfg.out_dir);
    std::string jpath = cfg.out_json.empty() ? cfg.out_dir + "/report.json"
                                             : cfg.out_json;
    auto parent = std::filesystem::path(jpath).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::string mpath = jpath;
    if (mpath.size() > 5 && mpath.substr(mpath.size() - 5) == ".json")
        mpath = mpath.substr(0, mpath.size() - 5) + ".md";
    else
        mpath += ".md";
    detail::write_text(jpath, detail::json_text(j));
    detail::write_text(mpath, study_to_markdown(rep));
    std::cout << "wrote " << jpath << " and " << mpath << "\n";
    return 0;
}

inline int cmd_cif(const RunConfig& cfg) {
    if (!cfg.times.empty()) detail::validate_times(cfg.times);
    Dataset d = load_csv(cfg.input, cfg.time_col, cfg.event_col, cfg.treat_col,
                         cfg.covars);
    if (d.size() == 0)
        throw data_error("'" + cfg.input + "' has no data rows");
    detail::validate_treatment(d);

    NuisanceOptions opt;
    opt.censor_covars = cfg.censor_covars;
    std::vector<std::string> warnings;
    NuisanceSet nuis = fit_nuisances(d, opt, &warnings);
    for (const auto& w : warnings) std::cerr << "sepfx: warning: " << w << "\n";

    std::vector<double> grid =
        cfg.times.empty() ? detail::default_grid(nuis) : cfg.times;
    auto curves = [&](const NuisanceSet& nu, const Dataset& dd) {
        std::vector<std::vector<double>> c;
        c.push_back(plug_in_p1(nu, dd, 0, 0, grid));
        c.push_back(plug_in_p1(nu, dd, 1, 1, grid));
        c.push_back(plug_in_p2(nu, dd, 0, 0, grid));
        c.push_back(plug_in_p2(nu, dd, 1, 1, grid));
        return c;
    };
    auto point = curves(nuis, d);

    std::optional<BootstrapResult> bands;
    if (cfg.bootstrap_B > 0) {
        auto cb = [&grid, opt](const Dataset& rd) {
            NuisanceSet nu = fit_nuisances(rd, opt, nullptr);
            std::vector<double> out;
            for (int cause : {1, 2})
                for (int a : {0, 1}) {
                    auto v = cause == 1 ? plug_in_p1(nu, rd, a, a, grid)
                                        : plug_in_p2(nu, rd, a, a, grid);
                    out.insert(out.end(), v.begin(), v.end());
                }
            return out;
        };
        std::vector<double> tgrid;
        for (int rep = 0; rep < 4; ++rep)
            tgrid.insert(tgrid.end(), grid.begin(), grid.end());
        bands = bootstrap(d, cb, tgrid, cfg.bootstrap_B, cfg.seed,
                          cfg.ci_level, cfg.threads);
    }

    const char* names[4] = {"cif1_arm0", "cif1_arm1", "cif2_arm0",
                            "cif2_arm1"};
    std::string csv = "time";
    for (int c = 0; c < 4; ++c) {
        csv += std::string(",") + names[c];
        if (bands) csv += std::string(",") + names[c] + "_lo," + names[c] + "_hi";
    }
    csv += "\n";
    for (std::size_t k = 0; k < grid.size(); ++k) {
        csv += sepfx::detail::fmt17(grid[k]);
        for (int c = 0; c < 4; ++c) {
            csv += "," + sepfx::detail::fmt17(point[static_cast<std::size_t>(c)][k]);
            if (bands) {
                const auto& iv =
                    bands->ci_normal[static_cast<std::size_t>(c) * grid.size() + k];
                csv += "," + sepfx::detail::fmt17(iv.lo) + "," +
                       sepfx::detail::fmt17(iv.hi);
            }
        }
        csv += "\n";
    }

    nlohmann::ordered_json conf;
    conf["input"] = cfg.input;
    conf["time_col"] = cfg.time_col;
    conf["event_col"] = cfg.event_col;
    conf["treat_col"] = cfg.treat_col;
    conf["covars"] = d.covariate_names;
    conf["times"] = cfg.times;
    conf["censor_covars"] = cfg.censor_covars;
    conf["bootstrap_B"] = cfg.bootstrap_B;
    conf["ci_level"] = cfg.ci_level;
    conf["seed"] = cfg.seed;
    conf["threads"] = cfg.threads;
    conf["out_dir"] = cfg.out_dir;

    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["manifest"] = make_manifest("cif", conf, hash_file(cfg.input));
    j["n"] = d.size();
    j["grid_points"] = grid.size();
    if (bands)
        j["bootstrap"] = {{"B", cfg.bootstrap_B},
                          {"used", bands->used},
                          {"dropped", bands->dropped}};

    std::filesystem::create_directories(cfg.out_dir);
    std::string cpath = cfg.out_dir + "/cif.csv";
    std::string jpath = cfg.out_dir + "/cif.json";
    detail::write_text(cpath, csv);
    detail::write_text(jpath, detail::json_text(j));
    std::cout << "wrote " << cpath << " and " << jpath << "\n";
    return 0;
}

inline int run(int argc, const char* const* argv) {
    CLI::App app{"separable direct and indirect effects of a binary "
                 "treatment under competing risks"};
    app.require_subcommand(1);
    RunConfig cfg;

    auto add_input = [&](CLI::App* c) {
        c->add_option("--input", cfg.input, "input CSV file")->required();
        c->add_option("--time-col", cfg.time_col, "time column name");
        c->add_option("--event-col", cfg.event_col,
                      "event column name (0 censored, 1 cause of interest, "
                      "2 competing cause)");
        c->add_option("--treat-col", cfg.treat_col, "treatment column name");
        c->add_option("--covars", cfg.covars,
                      "covariate columns (default: all remaining)")
            ->delimiter(',');
        c->add_option("--censor-covars", cfg.censor_covars,
                      "covariates for the censoring model besides treatment")
            ->delimiter(',');
    };
    auto add_common = [&](CLI::App* c) {
        c->add_option("--bootstrap-B", cfg.bootstrap_B,
                      "bootstrap replicates (0 = off)");
        c->add_option("--ci-level", cfg.ci_level, "confidence level");
        c->add_option("--seed", cfg.seed, "random seed");
        c->add_option("--threads", cfg.threads, "worker threads");
        c->add_option("--out-dir", cfg.out_dir, "output directory");
    };

    CLI::App* est = app.add_subcommand(
        "estimate", "estimate direct and indirect effects on a CSV dataset");
    add_input(est);
    est->add_option("--times", cfg.times, "evaluation times")
        ->required()
        ->delimiter(',');
    est->add_option("--estimators", cfg.estimators,
                    "estimators to run: plugin, onestep, tmle")
        ->delimiter(',');
    est->add_option("--effect", cfg.effect,
                    "primary effect: direct0, direct1, indirect0, indirect1");
    est->add_option("--propensity", cfg.propensity,
                    "treatment mechanism: fit or known:<p>");
    add_common(est);

    CLI::App* sim = app.add_subcommand(
        "simulate", "run a replication study under a built-in scenario");
    sim->add_option("--scenario", cfg.scenario, "scenario id")->required();
    sim->add_option("--n", cfg.n, "subjects per replicate");
    sim->add_option("--reps", cfg.replicates, "replicates");
    sim->add_option("--times", cfg.times, "evaluation times")
        ->required()
        ->delimiter(',');
    sim->add_option("--estimators", cfg.estimators,
                    "estimators to run: plugin, onestep, tmle")
        ->delimiter(',');
    sim->add_option("--out", cfg.out_json, "report JSON path");
    add_common(sim);

    CLI::App* cif = app.add_subcommand(
        "cif", "per-arm cause-1 and cause-2 cumulative incidence curves");
    add_input(cif);
    cif->add_option("--times", cfg.times,
                    "curve grid (default: fitted jump times)")
        ->delimiter(',');
    add_common(cif);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (est->parsed()) return cmd_estimate(cfg);
        if (sim->parsed()) return cmd_simulate(cfg);
        return cmd_cif(cfg);
    } catch (const config_error& e) {
        std::cerr << "sepfx: config error: " << e.what() << "\n";
        return 2;
    } catch (const data_error& e) {
        std::cerr << "sepfx: data error: " << e.what() << "\n";
        return 1;
    } catch (const positivity_error& e) {
        std::cerr << "sepfx: positivity error: " << e.what() << "\n";
        return 1;
    } catch (const fit_error& e) {
        std::cerr << "sepfx: fit error: " << e.what() << "\n";
        return 1;
    } catch (const error& e) {
        std::cerr << "sepfx: error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace sepfx::cli
