#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "simulate.hpp"
#include "types.hpp"

namespace sepfx {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

namespace detail {

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t len) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace detail

inline std::string hash_bytes(const std::string& bytes) {
    return "fnv1a64:" +
           detail::hex64(detail::fnv1a64(
               reinterpret_cast<const unsigned char*>(bytes.data()),
               bytes.size()));
}

inline std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    return hash_bytes(bytes);
}

// Reproducibility block embedded in every output file: no timestamps, so a
// rerun with the same config and inputs is byte-identical.
inline nlohmann::ordered_json make_manifest(const std::string& command,
                                            const nlohmann::ordered_json& config,
                                            const std::string& input_hash) {
    nlohmann::ordered_json m;
    m["generator"] = {{"name", "sepfx"}, {"version", kVersion}};
    m["command"] = command;
    m["config"] = config;
    m["input_hash"] = input_hash;
    return m;
}

inline nlohmann::ordered_json interval_to_json(const Interval& iv) {
    return {{"lo", iv.lo}, {"hi", iv.hi}};
}

inline nlohmann::ordered_json effect_to_json(const EffectEstimate& e) {
    nlohmann::ordered_json j;
    j["time"] = e.time;
    j["estimate"] = e.estimate;
    if (e.se_analytic) j["se_analytic"] = *e.se_analytic;
    if (e.se_eif) j["se_eif"] = *e.se_eif;
    if (e.se_bootstrap) j["se_bootstrap"] = *e.se_bootstrap;
    if (e.ci) j["ci"] = interval_to_json(*e.ci);
    if (e.ci_percentile) j["ci_percentile"] = interval_to_json(*e.ci_percentile);
    return j;
}

inline nlohmann::ordered_json study_to_json(const StudyReport& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["scenario"] = r.scenario;
    j["n"] = r.n;
    j["replicates"] = r.replicates;
    j["failures"] = r.failures;
    j["seed"] = r.seed;
    j["bootstrap_B"] = r.bootstrap_B;
    j["level"] = r.level;
    j["times"] = r.times;
    j["estimators"] = r.estimators;
    j["cells"] = nlohmann::ordered_json::array();
    for (const auto& c : r.cells) {
        nlohmann::ordered_json cj;
        cj["estimator"] = estimator_name(c.estimator);
        cj["target"] = c.target;
        cj["time"] = c.time;
        cj["true_value"] = c.true_value;
        cj["used"] = c.used;
        cj["mean"] = c.mean;
        cj["sd"] = c.sd;
        if (c.mean_see) cj["mean_see"] = *c.mean_see;
        if (c.coverage) cj["coverage"] = *c.coverage;
        if (c.mean_see_boot) cj["mean_see_boot"] = *c.mean_see_boot;
        if (c.coverage_boot) cj["coverage_boot"] = *c.coverage_boot;
        j["cells"].push_back(cj);
    }
    j["failure_messages"] = r.failure_messages;
    return j;
}

namespace detail {

inline std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

inline std::string table_label(const std::string& target) {
    if (target == "p11") return "P1(t,1,1)";
    if (target == "p01") return "P1(t,0,1)";
    return "delta1(t,1)";
}

}  // namespace detail

// One table per (estimator, target) block, statistics as rows and time
// points as columns, the layout of the published tables.
inline std::string study_to_markdown(const StudyReport& r) {
    std::string md = "# Scenario " + r.scenario + " (n=" + std::to_string(r.n) +
                     ", " + std::to_string(r.replicates) +
                     " replicates, seed " + std::to_string(r.seed) + ")\n";
    if (r.failures > 0)
        md += "\n" + std::to_string(r.failures) + " replicates failed.\n";

    std::vector<std::pair<std::string, std::string>> blocks;
    for (const auto& c : r.cells) {
        std::pair<std::string, std::string> key{estimator_name(c.estimator),
                                                c.target};
        if (std::find(blocks.begin(), blocks.end(), key) == blocks.end())
            blocks.push_back(key);
    }
    for (const auto& [est, target] : blocks) {
        std::vector<const StudyCell*> cells;
        for (const auto& c : r.cells)
            if (estimator_name(c.estimator) == est && c.target == target)
                cells.push_back(&c);
        md += "\n## " + est + ", " + detail::table_label(target) + "\n\n";
        std::string head = "| |", rule = "| --- |";
        for (const auto* c : cells) {
            head += " t=" + detail::fmt3(c->time) + " |";
            rule += " --- |";
        }
        md += head + "\n" + rule + "\n";
        auto row = [&](const std::string& label, auto value) {
            std::string line = "| " + label + " |";
            bool any = false;
            for (const auto* c : cells) {
                auto v = value(*c);
                if (v) {
                    line += " " + detail::fmt3(*v) + " |";
                    any = true;
                } else {
                    line += " |";
                }
            }
            if (any) md += line + "\n";
        };
        auto always = [](double v) { return std::optional<double>(v); };
        row("true", [&](const StudyCell& c) { return always(c.true_value); });
        row("mean", [&](const StudyCell& c) { return always(c.mean); });
        row("sd", [&](const StudyCell& c) { return always(c.sd); });
        row("see", [](const StudyCell& c) { return c.mean_see; });
        row("95% CP", [](const StudyCell& c) { return c.coverage; });
        row("see (boot)", [](const StudyCell& c) { return c.mean_see_boot; });
        row("95% CP (boot)",
            [](const StudyCell& c) { return c.coverage_boot; });
        std::string used = "| used |";
        for (const auto* c : cells)
            used += " " + std::to_string(c->used) + " |";
        md += used + "\n";
    }
    return md;
}

}  // namespace sepfx
