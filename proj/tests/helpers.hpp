#pragma once

#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "sepfx/csv.hpp"
#include "sepfx/types.hpp"

namespace testutil {

inline nlohmann::json load_json(const std::string& name) {
    std::string path = std::string(TEST_DATA_DIR) + "/" + name;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing test data file: " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

inline sepfx::Dataset load_fixture() {
    return sepfx::load_csv(std::string(TEST_DATA_DIR) + "/fixture_t1_n120.csv",
                           "time", "event", "treatment", {"w"});
}

inline std::vector<double> as_vec(const nlohmann::json& j) {
    return j.get<std::vector<double>>();
}

}  // namespace testutil
