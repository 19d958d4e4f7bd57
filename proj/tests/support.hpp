#pragma once

#include <random>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "iestrack/network.hpp"
#include "iestrack/scenario.hpp"

namespace testing_support {

inline nlohmann::json small_doc() { return nlohmann::json::parse(iestrack::small_scenario_text()); }
inline nlohmann::json reference_doc() { return nlohmann::json::parse(iestrack::reference_scenario_text()); }

inline const iestrack::Scenario& small_scenario() {
    static const iestrack::Scenario s = iestrack::load_scenario_text(iestrack::small_scenario_text());
    return s;
}

inline const iestrack::Scenario& reference_scenario() {
    static const iestrack::Scenario s = iestrack::load_scenario_text(iestrack::reference_scenario_text());
    return s;
}

/// One source feeding one load through a single pipe; two buses on one line.
inline nlohmann::json one_pipe_doc(double length_km = 10.0, double diameter_m = 0.5) {
    return {
        {"electric",
         {{"buses", {{{"id", 1}}, {{"id", 2}}}}, {"branches", {{{"from", 1}, {"to", 2}, {"g", 1.0}, {"b", -5.0}}}}}},
        {"gas",
         {{"sound_speed", 350.0},
          {"nodes", {{{"id", 1}, {"source_density", 50.0}}, {{"id", 2}}}},
          {"pipelines", {{{"from", 1}, {"to", 2}, {"length_km", length_km}, {"diameter_m", diameter_m}}}}}},
        {"gtu_links", nlohmann::json::array()}};
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    return v;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(rng);
    return m;
}

}  // namespace testing_support
