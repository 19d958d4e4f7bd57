#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "iestrack/lstm.hpp"
#include "iestrack/scenario.hpp"

namespace iestrack {

/// (steps + 1) x 2 n_B truth trajectory of [e f] per bus.
Eigen::MatrixXd simulate_voltages(const IesNetwork& net, const ElectricProfileSpec& spec, std::size_t steps,
                                  double dt, std::mt19937_64& rng);

/// Synthetic load history for the scenario's load nodes (training, testing and simulation segments).
LoadSeries scenario_load_history(const Scenario& scenario, std::uint64_t seed);

struct SimulationOptions {
    std::string sensor_set;   // empty: scenario default
    std::string noise_level;  // empty: scenario default
    int steps = -1;           // negative: scenario run length
};

struct SimulationData {
    Eigen::MatrixXd truth;         // (T + 1) x n_x
    Eigen::MatrixXd measurements;  // T x m; row t - 1 holds z_t
    Eigen::MatrixXd true_loads;    // (T + 1) x load nodes (net.load_nodes() order)
    Eigen::MatrixXd gtu_powers;    // (T + 1) x GTU links, W
    LoadSeries load_history;
    std::size_t history_offset = 0;  // index of step 0 in load_history
};

/// Ground truth (gas simulator + voltage profile) and noisy measurements for one seed.
SimulationData simulate_scenario(const Scenario& scenario, std::uint64_t seed, const SimulationOptions& options = {});

}  // namespace iestrack
