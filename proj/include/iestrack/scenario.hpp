#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iestrack/lstm.hpp"
#include "iestrack/measurement.hpp"
#include "iestrack/network.hpp"

namespace iestrack {

/// Truth voltage trajectory: daily swing around the operating point plus AR(1) fluctuations.
struct ElectricProfileSpec {
    double magnitude_swing = 0.01;  // pu
    double angle_swing = 0.05;      // rad
    double fluctuation_std = 1e-4;  // AR(1) innovation, pu and rad
    double fluctuation_corr = 0.98;
    double common_fraction = 0.8;  // share of the fluctuation common to all buses
};

/// Diagonal square-root noise factors per state block.
struct BlockSqrt {
    double electric = 0.0;
    double density = 0.0;
    double flow = 0.0;
    /// Forecast-load noise as a fraction of each forecast node's load, mapped through the gas step.
    double load = 0.0;
    /// Share of the load-noise variance common to all forecast nodes.
    double load_common = 0.0;
    /// Share of the electric variance common to all e components and to all f components.
    double electric_common = 0.0;
};

struct FilterTuning {
    BlockSqrt process{1e-4, 1e-3, 1e-3};
    BlockSqrt initial{1e-3, 1e-2, 1e-1};
};

struct RunConfig {
    double dt = 300.0;
    int steps = 288;
    double theta = 1.0;
    double holt_alpha = 0.8;
    double holt_beta = 0.5;
};

struct LoadConfig {
    int days = 30;
    double noise_fraction = 0.02;
    double noise_correlation = 0.0;  // AR(1) coefficient of the noise between steps
    std::vector<LoadProfileSpec> nodes;
};

struct LstmConfig {
    int layers = 3;
    int hidden = 80;
    int window = 5;
    TrainingConfig training;
};

struct Scenario {
    std::string name;
    IesNetwork network;
    std::map<std::string, SensorConfig> sensor_sets;
    std::string default_sensor_set;
    std::map<std::string, NoiseVariances> noise_levels;  // pressure stored in Pa^2
    std::string default_noise;
    LoadConfig loads;
    ElectricProfileSpec electric_profile;
    RunConfig run;
    FilterTuning filter;
    LstmConfig lstm;

    const SensorConfig& sensors(const std::string& name = {}) const;
    const NoiseVariances& noise(const std::string& name = {}) const;
};

Scenario load_scenario(const nlohmann::json& doc);
Scenario load_scenario_text(const std::string& text);
Scenario load_scenario_file(const std::string& path);

/// Bundled scenarios compiled into the library.
const std::string& reference_scenario_text();
const std::string& small_scenario_text();

}  // namespace iestrack
