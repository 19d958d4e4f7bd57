#include "iestrack/simulation.hpp"

#include <cmath>
#include <numbers>

#include "iestrack/errors.hpp"
#include "iestrack/gas_dynamics.hpp"
#include "iestrack/measurement.hpp"
#include "iestrack/rng.hpp"

namespace iestrack {

Eigen::MatrixXd simulate_voltages(const IesNetwork& net, const ElectricProfileSpec& spec, std::size_t steps,
                                  double dt, std::mt19937_64& rng) {
    const auto nb = static_cast<Eigen::Index>(net.n_bus());
    std::normal_distribution<double> normal(0.0, 1.0);
    const double common = spec.common_fraction;
    const double own = std::sqrt(1.0 - common * common);
    double common_mag = 0.0, common_ang = 0.0;
    Eigen::VectorXd own_mag = Eigen::VectorXd::Zero(nb), own_ang = Eigen::VectorXd::Zero(nb);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(steps + 1), 2 * nb);
    for (std::size_t t = 0; t <= steps; ++t) {
        if (t > 0) {
            common_mag = spec.fluctuation_corr * common_mag + spec.fluctuation_std * normal(rng);
            common_ang = spec.fluctuation_corr * common_ang + spec.fluctuation_std * normal(rng);
            for (Eigen::Index b = 0; b < nb; ++b) {
                own_mag(b) = spec.fluctuation_corr * own_mag(b) + spec.fluctuation_std * normal(rng);
                own_ang(b) = spec.fluctuation_corr * own_ang(b) + spec.fluctuation_std * normal(rng);
            }
        }
        double daily = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) * dt / 86400.0);
        for (Eigen::Index b = 0; b < nb; ++b) {
            const ElectricBus& bus = net.buses[static_cast<std::size_t>(b)];
            double vm = bus.base_vm * (1.0 - spec.magnitude_swing * daily) + common * common_mag + own * own_mag(b);
            double va = bus.base_va_deg * std::numbers::pi / 180.0 - spec.angle_swing * daily + common * common_ang +
                        own * own_ang(b);
            out(static_cast<Eigen::Index>(t), 2 * b) = vm * std::cos(va);
            out(static_cast<Eigen::Index>(t), 2 * b + 1) = vm * std::sin(va);
        }
    }
    return out;
}

LoadSeries scenario_load_history(const Scenario& scenario, std::uint64_t seed) {
    return generate_synthetic_loads(scenario.loads.nodes, scenario.loads.days, scenario.run.dt,
                                    scenario.loads.noise_fraction, seed, scenario.loads.noise_correlation);
}

SimulationData simulate_scenario(const Scenario& scenario, std::uint64_t seed, const SimulationOptions& options) {
    const IesNetwork& net = scenario.network;
    const std::size_t steps = static_cast<std::size_t>(options.steps < 0 ? scenario.run.steps : options.steps);
    SimulationData out;
    out.load_history = scenario_load_history(scenario, seed);
    SeriesSplit split = split_series(out.load_history.length());
    out.history_offset = split.test_end;
    if (!scenario.loads.nodes.empty() && out.history_offset + steps + 1 > out.load_history.length())
        throw InputError("load history too short for " + std::to_string(steps) + " simulation steps");

    const std::vector<int> loads = net.load_nodes();
    out.true_loads = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(steps + 1), static_cast<Eigen::Index>(loads.size()));
    out.gtu_powers.resize(static_cast<Eigen::Index>(steps + 1), static_cast<Eigen::Index>(net.gtu_links.size()));
    for (std::size_t g = 0; g < net.gtu_links.size(); ++g)
        out.gtu_powers.col(static_cast<Eigen::Index>(g)).setConstant(net.gtu_links[g].power_w);
    for (std::size_t l = 0; l < loads.size(); ++l) {
        auto col = static_cast<Eigen::Index>(l);
        if (auto g = net.gtu_for_gas_node(loads[l])) {
            for (std::size_t t = 0; t <= steps; ++t)
                out.true_loads(static_cast<Eigen::Index>(t), col) =
                    gtu_load(out.gtu_powers(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(*g)),
                             net.gtu_links[*g].efficiency);
        } else if (auto it = out.load_history.nodes.find(loads[l]); it != out.load_history.nodes.end()) {
            for (std::size_t t = 0; t <= steps; ++t)
                out.true_loads(static_cast<Eigen::Index>(t), col) = it->second[out.history_offset + t];
        }
    }

    std::vector<GasInput> inputs;
    for (std::size_t t = 0; t <= steps; ++t)
        inputs.push_back(make_gas_input(net, out.true_loads.row(static_cast<Eigen::Index>(t)).transpose()));
    GasTrajectory gas = simulate_gas(net, inputs, steps, scenario.run.dt, scenario.run.theta);

    std::mt19937_64 electric_rng = rng_stream(seed, "electric");
    Eigen::MatrixXd volts = simulate_voltages(net, scenario.electric_profile, steps, scenario.run.dt, electric_rng);
    out.truth.resize(static_cast<Eigen::Index>(steps + 1), static_cast<Eigen::Index>(net.n_state()));
    out.truth << volts, gas.states;

    MeasurementModel model(net, scenario.sensors(options.sensor_set));
    const NoiseVariances& noise = scenario.noise(options.noise_level);
    std::mt19937_64 noise_rng = rng_stream(seed, "noise");
    out.measurements.resize(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(model.size()));
    for (std::size_t t = 1; t <= steps; ++t) {
        MeasurementVector z = synthesize(measure(out.truth.row(static_cast<Eigen::Index>(t)).transpose(), model, noise),
                                         noise_rng);
        out.measurements.row(static_cast<Eigen::Index>(t - 1)) = z.values.transpose();
    }
    return out;
}

}  // namespace iestrack
