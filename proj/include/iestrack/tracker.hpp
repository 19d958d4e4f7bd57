#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iestrack/gas_dynamics.hpp"
#include "iestrack/holt.hpp"
#include "iestrack/lstm.hpp"
#include "iestrack/measurement.hpp"
#include "iestrack/scenario.hpp"

namespace iestrack {

/// f(x) = [electric.apply(x_E); gas_predict(x_G, u)].
Eigen::VectorXd joint_transition(const Eigen::VectorXd& x, const AffineMap& electric, const GasInput& u,
                                 const GasStepSystem& sys);

/// Sources take their fixed densities, GTU nodes P/eta, every other load node its forecast.
GasInput build_u(const IesNetwork& net, const std::map<int, double>& forecasts, const Eigen::VectorXd& gtu_powers);

/// Delivered gas per load node, from the flows of a joint state.
std::map<int, double> extract_loads(const Eigen::VectorXd& x, const IesNetwork& net);

/// Sliding windows of tracked loads per forecast node, fed to a shared LSTM.
class LoadForecaster {
public:
    LoadForecaster(const LstmModel& model, const std::map<int, double>& initial);

    void push(const std::map<int, double>& loads);
    /// Next-step forecast per node, kg/s.
    std::map<int, double> forecast() const;
    const std::vector<int>& nodes() const { return nodes_; }

private:
    const LstmModel* model_;
    std::vector<int> nodes_;
    std::map<int, std::deque<double>> windows_;
};

struct TrackingSetup {
    IesNetwork network;
    SensorConfig sensors;
    NoiseVariances noise;
    FilterTuning filter;
    RunConfig run;
    LstmModel model;
};

TrackingSetup make_tracking_setup(const Scenario& scenario, const LstmModel& model,
                                  const std::string& sensor_set = {}, const std::string& noise_level = {});

/// Truth plus N(0, S0 S0^T) drawn from rng.
Eigen::VectorXd perturbed_initial_estimate(const Eigen::VectorXd& truth0, const IesNetwork& net,
                                           const FilterTuning& tuning, std::mt19937_64& rng);

struct MetricsSummary {
    bool available = false;
    Eigen::VectorXd filter_coefficients;  // per channel, NaN where the denominator is zero
    Eigen::VectorXd average_variances;    // per state
    double load_mape = 0.0;
};

struct TrackingRun {
    Eigen::MatrixXd estimates;     // (T + 1) x n_x, row 0 is the initial estimate
    Eigen::MatrixXd predictions;   // (T + 1) x n_x, row 0 repeats the initial estimate
    Eigen::MatrixXd measurements;  // T x m
    Eigen::MatrixXd truth;         // (T + 1) x n_x, empty when withheld
    Eigen::MatrixXd holt_level;    // (T + 1) x 2 n_B
    Eigen::MatrixXd holt_trend;
    Eigen::MatrixXd load_forecasts;  // T x forecast nodes; row t - 1 is the forecast used for step t
    std::vector<int> forecast_nodes;
    MetricsSummary metrics;
};

/// Measurements row t - 1 is z_t; gtu_powers row t is P_G at step t.
TrackingRun run_tracking(const TrackingSetup& setup, const Eigen::MatrixXd& measurements,
                         const Eigen::MatrixXd& gtu_powers, const Eigen::VectorXd& x0,
                         const std::optional<Eigen::MatrixXd>& truth = std::nullopt);

/// FC per channel: sum (h(x_hat) - h(x))^2 / sum (z - h(x))^2 over t = 1..T.
Eigen::VectorXd filter_coefficients(const TrackingRun& run, const MeasurementModel& model);
/// Time mean of (x_hat - x)^2 over t = 1..T, per state.
Eigen::VectorXd average_variances(const TrackingRun& run);

/// Default bad-data channels: two voltage, one branch current, one pressure, one mass channel.
std::vector<std::size_t> default_bad_data_targets(const MeasurementModel& model);
void inject_bad_data_rows(Eigen::MatrixXd& measurements, const std::vector<std::size_t>& targets,
                          std::size_t first_step, std::size_t count, double deviation);

struct ObservabilityReport {
    Eigen::MatrixXd phi;
    Eigen::MatrixXd c;
    std::size_t rank = 0;
    std::size_t n = 0;
    bool observable = false;
    double sigma_max = 0.0;
    double tolerance = 0.0;
    double smallest_kept = 0.0;     // smallest singular value counted in the rank
    double largest_dropped = 0.0;   // largest singular value below tolerance
    bool tolerance_sensitive = false;
    std::size_t blocks = 0;
    bool dense = true;
};

/// Numerical rank of [C; C Phi; ...] with each block rescaled to unit Frobenius norm.
std::size_t stacked_rank(const Eigen::MatrixXd& c, const Eigen::MatrixXd& phi, bool dense, ObservabilityReport* report);

ObservabilityReport observability_check(const IesNetwork& net, const SensorConfig& sensors, const Eigen::VectorXd& x0,
                                        const GasInput& u, const GasStepSystem& sys, double holt_alpha);

}  // namespace iestrack
