#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "iestrack/network.hpp"

namespace iestrack {

struct SensorConfig {
    std::vector<int> pmu_buses;
    std::vector<int> branch_current_meters;  // 1-based branch numbers
    std::vector<int> injection_current_buses;
    std::vector<int> pressure_nodes;
    std::vector<int> flow_nodes;
};

SensorConfig load_sensor_config(const nlohmann::json& doc, const std::string& where);
nlohmann::json serialize_sensor_config(const SensorConfig& sensors);

/// Channel blocks in stacking order.
enum class Block { E, F, BR, BI, IR, II, P, M };

const char* block_name(Block b);

struct Channel {
    Block block;
    int device;  // bus id, branch number, or gas node id
};

std::string channel_name(const Channel& c, const IesNetwork& net);

/// Noise variances per channel class. Pressure is in Pa^2.
struct NoiseVariances {
    double voltage = 0.0;
    double current = 0.0;
    double pressure = 0.0;
    double mass = 0.0;
};

/// Linear measurement map h(x) for one network and sensor placement.
class MeasurementModel {
public:
    MeasurementModel(const IesNetwork& net, const SensorConfig& sensors);

    std::size_t size() const { return channels_->size(); }
    const std::vector<Channel>& channels() const { return *channels_; }
    std::shared_ptr<const std::vector<Channel>> shared_channels() const { return channels_; }

    /// h(x), channel by channel.
    Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const;
    /// Exact constant Jacobian of evaluate.
    const Eigen::MatrixXd& jacobian() const { return c_; }
    Eigen::VectorXd variances(const NoiseVariances& noise) const;

private:
    std::shared_ptr<const IesNetwork> net_;
    std::shared_ptr<const std::vector<Channel>> channels_;
    StateLayout layout_;
    Eigen::MatrixXcd y_;
    Eigen::MatrixXd c_;

    Eigen::MatrixXd build_jacobian() const;
};

struct MeasurementVector {
    std::shared_ptr<const std::vector<Channel>> channels;
    Eigen::VectorXd values;
    Eigen::VectorXd variances;
};

MeasurementVector measure(const Eigen::VectorXd& x, const MeasurementModel& model, const NoiseVariances& noise = {});
MeasurementVector measure(const Eigen::VectorXd& x, const IesNetwork& net, const SensorConfig& sensors);

/// Adds N(0, variance) to every channel. Zero variance leaves a channel untouched.
MeasurementVector synthesize(const MeasurementVector& z_true, std::mt19937_64& rng);
MeasurementVector synthesize(const MeasurementVector& z_true, std::uint64_t seed);

/// Scales the target channels by (1 + deviation).
MeasurementVector inject_bad_data(const MeasurementVector& z, const std::vector<std::size_t>& targets,
                                  double deviation);

Eigen::MatrixXd measurement_jacobian(const Eigen::VectorXd& x, const IesNetwork& net, const SensorConfig& sensors);

}  // namespace iestrack
