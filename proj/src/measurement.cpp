#include "iestrack/measurement.hpp"

#include <complex>
#include <set>

#include "iestrack/errors.hpp"
#include "iestrack/gas_dynamics.hpp"

namespace iestrack {

using nlohmann::json;

namespace {

std::vector<int> id_list(const json& doc, const std::string& key, const std::string& where) {
    std::vector<int> out;
    if (!doc.contains(key)) return out;
    const json& a = doc.at(key);
    if (!a.is_array()) throw InputError(where + "." + key + ": expected an array");
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (!a[k].is_number_integer())
            throw InputError(where + "." + key + "[" + std::to_string(k) + "]: expected an integer");
        out.push_back(a[k].get<int>());
    }
    return out;
}

void check_ids(const std::vector<int>& ids, std::size_t count, const std::string& what) {
    std::set<int> seen;
    for (int id : ids) {
        if (id < 1 || static_cast<std::size_t>(id) > count)
            throw InputError("sensor references absent " + what + " " + std::to_string(id));
        if (!seen.insert(id).second) throw InputError("sensor lists " + what + " " + std::to_string(id) + " twice");
    }
}

// Real and imaginary parts of y * V as coefficients on (e, f).
struct ComplexRow {
    double re_e, re_f, im_e, im_f;
};

ComplexRow coefficients(std::complex<double> y) { return {y.real(), -y.imag(), y.imag(), y.real()}; }

}  // namespace

SensorConfig load_sensor_config(const json& doc, const std::string& where) {
    if (!doc.is_object()) throw InputError(where + ": expected an object");
    SensorConfig s;
    s.pmu_buses = id_list(doc, "pmu_buses", where);
    s.branch_current_meters = id_list(doc, "branch_current_meters", where);
    s.injection_current_buses = id_list(doc, "injection_current_buses", where);
    s.pressure_nodes = id_list(doc, "pressure_nodes", where);
    s.flow_nodes = id_list(doc, "flow_nodes", where);
    return s;
}

json serialize_sensor_config(const SensorConfig& s) {
    return {{"pmu_buses", s.pmu_buses},
            {"branch_current_meters", s.branch_current_meters},
            {"injection_current_buses", s.injection_current_buses},
            {"pressure_nodes", s.pressure_nodes},
            {"flow_nodes", s.flow_nodes}};
}

const char* block_name(Block b) {
    switch (b) {
        case Block::E: return "E";
        case Block::F: return "F";
        case Block::BR: return "BR";
        case Block::BI: return "BI";
        case Block::IR: return "IR";
        case Block::II: return "II";
        case Block::P: return "P";
        case Block::M: return "M";
    }
    return "?";
}

std::string channel_name(const Channel& c, const IesNetwork& net) {
    std::string id = std::to_string(c.device);
    switch (c.block) {
        case Block::E:
        case Block::F:
        case Block::IR:
        case Block::II: return std::string(block_name(c.block)) + "_bus" + id;
        case Block::BR:
        case Block::BI: {
            const auto& br = net.branches[static_cast<std::size_t>(c.device - 1)];
            return std::string(block_name(c.block)) + "_branch" + id + "_" + std::to_string(br.from_bus) + "-" +
                   std::to_string(br.to_bus);
        }
        case Block::P:
        case Block::M: return std::string(block_name(c.block)) + "_node" + id;
    }
    return id;
}

MeasurementModel::MeasurementModel(const IesNetwork& net, const SensorConfig& sensors)
    : net_(std::make_shared<const IesNetwork>(net)), layout_(net), y_(admittance_matrix(net)) {
    check_ids(sensors.pmu_buses, net.n_bus(), "bus");
    check_ids(sensors.branch_current_meters, net.branches.size(), "branch");
    check_ids(sensors.injection_current_buses, net.n_bus(), "bus");
    check_ids(sensors.pressure_nodes, net.n_gas(), "gas node");
    check_ids(sensors.flow_nodes, net.n_gas(), "gas node");
    auto channels = std::make_shared<std::vector<Channel>>();
    for (int b : sensors.pmu_buses) channels->push_back({Block::E, b});
    for (int b : sensors.pmu_buses) channels->push_back({Block::F, b});
    for (int k : sensors.branch_current_meters) channels->push_back({Block::BR, k});
    for (int k : sensors.branch_current_meters) channels->push_back({Block::BI, k});
    for (int b : sensors.injection_current_buses) channels->push_back({Block::IR, b});
    for (int b : sensors.injection_current_buses) channels->push_back({Block::II, b});
    for (int n : sensors.pressure_nodes) channels->push_back({Block::P, n});
    for (int n : sensors.flow_nodes) channels->push_back({Block::M, n});
    channels_ = channels;
    c_ = build_jacobian();
}

Eigen::VectorXd MeasurementModel::evaluate(const Eigen::VectorXd& x) const {
    const IesNetwork& net = *net_;
    if (static_cast<std::size_t>(x.size()) != layout_.size()) throw InputError("measure: state has wrong length");
    auto voltage = [&](int bus) {
        return std::complex<double>(x(static_cast<Eigen::Index>(layout_.e(bus))),
                                    x(static_cast<Eigen::Index>(layout_.f(bus))));
    };
    const double c2 = net.sound_speed * net.sound_speed;
    Eigen::VectorXd gas = x.tail(static_cast<Eigen::Index>(layout_.gas_size()));
    Eigen::VectorXd z(static_cast<Eigen::Index>(size()));
    for (std::size_t k = 0; k < size(); ++k) {
        const Channel& ch = (*channels_)[k];
        double v = 0.0;
        switch (ch.block) {
            case Block::E: v = voltage(ch.device).real(); break;
            case Block::F: v = voltage(ch.device).imag(); break;
            case Block::BR:
            case Block::BI: {
                const Branch& br = net.branches[static_cast<std::size_t>(ch.device - 1)];
                const ElectricBus& from = net.buses[static_cast<std::size_t>(br.from_bus - 1)];
                std::complex<double> y(br.g, br.b), y0(from.shunt_g, from.shunt_b);
                std::complex<double> i = (y + y0) * voltage(br.from_bus) - y * voltage(br.to_bus);
                v = ch.block == Block::BR ? i.real() : i.imag();
                break;
            }
            case Block::IR:
            case Block::II: {
                std::complex<double> i = 0.0;
                for (Eigen::Index j = 0; j < y_.cols(); ++j)
                    if (y_(ch.device - 1, j) != 0.0) i += y_(ch.device - 1, j) * voltage(static_cast<int>(j) + 1);
                v = ch.block == Block::IR ? i.real() : i.imag();
                break;
            }
            case Block::P: v = c2 * gas(ch.device - 1); break;
            case Block::M: v = node_delivery(net, gas, ch.device); break;
        }
        z(static_cast<Eigen::Index>(k)) = v;
    }
    return z;
}

Eigen::MatrixXd MeasurementModel::build_jacobian() const {
    const IesNetwork& net = *net_;
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(layout_.size()));
    auto add = [&](Eigen::Index row, bool imag, int bus, std::complex<double> y) {
        ComplexRow r = coefficients(y);
        auto e = static_cast<Eigen::Index>(layout_.e(bus));
        auto f = static_cast<Eigen::Index>(layout_.f(bus));
        c(row, e) += imag ? r.im_e : r.re_e;
        c(row, f) += imag ? r.im_f : r.re_f;
    };
    const double c2 = net.sound_speed * net.sound_speed;
    for (std::size_t k = 0; k < size(); ++k) {
        const Channel& ch = (*channels_)[k];
        auto row = static_cast<Eigen::Index>(k);
        switch (ch.block) {
            case Block::E: c(row, static_cast<Eigen::Index>(layout_.e(ch.device))) = 1.0; break;
            case Block::F: c(row, static_cast<Eigen::Index>(layout_.f(ch.device))) = 1.0; break;
            case Block::BR:
            case Block::BI: {
                const Branch& br = net.branches[static_cast<std::size_t>(ch.device - 1)];
                const ElectricBus& from = net.buses[static_cast<std::size_t>(br.from_bus - 1)];
                std::complex<double> y(br.g, br.b), y0(from.shunt_g, from.shunt_b);
                add(row, ch.block == Block::BI, br.from_bus, y + y0);
                add(row, ch.block == Block::BI, br.to_bus, -y);
                break;
            }
            case Block::IR:
            case Block::II:
                for (Eigen::Index j = 0; j < y_.cols(); ++j)
                    if (y_(ch.device - 1, j) != 0.0)
                        add(row, ch.block == Block::II, static_cast<int>(j) + 1, y_(ch.device - 1, j));
                break;
            case Block::P: c(row, static_cast<Eigen::Index>(layout_.density(ch.device))) = c2; break;
            case Block::M:
                for (std::size_t p = 0; p < net.n_pipe(); ++p) {
                    if (net.pipelines[p].node_i == ch.device) c(row, static_cast<Eigen::Index>(layout_.flow_ij(p))) -= 1.0;
                    if (net.pipelines[p].node_j == ch.device) c(row, static_cast<Eigen::Index>(layout_.flow_ji(p))) += 1.0;
                }
                break;
        }
    }
    return c;
}

Eigen::VectorXd MeasurementModel::variances(const NoiseVariances& noise) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
    for (std::size_t k = 0; k < size(); ++k) {
        double s = 0.0;
        switch ((*channels_)[k].block) {
            case Block::E:
            case Block::F: s = noise.voltage; break;
            case Block::BR:
            case Block::BI:
            case Block::IR:
            case Block::II: s = noise.current; break;
            case Block::P: s = noise.pressure; break;
            case Block::M: s = noise.mass; break;
        }
        v(static_cast<Eigen::Index>(k)) = s;
    }
    return v;
}

MeasurementVector measure(const Eigen::VectorXd& x, const MeasurementModel& model, const NoiseVariances& noise) {
    return {model.shared_channels(), model.evaluate(x), model.variances(noise)};
}

MeasurementVector measure(const Eigen::VectorXd& x, const IesNetwork& net, const SensorConfig& sensors) {
    return measure(x, MeasurementModel(net, sensors));
}

MeasurementVector synthesize(const MeasurementVector& z_true, std::mt19937_64& rng) {
    MeasurementVector out = z_true;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index k = 0; k < out.values.size(); ++k) {
        double var = z_true.variances(k);
        if (var < 0.0) throw InputError("negative measurement variance");
        double draw = normal(rng);
        if (var > 0.0) out.values(k) += std::sqrt(var) * draw;
    }
    return out;
}

MeasurementVector synthesize(const MeasurementVector& z_true, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return synthesize(z_true, rng);
}

MeasurementVector inject_bad_data(const MeasurementVector& z, const std::vector<std::size_t>& targets,
                                  double deviation) {
    MeasurementVector out = z;
    for (std::size_t t : targets) {
        if (t >= static_cast<std::size_t>(z.values.size()))
            throw InputError("bad-data target " + std::to_string(t) + " out of range");
        out.values(static_cast<Eigen::Index>(t)) *= 1.0 + deviation;
    }
    return out;
}

Eigen::MatrixXd measurement_jacobian(const Eigen::VectorXd& x, const IesNetwork& net, const SensorConfig& sensors) {
    MeasurementModel model(net, sensors);
    if (static_cast<std::size_t>(x.size()) != net.n_state()) throw InputError("measurement_jacobian: state has wrong length");
    return model.jacobian();
}

}  // namespace iestrack
