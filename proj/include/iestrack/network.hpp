#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace iestrack {

struct ElectricBus {
    int id = 0;
    double shunt_g = 0.0;  // g_i0, per-unit
    double shunt_b = 0.0;  // b_i0, per-unit
    double base_vm = 1.0;  // operating-point magnitude used by the voltage profile
    double base_va_deg = 0.0;
    std::optional<std::size_t> gtu_link;  // index into IesNetwork::gtu_links
};

struct Branch {
    int from_bus = 0;
    int to_bus = 0;
    double g = 0.0;  // series conductance
    double b = 0.0;  // series susceptance
};

struct GasNode {
    int id = 0;
    std::optional<double> source_density;  // set for source nodes (kg/m^3)

    bool is_source() const { return source_density.has_value(); }
};

struct Pipeline {
    int node_i = 0;
    int node_j = 0;
    double length = 0.0;    // m
    double diameter = 0.0;  // m
    double friction = 0.01;
    double ratio_i = 1.0;  // compressor density ratio at the node_i end
    double ratio_j = 1.0;

    double area() const;
};

struct GtuLink {
    int gas_node = 0;
    int bus = 0;
    double efficiency = 0.0;  // W per kg/s
    double power_w = 0.0;     // default constant electric output
};

struct IesNetwork {
    std::vector<ElectricBus> buses;
    std::vector<Branch> branches;
    std::vector<GasNode> gas_nodes;
    std::vector<Pipeline> pipelines;
    std::vector<GtuLink> gtu_links;
    double sound_speed = 350.0;

    std::size_t n_bus() const { return buses.size(); }
    std::size_t n_gas() const { return gas_nodes.size(); }
    std::size_t n_pipe() const { return pipelines.size(); }
    std::size_t n_state() const { return 2 * n_bus() + n_gas() + 2 * n_pipe(); }

    /// Source node ids in ascending order.
    std::vector<int> source_nodes() const;
    /// Non-source node ids in ascending order.
    std::vector<int> load_nodes() const;
    /// Index into gtu_links for a gas node, if it feeds a GTU.
    std::optional<std::size_t> gtu_for_gas_node(int node) const;
};

/// Parses the network part of a scenario document ("electric", "gas", "gtu_links").
IesNetwork load_network(const nlohmann::json& doc);
IesNetwork load_network(std::string_view text);

/// Inverse of load_network; branches are written in g/b form.
nlohmann::json serialize_network(const IesNetwork& net);

/// Throws InputError naming the offending entry.
void validate_network(const IesNetwork& net);

/// 64-bit FNV-1a of the canonical serialization.
std::string network_hash(const IesNetwork& net);

Eigen::MatrixXcd admittance_matrix(const IesNetwork& net);

enum class StateKind { E, F, Density, FlowIJ, FlowJI };

struct StateComponent {
    StateKind kind;
    int id;  // bus id, gas node id, or 1-based pipeline number
    bool operator==(const StateComponent&) const = default;
};

/// Joint state ordering: [e1 f1 e2 f2 ... | rho_1..rho_nG | phi_ij phi_ji per pipeline].
class StateLayout {
public:
    explicit StateLayout(const IesNetwork& net);

    std::size_t size() const { return n_state_; }
    std::size_t electric_size() const { return 2 * n_bus_; }
    std::size_t gas_size() const { return n_gas_ + 2 * n_pipe_; }
    std::size_t gas_offset() const { return 2 * n_bus_; }

    std::size_t e(int bus) const;
    std::size_t f(int bus) const;
    std::size_t density(int node) const;
    std::size_t flow_ij(std::size_t pipe) const;  // 0-based pipeline index
    std::size_t flow_ji(std::size_t pipe) const;

    StateComponent component(std::size_t index) const;
    std::string name(std::size_t index) const;

private:
    std::size_t n_bus_, n_gas_, n_pipe_, n_state_;
};

StateLayout state_layout(const IesNetwork& net);

}  // namespace iestrack
