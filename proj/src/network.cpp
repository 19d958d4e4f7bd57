#include "iestrack/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <set>

#include "iestrack/errors.hpp"

namespace iestrack {

using nlohmann::json;

double Pipeline::area() const { return std::numbers::pi * diameter * diameter / 4.0; }

std::vector<int> IesNetwork::source_nodes() const {
    std::vector<int> out;
    for (const auto& n : gas_nodes)
        if (n.is_source()) out.push_back(n.id);
    return out;
}

std::vector<int> IesNetwork::load_nodes() const {
    std::vector<int> out;
    for (const auto& n : gas_nodes)
        if (!n.is_source()) out.push_back(n.id);
    return out;
}

std::optional<std::size_t> IesNetwork::gtu_for_gas_node(int node) const {
    for (std::size_t k = 0; k < gtu_links.size(); ++k)
        if (gtu_links[k].gas_node == node) return k;
    return std::nullopt;
}

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw InputError(where + ": " + what);
}

const json& member(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.is_object()) fail(where, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(where, "missing field '" + key + "'");
    return *it;
}

double number(const json& obj, const std::string& key, const std::string& where) {
    const json& v = member(obj, key, where);
    if (!v.is_number()) fail(where + "." + key, "expected a number");
    double x = v.get<double>();
    if (!std::isfinite(x)) fail(where + "." + key, "not finite");
    return x;
}

double number_or(const json& obj, const std::string& key, double fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    return number(obj, key, where);
}

int integer(const json& obj, const std::string& key, const std::string& where) {
    const json& v = member(obj, key, where);
    if (!v.is_number_integer()) fail(where + "." + key, "expected an integer");
    return v.get<int>();
}

const json& array(const json& obj, const std::string& key, const std::string& where) {
    const json& v = member(obj, key, where);
    if (!v.is_array()) fail(where + "." + key, "expected an array");
    return v;
}

std::string at(const std::string& base, std::size_t k) { return base + "[" + std::to_string(k) + "]"; }

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t a) {
        while (parent_[a] != a) a = parent_[a] = parent_[parent_[a]];
        return a;
    }
    void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

IesNetwork load_network(const json& doc) {
    IesNetwork net;
    const json& electric = member(doc, "electric", "scenario");
    const json& buses = array(electric, "buses", "electric");
    for (std::size_t k = 0; k < buses.size(); ++k) {
        std::string where = at("electric.buses", k);
        ElectricBus b;
        b.id = integer(buses[k], "id", where);
        b.shunt_g = number_or(buses[k], "g0", 0.0, where);
        b.shunt_b = number_or(buses[k], "b0", 0.0, where);
        b.base_vm = number_or(buses[k], "vm", 1.0, where);
        b.base_va_deg = number_or(buses[k], "va_deg", 0.0, where);
        net.buses.push_back(b);
    }
    const json& branches = array(electric, "branches", "electric");
    for (std::size_t k = 0; k < branches.size(); ++k) {
        std::string where = at("electric.branches", k);
        const json& e = branches[k];
        Branch br;
        br.from_bus = integer(e, "from", where);
        br.to_bus = integer(e, "to", where);
        if (e.contains("r") || e.contains("x")) {
            double r = number(e, "r", where);
            double x = number(e, "x", where);
            double z2 = r * r + x * x;
            if (z2 <= 0.0) fail(where, "zero series impedance");
            br.g = r / z2;
            br.b = -x / z2;
        } else {
            br.g = number(e, "g", where);
            br.b = number(e, "b", where);
        }
        net.branches.push_back(br);
    }

    const json& gas = member(doc, "gas", "scenario");
    net.sound_speed = number_or(gas, "sound_speed", 350.0, "gas");
    double default_friction = number_or(gas, "default_friction", 0.01, "gas");
    const json& nodes = array(gas, "nodes", "gas");
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        std::string where = at("gas.nodes", k);
        GasNode n;
        n.id = integer(nodes[k], "id", where);
        if (nodes[k].contains("source_density")) n.source_density = number(nodes[k], "source_density", where);
        net.gas_nodes.push_back(n);
    }
    const json& pipes = array(gas, "pipelines", "gas");
    for (std::size_t k = 0; k < pipes.size(); ++k) {
        std::string where = at("gas.pipelines", k);
        const json& e = pipes[k];
        Pipeline p;
        p.node_i = integer(e, "from", where);
        p.node_j = integer(e, "to", where);
        if (e.contains("length_m"))
            p.length = number(e, "length_m", where);
        else
            p.length = number(e, "length_km", where) * 1000.0;
        p.diameter = number(e, "diameter_m", where);
        p.friction = number_or(e, "friction", default_friction, where);
        p.ratio_i = number_or(e, "ratio_from", 1.0, where);
        p.ratio_j = number_or(e, "ratio_to", 1.0, where);
        net.pipelines.push_back(p);
    }

    if (doc.contains("gtu_links")) {
        const json& links = array(doc, "gtu_links", "scenario");
        for (std::size_t k = 0; k < links.size(); ++k) {
            std::string where = at("gtu_links", k);
            GtuLink g;
            g.gas_node = integer(links[k], "gas_node", where);
            g.bus = integer(links[k], "bus", where);
            g.efficiency = number(links[k], "efficiency", where);
            if (links[k].contains("power_w"))
                g.power_w = number(links[k], "power_w", where);
            else
                g.power_w = number_or(links[k], "power_mw", 0.0, where) * 1e6;
            net.gtu_links.push_back(g);
        }
    }

    std::sort(net.buses.begin(), net.buses.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    std::sort(net.gas_nodes.begin(), net.gas_nodes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t k = 0; k < net.gtu_links.size(); ++k) {
        int bus = net.gtu_links[k].bus;
        if (bus >= 1 && static_cast<std::size_t>(bus) <= net.buses.size() && net.buses[bus - 1].id == bus)
            net.buses[bus - 1].gtu_link = k;
    }
    validate_network(net);
    return net;
}

IesNetwork load_network(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("parse error: ") + e.what());
    }
    return load_network(doc);
}

void validate_network(const IesNetwork& net) {
    if (net.buses.empty()) fail("electric.buses", "no buses");
    for (std::size_t k = 0; k < net.buses.size(); ++k)
        if (net.buses[k].id != static_cast<int>(k) + 1)
            fail(at("electric.buses", k), "bus ids must be unique and contiguous from 1 (found " +
                                               std::to_string(net.buses[k].id) + ")");
    auto bus_ok = [&](int id) { return id >= 1 && static_cast<std::size_t>(id) <= net.buses.size(); };
    auto node_ok = [&](int id) { return id >= 1 && static_cast<std::size_t>(id) <= net.gas_nodes.size(); };

    for (std::size_t k = 0; k < net.branches.size(); ++k) {
        const auto& br = net.branches[k];
        std::string where = at("electric.branches", k);
        if (!bus_ok(br.from_bus)) fail(where + ".from", "unknown bus " + std::to_string(br.from_bus));
        if (!bus_ok(br.to_bus)) fail(where + ".to", "unknown bus " + std::to_string(br.to_bus));
        if (br.from_bus == br.to_bus) fail(where, "branch connects a bus to itself");
        if (!std::isfinite(br.g) || !std::isfinite(br.b)) fail(where, "non-finite admittance");
    }

    if (net.gas_nodes.empty()) fail("gas.nodes", "no gas nodes");
    if (!(net.sound_speed > 0.0)) fail("gas.sound_speed", "must be positive");
    for (std::size_t k = 0; k < net.gas_nodes.size(); ++k) {
        const auto& n = net.gas_nodes[k];
        if (n.id != static_cast<int>(k) + 1)
            fail(at("gas.nodes", k),
                 "gas node ids must be unique and contiguous from 1 (found " + std::to_string(n.id) + ")");
        if (n.is_source() && !(*n.source_density > 0.0))
            fail(at("gas.nodes", k) + ".source_density", "must be positive");
    }
    for (std::size_t k = 0; k < net.pipelines.size(); ++k) {
        const auto& p = net.pipelines[k];
        std::string where = at("gas.pipelines", k);
        if (!node_ok(p.node_i)) fail(where + ".from", "unknown gas node " + std::to_string(p.node_i));
        if (!node_ok(p.node_j)) fail(where + ".to", "unknown gas node " + std::to_string(p.node_j));
        if (p.node_i == p.node_j) fail(where, "pipeline connects a node to itself");
        if (!(p.length > 0.0)) fail(where + ".length", "must be positive");
        if (!(p.diameter > 0.0)) fail(where + ".diameter_m", "must be positive");
        if (!(p.friction > 0.0)) fail(where + ".friction", "must be positive");
        if (!(p.ratio_i >= 1.0) || !std::isfinite(p.ratio_i)) fail(where + ".ratio_from", "must be >= 1");
        if (!(p.ratio_j >= 1.0) || !std::isfinite(p.ratio_j)) fail(where + ".ratio_to", "must be >= 1");
    }

    std::set<int> gtu_nodes, gtu_buses;
    for (std::size_t k = 0; k < net.gtu_links.size(); ++k) {
        const auto& g = net.gtu_links[k];
        std::string where = at("gtu_links", k);
        if (!node_ok(g.gas_node)) fail(where + ".gas_node", "unknown gas node " + std::to_string(g.gas_node));
        if (!bus_ok(g.bus)) fail(where + ".bus", "unknown bus " + std::to_string(g.bus));
        if (net.gas_nodes[g.gas_node - 1].is_source()) fail(where + ".gas_node", "GTU must draw from a load node");
        if (!(g.efficiency > 0.0)) fail(where + ".efficiency", "must be positive");
        if (!(g.power_w >= 0.0)) fail(where + ".power", "must be nonnegative");
        if (!gtu_nodes.insert(g.gas_node).second) fail(where + ".gas_node", "gas node already feeds a GTU");
        if (!gtu_buses.insert(g.bus).second) fail(where + ".bus", "bus already has a GTU");
    }

    DisjointSets eds(net.buses.size());
    for (const auto& br : net.branches) eds.unite(br.from_bus - 1, br.to_bus - 1);
    for (std::size_t b = 1; b < net.buses.size(); ++b)
        if (eds.find(b) != eds.find(0))
            fail("electric", "grid is disconnected (bus " + std::to_string(b + 1) + " unreachable from bus 1)");

    DisjointSets gds(net.gas_nodes.size());
    for (const auto& p : net.pipelines) gds.unite(p.node_i - 1, p.node_j - 1);
    for (std::size_t n = 1; n < net.gas_nodes.size(); ++n)
        if (gds.find(n) != gds.find(0))
            fail("gas", "gas network is disconnected (node " + std::to_string(n + 1) + " unreachable from node 1)");
    if (net.source_nodes().empty()) fail("gas.nodes", "gas network has no source node");
}

json serialize_network(const IesNetwork& net) {
    json buses = json::array();
    for (const auto& b : net.buses)
        buses.push_back({{"id", b.id}, {"g0", b.shunt_g}, {"b0", b.shunt_b}, {"vm", b.base_vm}, {"va_deg", b.base_va_deg}});
    json branches = json::array();
    for (const auto& br : net.branches)
        branches.push_back({{"from", br.from_bus}, {"to", br.to_bus}, {"g", br.g}, {"b", br.b}});
    json nodes = json::array();
    for (const auto& n : net.gas_nodes) {
        json e = {{"id", n.id}};
        if (n.is_source()) e["source_density"] = *n.source_density;
        nodes.push_back(e);
    }
    json pipes = json::array();
    for (const auto& p : net.pipelines)
        pipes.push_back({{"from", p.node_i},
                         {"to", p.node_j},
                         {"length_m", p.length},
                         {"diameter_m", p.diameter},
                         {"friction", p.friction},
                         {"ratio_from", p.ratio_i},
                         {"ratio_to", p.ratio_j}});
    json links = json::array();
    for (const auto& g : net.gtu_links)
        links.push_back({{"gas_node", g.gas_node}, {"bus", g.bus}, {"efficiency", g.efficiency}, {"power_w", g.power_w}});
    return {{"electric", {{"buses", buses}, {"branches", branches}}},
            {"gas", {{"sound_speed", net.sound_speed}, {"nodes", nodes}, {"pipelines", pipes}}},
            {"gtu_links", links}};
}

std::string network_hash(const IesNetwork& net) {
    std::string text = serialize_network(net).dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Eigen::MatrixXcd admittance_matrix(const IesNetwork& net) {
    const auto n = static_cast<Eigen::Index>(net.n_bus());
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& b : net.buses) Y(b.id - 1, b.id - 1) += std::complex<double>(b.shunt_g, b.shunt_b);
    for (const auto& br : net.branches) {
        std::complex<double> y(br.g, br.b);
        int i = br.from_bus - 1, j = br.to_bus - 1;
        Y(i, i) += y;
        Y(j, j) += y;
        Y(i, j) -= y;
        Y(j, i) -= y;
    }
    return Y;
}

StateLayout::StateLayout(const IesNetwork& net)
    : n_bus_(net.n_bus()), n_gas_(net.n_gas()), n_pipe_(net.n_pipe()), n_state_(net.n_state()) {}

std::size_t StateLayout::e(int bus) const { return 2 * static_cast<std::size_t>(bus - 1); }
std::size_t StateLayout::f(int bus) const { return 2 * static_cast<std::size_t>(bus - 1) + 1; }
std::size_t StateLayout::density(int node) const { return 2 * n_bus_ + static_cast<std::size_t>(node - 1); }
std::size_t StateLayout::flow_ij(std::size_t pipe) const { return 2 * n_bus_ + n_gas_ + 2 * pipe; }
std::size_t StateLayout::flow_ji(std::size_t pipe) const { return 2 * n_bus_ + n_gas_ + 2 * pipe + 1; }

StateComponent StateLayout::component(std::size_t index) const {
    if (index >= n_state_) throw InputError("state index " + std::to_string(index) + " out of range");
    if (index < 2 * n_bus_) {
        int bus = static_cast<int>(index / 2) + 1;
        return {index % 2 == 0 ? StateKind::E : StateKind::F, bus};
    }
    index -= 2 * n_bus_;
    if (index < n_gas_) return {StateKind::Density, static_cast<int>(index) + 1};
    index -= n_gas_;
    int pipe = static_cast<int>(index / 2) + 1;
    return {index % 2 == 0 ? StateKind::FlowIJ : StateKind::FlowJI, pipe};
}

std::string StateLayout::name(std::size_t index) const {
    StateComponent c = component(index);
    std::string id = std::to_string(c.id);
    switch (c.kind) {
        case StateKind::E: return "e_bus" + id;
        case StateKind::F: return "f_bus" + id;
        case StateKind::Density: return "rho_node" + id;
        case StateKind::FlowIJ: return "phi_ij_pipe" + id;
        case StateKind::FlowJI: return "phi_ji_pipe" + id;
    }
    return {};
}

StateLayout state_layout(const IesNetwork& net) { return StateLayout(net); }

}  // namespace iestrack
