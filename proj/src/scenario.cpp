#include "iestrack/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "embedded_scenarios.hpp"
#include "iestrack/errors.hpp"

namespace iestrack {

using nlohmann::json;

namespace {

double num(const json& obj, const char* key, double fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) throw InputError(where + "." + key + ": expected a number");
    return v.get<double>();
}

int integer(const json& obj, const char* key, int fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) throw InputError(where + "." + key + ": expected an integer");
    return v.get<int>();
}

BlockSqrt block_sqrt(const json& doc, const BlockSqrt& fallback, const std::string& where) {
    if (!doc.is_object()) throw InputError(where + ": expected an object");
    BlockSqrt b;
    b.electric = num(doc, "electric", fallback.electric, where);
    b.density = num(doc, "density", fallback.density, where);
    b.flow = num(doc, "flow", fallback.flow, where);
    b.load = num(doc, "load", fallback.load, where);
    b.load_common = num(doc, "load_common", fallback.load_common, where);
    b.electric_common = num(doc, "electric_common", fallback.electric_common, where);
    if (b.load_common < 0 || b.load_common > 1) throw InputError(where + ".load_common: must lie in [0, 1]");
    if (b.electric_common < 0 || b.electric_common > 1) throw InputError(where + ".electric_common: must lie in [0, 1]");
    if (b.electric < 0 || b.density < 0 || b.flow < 0 || b.load < 0) throw InputError(where + ": negative noise factor");
    return b;
}

}  // namespace

const SensorConfig& Scenario::sensors(const std::string& key) const {
    const std::string& k = key.empty() ? default_sensor_set : key;
    auto it = sensor_sets.find(k);
    if (it == sensor_sets.end()) throw InputError("unknown sensor set '" + k + "'");
    return it->second;
}

const NoiseVariances& Scenario::noise(const std::string& key) const {
    const std::string& k = key.empty() ? default_noise : key;
    auto it = noise_levels.find(k);
    if (it == noise_levels.end()) throw InputError("unknown noise level '" + k + "'");
    return it->second;
}

Scenario load_scenario(const json& doc) {
    if (!doc.is_object()) throw InputError("scenario: expected an object");
    if (doc.value("format", std::string()) != "iestrack-scenario")
        throw InputError("scenario: missing or wrong 'format' (expected iestrack-scenario)");
    if (doc.value("version", 0) != 1) throw InputError("scenario: unsupported version");
    Scenario s;
    s.name = doc.value("name", std::string("unnamed"));
    s.network = load_network(doc);

    if (doc.contains("sensor_sets")) {
        for (const auto& [key, value] : doc.at("sensor_sets").items()) {
            SensorConfig cfg = load_sensor_config(value, "sensor_sets." + key);
            MeasurementModel check(s.network, cfg);
            s.sensor_sets[key] = cfg;
        }
    }
    s.default_sensor_set = doc.value("default_sensor_set", s.sensor_sets.empty() ? std::string() : s.sensor_sets.begin()->first);
    if (!s.sensor_sets.empty()) s.sensors();

    if (doc.contains("noise_levels")) {
        for (const auto& [key, value] : doc.at("noise_levels").items()) {
            std::string where = "noise_levels." + key;
            NoiseVariances n;
            n.voltage = num(value, "voltage", 0.0, where);
            n.current = num(value, "current", 0.0, where);
            n.pressure = num(value, "pressure_mpa2", 0.0, where) * 1e12;
            n.mass = num(value, "mass", 0.0, where);
            if (n.voltage < 0 || n.current < 0 || n.pressure < 0 || n.mass < 0)
                throw InputError(where + ": negative variance");
            s.noise_levels[key] = n;
        }
    }
    s.default_noise = doc.value("default_noise", s.noise_levels.empty() ? std::string() : s.noise_levels.begin()->first);
    if (!s.noise_levels.empty()) s.noise();

    if (doc.contains("loads")) {
        const json& l = doc.at("loads");
        s.loads.days = integer(l, "days", 30, "loads");
        s.loads.noise_fraction = num(l, "noise_fraction", 0.02, "loads");
        s.loads.noise_correlation = num(l, "noise_correlation", 0.0, "loads");
        std::set<int> seen;
        const json& nodes = l.at("nodes");
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            std::string where = "loads.nodes[" + std::to_string(k) + "]";
            LoadProfileSpec p;
            p.node = integer(nodes[k], "node", 0, where);
            p.mean = num(nodes[k], "mean", 0.0, where);
            p.daily_amplitude = num(nodes[k], "daily_amplitude", 0.15, where);
            p.weekly_amplitude = num(nodes[k], "weekly_amplitude", 0.05, where);
            p.daily_phase = num(nodes[k], "daily_phase_rad", 0.0, where);
            p.weekly_phase = num(nodes[k], "weekly_phase_rad", 0.0, where);
            if (p.node < 1 || static_cast<std::size_t>(p.node) > s.network.n_gas())
                throw InputError(where + ".node: unknown gas node " + std::to_string(p.node));
            if (s.network.gas_nodes[static_cast<std::size_t>(p.node - 1)].is_source())
                throw InputError(where + ".node: node is a source");
            if (s.network.gtu_for_gas_node(p.node)) throw InputError(where + ".node: node feeds a GTU");
            if (!(p.mean > 0.0)) throw InputError(where + ".mean: must be positive");
            if (!seen.insert(p.node).second) throw InputError(where + ".node: listed twice");
            s.loads.nodes.push_back(p);
        }
        if (s.loads.days < 1) throw InputError("loads.days: must be at least 1");
    }

    if (doc.contains("electric_profile")) {
        const json& e = doc.at("electric_profile");
        auto& p = s.electric_profile;
        p.magnitude_swing = num(e, "magnitude_swing", p.magnitude_swing, "electric_profile");
        p.angle_swing = num(e, "angle_swing_rad", p.angle_swing, "electric_profile");
        p.fluctuation_std = num(e, "fluctuation_std", p.fluctuation_std, "electric_profile");
        p.fluctuation_corr = num(e, "fluctuation_corr", p.fluctuation_corr, "electric_profile");
        p.common_fraction = num(e, "common_fraction", p.common_fraction, "electric_profile");
        if (p.fluctuation_std < 0 || std::abs(p.fluctuation_corr) >= 1.0 || p.common_fraction < 0 ||
            p.common_fraction > 1)
            throw InputError("electric_profile: parameter out of range");
    }

    if (doc.contains("run")) {
        const json& r = doc.at("run");
        s.run.dt = num(r, "dt_s", s.run.dt, "run");
        s.run.steps = integer(r, "steps", s.run.steps, "run");
        s.run.theta = num(r, "theta", s.run.theta, "run");
        s.run.holt_alpha = num(r, "holt_alpha", s.run.holt_alpha, "run");
        s.run.holt_beta = num(r, "holt_beta", s.run.holt_beta, "run");
        if (!(s.run.dt > 0) || s.run.steps < 0) throw InputError("run: dt must be positive and steps nonnegative");
    }

    if (doc.contains("filter")) {
        const json& f = doc.at("filter");
        if (f.contains("process_sqrt")) s.filter.process = block_sqrt(f.at("process_sqrt"), s.filter.process, "filter.process_sqrt");
        if (f.contains("initial_sqrt")) s.filter.initial = block_sqrt(f.at("initial_sqrt"), s.filter.initial, "filter.initial_sqrt");
    }

    if (doc.contains("lstm")) {
        const json& l = doc.at("lstm");
        s.lstm.layers = integer(l, "layers", s.lstm.layers, "lstm");
        s.lstm.hidden = integer(l, "hidden", s.lstm.hidden, "lstm");
        s.lstm.window = integer(l, "window", s.lstm.window, "lstm");
        auto& t = s.lstm.training;
        t.epochs = integer(l, "epochs", t.epochs, "lstm");
        t.learning_rate = num(l, "learning_rate", t.learning_rate, "lstm");
        t.batch = integer(l, "batch", t.batch, "lstm");
        t.clip_norm = num(l, "clip_norm", t.clip_norm, "lstm");
        t.samples_per_epoch = static_cast<std::size_t>(integer(l, "samples_per_epoch", 0, "lstm"));
    }
    return s;
}

Scenario load_scenario_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("scenario parse error: ") + e.what());
    }
    return load_scenario(doc);
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open scenario file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return load_scenario_text(ss.str());
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

const std::string& reference_scenario_text() {
    static const std::string text = embedded::reference_json;
    return text;
}

const std::string& small_scenario_text() {
    static const std::string text = embedded::small_json;
    return text;
}

}  // namespace iestrack
