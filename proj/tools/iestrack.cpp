// iestrack: simulate, train the load forecaster, track, and check observability.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "iestrack/errors.hpp"
#include "iestrack/gas_dynamics.hpp"
#include "iestrack/io.hpp"
#include "iestrack/lstm.hpp"
#include "iestrack/measurement.hpp"
#include "iestrack/rng.hpp"
#include "iestrack/scenario.hpp"
#include "iestrack/simulation.hpp"
#include "iestrack/tracker.hpp"

namespace fs = std::filesystem;
using namespace iestrack;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNegative = 3;
constexpr int kExitNumerical = 4;

struct Options {
    std::string scenario;
    std::uint64_t seed = 1;
    std::string out = "out";
    bool small = false;
    double bad_data = 0.0;
    int jobs = 1;
    std::string sensors;
    std::string noise;
    int steps = -1;
    std::string model;
    std::string measurements;
    std::string data;
    bool grid = false;
    int epochs = -1;
    bool withhold_truth = false;
};

Scenario load(const Options& o) {
    if (o.small) return load_scenario_text(small_scenario_text());
    if (o.scenario.empty()) return load_scenario_text(reference_scenario_text());
    return load_scenario_file(o.scenario);
}

std::string scenario_label(const Options& o) {
    if (o.small) return "<bundled small>";
    return o.scenario.empty() ? "<bundled reference>" : o.scenario;
}

std::vector<std::string> state_names(const IesNetwork& net) {
    StateLayout layout(net);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < layout.size(); ++i) out.push_back(layout.name(i));
    return out;
}

std::vector<std::string> channel_names(const MeasurementModel& model, const IesNetwork& net) {
    std::vector<std::string> out;
    for (const auto& c : model.channels()) out.push_back(channel_name(c, net));
    return out;
}

std::vector<std::string> load_names(const std::vector<int>& nodes) {
    std::vector<std::string> out;
    for (int n : nodes) out.push_back("load_node" + std::to_string(n));
    return out;
}

std::vector<std::string> gtu_names(const IesNetwork& net) {
    std::vector<std::string> out;
    for (const auto& g : net.gtu_links) out.push_back("P_gtu_node" + std::to_string(g.gas_node) + "_bus" + std::to_string(g.bus));
    return out;
}

class Manifest {
public:
    Manifest(const Options& o, std::string subcommand)
        : opts_(o), subcommand_(std::move(subcommand)), start_(std::chrono::steady_clock::now()) {}

    void write(const Scenario& s, const std::vector<std::string>& files, const json& extra = json::object()) const {
        double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::time_t now = std::time(nullptr);
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        json m = {{"scenario", scenario_label(opts_)},
                  {"scenario_name", s.name},
                  {"subcommand", subcommand_},
                  {"seed", opts_.seed},
                  {"output_directory", opts_.out},
                  {"tool_version", IESTRACK_VERSION},
                  {"wall_clock_seconds", seconds},
                  {"created_utc", stamp},
                  {"network_hash", network_hash(s.network)},
                  {"files", files}};
        for (const auto& [k, v] : extra.items()) m[k] = v;
        write_json((fs::path(opts_.out) / "manifest.json").string(), m);
    }

private:
    const Options& opts_;
    std::string subcommand_;
    std::chrono::steady_clock::time_point start_;
};

void prepare_out(const Options& o) { fs::create_directories(o.out); }

std::string out_path(const Options& o, const std::string& name) { return (fs::path(o.out) / name).string(); }

int cmd_simulate(const Options& o) {
    Manifest manifest(o, "simulate");
    Scenario s = load(o);
    SimulationData sim = simulate_scenario(s, o.seed, {o.sensors, o.noise, o.steps});
    MeasurementModel model(s.network, s.sensors(o.sensors));
    if (o.bad_data != 0.0 && sim.measurements.rows() > 0)
        inject_bad_data_rows(sim.measurements, default_bad_data_targets(model),
                             std::max<std::size_t>(1, static_cast<std::size_t>(sim.measurements.rows()) / 3), 3,
                             o.bad_data);
    prepare_out(o);
    const double dt = s.run.dt;
    write_csv(out_path(o, "truth.csv"), time_indexed(sim.truth, state_names(s.network), 0, dt));
    write_csv(out_path(o, "measurements.csv"), time_indexed(sim.measurements, channel_names(model, s.network), 1, dt));
    write_csv(out_path(o, "loads.csv"), time_indexed(sim.true_loads, load_names(s.network.load_nodes()), 0, dt));
    write_csv(out_path(o, "gtu_powers.csv"), time_indexed(sim.gtu_powers, gtu_names(s.network), 0, dt));
    write_load_csv(out_path(o, "load_history.csv"), sim.load_history);
    manifest.write(s, {"truth.csv", "measurements.csv", "loads.csv", "gtu_powers.csv", "load_history.csv"},
                   {{"sensor_set", o.sensors.empty() ? s.default_sensor_set : o.sensors},
                    {"noise_level", o.noise.empty() ? s.default_noise : o.noise},
                    {"history_offset", sim.history_offset},
                    {"bad_data", o.bad_data}});
    std::cout << "simulated " << sim.measurements.rows() << " steps, " << model.size() << " channels -> " << o.out
              << "\n";
    return kExitOk;
}

TrainingConfig training_config(const Scenario& s, const Options& o) {
    TrainingConfig t = s.lstm.training;
    t.seed = o.seed;
    if (o.epochs >= 0) t.epochs = o.epochs;
    return t;
}

LoadSeries training_data(const Scenario& s, const Options& o) {
    if (!o.data.empty()) return read_load_csv(o.data);
    return scenario_load_history(s, o.seed);
}

int cmd_train(const Options& o) {
    Manifest manifest(o, "train-lstm");
    Scenario s = load(o);
    LoadSeries series = training_data(s, o);
    TrainingConfig cfg = training_config(s, o);
    SeriesSplit split = split_series(series.length());
    prepare_out(o);
    std::vector<std::string> files;
    json extra = {{"data", o.data.empty() ? "synthetic" : o.data}, {"epochs", cfg.epochs}};
    if (o.grid) {
        std::vector<GridCell> cells = run_grid(series, GridSpec{}, cfg, o.jobs);
        Eigen::MatrixXd table(static_cast<Eigen::Index>(cells.size()), 6);
        for (std::size_t k = 0; k < cells.size(); ++k)
            table.row(static_cast<Eigen::Index>(k)) << cells[k].layers, cells[k].hidden, cells[k].window,
                cells[k].train_mape, cells[k].test_mape, cells[k].final_loss;
        write_csv(out_path(o, "grid.csv"),
                  {{"layers", "hidden", "window", "train_mape_pct", "test_mape_pct", "final_loss"}, table});
        files.push_back("grid.csv");
        auto best = std::min_element(cells.begin(), cells.end(),
                                     [](const auto& a, const auto& b) { return a.test_mape < b.test_mape; });
        std::cout << "grid: " << cells.size() << " cells, best L=" << best->layers << " H=" << best->hidden
                  << " w=" << best->window << " test MAPE " << best->test_mape << "%\n";
    } else {
        LstmModel init = make_lstm(s.lstm.layers, s.lstm.hidden, s.lstm.window, o.seed);
        TrainingResult r = lstm_train(init, series, cfg, split);
        double train_mape = evaluate_forecasts(r.model, series, 0, split.train_end).mape;
        double test_mape = evaluate_forecasts(r.model, series, split.train_end, split.test_end).mape;
        json model_doc = serialize_model(r.model);
        model_doc["network_hash"] = network_hash(s.network);
        write_json(out_path(o, "lstm_model.json"), model_doc);
        Eigen::MatrixXd loss(static_cast<Eigen::Index>(r.loss.size()), 3);
        for (std::size_t k = 0; k < r.loss.size(); ++k)
            loss.row(static_cast<Eigen::Index>(k)) << static_cast<double>(k), r.loss[k], r.smoothed_loss[k];
        write_csv(out_path(o, "loss.csv"), {{"epoch", "loss", "smoothed_loss"}, loss});
        write_json(out_path(o, "mape_report.json"),
                   {{"train_mape_pct", train_mape},
                    {"test_mape_pct", test_mape},
                    {"layers", r.model.layers},
                    {"hidden", r.model.hidden},
                    {"window", r.model.window},
                    {"epochs", cfg.epochs},
                    {"nodes", series.nodes.size()},
                    {"series_length", series.length()}});
        files = {"lstm_model.json", "loss.csv", "mape_report.json"};
        std::cout << "train MAPE " << train_mape << "%, test MAPE " << test_mape << "%\n";
    }
    manifest.write(s, files, extra);
    return kExitOk;
}

struct TrackInputs {
    Eigen::MatrixXd measurements;
    Eigen::MatrixXd gtu_powers;
    std::optional<Eigen::MatrixXd> truth;
    std::string source;
};

TrackInputs read_track_inputs(const Scenario& s, const Options& o, const MeasurementModel& model) {
    TrackInputs in;
    if (o.measurements.empty()) {
        SimulationData sim = simulate_scenario(s, o.seed, {o.sensors, o.noise, o.steps});
        in.measurements = sim.measurements;
        in.gtu_powers = sim.gtu_powers;
        in.truth = sim.truth;
        in.source = "simulated";
        return in;
    }
    fs::path dir = o.measurements;
    fs::path zfile = dir;
    if (fs::is_directory(dir)) {
        zfile = dir / "measurements.csv";
        fs::path mf = dir / "manifest.json";
        if (fs::exists(mf)) {
            json m = read_json(mf.string());
            if (m.value("network_hash", std::string()) != network_hash(s.network))
                throw InputError("measurements in " + dir.string() + " were produced for a different network");
        }
    } else {
        dir = dir.parent_path();
    }
    CsvTable z = read_csv(zfile.string());
    std::vector<std::string> expected = channel_names(model, s.network);
    if (z.header.size() != expected.size() + 2 ||
        !std::equal(expected.begin(), expected.end(), z.header.begin() + 2))
        throw InputError(zfile.string() + ": channels do not match the selected sensor set");
    in.measurements = z.data.rightCols(z.data.cols() - 2);
    in.source = zfile.string();
    const auto steps = in.measurements.rows();
    fs::path pfile = dir / "gtu_powers.csv";
    if (fs::exists(pfile)) {
        in.gtu_powers = read_csv(pfile.string()).data.rightCols(static_cast<Eigen::Index>(s.network.gtu_links.size()));
    } else {
        in.gtu_powers.resize(steps + 1, static_cast<Eigen::Index>(s.network.gtu_links.size()));
        for (std::size_t g = 0; g < s.network.gtu_links.size(); ++g)
            in.gtu_powers.col(static_cast<Eigen::Index>(g)).setConstant(s.network.gtu_links[g].power_w);
    }
    fs::path tfile = dir / "truth.csv";
    if (!o.withhold_truth && fs::exists(tfile)) {
        CsvTable t = read_csv(tfile.string());
        in.truth = Eigen::MatrixXd(t.data.rightCols(t.data.cols() - 2));
        if (in.truth->cols() != static_cast<Eigen::Index>(s.network.n_state()) || in.truth->rows() != steps + 1)
            throw InputError(tfile.string() + ": shape does not match the measurement stream");
    }
    return in;
}

Eigen::VectorXd nominal_state(const Scenario& s) {
    const IesNetwork& net = s.network;
    StateLayout layout(net);
    Eigen::VectorXd x(static_cast<Eigen::Index>(layout.size()));
    for (const auto& b : net.buses) {
        double va = b.base_va_deg * M_PI / 180.0;
        x(static_cast<Eigen::Index>(layout.e(b.id))) = b.base_vm * std::cos(va);
        x(static_cast<Eigen::Index>(layout.f(b.id))) = b.base_vm * std::sin(va);
    }
    std::map<int, double> loads;
    for (int m : net.load_nodes()) loads[m] = 0.0;
    for (const auto& spec : s.loads.nodes) loads[spec.node] = spec.mean;
    Eigen::VectorXd powers(static_cast<Eigen::Index>(net.gtu_links.size()));
    for (std::size_t g = 0; g < net.gtu_links.size(); ++g) powers(static_cast<Eigen::Index>(g)) = net.gtu_links[g].power_w;
    x.tail(static_cast<Eigen::Index>(layout.gas_size())) = solve_steady_state(net, build_u(net, loads, powers));
    return x;
}

json block_summary(const Eigen::VectorXd& values, const std::vector<std::string>& labels) {
    std::map<std::string, std::vector<double>> groups;
    for (Eigen::Index k = 0; k < values.size(); ++k)
        if (std::isfinite(values(k))) groups[labels[static_cast<std::size_t>(k)]].push_back(values(k));
    json out = json::object();
    for (const auto& [name, v] : groups) {
        double sum = 0.0, mx = 0.0;
        for (double x : v) {
            sum += x;
            mx = std::max(mx, x);
        }
        out[name] = {{"count", v.size()}, {"mean", sum / static_cast<double>(v.size())}, {"max", mx}};
    }
    return out;
}

int cmd_track(const Options& o) {
    Manifest manifest(o, "track");
    Scenario s = load(o);
    const IesNetwork& net = s.network;
    MeasurementModel hmodel(net, s.sensors(o.sensors));
    TrackInputs in = read_track_inputs(s, o, hmodel);
    if (o.measurements.empty() && o.bad_data != 0.0 && in.measurements.rows() > 0)
        inject_bad_data_rows(in.measurements, default_bad_data_targets(hmodel),
                             std::max<Eigen::Index>(1, in.measurements.rows() / 3), 3, o.bad_data);

    LstmModel model;
    if (!o.model.empty()) {
        json doc = read_json(o.model);
        if (doc.contains("network_hash") && doc["network_hash"] != network_hash(net))
            throw InputError(o.model + " was trained for a different network");
        model = load_model(doc);
    } else {
        LoadSeries series = scenario_load_history(s, o.seed);
        model = lstm_train(make_lstm(s.lstm.layers, s.lstm.hidden, s.lstm.window, o.seed), series,
                           training_config(s, o), split_series(series.length()))
                    .model;
    }
    TrackingSetup setup = make_tracking_setup(s, model, o.sensors, o.noise);
    Eigen::VectorXd x0;
    if (in.truth) {
        std::mt19937_64 init = rng_stream(o.seed, "init");
        x0 = perturbed_initial_estimate(in.truth->row(0).transpose(), net, s.filter, init);
    } else {
        x0 = nominal_state(s);
    }
    TrackingRun run = run_tracking(setup, in.measurements, in.gtu_powers, x0, in.truth);

    prepare_out(o);
    const double dt = s.run.dt;
    std::vector<std::string> states = state_names(net);
    write_csv(out_path(o, "estimates.csv"), time_indexed(run.estimates, states, 0, dt));
    write_csv(out_path(o, "predictions.csv"), time_indexed(run.predictions, states, 0, dt));
    write_csv(out_path(o, "load_forecasts.csv"), time_indexed(run.load_forecasts, load_names(run.forecast_nodes), 1, dt));
    std::vector<std::string> holt_cols;
    for (std::size_t k = 0; k < 2 * net.n_bus(); ++k) holt_cols.push_back("level_" + states[k]);
    for (std::size_t k = 0; k < 2 * net.n_bus(); ++k) holt_cols.push_back("trend_" + states[k]);
    Eigen::MatrixXd holt(run.holt_level.rows(), 2 * run.holt_level.cols());
    holt << run.holt_level, run.holt_trend;
    write_csv(out_path(o, "holt.csv"), time_indexed(holt, holt_cols, 0, dt));
    std::vector<std::string> files = {"estimates.csv", "predictions.csv", "load_forecasts.csv", "holt.csv", "report.json"};

    json report = {{"format", "iestrack-run-report"},
                   {"version", 1},
                   {"scenario", s.name},
                   {"seed", o.seed},
                   {"tool_version", IESTRACK_VERSION},
                   {"steps", in.measurements.rows()},
                   {"sensor_set", o.sensors.empty() ? s.default_sensor_set : o.sensors},
                   {"noise_level", o.noise.empty() ? s.default_noise : o.noise},
                   {"measurement_source", in.source},
                   {"bad_data", o.bad_data},
                   {"config",
                    {{"dt_s", s.run.dt},
                     {"theta", s.run.theta},
                     {"holt_alpha", s.run.holt_alpha},
                     {"holt_beta", s.run.holt_beta},
                     {"process_sqrt",
                      {{"electric", s.filter.process.electric},
                       {"density", s.filter.process.density},
                       {"flow", s.filter.process.flow},
                       {"load", s.filter.process.load},
                       {"load_common", s.filter.process.load_common},
                       {"electric_common", s.filter.process.electric_common}}},
                     {"initial_sqrt",
                      {{"electric", s.filter.initial.electric},
                       {"density", s.filter.initial.density},
                       {"flow", s.filter.initial.flow}}},
                     {"lstm", {model.layers, model.hidden, model.window}}}}};
    int code = kExitOk;
    if (run.metrics.available) {
        std::vector<std::string> channels = channel_names(hmodel, net);
        write_csv(out_path(o, "filter_coefficients.csv"),
                  {channels, run.metrics.filter_coefficients.transpose()});
        write_csv(out_path(o, "average_variances.csv"), {states, run.metrics.average_variances.transpose()});
        files.push_back("filter_coefficients.csv");
        files.push_back("average_variances.csv");
        std::vector<std::string> blocks;
        for (const auto& c : hmodel.channels()) blocks.push_back(block_name(c.block));
        std::vector<std::string> kinds;
        StateLayout layout(net);
        for (std::size_t i = 0; i < layout.size(); ++i) {
            switch (layout.component(i).kind) {
                case StateKind::E: kinds.push_back("e"); break;
                case StateKind::F: kinds.push_back("f"); break;
                case StateKind::Density: kinds.push_back("rho"); break;
                default: kinds.push_back("phi"); break;
            }
        }
        const Eigen::VectorXd& fc = run.metrics.filter_coefficients;
        std::size_t below = 0, valid = 0;
        for (Eigen::Index k = 0; k < fc.size(); ++k)
            if (std::isfinite(fc(k))) {
                ++valid;
                if (fc(k) < 1.0) ++below;
            }
        report["metrics"] = {{"available", true},
                             {"filter_coefficients", block_summary(fc, blocks)},
                             {"average_variances", block_summary(run.metrics.average_variances, kinds)},
                             {"channels_below_one", below},
                             {"channels_evaluated", valid},
                             {"load_forecast_mape_pct", run.metrics.load_mape}};
        std::cout << below << "/" << valid << " filter coefficients below 1, load forecast MAPE "
                  << run.metrics.load_mape << "%\n";
    } else {
        report["metrics"] = {{"available", false}, {"reason", "truth withheld"}};
        std::cout << "truth unavailable: metrics skipped\n";
    }
    write_json(out_path(o, "report.json"), report);
    manifest.write(s, files);
    return code;
}

int cmd_observability(const Options& o) {
    Scenario s = load(o);
    const IesNetwork& net = s.network;
    SensorConfig sensors = o.sensors == "none" ? SensorConfig{} : s.sensors(o.sensors);
    Eigen::VectorXd x0 = nominal_state(s);
    StateLayout layout(net);
    Eigen::VectorXd xg = x0.tail(static_cast<Eigen::Index>(layout.gas_size()));
    std::map<int, double> loads = extract_loads(x0, net);
    Eigen::VectorXd powers(static_cast<Eigen::Index>(net.gtu_links.size()));
    for (std::size_t g = 0; g < net.gtu_links.size(); ++g) powers(static_cast<Eigen::Index>(g)) = net.gtu_links[g].power_w;
    GasStepSystem sys(net, s.run.dt, GasStepOptions{s.run.theta, xg});
    ObservabilityReport r = observability_check(net, sensors, x0, build_u(net, loads, powers), sys, s.run.holt_alpha);
    std::cout << "rank " << r.rank << " of n_x " << r.n << ": " << (r.observable ? "observable" : "not observable")
              << (r.tolerance_sensitive ? " (tolerance-sensitive)" : "") << "\n";
    if (!o.out.empty() && o.out != "out") {
        Manifest manifest(o, "observability");
        prepare_out(o);
        write_json(out_path(o, "observability.json"),
                   {{"rank", r.rank},
                    {"n_x", r.n},
                    {"observable", r.observable},
                    {"sigma_max", r.sigma_max},
                    {"tolerance", r.tolerance},
                    {"smallest_kept", r.smallest_kept},
                    {"largest_dropped", r.largest_dropped},
                    {"tolerance_sensitive", r.tolerance_sensitive},
                    {"blocks", r.blocks},
                    {"dense", r.dense}});
        manifest.write(s, {"observability.json"});
    }
    return r.observable ? kExitOk : kExitNegative;
}

void setup_logging() {
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("IESTRACK_LOG")) spdlog::set_level(spdlog::level::from_str(env));
    spdlog::set_pattern("[%l] %v");
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Electricity-gas state tracking with a square-root cubature Kalman filter and LSTM load forecasts"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--scenario", o.scenario, "Scenario file (default: bundled reference)");
        sub->add_option("--seed", o.seed, "Run seed")->capture_default_str();
        sub->add_option("--out", o.out, "Output directory")->capture_default_str();
        sub->add_flag("--small", o.small, "Use the bundled 3-bus/4-node network");
        sub->add_option("--jobs", o.jobs, "Parallel grid cells")->check(CLI::PositiveNumber);
        sub->add_option("--sensors", o.sensors, "Sensor set name");
        sub->add_option("--noise", o.noise, "Noise level name");
        sub->add_option("--steps", o.steps, "Number of steps (default: scenario)");
        sub->add_option("--epochs", o.epochs, "Override LSTM training epochs");
    };
    auto* sim = app.add_subcommand("simulate", "Ground truth and noisy measurements");
    common(sim);
    sim->add_option("--bad-data", o.bad_data, "Deviation added to 5 channels for 3 steps");
    auto* train = app.add_subcommand("train-lstm", "Train the load forecaster");
    common(train);
    train->add_option("--data", o.data, "Load CSV (timestamp_s,node,kg_s); default synthetic");
    train->add_flag("--grid", o.grid, "Run the 2x3x3 layers/units/window grid");
    auto* track = app.add_subcommand("track", "Run the tracking filter");
    common(track);
    track->add_option("--model", o.model, "Trained model file (default: train inline)");
    track->add_option("--measurements", o.measurements, "Directory or CSV from simulate (default: simulate inline)");
    track->add_option("--bad-data", o.bad_data, "Deviation added to 5 channels for 3 steps");
    track->add_flag("--withhold-truth", o.withhold_truth, "Ignore truth.csv next to the measurements");
    auto* obs = app.add_subcommand("observability", "Rank test of the stacked observability matrix");
    common(obs);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInput;
    }
    try {
        if (sim->parsed()) return cmd_simulate(o);
        if (train->parsed()) return cmd_train(o);
        if (track->parsed()) return cmd_track(o);
        if (obs->parsed()) return cmd_observability(o);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
