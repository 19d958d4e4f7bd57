#include "iestrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <spdlog/spdlog.h>

#include "iestrack/errors.hpp"
#include "iestrack/sckf.hpp"

namespace iestrack {

Eigen::VectorXd joint_transition(const Eigen::VectorXd& x, const AffineMap& electric, const GasInput& u,
                                 const GasStepSystem& sys) {
    const Eigen::Index ne = electric.offset.size();
    const auto ng = static_cast<Eigen::Index>(sys.size());
    if (x.size() != ne + ng) throw InputError("joint_transition: state has wrong length");
    Eigen::VectorXd out(x.size());
    out.head(ne) = electric.apply(x.head(ne));
    out.tail(ng) = gas_predict(x.tail(ng), u, sys);
    return out;
}

GasInput build_u(const IesNetwork& net, const std::map<int, double>& forecasts, const Eigen::VectorXd& gtu_powers) {
    if (static_cast<std::size_t>(gtu_powers.size()) != net.gtu_links.size())
        throw InputError("build_u: expected " + std::to_string(net.gtu_links.size()) + " GTU powers");
    const std::vector<int> loads = net.load_nodes();
    Eigen::VectorXd flows(static_cast<Eigen::Index>(loads.size()));
    for (std::size_t l = 0; l < loads.size(); ++l) {
        double v;
        if (auto g = net.gtu_for_gas_node(loads[l])) {
            v = gtu_load(gtu_powers(static_cast<Eigen::Index>(*g)), net.gtu_links[*g].efficiency);
        } else {
            auto it = forecasts.find(loads[l]);
            if (it == forecasts.end()) throw InputError("build_u: no load value for gas node " + std::to_string(loads[l]));
            v = it->second;
        }
        flows(static_cast<Eigen::Index>(l)) = v;
    }
    return make_gas_input(net, flows);
}

std::map<int, double> extract_loads(const Eigen::VectorXd& x, const IesNetwork& net) {
    const auto ng = static_cast<Eigen::Index>(net.n_gas() + 2 * net.n_pipe());
    if (static_cast<std::size_t>(x.size()) != net.n_state()) throw InputError("extract_loads: state has wrong length");
    Eigen::VectorXd gas = x.tail(ng);
    std::map<int, double> out;
    for (int m : net.load_nodes()) out[m] = node_delivery(net, gas, m);
    return out;
}

LoadForecaster::LoadForecaster(const LstmModel& model, const std::map<int, double>& initial) : model_(&model) {
    for (const auto& [node, bounds] : model.bounds) {
        auto it = initial.find(node);
        if (it == initial.end()) throw InputError("forecaster: no initial load for node " + std::to_string(node));
        nodes_.push_back(node);
        windows_[node] = std::deque<double>(static_cast<std::size_t>(model.window), it->second);
    }
}

void LoadForecaster::push(const std::map<int, double>& loads) {
    for (int node : nodes_) {
        auto& w = windows_[node];
        w.pop_front();
        w.push_back(loads.at(node));
    }
}

std::map<int, double> LoadForecaster::forecast() const {
    Eigen::MatrixXd windows(model_->window, static_cast<Eigen::Index>(nodes_.size()));
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        const auto& w = windows_.at(nodes_[k]);
        const auto& b = model_->bounds.at(nodes_[k]);
        for (std::size_t i = 0; i < w.size(); ++i)
            windows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = normalize(w[i], b);
    }
    std::map<int, double> out;
    if (nodes_.empty()) return out;
    Eigen::VectorXd y = lstm_forward_batch(*model_, windows);
    for (std::size_t k = 0; k < nodes_.size(); ++k)
        out[nodes_[k]] = denormalize(y(static_cast<Eigen::Index>(k)), model_->bounds.at(nodes_[k]));
    return out;
}

TrackingSetup make_tracking_setup(const Scenario& scenario, const LstmModel& model, const std::string& sensor_set,
                                  const std::string& noise_level) {
    for (const auto& spec : scenario.loads.nodes)
        if (!model.bounds.count(spec.node))
            throw InputError("LSTM model has no normalization bounds for gas node " + std::to_string(spec.node));
    return {scenario.network, scenario.sensors(sensor_set), scenario.noise(noise_level), scenario.filter, scenario.run,
            model};
}

namespace {

Eigen::VectorXd block_diagonal(const IesNetwork& net, const BlockSqrt& b) {
    StateLayout layout(net);
    Eigen::VectorXd d(static_cast<Eigen::Index>(layout.size()));
    const auto ne = static_cast<Eigen::Index>(layout.electric_size());
    const auto nr = static_cast<Eigen::Index>(net.n_gas());
    d.head(ne).setConstant(b.electric);
    d.segment(ne, nr).setConstant(b.density);
    d.tail(d.size() - ne - nr).setConstant(b.flow);
    return d;
}

/// Block factors with source densities held, common electric modes, and forecast-load noise pushed through one
/// gas step.
Eigen::MatrixXd process_sqrt(const IesNetwork& net, const BlockSqrt& b, const GasStepSystem& sys,
                             const std::map<int, double>& forecast_loads) {
    Eigen::VectorXd d = block_diagonal(net, b);
    const StateLayout layout(net);
    for (int s : net.source_nodes()) d(static_cast<Eigen::Index>(layout.density(s))) = 0.0;
    const auto n = d.size();
    const auto ne = static_cast<Eigen::Index>(layout.electric_size());
    d.head(ne) *= std::sqrt(1.0 - b.electric_common);
    Eigen::MatrixXd electric = Eigen::MatrixXd::Zero(n, 2);
    for (const auto& bus : net.buses) {
        electric(static_cast<Eigen::Index>(layout.e(bus.id)), 0) = std::sqrt(b.electric_common) * b.electric;
        electric(static_cast<Eigen::Index>(layout.f(bus.id)), 1) = std::sqrt(b.electric_common) * b.electric;
    }
    if (b.load == 0.0 || forecast_loads.empty()) {
        if (b.electric_common == 0.0) return d.asDiagonal();
        Eigen::MatrixXd m(n, n + 2);
        m << Eigen::MatrixXd(d.asDiagonal()), electric;
        return tria(m);
    }
    const auto ng = static_cast<Eigen::Index>(sys.size());
    const std::vector<int> loads = net.load_nodes();
    const auto first_balance = ng - static_cast<Eigen::Index>(loads.size());
    const auto k = static_cast<Eigen::Index>(forecast_loads.size());
    Eigen::MatrixXd inject = Eigen::MatrixXd::Zero(ng, k + 1);
    const double own = std::sqrt(1.0 - b.load_common), common = std::sqrt(b.load_common);
    Eigen::Index col = 0;
    for (const auto& [node, value] : forecast_loads) {
        auto at = std::find(loads.begin(), loads.end(), node);
        const Eigen::Index row = first_balance + (at - loads.begin());
        inject(row, col++) = own * b.load * std::abs(value);
        inject(row, k) = common * b.load * std::abs(value);
    }
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n + 2 + inject.cols());
    m.leftCols(n) = d.asDiagonal();
    m.middleCols(n, 2) = electric;
    m.bottomRightCorner(ng, inject.cols()) = sys.solve_many(inject);
    return tria(m);
}

}  // namespace

Eigen::VectorXd perturbed_initial_estimate(const Eigen::VectorXd& truth0, const IesNetwork& net,
                                           const FilterTuning& tuning, std::mt19937_64& rng) {
    Eigen::VectorXd s = block_diagonal(net, tuning.initial);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd x = truth0;
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += s(i) * normal(rng);
    return x;
}

TrackingRun run_tracking(const TrackingSetup& setup, const Eigen::MatrixXd& measurements,
                         const Eigen::MatrixXd& gtu_powers, const Eigen::VectorXd& x0,
                         const std::optional<Eigen::MatrixXd>& truth) {
    const IesNetwork& net = setup.network;
    const StateLayout layout(net);
    const auto n = static_cast<Eigen::Index>(layout.size());
    const auto ne = static_cast<Eigen::Index>(layout.electric_size());
    const auto ng = static_cast<Eigen::Index>(layout.gas_size());
    const auto steps = static_cast<std::size_t>(measurements.rows());
    MeasurementModel hmodel(net, setup.sensors);
    if (x0.size() != n) throw InputError("initial estimate has wrong length");
    if (measurements.cols() != static_cast<Eigen::Index>(hmodel.size()))
        throw InputError("measurement stream has " + std::to_string(measurements.cols()) + " channels, sensor set has " +
                         std::to_string(hmodel.size()));
    if (gtu_powers.rows() < static_cast<Eigen::Index>(steps + 1) ||
        gtu_powers.cols() != static_cast<Eigen::Index>(net.gtu_links.size()))
        throw InputError("GTU power profile does not cover the run");
    if (truth && truth->rows() != static_cast<Eigen::Index>(steps + 1)) throw InputError("truth length mismatch");

    std::map<int, double> loads0 = extract_loads(x0, net);
    LoadForecaster forecaster(setup.model, loads0);
    // Loads that are neither forecast nor GTU-driven carry no demand.
    std::map<int, double> known_zero;
    for (int m : net.load_nodes())
        if (!net.gtu_for_gas_node(m) && !setup.model.bounds.count(m)) known_zero[m] = 0.0;

    auto with_zero = [&](std::map<int, double> f) {
        f.insert(known_zero.begin(), known_zero.end());
        return f;
    };
    std::map<int, double> initial_forecast;
    for (int node : forecaster.nodes()) initial_forecast[node] = loads0.at(node);
    Eigen::VectorXd reference =
        solve_steady_state(net, build_u(net, with_zero(initial_forecast), gtu_powers.row(0).transpose()));
    GasStepSystem sys(net, setup.run.dt, GasStepOptions{setup.run.theta, reference});

    const Eigen::MatrixXd& C = hmodel.jacobian();
    Eigen::VectorXd sr = hmodel.variances(setup.noise).cwiseSqrt();
    SqrtFilterState fs;
    fs.x = x0;
    fs.S = block_diagonal(net, setup.filter.initial).asDiagonal();
    fs.SQ = process_sqrt(net, setup.filter.process, sys, initial_forecast);
    fs.SR = sr.asDiagonal();

    TrackingRun run;
    run.measurements = measurements;
    if (truth) run.truth = *truth;
    run.forecast_nodes = forecaster.nodes();
    run.estimates.resize(static_cast<Eigen::Index>(steps + 1), n);
    run.predictions.resize(static_cast<Eigen::Index>(steps + 1), n);
    run.holt_level.resize(static_cast<Eigen::Index>(steps + 1), ne);
    run.holt_trend.resize(static_cast<Eigen::Index>(steps + 1), ne);
    run.load_forecasts.resize(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(run.forecast_nodes.size()));
    run.estimates.row(0) = x0.transpose();
    run.predictions.row(0) = x0.transpose();

    HoltState holt = holt_init(x0.head(ne), x0.head(ne), setup.run.holt_alpha, setup.run.holt_beta);
    run.holt_level.row(0) = holt.level.transpose();
    run.holt_trend.row(0) = holt.trend.transpose();

    BatchFunction h = [&C](const Eigen::MatrixXd& pts) { return Eigen::MatrixXd(C * pts); };
    for (std::size_t t = 0; t < steps; ++t) {
        const auto row = static_cast<Eigen::Index>(t + 1);
        HoltForecast refreshed = holt_update(holt, fs.x.head(ne));
        AffineMap electric = affine_transition(holt, refreshed.state);
        holt = refreshed.state;

        std::map<int, double> forecasts = forecaster.forecast();
        for (std::size_t k = 0; k < run.forecast_nodes.size(); ++k)
            run.load_forecasts(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) =
                forecasts.at(run.forecast_nodes[k]);
        GasInput u = build_u(net, with_zero(forecasts), gtu_powers.row(row).transpose());

        BatchFunction f = [&](const Eigen::MatrixXd& pts) {
            Eigen::MatrixXd out(pts.rows(), pts.cols());
            out.topRows(ne) = (electric.gain * pts.topRows(ne)).colwise() + electric.offset;
            Eigen::MatrixXd rhs(ng, pts.cols());
            for (Eigen::Index c = 0; c < pts.cols(); ++c) {
                try {
                    rhs.col(c) = sys.rhs(pts.col(c).tail(ng), u);
                } catch (const std::exception& e) {
                    throw NumericalError("cubature point " + std::to_string(c) + ": " + e.what());
                }
            }
            out.bottomRows(ng) = sys.solve_many(rhs);
            return out;
        };
        try {
            GaussianSqrt pred = predict(fs, f);
            run.predictions.row(row) = pred.x.transpose();
            GaussianSqrt est = update(pred, h, measurements.row(static_cast<Eigen::Index>(t)).transpose(), fs.SR);
            fs.x = est.x;
            fs.S = est.S;
        } catch (const NumericalError& e) {
            throw NumericalError("tracking step " + std::to_string(t + 1) + ": " + e.what());
        }
        run.estimates.row(row) = fs.x.transpose();
        run.holt_level.row(row) = holt.level.transpose();
        run.holt_trend.row(row) = holt.trend.transpose();
        forecaster.push(extract_loads(fs.x, net));
    }
    spdlog::debug("tracking finished: {} steps", steps);

    if (truth) {
        run.metrics.available = true;
        run.metrics.filter_coefficients = filter_coefficients(run, hmodel);
        run.metrics.average_variances = average_variances(run);
        double s = 0.0;
        std::size_t count = 0;
        for (std::size_t t = 1; t <= steps; ++t) {
            auto actual = extract_loads(run.truth.row(static_cast<Eigen::Index>(t)).transpose(), net);
            for (std::size_t k = 0; k < run.forecast_nodes.size(); ++k) {
                double a = actual.at(run.forecast_nodes[k]);
                if (a == 0.0) continue;
                s += std::abs(run.load_forecasts(static_cast<Eigen::Index>(t - 1), static_cast<Eigen::Index>(k)) - a) /
                     std::abs(a);
                ++count;
            }
        }
        run.metrics.load_mape = count > 0 ? 100.0 * s / static_cast<double>(count) : 0.0;
    }
    return run;
}

Eigen::VectorXd filter_coefficients(const TrackingRun& run, const MeasurementModel& model) {
    if (run.truth.size() == 0) throw InputError("filter coefficients need the truth trajectory");
    const Eigen::Index T = run.measurements.rows();
    const Eigen::MatrixXd& C = model.jacobian();
    Eigen::MatrixXd q = run.truth.bottomRows(T) * C.transpose();
    Eigen::MatrixXd qhat = run.estimates.bottomRows(T) * C.transpose();
    Eigen::VectorXd num = (qhat - q).colwise().squaredNorm().transpose();
    Eigen::VectorXd den = (run.measurements - q).colwise().squaredNorm().transpose();
    Eigen::VectorXd fc(num.size());
    for (Eigen::Index k = 0; k < fc.size(); ++k)
        fc(k) = den(k) > 0.0 ? num(k) / den(k) : std::numeric_limits<double>::quiet_NaN();
    return fc;
}

Eigen::VectorXd average_variances(const TrackingRun& run) {
    if (run.truth.size() == 0) throw InputError("average variances need the truth trajectory");
    const Eigen::Index T = run.estimates.rows() - 1;
    if (T <= 0) return Eigen::VectorXd::Zero(run.estimates.cols());
    return ((run.estimates.bottomRows(T) - run.truth.bottomRows(T)).colwise().squaredNorm() / static_cast<double>(T))
        .transpose();
}

std::vector<std::size_t> default_bad_data_targets(const MeasurementModel& model) {
    std::vector<std::size_t> out;
    auto take = [&](Block b, int count) {
        for (std::size_t k = 0; k < model.size() && count > 0; ++k)
            if (model.channels()[k].block == b) {
                out.push_back(k);
                --count;
            }
    };
    take(Block::E, 2);
    take(Block::BR, 1);
    take(Block::P, 1);
    take(Block::M, 1);
    return out;
}

void inject_bad_data_rows(Eigen::MatrixXd& measurements, const std::vector<std::size_t>& targets,
                          std::size_t first_step, std::size_t count, double deviation) {
    for (std::size_t t = first_step; t < first_step + count; ++t) {
        if (t < 1 || t > static_cast<std::size_t>(measurements.rows()))
            throw InputError("bad-data step " + std::to_string(t) + " outside the run");
        for (std::size_t k : targets) {
            if (k >= static_cast<std::size_t>(measurements.cols())) throw InputError("bad-data channel out of range");
            measurements(static_cast<Eigen::Index>(t - 1), static_cast<Eigen::Index>(k)) *= 1.0 + deviation;
        }
    }
}

namespace {

void rank_from_singular_values(const Eigen::VectorXd& sv, Eigen::Index rows, Eigen::Index n,
                               ObservabilityReport& r) {
    r.sigma_max = sv.size() ? sv.maxCoeff() : 0.0;
    r.tolerance = static_cast<double>(std::max(rows, n)) * std::numeric_limits<double>::epsilon() * r.sigma_max;
    r.rank = 0;
    r.smallest_kept = 0.0;
    r.largest_dropped = 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > r.tolerance && r.sigma_max > 0.0) {
            ++r.rank;
            r.smallest_kept = r.rank == 1 ? sv(i) : std::min(r.smallest_kept, sv(i));
        } else {
            r.largest_dropped = std::max(r.largest_dropped, sv(i));
        }
    }
    r.tolerance_sensitive = (r.rank > 0 && r.smallest_kept < 100.0 * r.tolerance) ||
                            (r.largest_dropped > 0.01 * r.tolerance && r.largest_dropped > 0.0);
}

}  // namespace

std::size_t stacked_rank(const Eigen::MatrixXd& c, const Eigen::MatrixXd& phi, bool dense, ObservabilityReport* report) {
    ObservabilityReport local;
    ObservabilityReport& r = report ? *report : local;
    const Eigen::Index n = phi.cols(), m = c.rows();
    r.n = static_cast<std::size_t>(n);
    r.dense = dense;
    r.blocks = 0;
    if (m == 0 || c.norm() == 0.0) {
        r.rank = 0;
        r.observable = n == 0;
        return 0;
    }
    Eigen::MatrixXd block = c / c.norm();
    if (dense) {
        Eigen::MatrixXd q(m * n, n);
        for (Eigen::Index k = 0; k < n; ++k) {
            q.middleRows(k * m, m) = block;
            ++r.blocks;
            Eigen::MatrixXd next = block * phi;
            double nn = next.norm();
            if (!std::isfinite(nn)) throw NumericalError("observability: overflow in transition powers");
            block = nn > 0.0 ? Eigen::MatrixXd(next / nn) : Eigen::MatrixXd::Zero(m, n);
        }
        Eigen::BDCSVD<Eigen::MatrixXd> svd(q);
        rank_from_singular_values(svd.singularValues(), q.rows(), n, r);
    } else {
        Eigen::MatrixXd R(0, n);
        Eigen::Index rows = 0;
        for (Eigen::Index k = 0; k < n; ++k) {
            Eigen::MatrixXd stack(R.rows() + m, n);
            stack << R, block;
            rows += m;
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(stack);
            Eigen::Index keep = std::min(stack.rows(), n);
            R = qr.matrixQR().topRows(keep).triangularView<Eigen::Upper>();
            ++r.blocks;
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
            rank_from_singular_values(svd.singularValues(), rows, n, r);
            if (r.rank == static_cast<std::size_t>(n)) break;
            Eigen::MatrixXd next = block * phi;
            double nn = next.norm();
            if (!std::isfinite(nn)) throw NumericalError("observability: overflow in transition powers");
            if (nn == 0.0) break;
            block = next / nn;
        }
    }
    r.observable = r.rank == static_cast<std::size_t>(n);
    return r.rank;
}

ObservabilityReport observability_check(const IesNetwork& net, const SensorConfig& sensors, const Eigen::VectorXd& x0,
                                        const GasInput& u, const GasStepSystem& sys, double holt_alpha) {
    StateLayout layout(net);
    const auto n = static_cast<Eigen::Index>(layout.size());
    const auto ne = static_cast<Eigen::Index>(layout.electric_size());
    const auto ng = static_cast<Eigen::Index>(layout.gas_size());
    if (x0.size() != n) throw InputError("observability: state has wrong length");
    ObservabilityReport r;
    r.phi = Eigen::MatrixXd::Zero(n, n);
    r.phi.topLeftCorner(ne, ne) = holt_alpha * Eigen::MatrixXd::Identity(ne, ne);
    Eigen::VectorXd xg = x0.tail(ng);
    for (Eigen::Index j = 0; j < ng; ++j) {
        double step = 1e-6 * std::max(1.0, std::abs(xg(j)));
        Eigen::VectorXd xp = xg, xm = xg;
        xp(j) += step;
        xm(j) -= step;
        r.phi.block(ne, ne + j, ng, 1) = (gas_predict(xp, u, sys) - gas_predict(xm, u, sys)) / (2.0 * step);
    }
    r.c = measurement_jacobian(x0, net, sensors);
    stacked_rank(r.c, r.phi, n <= 256, &r);
    return r;
}

}  // namespace iestrack
