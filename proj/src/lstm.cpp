#include "iestrack/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "iestrack/errors.hpp"
#include "iestrack/rng.hpp"

namespace iestrack {

using nlohmann::json;

double normalize(double value, const NormalizationBounds& b) {
    if (!(b.max > b.min)) throw InputError("degenerate normalization bounds");
    return (value - b.min) / (b.max - b.min);
}

double denormalize(double value, const NormalizationBounds& b) {
    if (!(b.max > b.min)) throw InputError("degenerate normalization bounds");
    return b.min + value * (b.max - b.min);
}

std::size_t LstmModel::parameter_count() const {
    std::size_t n = static_cast<std::size_t>(out_w.size()) + 1;
    for (const auto& c : cells) n += static_cast<std::size_t>(c.W.size() + c.K.size() + c.b.size());
    return n;
}

Eigen::VectorXd LstmModel::parameters() const {
    Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index o = 0;
    auto put = [&](const auto& m) {
        p.segment(o, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
        o += m.size();
    };
    for (const auto& c : cells) {
        put(c.W);
        put(c.K);
        put(c.b);
    }
    put(out_w);
    p(o) = out_b;
    return p;
}

void LstmModel::set_parameters(const Eigen::VectorXd& p) {
    if (static_cast<std::size_t>(p.size()) != parameter_count()) throw InputError("parameter vector has wrong length");
    Eigen::Index o = 0;
    auto get = [&](auto& m) {
        Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = p.segment(o, m.size());
        o += m.size();
    };
    for (auto& c : cells) {
        get(c.W);
        get(c.K);
        get(c.b);
    }
    get(out_w);
    out_b = p(o);
}

LstmModel make_lstm(int layers, int hidden, int window, std::uint64_t seed) {
    if (layers < 1 || hidden < 1 || window < 1) throw InputError("LSTM layers, hidden size and window must be positive");
    LstmModel m;
    m.layers = layers;
    m.hidden = hidden;
    m.window = window;
    std::mt19937_64 rng = rng_stream(seed, "lstm-init");
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> u(-k, k);
    auto fill = [&](Eigen::MatrixXd& a) {
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = u(rng);
    };
    for (int l = 0; l < layers; ++l) {
        LstmLayer c;
        c.W.resize(4 * hidden, l == 0 ? 1 : hidden);
        c.K.resize(4 * hidden, hidden);
        fill(c.W);
        fill(c.K);
        c.b = Eigen::VectorXd::Zero(4 * hidden);
        c.b.segment(GateForget * hidden, hidden).setOnes();
        m.cells.push_back(std::move(c));
    }
    m.out_w.resize(hidden);
    for (Eigen::Index i = 0; i < hidden; ++i) m.out_w(i) = u(rng);
    m.out_b = 0.0;
    return m;
}

namespace {

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

struct LayerTrace {
    std::vector<Eigen::MatrixXd> x;      // input at each step
    std::vector<Eigen::MatrixXd> h;      // h[0] initial, h[t+1] after step t
    std::vector<Eigen::MatrixXd> c;
    std::vector<Eigen::MatrixXd> gates;  // activated i, f, o, g
};

// Activated gates and new (h, c) for a batch.
void cell_batch(const LstmLayer& layer, const Eigen::MatrixXd& x, const Eigen::MatrixXd& h_prev,
                const Eigen::MatrixXd& c_prev, Eigen::MatrixXd& gates, Eigen::MatrixXd& h, Eigen::MatrixXd& c) {
    const Eigen::Index H = layer.hidden();
    gates.noalias() = layer.W * x;
    gates.noalias() += layer.K * h_prev;
    gates.colwise() += layer.b;
    gates.topRows(3 * H) = gates.topRows(3 * H).unaryExpr(&sigmoid);
    gates.bottomRows(H) = gates.bottomRows(H).array().tanh();
    c = gates.middleRows(GateInput * H, H).cwiseProduct(gates.middleRows(GateCandidate * H, H)) +
        gates.middleRows(GateForget * H, H).cwiseProduct(c_prev);
    h = gates.middleRows(GateOutput * H, H).cwiseProduct(c.array().tanh().matrix());
}

Eigen::VectorXd forward_trace(const LstmModel& model, const Eigen::MatrixXd& windows, std::vector<LayerTrace>* trace) {
    if (windows.rows() != model.window)
        throw InputError("window length " + std::to_string(windows.rows()) + " does not match model window " +
                         std::to_string(model.window));
    const Eigen::Index B = windows.cols(), H = model.hidden, T = model.window;
    std::vector<Eigen::MatrixXd> inputs(static_cast<std::size_t>(T));
    for (Eigen::Index t = 0; t < T; ++t) inputs[static_cast<std::size_t>(t)] = windows.row(t);
    if (trace) trace->assign(model.cells.size(), {});
    Eigen::MatrixXd gates(4 * H, B);
    for (std::size_t l = 0; l < model.cells.size(); ++l) {
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(H, B), c = Eigen::MatrixXd::Zero(H, B);
        if (trace) {
            (*trace)[l].h.push_back(h);
            (*trace)[l].c.push_back(c);
        }
        for (Eigen::Index t = 0; t < T; ++t) {
            Eigen::MatrixXd h_new, c_new;
            cell_batch(model.cells[l], inputs[static_cast<std::size_t>(t)], h, c, gates, h_new, c_new);
            if (trace) {
                (*trace)[l].x.push_back(inputs[static_cast<std::size_t>(t)]);
                (*trace)[l].gates.push_back(gates);
                (*trace)[l].h.push_back(h_new);
                (*trace)[l].c.push_back(c_new);
            }
            inputs[static_cast<std::size_t>(t)] = h_new;
            h = std::move(h_new);
            c = std::move(c_new);
        }
    }
    Eigen::VectorXd y = inputs.back().transpose() * model.out_w;
    y.array() += model.out_b;
    return y;
}

}  // namespace

CellOutput lstm_cell(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev,
                     const LstmLayer& layer) {
    if (x.size() != layer.W.cols() || h_prev.size() != layer.hidden() || c_prev.size() != layer.hidden())
        throw InputError("lstm_cell: dimension mismatch");
    Eigen::MatrixXd gates, h, c;
    cell_batch(layer, x, h_prev, c_prev, gates, h, c);
    return {h.col(0), c.col(0)};
}

double lstm_forward(const LstmModel& model, const Eigen::VectorXd& window) {
    return forward_trace(model, window, nullptr)(0);
}

Eigen::VectorXd lstm_forward_batch(const LstmModel& model, const Eigen::MatrixXd& windows) {
    return forward_trace(model, windows, nullptr);
}

double lstm_loss_gradient(const LstmModel& model, const Eigen::MatrixXd& windows, const Eigen::VectorXd& targets,
                          Eigen::VectorXd& gradient) {
    std::vector<LayerTrace> trace;
    Eigen::VectorXd y = forward_trace(model, windows, &trace);
    const Eigen::Index B = windows.cols(), H = model.hidden, T = model.window;
    Eigen::VectorXd err = y - targets;
    double loss = err.squaredNorm() / static_cast<double>(B);
    Eigen::RowVectorXd dy = (2.0 / static_cast<double>(B)) * err.transpose();

    gradient.resize(static_cast<Eigen::Index>(model.parameter_count()));
    Eigen::Index offset = gradient.size();
    gradient(--offset) = dy.sum();
    offset -= H;
    const Eigen::MatrixXd& h_top = trace.back().h.back();
    gradient.segment(offset, H) = h_top * dy.transpose();

    // dh arriving from the layer above (or the output head) at each step
    std::vector<Eigen::MatrixXd> dh_above(static_cast<std::size_t>(T), Eigen::MatrixXd::Zero(H, B));
    dh_above.back() = model.out_w * dy;

    std::vector<Eigen::Index> starts(model.cells.size());
    {
        Eigen::Index o = 0;
        for (std::size_t l = 0; l < model.cells.size(); ++l) {
            starts[l] = o;
            o += model.cells[l].W.size() + model.cells[l].K.size() + model.cells[l].b.size();
        }
    }
    for (std::size_t li = model.cells.size(); li-- > 0;) {
        const LstmLayer& layer = model.cells[li];
        const LayerTrace& tr = trace[li];
        Eigen::MatrixXd dW = Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols());
        Eigen::MatrixXd dK = Eigen::MatrixXd::Zero(layer.K.rows(), layer.K.cols());
        Eigen::VectorXd db = Eigen::VectorXd::Zero(layer.b.size());
        Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(H, B), dc_next = Eigen::MatrixXd::Zero(H, B);
        Eigen::MatrixXd da(4 * H, B);
        std::vector<Eigen::MatrixXd> dx(static_cast<std::size_t>(T));
        for (Eigen::Index t = T - 1; t >= 0; --t) {
            auto st = static_cast<std::size_t>(t);
            const Eigen::MatrixXd& g = tr.gates[st];
            auto i = g.middleRows(GateInput * H, H).array();
            auto f = g.middleRows(GateForget * H, H).array();
            auto o = g.middleRows(GateOutput * H, H).array();
            auto cand = g.middleRows(GateCandidate * H, H).array();
            Eigen::ArrayXXd tc = tr.c[st + 1].array().tanh();
            Eigen::ArrayXXd dh = (dh_above[st] + dh_next).array();
            Eigen::ArrayXXd dc = dh * o * (1.0 - tc.square()) + dc_next.array();
            da.middleRows(GateInput * H, H) = (dc * cand * i * (1.0 - i)).matrix();
            da.middleRows(GateForget * H, H) = (dc * tr.c[st].array() * f * (1.0 - f)).matrix();
            da.middleRows(GateOutput * H, H) = (dh * tc * o * (1.0 - o)).matrix();
            da.middleRows(GateCandidate * H, H) = (dc * i * (1.0 - cand.square())).matrix();
            dc_next = (dc * f).matrix();
            dW.noalias() += da * tr.x[st].transpose();
            dK.noalias() += da * tr.h[st].transpose();
            db += da.rowwise().sum();
            dh_next.noalias() = layer.K.transpose() * da;
            if (li > 0) dx[st].noalias() = layer.W.transpose() * da;
        }
        Eigen::Index o = starts[li];
        gradient.segment(o, dW.size()) = Eigen::Map<const Eigen::VectorXd>(dW.data(), dW.size());
        o += dW.size();
        gradient.segment(o, dK.size()) = Eigen::Map<const Eigen::VectorXd>(dK.data(), dK.size());
        o += dK.size();
        gradient.segment(o, db.size()) = db;
        if (li > 0) dh_above = std::move(dx);
    }
    return loss;
}

std::size_t LoadSeries::length() const { return nodes.empty() ? 0 : nodes.begin()->second.size(); }

LoadSeries generate_synthetic_loads(const std::vector<LoadProfileSpec>& specs, int days, double dt,
                                    double noise_fraction, std::uint64_t seed, double noise_correlation) {
    if (days < 1) throw InputError("synthetic loads need at least one day");
    if (!(dt > 0.0)) throw InputError("synthetic loads need a positive step");
    if (!(noise_correlation >= 0.0 && noise_correlation < 1.0))
        throw InputError("synthetic load noise correlation must lie in [0, 1)");
    const double innovation = std::sqrt(1.0 - noise_correlation * noise_correlation);
    const auto steps = static_cast<std::size_t>(std::llround(days * 86400.0 / dt));
    std::mt19937_64 rng = rng_stream(seed, "loads");
    std::normal_distribution<double> normal(0.0, 1.0);
    LoadSeries out;
    out.dt = dt;
    const double two_pi = 2.0 * std::numbers::pi;
    for (const auto& s : specs) {
        std::vector<double> v(steps);
        double noise = normal(rng);
        for (std::size_t t = 0; t < steps; ++t) {
            if (t > 0) noise = noise_correlation * noise + innovation * normal(rng);
            double time = static_cast<double>(t) * dt;
            double shape = 1.0 + s.daily_amplitude * std::sin(two_pi * time / 86400.0 + s.daily_phase) +
                           s.weekly_amplitude * std::sin(two_pi * time / (7.0 * 86400.0) + s.weekly_phase);
            double value = s.mean * shape + noise_fraction * s.mean * noise;
            v[t] = std::max(value, 0.05 * s.mean);
        }
        out.nodes[s.node] = std::move(v);
    }
    return out;
}

SeriesSplit split_series(std::size_t length, double train_fraction, double test_fraction) {
    SeriesSplit s;
    s.train_end = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(length)));
    s.test_end = static_cast<std::size_t>(std::llround((train_fraction + test_fraction) * static_cast<double>(length)));
    return s;
}

namespace {

struct WindowSet {
    Eigen::MatrixXd windows;
    Eigen::VectorXd targets;
};

WindowSet make_windows(const LstmModel& model, const LoadSeries& series, std::size_t begin, std::size_t end) {
    const auto w = static_cast<std::size_t>(model.window);
    begin = std::max(begin, w);
    std::size_t per_node = end > begin ? end - begin : 0;
    WindowSet set;
    set.windows.resize(model.window, static_cast<Eigen::Index>(per_node * series.nodes.size()));
    set.targets.resize(set.windows.cols());
    Eigen::Index col = 0;
    for (const auto& [node, values] : series.nodes) {
        const NormalizationBounds& b = model.bounds.at(node);
        for (std::size_t t = begin; t < end; ++t, ++col) {
            for (std::size_t k = 0; k < w; ++k) set.windows(static_cast<Eigen::Index>(k), col) = normalize(values[t - w + k], b);
            set.targets(col) = normalize(values[t], b);
        }
    }
    return set;
}

}  // namespace

TrainingResult lstm_train(const LstmModel& initial, const LoadSeries& series, const TrainingConfig& config,
                          const SeriesSplit& split) {
    if (config.batch < 1) throw InputError("batch size must be positive");
    if (split.train_end > series.length() || split.train_end <= static_cast<std::size_t>(initial.window))
        throw InputError("series too short for one training window");
    TrainingResult result{initial, {}, {}};
    LstmModel& model = result.model;
    for (const auto& [node, values] : series.nodes) {
        auto [lo, hi] = std::minmax_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(split.train_end));
        if (!(*hi > *lo)) throw InputError("load series of node " + std::to_string(node) + " is constant");
        model.bounds[node] = {*lo, *hi};
    }
    if (config.epochs <= 0) return result;

    WindowSet data = make_windows(model, series, 0, split.train_end);
    const auto n = static_cast<std::size_t>(data.windows.cols());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng = rng_stream(config.seed, "training");

    Eigen::VectorXd p = model.parameters();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(p.size()), v = Eigen::VectorXd::Zero(p.size()), g;
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long long t_adam = 0;
    const std::size_t per_epoch = config.samples_per_epoch > 0 ? std::min(config.samples_per_epoch, n) : n;
    const auto batch = static_cast<std::size_t>(config.batch);
    Eigen::MatrixXd xb;
    Eigen::VectorXd yb;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < per_epoch; start += batch) {
            std::size_t count = std::min(batch, per_epoch - start);
            xb.resize(model.window, static_cast<Eigen::Index>(count));
            yb.resize(static_cast<Eigen::Index>(count));
            for (std::size_t k = 0; k < count; ++k) {
                xb.col(static_cast<Eigen::Index>(k)) = data.windows.col(static_cast<Eigen::Index>(order[start + k]));
                yb(static_cast<Eigen::Index>(k)) = data.targets(static_cast<Eigen::Index>(order[start + k]));
            }
            double loss = lstm_loss_gradient(model, xb, yb, g);
            if (!std::isfinite(loss)) throw NumericalError("training loss is not finite at epoch " + std::to_string(epoch));
            total += loss * static_cast<double>(count);
            double gn = g.norm();
            if (gn > config.clip_norm) g *= config.clip_norm / gn;
            ++t_adam;
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
            double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_adam));
            double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_adam));
            p.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
            model.set_parameters(p);
        }
        double epoch_loss = total / static_cast<double>(per_epoch);
        result.loss.push_back(epoch_loss);
        result.smoothed_loss.push_back(result.smoothed_loss.empty() ? epoch_loss
                                                                    : std::min(result.smoothed_loss.back(), epoch_loss));
        spdlog::debug("epoch {} loss {:.6e}", epoch, epoch_loss);
    }
    return result;
}

double mape(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truth) {
    if (predictions.size() != truth.size()) throw InputError("mape: length mismatch");
    if (truth.size() == 0) throw InputError("mape: empty input");
    double s = 0.0;
    for (Eigen::Index k = 0; k < truth.size(); ++k) {
        if (truth(k) == 0.0) throw InputError("mape: zero truth entry at index " + std::to_string(k));
        s += std::abs(predictions(k) - truth(k)) / std::abs(truth(k));
    }
    return 100.0 * s / static_cast<double>(truth.size());
}

ForecastEvaluation evaluate_forecasts(const LstmModel& model, const LoadSeries& series, std::size_t begin,
                                      std::size_t end) {
    end = std::min(end, series.length());
    WindowSet set = make_windows(model, series, begin, end);
    if (set.windows.cols() == 0) throw InputError("no forecast windows in the requested range");
    Eigen::VectorXd pred(set.targets.size()), truth(set.targets.size());
    Eigen::VectorXd normalized = lstm_forward_batch(model, set.windows);
    Eigen::Index col = 0;
    const Eigen::Index per_node = set.windows.cols() / static_cast<Eigen::Index>(series.nodes.size());
    for (const auto& [node, values] : series.nodes) {
        const NormalizationBounds& b = model.bounds.at(node);
        for (Eigen::Index k = 0; k < per_node; ++k, ++col) {
            pred(col) = denormalize(normalized(col), b);
            truth(col) = denormalize(set.targets(col), b);
        }
    }
    return {mape(pred, truth), static_cast<std::size_t>(truth.size())};
}

std::vector<GridCell> run_grid(const LoadSeries& series, const GridSpec& grid, const TrainingConfig& config,
                               int jobs) {
    struct Job {
        int layers, hidden, window;
    };
    std::vector<Job> cells;
    for (int l : grid.layers)
        for (int h : grid.hidden)
            for (int w : grid.windows) cells.push_back({l, h, w});
    SeriesSplit split = split_series(series.length());
    auto run = [&](const Job& j) {
        TrainingResult r = lstm_train(make_lstm(j.layers, j.hidden, j.window, config.seed), series, config, split);
        GridCell c{j.layers, j.hidden, j.window, 0.0, 0.0, r.loss.empty() ? 0.0 : r.loss.back()};
        c.train_mape = evaluate_forecasts(r.model, series, 0, split.train_end).mape;
        c.test_mape = evaluate_forecasts(r.model, series, split.train_end, split.test_end).mape;
        spdlog::info("grid cell L={} H={} w={}: test MAPE {:.3f}%", j.layers, j.hidden, j.window, c.test_mape);
        return c;
    };
    std::vector<GridCell> out(cells.size());
    const std::size_t width = static_cast<std::size_t>(std::max(1, jobs));
    for (std::size_t start = 0; start < cells.size(); start += width) {
        std::vector<std::future<GridCell>> running;
        for (std::size_t k = start; k < std::min(cells.size(), start + width); ++k)
            running.push_back(std::async(width > 1 ? std::launch::async : std::launch::deferred, run, cells[k]));
        for (std::size_t k = 0; k < running.size(); ++k) out[start + k] = running[k].get();
    }
    return out;
}

json serialize_model(const LstmModel& model) {
    auto matrix = [](const Eigen::MatrixXd& a) {
        json rows = json::array();
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            std::vector<double> r(static_cast<std::size_t>(a.cols()));
            for (Eigen::Index j = 0; j < a.cols(); ++j) r[static_cast<std::size_t>(j)] = a(i, j);
            rows.push_back(r);
        }
        return rows;
    };
    auto vec = [](const Eigen::VectorXd& a) { return std::vector<double>(a.data(), a.data() + a.size()); };
    json cells = json::array();
    for (const auto& c : model.cells) cells.push_back({{"W", matrix(c.W)}, {"K", matrix(c.K)}, {"b", vec(c.b)}});
    json bounds = json::array();
    for (const auto& [node, b] : model.bounds) bounds.push_back({{"node", node}, {"min", b.min}, {"max", b.max}});
    return {{"format", "iestrack-lstm"},
            {"version", 1},
            {"gate_order", {"input", "forget", "output", "candidate"}},
            {"layers", model.layers},
            {"hidden", model.hidden},
            {"window", model.window},
            {"cells", cells},
            {"output", {{"w", vec(model.out_w)}, {"b", model.out_b}}},
            {"bounds", bounds}};
}

LstmModel load_model(const json& doc) {
    try {
        if (doc.at("format") != "iestrack-lstm" || doc.at("version") != 1)
            throw InputError("model file: unsupported format or version");
        LstmModel m;
        m.layers = doc.at("layers").get<int>();
        m.hidden = doc.at("hidden").get<int>();
        m.window = doc.at("window").get<int>();
        auto matrix = [](const json& rows, Eigen::Index r, Eigen::Index c) {
            if (static_cast<Eigen::Index>(rows.size()) != r) throw InputError("model file: matrix has wrong row count");
            Eigen::MatrixXd a(r, c);
            for (Eigen::Index i = 0; i < r; ++i) {
                auto row = rows[static_cast<std::size_t>(i)].get<std::vector<double>>();
                if (static_cast<Eigen::Index>(row.size()) != c) throw InputError("model file: matrix has wrong column count");
                for (Eigen::Index j = 0; j < c; ++j) a(i, j) = row[static_cast<std::size_t>(j)];
            }
            return a;
        };
        auto vec = [](const json& v, Eigen::Index n) {
            auto d = v.get<std::vector<double>>();
            if (static_cast<Eigen::Index>(d.size()) != n) throw InputError("model file: vector has wrong length");
            return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(d.data(), n));
        };
        const json& cells = doc.at("cells");
        if (static_cast<int>(cells.size()) != m.layers) throw InputError("model file: layer count mismatch");
        const Eigen::Index H = m.hidden;
        for (int l = 0; l < m.layers; ++l) {
            const json& c = cells[static_cast<std::size_t>(l)];
            LstmLayer layer;
            layer.W = matrix(c.at("W"), 4 * H, l == 0 ? 1 : H);
            layer.K = matrix(c.at("K"), 4 * H, H);
            layer.b = vec(c.at("b"), 4 * H);
            m.cells.push_back(std::move(layer));
        }
        m.out_w = vec(doc.at("output").at("w"), H);
        m.out_b = doc.at("output").at("b").get<double>();
        for (const auto& b : doc.at("bounds")) {
            NormalizationBounds nb{b.at("min").get<double>(), b.at("max").get<double>()};
            if (!(nb.max > nb.min)) throw InputError("model file: degenerate bounds");
            m.bounds[b.at("node").get<int>()] = nb;
        }
        return m;
    } catch (const json::exception& e) {
        throw InputError(std::string("model file: ") + e.what());
    }
}

LoadSeries read_load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open load file " + path);
    std::string line;
    std::getline(in, line);
    std::map<int, std::map<double, double>> raw;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string ts, node, value;
        std::getline(ss, ts, ',');
        std::getline(ss, node, ',');
        std::getline(ss, value, ',');
        double t, v;
        int id;
        try {
            t = std::stod(ts);
            id = std::stoi(node);
        } catch (const std::exception&) {
            throw InputError(path + ":" + std::to_string(lineno) + ": malformed row");
        }
        try {
            v = std::stod(value);
        } catch (const std::exception&) {
            v = std::numeric_limits<double>::quiet_NaN();
        }
        raw[id][t] = v;
    }
    if (raw.empty()) throw InputError(path + ": no rows");
    double t0 = std::numeric_limits<double>::infinity(), t1 = -t0, dt = std::numeric_limits<double>::infinity();
    for (const auto& [id, s] : raw) {
        t0 = std::min(t0, s.begin()->first);
        t1 = std::max(t1, s.rbegin()->first);
        for (auto it = std::next(s.begin()); it != s.end(); ++it) dt = std::min(dt, it->first - std::prev(it)->first);
    }
    if (!std::isfinite(dt) || dt <= 0.0) throw InputError(path + ": cannot infer the sampling step");
    const auto steps = static_cast<std::size_t>(std::llround((t1 - t0) / dt)) + 1;
    LoadSeries out;
    out.dt = dt;
    for (const auto& [id, s] : raw) {
        std::vector<double> v(steps, std::numeric_limits<double>::quiet_NaN());
        for (const auto& [t, x] : s) {
            auto k = static_cast<std::size_t>(std::llround((t - t0) / dt));
            if (std::isfinite(x) && x >= 0.0) v[k] = x;
        }
        std::vector<std::size_t> known;
        for (std::size_t k = 0; k < steps; ++k)
            if (std::isfinite(v[k])) known.push_back(k);
        if (known.empty()) throw InputError(path + ": node " + std::to_string(id) + " has no valid samples");
        for (std::size_t k = 0; k < steps; ++k) {
            if (std::isfinite(v[k])) continue;
            auto hi = std::lower_bound(known.begin(), known.end(), k);
            if (hi == known.begin()) v[k] = v[*hi];
            else if (hi == known.end()) v[k] = v[known.back()];
            else {
                std::size_t a = *std::prev(hi), b = *hi;
                double w = static_cast<double>(k - a) / static_cast<double>(b - a);
                v[k] = (1.0 - w) * v[a] + w * v[b];
            }
        }
        out.nodes[id] = std::move(v);
    }
    return out;
}

void write_load_csv(const std::string& path, const LoadSeries& series) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw InputError("cannot write " + path);
    std::fprintf(f, "timestamp_s,node,kg_s\n");
    for (const auto& [node, values] : series.nodes)
        for (std::size_t t = 0; t < values.size(); ++t)
            std::fprintf(f, "%.17g,%d,%.17g\n", static_cast<double>(t) * series.dt, node, values[t]);
    std::fclose(f);
}

}  // namespace iestrack
