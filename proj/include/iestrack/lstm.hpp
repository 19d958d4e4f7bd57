#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace iestrack {

struct NormalizationBounds {
    double min = 0.0;
    double max = 1.0;
};

double normalize(double value, const NormalizationBounds& b);
double denormalize(double value, const NormalizationBounds& b);

/// Gate parameters of one layer, stacked in gate order input, forget, output, candidate.
struct LstmLayer {
    Eigen::MatrixXd W;  // 4H x input size
    Eigen::MatrixXd K;  // 4H x H (recurrent)
    Eigen::VectorXd b;  // 4H

    Eigen::Index hidden() const { return K.cols(); }
    auto gate_w(int g) const { return W.middleRows(g * hidden(), hidden()); }
    auto gate_k(int g) const { return K.middleRows(g * hidden(), hidden()); }
    auto gate_b(int g) const { return b.segment(g * hidden(), hidden()); }
};

enum Gate { GateInput = 0, GateForget = 1, GateOutput = 2, GateCandidate = 3 };

struct LstmModel {
    int layers = 0;
    int hidden = 0;
    int window = 0;
    std::vector<LstmLayer> cells;
    Eigen::VectorXd out_w;  // H
    double out_b = 0.0;
    std::map<int, NormalizationBounds> bounds;  // per load node

    std::size_t parameter_count() const;
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& p);
};

/// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases except forget bias 1.
LstmModel make_lstm(int layers, int hidden, int window, std::uint64_t seed);

struct CellOutput {
    Eigen::VectorXd h;
    Eigen::VectorXd c;
};

CellOutput lstm_cell(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev,
                     const LstmLayer& layer);

/// Next normalized value from a window of normalized values (oldest first).
double lstm_forward(const LstmModel& model, const Eigen::VectorXd& window);
/// One prediction per column of windows (window x batch).
Eigen::VectorXd lstm_forward_batch(const LstmModel& model, const Eigen::MatrixXd& windows);

/// Mean squared error over the batch and its gradient in parameters() layout.
double lstm_loss_gradient(const LstmModel& model, const Eigen::MatrixXd& windows, const Eigen::VectorXd& targets,
                          Eigen::VectorXd& gradient);

/// Per-node load series in kg/s at a fixed step.
struct LoadSeries {
    double dt = 300.0;
    std::map<int, std::vector<double>> nodes;

    std::size_t length() const;
};

struct LoadProfileSpec {
    int node = 0;
    double mean = 1.0;
    double daily_amplitude = 0.15;  // fraction of mean
    double weekly_amplitude = 0.05;
    double daily_phase = 0.0;
    double weekly_phase = 0.0;
};

LoadSeries generate_synthetic_loads(const std::vector<LoadProfileSpec>& nodes, int days, double dt,
                                    double noise_fraction, std::uint64_t seed, double noise_correlation = 0.0);

/// Chronological split: [0, train_end) training, [train_end, test_end) testing, rest simulation.
struct SeriesSplit {
    std::size_t train_end = 0;
    std::size_t test_end = 0;
};

SeriesSplit split_series(std::size_t length, double train_fraction = 0.8, double test_fraction = 0.1);

struct TrainingConfig {
    double learning_rate = 1e-3;
    int epochs = 200;
    int batch = 32;
    double clip_norm = 5.0;
    std::size_t samples_per_epoch = 0;  // 0 uses every training window each epoch
    std::uint64_t seed = 0;
};

struct TrainingResult {
    LstmModel model;
    std::vector<double> loss;           // per epoch
    std::vector<double> smoothed_loss;  // running minimum
};

/// Sets per-node bounds from the training split and fits on its windows.
TrainingResult lstm_train(const LstmModel& initial, const LoadSeries& series, const TrainingConfig& config,
                          const SeriesSplit& split);

double mape(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truth);

struct ForecastEvaluation {
    double mape = 0.0;
    std::size_t samples = 0;
};

/// One-step forecasts for every target index in [begin, end), windows taken from the true series.
ForecastEvaluation evaluate_forecasts(const LstmModel& model, const LoadSeries& series, std::size_t begin,
                                      std::size_t end);

struct GridCell {
    int layers;
    int hidden;
    int window;
    double train_mape;
    double test_mape;
    double final_loss;
};

struct GridSpec {
    std::vector<int> layers{2, 3};
    std::vector<int> hidden{40, 80, 160};
    std::vector<int> windows{5, 10, 15};
};

std::vector<GridCell> run_grid(const LoadSeries& series, const GridSpec& grid, const TrainingConfig& config,
                               int jobs = 1);

nlohmann::json serialize_model(const LstmModel& model);
LstmModel load_model(const nlohmann::json& doc);

/// Long-format CSV: timestamp_s,node,kg_s. Missing steps and non-finite or negative values are
/// filled by linear interpolation.
LoadSeries read_load_csv(const std::string& path);
void write_load_csv(const std::string& path, const LoadSeries& series);

}  // namespace iestrack
