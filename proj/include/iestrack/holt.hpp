#pragma once

#include <Eigen/Dense>

namespace iestrack {

/// Holt level/trend smoother over the electric state block.
struct HoltState {
    Eigen::VectorXd level;
    Eigen::VectorXd trend;
    double alpha = 0.8;
    double beta = 0.5;
};

struct HoltForecast {
    HoltState state;
    Eigen::VectorXd forecast;
};

/// Affine electric transition x -> gain * x + offset.
struct AffineMap {
    double gain = 0.0;
    Eigen::VectorXd offset;

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return gain * x + offset; }
};

HoltState holt_init(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, double alpha, double beta);

HoltForecast holt_update(const HoltState& h, const Eigen::VectorXd& estimate);

/// Electric transition for one filter step: f(x) = alpha * x + c with
/// c = (1 - alpha)(level + trend)_previous + trend_updated, frozen across cubature points.
/// `updated` is holt_update(previous, estimate).state.
AffineMap affine_transition(const HoltState& previous, const HoltState& updated);

}  // namespace iestrack
