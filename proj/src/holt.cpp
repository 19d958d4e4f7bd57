#include "iestrack/holt.hpp"

#include <string>

#include "iestrack/errors.hpp"

namespace iestrack {

namespace {

void check_params(double alpha, double beta) {
    if (!(alpha >= 0.0 && alpha <= 1.0) || !(beta >= 0.0 && beta <= 1.0))
        throw InputError("Holt smoothing parameters must lie in [0,1]");
}

}  // namespace

HoltState holt_init(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, double alpha, double beta) {
    check_params(alpha, beta);
    if (x1.size() != x2.size()) throw InputError("holt_init: vectors differ in length");
    return {x2, x2 - x1, alpha, beta};
}

HoltForecast holt_update(const HoltState& h, const Eigen::VectorXd& estimate) {
    if (estimate.size() != h.level.size())
        throw InputError("holt_update: estimate has length " + std::to_string(estimate.size()) + ", expected " +
                         std::to_string(h.level.size()));
    HoltForecast out;
    out.state.alpha = h.alpha;
    out.state.beta = h.beta;
    out.state.level = h.alpha * estimate + (1.0 - h.alpha) * (h.level + h.trend);
    out.state.trend = h.beta * (out.state.level - h.level) + (1.0 - h.beta) * h.trend;
    out.forecast = out.state.level + out.state.trend;
    return out;
}

AffineMap affine_transition(const HoltState& previous, const HoltState& updated) {
    if (previous.level.size() != updated.trend.size()) throw InputError("affine_transition: dimension mismatch");
    AffineMap m;
    m.gain = previous.alpha;
    m.offset = (1.0 - previous.alpha) * (previous.level + previous.trend) + updated.trend;
    return m;
}

}  // namespace iestrack
