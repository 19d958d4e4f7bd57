#include "iestrack/gas_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "iestrack/errors.hpp"

namespace iestrack {

namespace {

struct PipeIndex {
    Eigen::Index rho_i, rho_j, phi_ij, phi_ji;
};

PipeIndex pipe_index(const IesNetwork& net, std::size_t k) {
    const auto& p = net.pipelines[k];
    auto n_gas = static_cast<Eigen::Index>(net.n_gas());
    auto kk = static_cast<Eigen::Index>(k);
    return {p.node_i - 1, p.node_j - 1, n_gas + 2 * kk, n_gas + 2 * kk + 1};
}

double friction_coefficient(const Pipeline& p, double dt) {
    return dt * p.length * p.friction / (4.0 * p.diameter * p.area());
}

void check_input(const IesNetwork& net, const GasInput& u) {
    if (static_cast<std::size_t>(u.source_densities.size()) != net.source_nodes().size() ||
        static_cast<std::size_t>(u.load_flows.size()) != net.load_nodes().size())
        throw InputError("gas input has " + std::to_string(u.source_densities.size()) + " sources and " +
                         std::to_string(u.load_flows.size()) + " loads, network has " +
                         std::to_string(net.source_nodes().size()) + " and " +
                         std::to_string(net.load_nodes().size()));
}

}  // namespace

GasInput make_gas_input(const IesNetwork& net, const Eigen::VectorXd& load_flows) {
    auto sources = net.source_nodes();
    GasInput u;
    u.source_densities.resize(static_cast<Eigen::Index>(sources.size()));
    for (std::size_t s = 0; s < sources.size(); ++s)
        u.source_densities(static_cast<Eigen::Index>(s)) = *net.gas_nodes[sources[s] - 1].source_density;
    u.load_flows = load_flows;
    check_input(net, u);
    return u;
}

GasStepSystem::GasStepSystem(const IesNetwork& net, double dt, const GasStepOptions& options)
    : net_(std::make_shared<const IesNetwork>(net)), dt_(dt), theta_(options.theta) {
    if (!(dt > 0.0)) throw InputError("gas step: dt must be positive");
    if (!(theta_ > 0.0 && theta_ <= 1.0)) throw InputError("gas step: theta must lie in (0,1]");
    const std::size_t n_pipe = net.n_pipe();
    const auto n = static_cast<Eigen::Index>(net.n_gas() + 2 * n_pipe);
    const double c2 = net.sound_speed * net.sound_speed;

    k_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_pipe));
    if (options.friction_reference) {
        const Eigen::VectorXd& ref = *options.friction_reference;
        if (ref.size() != n) throw InputError("gas step: friction reference has wrong length");
        for (std::size_t k = 0; k < n_pipe; ++k) {
            const auto& p = net.pipelines[k];
            PipeIndex ix = pipe_index(net, k);
            double rho_sum = p.ratio_i * ref(ix.rho_i) + p.ratio_j * ref(ix.rho_j);
            if (!(rho_sum > 0.0)) throw NumericalError("gas step: nonpositive density in friction reference");
            k_(static_cast<Eigen::Index>(k)) =
                friction_coefficient(p, dt) * 2.0 * std::abs(ref(ix.phi_ij) + ref(ix.phi_ji)) / rho_sum;
        }
    }

    a_ = Eigen::MatrixXd::Zero(n, n);
    Eigen::Index row = 0;
    for (std::size_t k = 0; k < n_pipe; ++k, ++row) {
        const auto& p = net.pipelines[k];
        PipeIndex ix = pipe_index(net, k);
        double la = p.length * p.area();
        a_(row, ix.rho_i) += la * p.ratio_i;
        a_(row, ix.rho_j) += la * p.ratio_j;
        a_(row, ix.phi_ij) = -2.0 * theta_ * dt;
        a_(row, ix.phi_ji) = 2.0 * theta_ * dt;
    }
    for (std::size_t k = 0; k < n_pipe; ++k, ++row) {
        const auto& p = net.pipelines[k];
        PipeIndex ix = pipe_index(net, k);
        double inertia = p.length + k_(static_cast<Eigen::Index>(k));
        double drive = 2.0 * theta_ * p.area() * dt * c2;
        a_(row, ix.phi_ij) = inertia;
        a_(row, ix.phi_ji) = inertia;
        a_(row, ix.rho_i) -= drive * p.ratio_i;
        a_(row, ix.rho_j) += drive * p.ratio_j;
    }
    for (int s : net.source_nodes()) {
        a_(row, s - 1) = 1.0;
        source_row_node_.push_back(s);
        ++row;
    }
    for (int m : net.load_nodes()) {
        for (std::size_t k = 0; k < n_pipe; ++k) {
            PipeIndex ix = pipe_index(net, k);
            if (net.pipelines[k].node_i == m) a_(row, ix.phi_ij) -= 1.0;
            if (net.pipelines[k].node_j == m) a_(row, ix.phi_ji) += 1.0;
        }
        load_row_node_.push_back(m);
        ++row;
    }
    if (row != n)
        throw InputError("gas step: " + std::to_string(row) + " equations for " + std::to_string(n) + " unknowns");

    row_scale_.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        double m = a_.row(r).cwiseAbs().maxCoeff();
        if (m == 0.0) throw NumericalError("gas step: equation " + std::to_string(r) + " is empty");
        row_scale_(r) = 1.0 / m;
    }
    Eigen::MatrixXd scaled = row_scale_.asDiagonal() * a_;
    lu_.compute(scaled);
    double rcond = lu_.rcond();
    if (!(rcond > 1e-14))
        throw NumericalError("gas step matrix is singular (reciprocal condition " + std::to_string(rcond) + ")");
    spdlog::debug("gas step system: {} unknowns, theta {}, rcond {:.3e}", n, theta_, rcond);
}

Eigen::VectorXd GasStepSystem::rhs(const Eigen::VectorXd& x, const GasInput& u) const {
    const IesNetwork& net = *net_;
    check_input(net, u);
    if (x.size() != a_.rows()) throw InputError("gas state has wrong length");
    const std::size_t n_pipe = net.n_pipe();
    const double c2 = net.sound_speed * net.sound_speed;
    const double w = 2.0 * (1.0 - theta_);
    Eigen::VectorXd f(a_.rows());
    Eigen::Index row = 0;
    for (std::size_t k = 0; k < n_pipe; ++k, ++row) {
        const auto& p = net.pipelines[k];
        PipeIndex ix = pipe_index(net, k);
        f(row) = p.length * p.area() * (p.ratio_i * x(ix.rho_i) + p.ratio_j * x(ix.rho_j)) +
                 w * dt_ * (x(ix.phi_ij) - x(ix.phi_ji));
    }
    for (std::size_t k = 0; k < n_pipe; ++k, ++row) {
        const auto& p = net.pipelines[k];
        PipeIndex ix = pipe_index(net, k);
        double flow = x(ix.phi_ij) + x(ix.phi_ji);
        double rho_sum = p.ratio_i * x(ix.rho_i) + p.ratio_j * x(ix.rho_j);
        if (!(rho_sum > 0.0))
            throw NumericalError("gas rhs: nonpositive density sum on pipeline " + std::to_string(k + 1));
        f(row) = (p.length + k_(static_cast<Eigen::Index>(k))) * flow +
                 w * p.area() * dt_ * c2 * (p.ratio_i * x(ix.rho_i) - p.ratio_j * x(ix.rho_j)) -
                 friction_coefficient(p, dt_) * flow * std::abs(flow) / rho_sum;
    }
    for (Eigen::Index s = 0; s < u.source_densities.size(); ++s, ++row) f(row) = u.source_densities(s);
    for (Eigen::Index l = 0; l < u.load_flows.size(); ++l, ++row) f(row) = u.load_flows(l);
    return f;
}

Eigen::MatrixXd GasStepSystem::rhs_jacobian(const Eigen::VectorXd& x, double flow_floor) const {
    const IesNetwork& net = *net_;
    const std::size_t n_pipe = net.n_pipe();
    const double c2 = net.sound_speed * net.sound_speed;
    const double w = 2.0 * (1.0 - theta_);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(a_.rows(), a_.cols());
    for (std::size_t k = 0; k < n_pipe; ++k) {
        const auto& p = net.pipelines[k];
        PipeIndex ix = pipe_index(net, k);
        auto r = static_cast<Eigen::Index>(k);
        double la = p.length * p.area();
        j(r, ix.rho_i) += la * p.ratio_i;
        j(r, ix.rho_j) += la * p.ratio_j;
        j(r, ix.phi_ij) += w * dt_;
        j(r, ix.phi_ji) -= w * dt_;

        r += static_cast<Eigen::Index>(n_pipe);
        double flow = x(ix.phi_ij) + x(ix.phi_ji);
        double rho_sum = p.ratio_i * x(ix.rho_i) + p.ratio_j * x(ix.rho_j);
        double d = friction_coefficient(p, dt_);
        double dflow = p.length + k_(static_cast<Eigen::Index>(k)) -
                       d * 2.0 * std::max(std::abs(flow), flow_floor) / rho_sum;
        double drho = d * flow * std::abs(flow) / (rho_sum * rho_sum);
        double drive = w * p.area() * dt_ * c2;
        j(r, ix.phi_ij) += dflow;
        j(r, ix.phi_ji) += dflow;
        j(r, ix.rho_i) += drive * p.ratio_i + drho * p.ratio_i;
        j(r, ix.rho_j) += -drive * p.ratio_j + drho * p.ratio_j;
    }
    return j;
}

Eigen::VectorXd GasStepSystem::solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd x = lu_.solve(row_scale_.cwiseProduct(b));
    if (!x.allFinite()) throw NumericalError("gas step solve produced non-finite values");
    return x;
}

Eigen::MatrixXd GasStepSystem::solve_many(const Eigen::MatrixXd& b) const {
    Eigen::MatrixXd x = lu_.solve(row_scale_.asDiagonal() * b);
    if (!x.allFinite()) throw NumericalError("gas step solve produced non-finite values");
    return x;
}

GasStepSystem build_step_system(const IesNetwork& net, double dt, const GasStepOptions& options) {
    return GasStepSystem(net, dt, options);
}

Eigen::VectorXd gas_rhs(const Eigen::VectorXd& x, const GasInput& u, const GasStepSystem& sys) {
    return sys.rhs(x, u);
}

Eigen::VectorXd gas_predict(const Eigen::VectorXd& x, const GasInput& u, const GasStepSystem& sys) {
    Eigen::VectorXd next = sys.solve(sys.rhs(x, u));
    // The source rows are identities; assign them so rounding in the solve cannot move the boundary.
    std::vector<int> sources = sys.network().source_nodes();
    for (std::size_t k = 0; k < sources.size(); ++k) next(sources[k] - 1) = u.source_densities(static_cast<Eigen::Index>(k));
    return next;
}

Eigen::VectorXd solve_steady_state(const IesNetwork& net, const GasInput& boundary,
                                   const SteadyStateOptions& options) {
    check_input(net, boundary);
    GasStepSystem sys(net, 1.0, GasStepOptions{});
    const Eigen::Index n = static_cast<Eigen::Index>(sys.size());
    const Eigen::Index n_gas = static_cast<Eigen::Index>(net.n_gas());

    Eigen::VectorXd scale(n);
    for (Eigen::Index r = 0; r < n; ++r) scale(r) = 1.0 / sys.matrix().row(r).cwiseAbs().maxCoeff();
    auto residual = [&](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(scale.cwiseProduct(sys.matrix() * x - sys.rhs(x, boundary)));
    };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    x.head(n_gas).setConstant(boundary.source_densities.mean());
    double flow_scale = boundary.load_flows.size() > 0 ? boundary.load_flows.cwiseAbs().mean() : 0.0;
    double flow_floor = std::max(1e-6, 0.1 * flow_scale);

    Eigen::VectorXd r = residual(x);
    double norm = r.lpNorm<Eigen::Infinity>();
    for (int it = 0; it < options.max_iterations; ++it) {
        if (norm < options.tolerance) {
            spdlog::debug("steady state converged in {} iterations, residual {:.3e}", it, norm);
            return x;
        }
        Eigen::MatrixXd jac = scale.asDiagonal() * (sys.matrix() - sys.rhs_jacobian(x, flow_floor));
        Eigen::VectorXd dx = jac.partialPivLu().solve(-r);
        if (!dx.allFinite()) throw NumericalError("steady state: Newton step is not finite");
        double lambda = 1.0;
        Eigen::VectorXd trial = x + dx;
        Eigen::VectorXd r_trial;
        bool accepted = false;
        for (int h = 0; h <= options.max_halvings; ++h) {
            if ((trial.head(n_gas).array() > 0.0).all()) {
                r_trial = residual(trial);
                if (r_trial.lpNorm<Eigen::Infinity>() < norm) {
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
            trial = x + lambda * dx;
        }
        if (!accepted) {
            // Stalled at round-off level counts as converged.
            if (norm < 1e3 * options.tolerance) return x;
            throw NumericalError("steady state: no residual decrease after " + std::to_string(options.max_halvings) +
                                 " halvings at iteration " + std::to_string(it) + " (residual " +
                                 std::to_string(norm) + ")");
        }
        x = trial;
        r = r_trial;
        norm = r.lpNorm<Eigen::Infinity>();
    }
    if (norm < options.tolerance) return x;
    throw NumericalError("steady state: not converged after " + std::to_string(options.max_iterations) +
                         " iterations (residual " + std::to_string(norm) + ")");
}

double node_delivery(const IesNetwork& net, const Eigen::VectorXd& x_gas, int node) {
    const auto n_gas = static_cast<Eigen::Index>(net.n_gas());
    double v = 0.0;
    for (std::size_t k = 0; k < net.n_pipe(); ++k) {
        const auto& p = net.pipelines[k];
        auto kk = static_cast<Eigen::Index>(k);
        if (p.node_i == node) v -= x_gas(n_gas + 2 * kk);
        if (p.node_j == node) v += x_gas(n_gas + 2 * kk + 1);
    }
    return v;
}

GasTrajectory simulate_gas(const IesNetwork& net, const std::vector<GasInput>& inputs, std::size_t steps, double dt,
                           double theta) {
    if (inputs.size() < steps + 1)
        throw InputError("simulate: " + std::to_string(inputs.size()) + " inputs for " + std::to_string(steps) +
                         " steps");
    Eigen::VectorXd x = solve_steady_state(net, inputs.front());
    GasStepSystem sys(net, dt, GasStepOptions{theta, x});
    GasTrajectory out;
    out.friction_reference = x;
    out.states.resize(static_cast<Eigen::Index>(steps + 1), x.size());
    out.states.row(0) = x.transpose();
    for (std::size_t t = 1; t <= steps; ++t) {
        x = gas_predict(x, inputs[t], sys);
        out.states.row(static_cast<Eigen::Index>(t)) = x.transpose();
    }
    return out;
}

double gtu_load(double power_w, double efficiency) {
    if (!(efficiency > 0.0)) throw InputError("GTU efficiency must be positive");
    return power_w / efficiency;
}

}  // namespace iestrack
