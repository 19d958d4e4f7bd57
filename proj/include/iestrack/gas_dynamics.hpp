#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "iestrack/network.hpp"

namespace iestrack {

/// Boundary input for one step. Sources ordered as net.source_nodes(), loads as net.load_nodes().
struct GasInput {
    Eigen::VectorXd source_densities;
    Eigen::VectorXd load_flows;
};

/// Source densities from the network, given load flows.
GasInput make_gas_input(const IesNetwork& net, const Eigen::VectorXd& load_flows);

struct GasStepOptions {
    /// Implicit weight of flux and pressure terms; 0.5 is the trapezoid form.
    double theta = 1.0;
    /// Gas state (densities + flows) used to linearize friction. Without it no friction term is implicit.
    std::optional<Eigen::VectorXd> friction_reference;
};

/// Constant coefficient matrix A_G of the one-step gas update, factorized once.
class GasStepSystem {
public:
    GasStepSystem(const IesNetwork& net, double dt, const GasStepOptions& options);

    const Eigen::MatrixXd& matrix() const { return a_; }
    double dt() const { return dt_; }
    double theta() const { return theta_; }
    const Eigen::VectorXd& friction_gain() const { return k_; }
    const IesNetwork& network() const { return *net_; }
    std::size_t size() const { return static_cast<std::size_t>(a_.rows()); }

    /// Right-hand side f_G(x_t, u_{t+1}).
    Eigen::VectorXd rhs(const Eigen::VectorXd& x, const GasInput& u) const;
    /// d f_G / d x. |phi_ij + phi_ji| is floored at flow_floor in the friction derivative.
    Eigen::MatrixXd rhs_jacobian(const Eigen::VectorXd& x, double flow_floor = 0.0) const;
    /// A_G^{-1} b.
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    /// A_G^{-1} B, column by column.
    Eigen::MatrixXd solve_many(const Eigen::MatrixXd& b) const;

private:
    std::shared_ptr<const IesNetwork> net_;
    double dt_, theta_;
    Eigen::VectorXd k_;
    Eigen::MatrixXd a_;
    Eigen::VectorXd row_scale_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    std::vector<int> source_row_node_;
    std::vector<int> load_row_node_;
};

GasStepSystem build_step_system(const IesNetwork& net, double dt, const GasStepOptions& options = {});

Eigen::VectorXd gas_rhs(const Eigen::VectorXd& x, const GasInput& u, const GasStepSystem& sys);

Eigen::VectorXd gas_predict(const Eigen::VectorXd& x, const GasInput& u, const GasStepSystem& sys);

struct SteadyStateOptions {
    int max_iterations = 100;
    int max_halvings = 6;
    double tolerance = 1e-10;  // on the row-equilibrated residual
};

/// Damped Newton on A_G x - f_G(x, u) = 0; the solution is a fixed point of gas_predict.
Eigen::VectorXd solve_steady_state(const IesNetwork& net, const GasInput& boundary,
                                   const SteadyStateOptions& options = {});

/// Gas delivered at a node: pipe-end inflow minus outflow, both ends oriented i -> j.
/// Equals the load at load nodes and minus the supply at sources.
double node_delivery(const IesNetwork& net, const Eigen::VectorXd& x_gas, int node);

struct GasTrajectory {
    Eigen::MatrixXd states;  // (steps + 1) x gas size, row 0 is the steady start
    Eigen::VectorXd friction_reference;
};

/// inputs[t] drives step t (inputs[0] fixes the initial steady state); needs steps + 1 inputs.
GasTrajectory simulate_gas(const IesNetwork& net, const std::vector<GasInput>& inputs, std::size_t steps, double dt,
                           double theta = 1.0);

double gtu_load(double power_w, double efficiency);

}  // namespace iestrack
