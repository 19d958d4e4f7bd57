#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "iestrack/errors.hpp"
#include "iestrack/gas_dynamics.hpp"
#include "support.hpp"

using namespace iestrack;
using namespace testing_support;

namespace {

Eigen::VectorXd scaled_residual(const GasStepSystem& sys, const Eigen::VectorXd& x, const GasInput& u) {
    Eigen::VectorXd r = sys.matrix() * x - sys.rhs(x, u);
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) /= sys.matrix().row(i).cwiseAbs().maxCoeff();
    return r;
}

/// Mean loads of the scenario at its load nodes; zero where no profile exists, P/eta at GTU nodes.
Eigen::VectorXd scenario_loads(const Scenario& s) {
    const IesNetwork& net = s.network;
    std::vector<int> nodes = net.load_nodes();
    Eigen::VectorXd loads = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        for (const LoadProfileSpec& spec : s.loads.nodes)
            if (spec.node == nodes[k]) loads(static_cast<Eigen::Index>(k)) = spec.mean;
        if (auto g = net.gtu_for_gas_node(nodes[k]))
            loads(static_cast<Eigen::Index>(k)) = gtu_load(net.gtu_links[*g].power_w, net.gtu_links[*g].efficiency);
    }
    return loads;
}

Eigen::Index load_index(const IesNetwork& net, int node) {
    std::vector<int> nodes = net.load_nodes();
    return std::find(nodes.begin(), nodes.end(), node) - nodes.begin();
}

}  // namespace

TEST(StepSystem, SinglePipeCounts) {
    IesNetwork net = load_network(one_pipe_doc());
    GasStepSystem sys = build_step_system(net, 300.0);
    EXPECT_EQ(sys.size(), 4u);
    EXPECT_EQ(sys.matrix().rows(), 4);
    EXPECT_EQ(sys.matrix().cols(), 4);
}

TEST(StepSystem, ReferenceSize) {
    GasStepSystem sys = build_step_system(reference_scenario().network, 300.0);
    EXPECT_EQ(sys.size(), 118u);
}

TEST(StepSystem, SourceRows) {
    const IesNetwork& net = reference_scenario().network;
    GasStepSystem sys = build_step_system(net, 300.0);
    const Eigen::MatrixXd& a = sys.matrix();
    const auto first = static_cast<Eigen::Index>(2 * net.n_pipe());
    std::vector<int> sources = net.source_nodes();
    for (std::size_t s = 0; s < sources.size(); ++s) {
        Eigen::VectorXd row = a.row(first + static_cast<Eigen::Index>(s)).transpose();
        EXPECT_EQ(row.cwiseAbs().sum(), 1.0);
        EXPECT_EQ(row(sources[s] - 1), 1.0);
    }
}

TEST(StepSystem, RejectsNonpositiveStep) {
    IesNetwork net = load_network(one_pipe_doc());
    EXPECT_THROW(build_step_system(net, 0.0), InputError);
    EXPECT_THROW(build_step_system(net, 300.0, {1.5, std::nullopt}), InputError);
}

TEST(GasRhs, NoFlowUniformDensity) {
    const IesNetwork& net = small_scenario().network;
    GasStepSystem sys = build_step_system(net, 300.0);
    const double rho = 40.0;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys.size()));
    x.head(static_cast<Eigen::Index>(net.n_gas())).setConstant(rho);
    GasInput u = make_gas_input(net, Eigen::VectorXd::Zero(3));
    Eigen::VectorXd f = gas_rhs(x, u, sys);
    for (std::size_t k = 0; k < net.n_pipe(); ++k) {
        const Pipeline& p = net.pipelines[k];
        if (p.ratio_i != 1.0 || p.ratio_j != 1.0) continue;
        EXPECT_NEAR(f(static_cast<Eigen::Index>(k)), p.length * p.area() * 2.0 * rho, 1e-6);
        EXPECT_EQ(f(static_cast<Eigen::Index>(net.n_pipe() + k)), 0.0);
    }
}

TEST(GasRhs, FrictionIsQuadraticInFlow) {
    IesNetwork net = load_network(one_pipe_doc());
    GasStepSystem sys = build_step_system(net, 300.0);
    GasInput u = make_gas_input(net, Eigen::VectorXd::Constant(1, 3.0));
    auto momentum = [&](double scale) {
        Eigen::VectorXd x(4);
        x << 50.0, 48.0, 3.0 * scale, 2.5 * scale;
        return gas_rhs(x, u, sys)(1);
    };
    // Doubling the flow scale quadruples the second difference of a quadratic term.
    double d1 = momentum(2.0) - 2.0 * momentum(1.0) + momentum(0.0);
    double d2 = momentum(4.0) - 2.0 * momentum(2.0) + momentum(0.0);
    ASSERT_NE(d1, 0.0);
    EXPECT_NEAR(d2 / d1, 4.0, 1e-9);
}

TEST(GasRhs, SteadyStateIsFixedPointOfBothSides) {
    const Scenario& s = reference_scenario();
    GasInput u = make_gas_input(s.network, scenario_loads(s));
    Eigen::VectorXd x = solve_steady_state(s.network, u);
    GasStepSystem sys(s.network, 300.0, {1.0, x});
    EXPECT_LT(scaled_residual(sys, x, u).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(GasPredict, SteadyStateIsFixedPoint) {
    for (const Scenario* s : {&small_scenario(), &reference_scenario()}) {
        GasInput u = make_gas_input(s->network, scenario_loads(*s));
        Eigen::VectorXd x = solve_steady_state(s->network, u);
        for (double theta : {0.5, 1.0}) {
            GasStepSystem sys(s->network, 300.0, {theta, x});
            Eigen::VectorXd next = gas_predict(x, u, sys);
            EXPECT_LT((next - x).cwiseAbs().maxCoeff(), 1e-9) << s->name << " theta " << theta;
        }
    }
}

TEST(GasPredict, LinearSolveConsistency) {
    const Scenario& s = reference_scenario();
    GasInput u = make_gas_input(s.network, scenario_loads(s));
    Eigen::VectorXd x = solve_steady_state(s.network, u);
    GasStepSystem sys(s.network, 300.0, {1.0, x});
    std::mt19937_64 rng(4);
    Eigen::VectorXd perturbed = x + random_vector(x.size(), rng, 0.05);
    u.load_flows *= 1.1;
    Eigen::VectorXd next = gas_predict(perturbed, u, sys);
    Eigen::VectorXd r = sys.matrix() * next - sys.rhs(perturbed, u);
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) /= sys.matrix().row(i).cwiseAbs().maxCoeff();
    EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(GasPredict, SourceDensityHeld) {
    const Scenario& s = reference_scenario();
    GasInput u = make_gas_input(s.network, scenario_loads(s));
    Eigen::VectorXd x = solve_steady_state(s.network, u);
    GasStepSystem sys(s.network, 300.0, {1.0, x});
    u.load_flows *= 1.15;
    std::vector<int> sources = s.network.source_nodes();
    for (int t = 0; t < 30; ++t) {
        x = gas_predict(x, u, sys);
        for (std::size_t k = 0; k < sources.size(); ++k)
            EXPECT_EQ(x(sources[k] - 1), u.source_densities(static_cast<Eigen::Index>(k)));
    }
}

TEST(GasPredict, LoadStepLowersDownstreamDensity) {
    const Scenario& s = reference_scenario();
    const IesNetwork& net = s.network;
    const int node = 20;
    Eigen::VectorXd base = scenario_loads(s);
    GasInput u0 = make_gas_input(net, base);
    Eigen::VectorXd x0 = solve_steady_state(net, u0);
    Eigen::VectorXd stepped = base;
    stepped(load_index(net, node)) *= 1.2;
    GasInput u1 = make_gas_input(net, stepped);

    const double dt = 300.0;
    const int steps = 24, refine = 100;
    GasStepSystem coarse(net, dt, {1.0, x0});
    GasStepSystem fine(net, dt / refine, {1.0, x0});
    Eigen::VectorXd xc = x0, xf = x0;
    double previous_c = x0(node - 1), previous_f = x0(node - 1);
    for (int t = 1; t <= steps; ++t) {
        xc = gas_predict(xc, u1, coarse);
        for (int r = 0; r < refine; ++r) xf = gas_predict(xf, u1, fine);
        EXPECT_LT(xc(node - 1), previous_c) << "step " << t;
        EXPECT_LT(xf(node - 1), previous_f) << "step " << t;
        EXPECT_NEAR(xc(node - 1), xf(node - 1), 0.2 * (x0(node - 1) - xf(node - 1))) << "step " << t;
        previous_c = xc(node - 1);
        previous_f = xf(node - 1);
    }
}

TEST(GasPredict, PositiveUnderModerateForcing) {
    const Scenario& s = reference_scenario();
    Eigen::VectorXd base = scenario_loads(s);
    GasInput u = make_gas_input(s.network, base);
    Eigen::VectorXd x = solve_steady_state(s.network, u);
    GasStepSystem sys(s.network, 300.0, {1.0, x});
    u.load_flows = base * 1.2;
    const auto ng = static_cast<Eigen::Index>(s.network.n_gas());
    for (int t = 0; t < 288; ++t) {
        x = gas_predict(x, u, sys);
        ASSERT_GT(x.head(ng).minCoeff(), 0.0) << "step " << t;
    }
}

TEST(SteadyState, ZeroLoadsGiveZeroFlowAndRatioDensities) {
    const IesNetwork& net = small_scenario().network;
    Eigen::VectorXd x = solve_steady_state(net, make_gas_input(net, Eigen::VectorXd::Zero(3)));
    const double rho_s = *net.gas_nodes[0].source_density;
    EXPECT_LT(x.tail(6).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(x(0), rho_s, 1e-12);
    EXPECT_NEAR(x(1), rho_s, 1e-9);
    EXPECT_NEAR(x(2), rho_s, 1e-9);
    EXPECT_NEAR(x(3), 1.1 * rho_s, 1e-9);  // pipe 2-4 boosts at the node-2 end
}

TEST(SteadyState, SinglePipeClosedForm) {
    for (double load : {2.0, 10.0, 25.0}) {
        IesNetwork net = load_network(one_pipe_doc(30.0, 0.5));
        Eigen::VectorXd x = solve_steady_state(net, make_gas_input(net, Eigen::VectorXd::Constant(1, load)));
        const Pipeline& p = net.pipelines[0];
        const double c2 = net.sound_speed * net.sound_speed;
        double rho_j = std::sqrt(50.0 * 50.0 - p.length * p.friction * load * load / (2.0 * p.diameter * p.area() * p.area() * c2));
        EXPECT_NEAR(x(2), load, 1e-9 * load);
        EXPECT_NEAR(x(3), load, 1e-9 * load);
        EXPECT_NEAR(x(1), rho_j, 1e-9 * rho_j);
        EXPECT_LT(x(1), x(0));
    }
}

TEST(SteadyState, MassAccounting) {
    const Scenario& s = reference_scenario();
    Eigen::VectorXd loads = scenario_loads(s);
    Eigen::VectorXd x = solve_steady_state(s.network, make_gas_input(s.network, loads));
    double supply = 0.0, withdrawal = 0.0;
    for (int n : s.network.source_nodes()) supply -= node_delivery(s.network, x, n);
    for (int n : s.network.load_nodes()) withdrawal += node_delivery(s.network, x, n);
    EXPECT_NEAR(supply, withdrawal, 1e-9);
    EXPECT_NEAR(withdrawal, loads.sum(), 1e-9);
}

TEST(SteadyState, ReferenceFixedPointOverOneDay) {
    const Scenario& s = reference_scenario();
    auto start = std::chrono::steady_clock::now();
    GasInput u = make_gas_input(s.network, scenario_loads(s));
    Eigen::VectorXd x0 = solve_steady_state(s.network, u);
    GasStepSystem sys(s.network, 300.0, {1.0, x0});
    Eigen::VectorXd x = x0;
    for (int t = 0; t < 288; ++t) x = gas_predict(x, u, sys);
    EXPECT_LT((x - x0).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 5.0);
}

TEST(SimulateGas, ConstantProfileIsConstant) {
    const Scenario& s = small_scenario();
    std::vector<GasInput> inputs(11, make_gas_input(s.network, scenario_loads(s)));
    GasTrajectory traj = simulate_gas(s.network, inputs, 10, 300.0);
    ASSERT_EQ(traj.states.rows(), 11);
    for (Eigen::Index t = 1; t < 11; ++t) EXPECT_LT((traj.states.row(t) - traj.states.row(0)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SimulateGas, ZeroSteps) {
    const Scenario& s = small_scenario();
    std::vector<GasInput> inputs(1, make_gas_input(s.network, scenario_loads(s)));
    GasTrajectory traj = simulate_gas(s.network, inputs, 0, 300.0);
    EXPECT_EQ(traj.states.rows(), 1);
    EXPECT_LT((traj.states.row(0).transpose() - solve_steady_state(s.network, inputs[0])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SimulateGas, TooFewInputs) {
    const Scenario& s = small_scenario();
    std::vector<GasInput> inputs(3, make_gas_input(s.network, scenario_loads(s)));
    EXPECT_THROW(simulate_gas(s.network, inputs, 5, 300.0), InputError);
}

TEST(SimulateGas, SinusoidalLoadSetsDensityPeriod) {
    const Scenario& s = small_scenario();
    Eigen::VectorXd base = scenario_loads(s);
    const int period = 48, steps = 6 * period;
    std::vector<GasInput> inputs;
    for (int t = 0; t <= steps; ++t)
        inputs.push_back(make_gas_input(s.network, base * (1.0 + 0.1 * std::sin(2.0 * std::numbers::pi * t / period))));
    GasTrajectory traj = simulate_gas(s.network, inputs, steps, 300.0);
    auto crossings = [&](auto series) {
        // Skip the first period, then count sign changes around the mean.
        Eigen::VectorXd v = series.segment(period, steps - period + 1);
        v.array() -= v.mean();
        int count = 0;
        for (Eigen::Index i = 1; i < v.size(); ++i)
            if ((v(i - 1) < 0) != (v(i) < 0)) ++count;
        return count;
    };
    Eigen::VectorXd load(steps + 1);
    for (int t = 0; t <= steps; ++t) load(t) = inputs[t].load_flows(load_index(s.network, 3));
    int expected = crossings(load);
    EXPECT_NEAR(crossings(Eigen::VectorXd(traj.states.col(2))), expected, 1);
    EXPECT_NEAR(crossings(Eigen::VectorXd(traj.states.col(1))), expected, 1);
}

TEST(GtuLoad, Division) {
    EXPECT_EQ(gtu_load(0.0, 2e7), 0.0);
    EXPECT_EQ(gtu_load(2e7, 2e7), 1.0);
    EXPECT_DOUBLE_EQ(gtu_load(50e6, 2.5e7), 2.0);
    EXPECT_THROW(gtu_load(1.0, 0.0), InputError);
}

TEST(NodeDelivery, MatchesLoadAtSteadyState) {
    IesNetwork net = load_network(one_pipe_doc());
    Eigen::VectorXd x = solve_steady_state(net, make_gas_input(net, Eigen::VectorXd::Constant(1, 7.5)));
    EXPECT_NEAR(node_delivery(net, x, 2), 7.5, 1e-9);
    EXPECT_NEAR(node_delivery(net, x, 1), -7.5, 1e-9);
}
