#pragma once

#include <functional>

#include <Eigen/Dense>

namespace iestrack {

struct SqrtFilterState {
    Eigen::VectorXd x;
    Eigen::MatrixXd S;   // lower-triangular square root of the estimate covariance
    Eigen::MatrixXd SQ;  // process noise square root
    Eigen::MatrixXd SR;  // measurement noise square root
};

struct GaussianSqrt {
    Eigen::VectorXd x;
    Eigen::MatrixXd S;
};

/// Maps each column (a state or cubature point) to a column of outputs.
using BatchFunction = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;
using PointFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Applies f column by column; failures name the offending point.
BatchFunction pointwise(PointFunction f);

/// Lower-triangular S with S S^T = M M^T and nonnegative diagonal.
Eigen::MatrixXd tria(const Eigen::MatrixXd& M);

/// Columns x + sqrt(n) S e_i, then x - sqrt(n) S e_i.
Eigen::MatrixXd cubature_points(const Eigen::VectorXd& x, const Eigen::MatrixXd& S);

GaussianSqrt predict(const SqrtFilterState& fs, const BatchFunction& f);

GaussianSqrt update(const GaussianSqrt& prediction, const BatchFunction& h, const Eigen::VectorXd& z,
                    const Eigen::MatrixXd& SR);

SqrtFilterState step(const SqrtFilterState& fs, const BatchFunction& f, const BatchFunction& h,
                     const Eigen::VectorXd& z);

}  // namespace iestrack
