#include "iestrack/sckf.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "iestrack/errors.hpp"

namespace iestrack {

namespace {

void check_points(const Eigen::MatrixXd& y, const char* what) {
    for (Eigen::Index c = 0; c < y.cols(); ++c)
        if (!y.col(c).allFinite())
            throw NumericalError(std::string(what) + " produced non-finite output at cubature point " +
                                 std::to_string(c));
}

}  // namespace

BatchFunction pointwise(PointFunction f) {
    return [f = std::move(f)](const Eigen::MatrixXd& points) {
        Eigen::MatrixXd out;
        for (Eigen::Index c = 0; c < points.cols(); ++c) {
            Eigen::VectorXd y;
            try {
                y = f(points.col(c));
            } catch (const std::exception& e) {
                throw NumericalError("cubature point " + std::to_string(c) + ": " + e.what());
            }
            if (c == 0) out.resize(y.size(), points.cols());
            out.col(c) = y;
        }
        return out;
    };
}

Eigen::MatrixXd tria(const Eigen::MatrixXd& M) {
    const Eigen::Index n = M.rows();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
    if (M.cols() == 0 || n == 0) return S;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(M.transpose());
    const Eigen::Index r = std::min(n, M.cols());
    Eigen::MatrixXd R = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    S.leftCols(r) = R.transpose();
    for (Eigen::Index i = 0; i < r; ++i)
        if (S(i, i) < 0.0) S.col(i) = -S.col(i);
    return S;
}

Eigen::MatrixXd cubature_points(const Eigen::VectorXd& x, const Eigen::MatrixXd& S) {
    const Eigen::Index n = x.size();
    const double scale = std::sqrt(static_cast<double>(n));
    Eigen::MatrixXd pts(n, 2 * n);
    pts.leftCols(n) = (scale * S).colwise() + x;
    pts.rightCols(n) = (-scale * S).colwise() + x;
    return pts;
}

GaussianSqrt predict(const SqrtFilterState& fs, const BatchFunction& f) {
    const Eigen::Index n = fs.x.size();
    Eigen::MatrixXd pts = cubature_points(fs.x, fs.S);
    Eigen::MatrixXd prop = f(pts);
    if (prop.rows() != n || prop.cols() != 2 * n) throw InputError("transition changed the state dimension");
    check_points(prop, "transition");
    GaussianSqrt out;
    out.x = prop.rowwise().mean();
    Eigen::MatrixXd M(n, 2 * n + fs.SQ.cols());
    M.leftCols(2 * n) = (prop.colwise() - out.x) / std::sqrt(2.0 * static_cast<double>(n));
    M.rightCols(fs.SQ.cols()) = fs.SQ;
    out.S = tria(M);
    return out;
}

GaussianSqrt update(const GaussianSqrt& pred, const BatchFunction& h, const Eigen::VectorXd& z,
                    const Eigen::MatrixXd& SR) {
    const Eigen::Index n = pred.x.size();
    const double norm = std::sqrt(2.0 * static_cast<double>(n));
    Eigen::MatrixXd pts = cubature_points(pred.x, pred.S);
    Eigen::MatrixXd zp = h(pts);
    const Eigen::Index m = zp.rows();
    if (z.size() != m) throw InputError("measurement has " + std::to_string(z.size()) + " entries, model gives " +
                                        std::to_string(m));
    check_points(zp, "measurement function");
    Eigen::VectorXd z_pred = zp.rowwise().mean();
    Eigen::MatrixXd Zc = (zp.colwise() - z_pred) / norm;
    Eigen::MatrixXd Xc = (pts.colwise() - pred.x) / norm;

    Eigen::MatrixXd Mz(m, 2 * n + SR.cols());
    Mz << Zc, SR;
    Eigen::MatrixXd Szz = tria(Mz);
    for (Eigen::Index i = 0; i < m; ++i)
        if (!(Szz(i, i) > 0.0))
            throw NumericalError("innovation covariance is singular at channel " + std::to_string(i));

    Eigen::MatrixXd Pxz = Xc * Zc.transpose();
    // W = (Pxz / Szz^T) / Szz, via two triangular solves on the transposed system.
    Eigen::MatrixXd Wt = Szz.triangularView<Eigen::Lower>().solve(Pxz.transpose());
    Wt = Szz.transpose().triangularView<Eigen::Upper>().solve(Wt);
    Eigen::MatrixXd W = Wt.transpose();

    GaussianSqrt out;
    out.x = pred.x + W * (z - z_pred);
    Eigen::MatrixXd Mx(n, 2 * n + SR.cols());
    Mx << Xc - W * Zc, W * SR;
    out.S = tria(Mx);
    return out;
}

SqrtFilterState step(const SqrtFilterState& fs, const BatchFunction& f, const BatchFunction& h,
                     const Eigen::VectorXd& z) {
    GaussianSqrt est = update(predict(fs, f), h, z, fs.SR);
    SqrtFilterState out = fs;
    out.x = std::move(est.x);
    out.S = std::move(est.S);
    return out;
}

}  // namespace iestrack
