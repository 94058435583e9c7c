#pragma once

// Slow reference implementations used to check the library.

#include "miboost/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

using miboost::Index;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct CwgbResult {
    std::vector<Index> path;
    double offset = 0;
    Vec coefficients;  ///< intercept first
};

/// Component-wise L2 boosting written out naively: residuals, one OLS per
/// column by explicit sums, argmin of the residual sum of squares.
inline CwgbResult naive_cwgb(const Mat& X, const Vec& y, double nu, Index steps) {
    const Index n = X.rows(), p = X.cols();
    CwgbResult out;
    out.coefficients = Vec::Zero(p + 1);
    double ysum = 0;
    for (Index i = 0; i < n; ++i) ysum += y(i);
    out.offset = ysum / static_cast<double>(n);
    Vec eta = Vec::Constant(n, out.offset);
    for (Index t = 0; t < steps; ++t) {
        Vec u = y - eta;
        Index best = 0;
        double best_rss = std::numeric_limits<double>::infinity(), best_a = 0, best_b = 0;
        for (Index j = 0; j < p; ++j) {
            double xm = 0, um = 0;
            for (Index i = 0; i < n; ++i) {
                xm += X(i, j);
                um += u(i);
            }
            xm /= static_cast<double>(n);
            um /= static_cast<double>(n);
            double sxy = 0, sxx = 0;
            for (Index i = 0; i < n; ++i) {
                sxy += (X(i, j) - xm) * (u(i) - um);
                sxx += (X(i, j) - xm) * (X(i, j) - xm);
            }
            const double b = sxx / static_cast<double>(n) < 1e-12 ? 0.0 : sxy / sxx;
            const double a = um - b * xm;
            double rss = 0;
            for (Index i = 0; i < n; ++i) rss += (u(i) - a - b * X(i, j)) * (u(i) - a - b * X(i, j));
            if (rss < best_rss) {
                best_rss = rss;
                best = j;
                best_a = a;
                best_b = b;
            }
        }
        out.path.push_back(best);
        out.coefficients(0) += nu * best_a;
        out.coefficients(best + 1) += nu * best_b;
        for (Index i = 0; i < n; ++i) eta(i) += nu * (best_a + best_b * X(i, best));
    }
    return out;
}

struct EnetSolution {
    double intercept = 0;
    Vec beta;
    double objective = std::numeric_limits<double>::infinity();
};

inline double enet_objective(const Mat& X, const Vec& y, const Vec& w, double lambda, double alpha, const Vec& v,
                             double b0, const Vec& beta) {
    double value = 0;
    for (Index i = 0; i < X.rows(); ++i) {
        const double r = y(i) - b0 - X.row(i).dot(beta);
        value += 0.5 * w(i) * r * r;
    }
    for (Index j = 0; j < beta.size(); ++j)
        if (beta(j) != 0) value += lambda * v(j) * (alpha * std::abs(beta(j)) + (1 - alpha) * beta(j) * beta(j) / 2);
    return value;
}

/// Exact minimiser of the weighted elastic net by enumerating every
/// (support, sign) pattern, solving the stationarity equations on the
/// support and keeping the best candidate whose signs are consistent.
/// Feasible for p <= 8.
inline EnetSolution exhaustive_enet(const Mat& X, const Vec& y, const Vec& w, double lambda, double alpha,
                                    const Vec& v) {
    const Index n = X.rows(), p = X.cols();
    const double wsum = w.sum();
    Vec xbar = Vec::Zero(p);
    double ybar = 0;
    for (Index i = 0; i < n; ++i) {
        xbar += w(i) * X.row(i).transpose();
        ybar += w(i) * y(i);
    }
    xbar /= wsum;
    ybar /= wsum;
    Mat Xc = X.rowwise() - xbar.transpose();
    Vec yc = y.array() - ybar;

    EnetSolution best;
    best.beta = Vec::Zero(p);
    best.intercept = ybar;
    best.objective = enet_objective(X, y, w, lambda, alpha, v, ybar, best.beta);

    Index patterns = 1;
    for (Index j = 0; j < p; ++j) patterns *= 3;
    for (Index code = 1; code < patterns; ++code) {
        std::vector<Index> support;
        std::vector<double> sign;
        Index c = code;
        bool allowed = true;
        for (Index j = 0; j < p; ++j) {
            const Index s = c % 3;
            c /= 3;
            if (s == 0) continue;
            if (std::isinf(v(j))) allowed = false;
            support.push_back(j);
            sign.push_back(s == 1 ? 1.0 : -1.0);
        }
        if (!allowed) continue;
        const Index k = static_cast<Index>(support.size());
        Mat A = Mat::Zero(k, k);
        Vec rhs = Vec::Zero(k);
        for (Index a = 0; a < k; ++a) {
            for (Index b = 0; b < k; ++b)
                for (Index i = 0; i < n; ++i) A(a, b) += w(i) * Xc(i, support[a]) * Xc(i, support[b]);
            A(a, a) += lambda * (1 - alpha) * v(support[a]);
            for (Index i = 0; i < n; ++i) rhs(a) += w(i) * Xc(i, support[a]) * yc(i);
            rhs(a) -= lambda * alpha * v(support[a]) * sign[a];
        }
        Eigen::FullPivLU<Mat> lu(A);
        if (!lu.isInvertible()) continue;
        const Vec bs = lu.solve(rhs);
        bool consistent = true;
        for (Index a = 0; a < k; ++a)
            if (bs(a) * sign[a] <= 0) consistent = false;
        if (!consistent) continue;
        Vec beta = Vec::Zero(p);
        for (Index a = 0; a < k; ++a) beta(support[a]) = bs(a);
        const double b0 = ybar - xbar.dot(beta);
        const double obj = enet_objective(X, y, w, lambda, alpha, v, b0, beta);
        if (obj < best.objective) {
            best.objective = obj;
            best.beta = beta;
            best.intercept = b0;
        }
    }
    return best;
}

/// Central finite difference of f at x.
template <typename F>
double central_difference(F&& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2 * h);
}

}  // namespace oracle
