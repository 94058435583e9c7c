#pragma once

#include "miboost/data.hpp"
#include "miboost/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace miboost {

/// M completed datasets stacked m-major with per-row observation weights.
template <typename Scalar>
struct StackedDesign {
    Matrix<Scalar> X;
    Vector<Scalar> y;
    Vector<Scalar> weights;
    std::vector<std::pair<Index, Index>> origin;  ///< (imputation, original row)
    Index subjects = 0;

    Index rows() const { return X.rows(); }
    Index cols() const { return X.cols(); }
};

/// Stacks the imputations with weight 1/M per row, so each subject's rows
/// sum to one.
template <typename Scalar>
StackedDesign<Scalar> stack_imputations(std::span<const BasicCompletedDataset<Scalar>> data) {
    if (data.empty()) throw std::invalid_argument("stack_imputations: no datasets");
    const Index M = static_cast<Index>(data.size());
    const Index n = data.front().rows(), p = data.front().cols();
    StackedDesign<Scalar> s;
    s.X.resize(M * n, p);
    s.y.resize(M * n);
    s.weights = Vector<Scalar>::Constant(M * n, Scalar(1) / static_cast<Scalar>(M));
    s.subjects = n;
    s.origin.reserve(M * n);
    for (Index m = 0; m < M; ++m) {
        if (data[m].rows() != n || data[m].cols() != p)
            throw std::invalid_argument("stack_imputations: imputed datasets differ in shape");
        s.X.middleRows(m * n, n) = data[m].X;
        s.y.segment(m * n, n) = data[m].y;
        for (Index i = 0; i < n; ++i) s.origin.emplace_back(m, i);
    }
    return s;
}

/// Sufficient statistics of a weighted least-squares problem with an
/// unpenalized intercept: weighted means and the weighted-centered cross
/// products.
template <typename Scalar>
struct WeightedGram {
    Vector<Scalar> x_mean;
    Scalar y_mean = 0;
    Matrix<Scalar> gram;  ///< Xc' W Xc
    Vector<Scalar> xty;   ///< Xc' W (y - y_mean)
    Scalar weight_sum = 0;

    template <typename DX, typename DY, typename DW>
    static WeightedGram from(const Eigen::MatrixBase<DX>& X, const Eigen::MatrixBase<DY>& y,
                             const Eigen::MatrixBase<DW>& w) {
        WeightedGram g;
        g.weight_sum = w.sum();
        if (!(g.weight_sum > 0)) throw std::invalid_argument("WeightedGram: weights sum to zero");
        g.x_mean = (X.transpose() * w) / g.weight_sum;
        g.y_mean = w.dot(y) / g.weight_sum;
        const Matrix<Scalar> Xc = X.rowwise() - g.x_mean.transpose();
        const Matrix<Scalar> WXc = Xc.array().colwise() * w.array();
        g.gram = Xc.transpose() * WXc;
        g.xty = WXc.transpose() * (y.array() - g.y_mean).matrix();
        return g;
    }

    static WeightedGram from(const StackedDesign<Scalar>& d) { return from(d.X, d.y, d.weights); }
};

template <typename Scalar>
struct PenalizedFit {
    Scalar intercept = 0;
    Vector<Scalar> coefficients;
    Scalar lambda = 0;
    Scalar alpha = 1;
    Vector<Scalar> adaptive_weights;  ///< +inf marks a permanently excluded covariate
    bool converged = false;
    int iterations = 0;

    std::vector<Index> selected() const {
        std::vector<Index> out;
        for (Index j = 0; j < coefficients.size(); ++j)
            if (coefficients(j) != Scalar(0)) out.push_back(j);
        return out;
    }
};

template <typename Scalar>
Scalar soft_threshold(Scalar z, Scalar gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return Scalar(0);
}

/// Minimises
///   1/2 sum_i w_i (y_i - b0 - x_i'b)^2
///     + lambda sum_j v_j (alpha |b_j| + (1 - alpha) b_j^2 / 2)
/// by cyclic coordinate descent on the Gram statistics. Stops once a full
/// sweep moves no coefficient by more than tol.
template <typename Scalar>
PenalizedFit<Scalar> coord_descent_enet(const WeightedGram<Scalar>& g, Scalar lambda, Scalar alpha,
                                        const Vector<Scalar>& w_adapt, Scalar tol, int max_iter,
                                        const Vector<Scalar>* warm_start = nullptr) {
    const Index p = g.gram.rows();
    if (!(lambda >= 0)) throw std::invalid_argument("coord_descent_enet: lambda must be >= 0");
    if (!(alpha >= 0 && alpha <= 1)) throw std::invalid_argument("coord_descent_enet: alpha must lie in [0, 1]");
    if (w_adapt.size() != p || (w_adapt.array() < 0).any())
        throw std::invalid_argument("coord_descent_enet: adaptive weights must be p non-negative values");

    PenalizedFit<Scalar> fit;
    fit.lambda = lambda;
    fit.alpha = alpha;
    fit.adaptive_weights = w_adapt;
    fit.coefficients = Vector<Scalar>::Zero(p);

    std::vector<char> excluded(p, 0);
    Vector<Scalar> l1(p), denom(p);
    for (Index j = 0; j < p; ++j) {
        excluded[j] = std::isinf(w_adapt(j)) ? 1 : 0;
        if (excluded[j]) continue;
        l1(j) = lambda * alpha * w_adapt(j);
        denom(j) = g.gram(j, j) + lambda * (1 - alpha) * w_adapt(j);
        if (!(denom(j) > 0)) excluded[j] = 1;
    }

    Vector<Scalar>& beta = fit.coefficients;
    Vector<Scalar> q = g.xty;  // xty - gram * beta
    if (warm_start != nullptr) {
        for (Index j = 0; j < p; ++j)
            if (!excluded[j]) beta(j) = (*warm_start)(j);
        q.noalias() -= g.gram * beta;
    }

    auto update = [&](Index j) -> Scalar {
        const Scalar old = beta(j);
        const Scalar z = q(j) + g.gram(j, j) * old;
        const Scalar next = soft_threshold(z, l1(j)) / denom(j);
        const Scalar delta = next - old;
        if (delta != 0) {
            beta(j) = next;
            q.noalias() -= delta * g.gram.col(j);
        }
        return std::abs(delta);
    };

    std::vector<Index> active;
    while (fit.iterations < max_iter) {
        Scalar max_change = 0;
        ++fit.iterations;
        for (Index j = 0; j < p; ++j)
            if (!excluded[j]) max_change = std::max(max_change, update(j));
        if (max_change < tol) {
            fit.converged = true;
            break;
        }
        active.clear();
        for (Index j = 0; j < p; ++j)
            if (beta(j) != 0) active.push_back(j);
        while (fit.iterations < max_iter) {
            ++fit.iterations;
            Scalar inner = 0;
            for (Index j : active) inner = std::max(inner, update(j));
            if (inner < tol) break;
        }
    }
    fit.intercept = g.y_mean - g.x_mean.dot(beta);
    return fit;
}

template <typename Scalar>
PenalizedFit<Scalar> coord_descent_enet(const StackedDesign<Scalar>& design, Scalar lambda, Scalar alpha,
                                        const Vector<Scalar>& w_adapt, Scalar tol, int max_iter) {
    return coord_descent_enet(WeightedGram<Scalar>::from(design), lambda, alpha, w_adapt, tol, max_iter);
}

/// Smallest lambda with an all-zero solution; alpha is floored at 1e-3 so
/// the ridge end of the grid stays finite.
template <typename Scalar>
Scalar lambda_max(const WeightedGram<Scalar>& g, Scalar alpha, const Vector<Scalar>& w_adapt) {
    const Scalar a = std::max(alpha, Scalar(1e-3));
    Scalar best = 0;
    for (Index j = 0; j < g.xty.size(); ++j) {
        if (std::isinf(w_adapt(j)) || !(w_adapt(j) > 0)) continue;
        best = std::max(best, std::abs(g.xty(j)) / (a * w_adapt(j)));
    }
    return best > 0 ? best : Scalar(1);
}

/// Log-spaced, descending from lambda_max to lambda_max * min_ratio.
template <typename Scalar>
Vector<Scalar> lambda_grid(Scalar lambda_max_value, Index count, Scalar min_ratio) {
    if (count < 1) throw std::invalid_argument("lambda_grid: count must be >= 1");
    Vector<Scalar> grid(count);
    const Scalar hi = std::log(lambda_max_value), lo = std::log(lambda_max_value * min_ratio);
    for (Index i = 0; i < count; ++i)
        grid(i) = count == 1 ? lambda_max_value
                             : std::exp(hi + (lo - hi) * static_cast<Scalar>(i) / static_cast<Scalar>(count - 1));
    return grid;
}

/// Warm-started fits along a descending lambda sequence.
template <typename Scalar>
std::vector<PenalizedFit<Scalar>> enet_path(const WeightedGram<Scalar>& g, const Vector<Scalar>& lambdas,
                                            Scalar alpha, const Vector<Scalar>& w_adapt, Scalar tol, int max_iter) {
    std::vector<PenalizedFit<Scalar>> path;
    path.reserve(lambdas.size());
    Vector<Scalar> warm = Vector<Scalar>::Zero(g.gram.rows());
    for (Index i = 0; i < lambdas.size(); ++i) {
        path.push_back(coord_descent_enet(g, lambdas(i), alpha, w_adapt, tol, max_iter, &warm));
        warm = path.back().coefficients;
    }
    return path;
}

/// Objective value evaluated directly on the rows.
template <typename Scalar>
Scalar penalized_objective(const StackedDesign<Scalar>& d, Scalar intercept, const Vector<Scalar>& beta,
                           Scalar lambda, Scalar alpha, const Vector<Scalar>& w_adapt) {
    const Vector<Scalar> r = (d.y - d.X * beta).array() - intercept;
    Scalar value = Scalar(0.5) * (d.weights.array() * r.array().square()).sum();
    for (Index j = 0; j < beta.size(); ++j) {
        if (beta(j) == 0) continue;
        if (std::isinf(w_adapt(j))) return std::numeric_limits<Scalar>::infinity();
        value += lambda * w_adapt(j) * (alpha * std::abs(beta(j)) + (1 - alpha) * beta(j) * beta(j) / 2);
    }
    return value;
}

template <typename Scalar>
Scalar penalized_objective(const StackedDesign<Scalar>& d, const PenalizedFit<Scalar>& f) {
    return penalized_objective(d, f.intercept, f.coefficients, f.lambda, f.alpha, f.adaptive_weights);
}

/// Largest violation of the optimality conditions, computed from the rows:
/// intercept stationarity, stationarity of active coefficients, and the
/// subgradient bound for inactive ones.
template <typename Scalar>
Scalar kkt_residual(const StackedDesign<Scalar>& d, const PenalizedFit<Scalar>& f) {
    const Vector<Scalar> r = (d.y - d.X * f.coefficients).array() - f.intercept;
    const Vector<Scalar> wr = d.weights.array() * r.array();
    const Vector<Scalar> grad = d.X.transpose() * wr;
    Scalar worst = std::abs(wr.sum());
    for (Index j = 0; j < grad.size(); ++j) {
        const Scalar v = f.adaptive_weights(j);
        const Scalar b = f.coefficients(j);
        if (std::isinf(v)) {
            if (b != 0) return std::numeric_limits<Scalar>::infinity();
            continue;
        }
        const Scalar l1 = f.lambda * f.alpha * v;
        if (b != 0) {
            const Scalar sign = b > 0 ? Scalar(1) : Scalar(-1);
            worst = std::max(worst, std::abs(grad(j) - f.lambda * (1 - f.alpha) * v * b - l1 * sign));
        } else {
            worst = std::max(worst, std::max(Scalar(0), std::abs(grad(j)) - l1));
        }
    }
    return worst;
}

}  // namespace miboost
