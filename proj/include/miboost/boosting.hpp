#pragma once

#include "miboost/data.hpp"
#include "miboost/types.hpp"

#include <cmath>
#include <concepts>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace miboost {

/// Squared-error loss, rho(y, eta) = (y - eta)^2 / 2.
template <typename Scalar>
struct SquaredErrorLoss {
    Scalar evaluate(Scalar y, Scalar eta) const { return Scalar(0.5) * (y - eta) * (y - eta); }
    Scalar negative_gradient(Scalar y, Scalar eta) const { return y - eta; }

    template <typename Y, typename Eta>
    auto negative_gradient(const Eigen::MatrixBase<Y>& y, const Eigen::MatrixBase<Eta>& eta) const {
        return y - eta;
    }

    /// Loss minimiser over constants.
    Scalar offset(const Vector<Scalar>& y) const { return y.mean(); }
};

template <typename L, typename Scalar>
concept BoostingLoss = requires(const L& loss, Scalar s, const Vector<Scalar>& v) {
    { loss.evaluate(s, s) } -> std::convertible_to<Scalar>;
    { loss.negative_gradient(s, s) } -> std::convertible_to<Scalar>;
    { loss.offset(v) } -> std::convertible_to<Scalar>;
};

/// Least-squares fit of pseudo-residuals on intercept + one covariate.
template <typename Scalar>
struct LinearLearnerFit {
    Index component = 0;
    Scalar intercept = 0;
    Scalar slope = 0;
    Scalar rss = 0;
};

/// Below this variance a covariate is treated as constant and gets slope 0.
template <typename Scalar>
inline constexpr Scalar kDegenerateVariance = Scalar(1e-12);

template <typename Scalar>
LinearLearnerFit<Scalar> fit_linear_learner(const Vector<Scalar>& u, const Vector<Scalar>& x,
                                            Index component = 0) {
    if (u.size() != x.size() || u.size() < 2)
        throw std::invalid_argument("fit_linear_learner: need equal lengths >= 2");
    const Scalar n = static_cast<Scalar>(u.size());
    const Scalar u_mean = u.mean();
    const Scalar x_mean = x.mean();
    const auto xc = (x.array() - x_mean);
    const Scalar sxx = xc.square().sum();
    LinearLearnerFit<Scalar> fit;
    fit.component = component;
    fit.slope = sxx / n < kDegenerateVariance<Scalar> ? Scalar(0) : (xc * (u.array() - u_mean)).sum() / sxx;
    fit.intercept = u_mean - fit.slope * x_mean;
    fit.rss = (u.array() - fit.intercept - fit.slope * x.array()).square().sum();
    return fit;
}

/// Argmin over columns of the summed rss (rows = imputations, columns =
/// components). Ties go to the smallest component index.
template <typename Derived>
Index select_component(const Eigen::MatrixBase<Derived>& rss) {
    using Scalar = typename Derived::Scalar;
    Index best = 0;
    Scalar best_loss = std::numeric_limits<Scalar>::infinity();
    for (Index r = 0; r < rss.cols(); ++r) {
        const Scalar loss = rss.col(r).sum();
        if (loss < best_loss) {
            best_loss = loss;
            best = r;
        }
    }
    return best;
}

template <typename Scalar>
Index select_component(const std::vector<std::vector<LinearLearnerFit<Scalar>>>& fits) {
    if (fits.empty() || fits.front().empty()) throw std::invalid_argument("select_component: empty grid");
    Matrix<Scalar> rss(static_cast<Index>(fits.size()), static_cast<Index>(fits.front().size()));
    for (Index m = 0; m < rss.rows(); ++m)
        for (Index r = 0; r < rss.cols(); ++r) rss(m, r) = fits[m][r].rss;
    return select_component(rss);
}

/// Accumulated boosting model over M imputations. Column 0 of
/// `coefficients` is the summed intercept contribution, column j+1 the
/// slope of covariate j.
template <typename Scalar>
struct BoostFit {
    Index M = 0;
    Index p = 0;
    Matrix<Scalar> coefficients;
    Vector<Scalar> averaged;
    std::vector<Index> selection_path;
    Index t_stop = 0;
    Scalar nu = Scalar(0.1);
    Vector<Scalar> offsets;

    Scalar mean_offset() const { return offsets.mean(); }
    Scalar averaged_intercept() const { return mean_offset() + averaged(0); }
    auto averaged_slopes() const { return averaged.tail(p); }

    /// Covariates that appear in the selection path, ascending.
    std::vector<Index> selected() const {
        std::vector<char> hit(p, 0);
        for (Index r : selection_path) hit[r] = 1;
        std::vector<Index> out;
        for (Index j = 0; j < p; ++j)
            if (hit[j]) out.push_back(j);
        return out;
    }
};

/// Per-iteration increments (already scaled by nu) for the chosen component.
template <typename Scalar>
struct StepRecord {
    Index component = 0;
    Vector<Scalar> intercepts;  ///< one per imputation
    Vector<Scalar> slopes;
};

/// Coupled component-wise boosting over M completed datasets: per-imputation
/// gradients and updates, one jointly selected component per iteration.
/// With M = 1 this is plain component-wise L2 boosting.
template <typename Scalar, typename Loss = SquaredErrorLoss<Scalar>>
    requires BoostingLoss<Loss, Scalar>
class MiBoost {
public:
    MiBoost(std::span<const BasicCompletedDataset<Scalar>> data, Scalar nu, Loss loss = {})
        : data_(data), loss_(std::move(loss)) {
        if (data.empty()) throw std::invalid_argument("MiBoost: no datasets");
        const Index M = static_cast<Index>(data.size());
        const Index n = data.front().rows(), p = data.front().cols();
        if (n < 2 || p < 1) throw std::invalid_argument("MiBoost: need n >= 2 and p >= 1");
        for (const auto& d : data)
            if (d.rows() != n || d.cols() != p || d.y.size() != n)
                throw std::invalid_argument("MiBoost: imputed datasets differ in shape");
        fit_.M = M;
        fit_.p = p;
        fit_.nu = nu;
        fit_.coefficients = Matrix<Scalar>::Zero(M, p + 1);
        fit_.averaged = Vector<Scalar>::Zero(p + 1);
        fit_.offsets.resize(M);
        eta_.resize(n, M);
        x_mean_.resize(M, p);
        sxx_.resize(M, p);
        for (Index m = 0; m < M; ++m) {
            const auto& X = data[m].X;
            fit_.offsets(m) = loss_.offset(data[m].y);
            eta_.col(m).setConstant(fit_.offsets(m));
            x_mean_.row(m) = X.colwise().mean();
            sxx_.row(m) = (X.rowwise() - x_mean_.row(m)).colwise().squaredNorm();
        }
    }

    /// One iteration: gradients, M x p learner grid, joint selection, update.
    StepRecord<Scalar> step() {
        const Index M = fit_.M, p = fit_.p;
        const Index n = eta_.rows();
        const Scalar n_s = static_cast<Scalar>(n);
        Matrix<Scalar> rss(M, p);
        Matrix<Scalar> sxu(M, p);
        Vector<Scalar> u_mean(M);
        std::vector<Vector<Scalar>> u(M);
        for (Index m = 0; m < M; ++m) {
            u[m].resize(n);
            for (Index i = 0; i < n; ++i) u[m](i) = loss_.negative_gradient(data_[m].y(i), eta_(i, m));
            if (!u[m].allFinite())
                throw NumericError("non-finite negative gradient in imputation " + std::to_string(m + 1));
            u_mean(m) = u[m].mean();
            const Scalar suu = (u[m].array() - u_mean(m)).square().sum();
            sxu.row(m) = (data_[m].X.transpose() * u[m]).transpose();
            sxu.row(m) -= n_s * u_mean(m) * x_mean_.row(m);
            for (Index r = 0; r < p; ++r) {
                if (sxx_(m, r) / n_s < kDegenerateVariance<Scalar>) {
                    rss(m, r) = suu;
                } else {
                    rss(m, r) = std::max(Scalar(0), suu - sxu(m, r) * sxu(m, r) / sxx_(m, r));
                }
            }
        }
        const Index r = select_component(rss);

        StepRecord<Scalar> rec;
        rec.component = r;
        rec.intercepts.resize(M);
        rec.slopes.resize(M);
        for (Index m = 0; m < M; ++m) {
            const Scalar slope =
                sxx_(m, r) / n_s < kDegenerateVariance<Scalar> ? Scalar(0) : sxu(m, r) / sxx_(m, r);
            const Scalar intercept = u_mean(m) - slope * x_mean_(m, r);
            rec.intercepts(m) = fit_.nu * intercept;
            rec.slopes(m) = fit_.nu * slope;
            eta_.col(m).array() += rec.intercepts(m) + rec.slopes(m) * data_[m].X.col(r).array();
            fit_.coefficients(m, 0) += rec.intercepts(m);
            fit_.coefficients(m, r + 1) += rec.slopes(m);
        }
        fit_.averaged(0) = fit_.coefficients.col(0).mean();
        fit_.averaged(r + 1) = fit_.coefficients.col(r + 1).mean();
        fit_.selection_path.push_back(r);
        ++fit_.t_stop;
        return rec;
    }

    const BoostFit<Scalar>& fit() const { return fit_; }
    BoostFit<Scalar> release() { return std::move(fit_); }
    /// Current additive predictors, one column per imputation.
    const Matrix<Scalar>& predictors() const { return eta_; }

private:
    std::span<const BasicCompletedDataset<Scalar>> data_;
    Loss loss_;
    BoostFit<Scalar> fit_;
    Matrix<Scalar> eta_;
    Matrix<Scalar> x_mean_;
    Matrix<Scalar> sxx_;
};

struct NoObserver {
    template <typename Booster, typename Record>
    void operator()(const Booster&, const Record&) const {}
};

/// MIBoost for a fixed number of iterations. `observer(booster, record)` is
/// called after every step.
template <typename Scalar, typename Loss = SquaredErrorLoss<Scalar>, typename Observer = NoObserver>
BoostFit<Scalar> run_miboost(std::span<const BasicCompletedDataset<Scalar>> data, Scalar nu, Index t_stop,
                             Loss loss = {}, Observer&& observer = {}) {
    if (t_stop < 0) throw std::invalid_argument("run_miboost: t_stop must be >= 0");
    MiBoost<Scalar, Loss> booster(data, nu, std::move(loss));
    for (Index t = 0; t < t_stop; ++t) {
        const auto rec = booster.step();
        observer(booster, rec);
    }
    return booster.release();
}

/// Plain component-wise boosting on one completed dataset.
template <typename Scalar, typename Loss = SquaredErrorLoss<Scalar>>
BoostFit<Scalar> run_cwgb(const BasicCompletedDataset<Scalar>& data, Scalar nu, Index t_stop, Loss loss = {}) {
    return run_miboost<Scalar, Loss>(std::span<const BasicCompletedDataset<Scalar>>(&data, 1), nu, t_stop,
                                     std::move(loss));
}

/// Prediction of the imputation-averaged model for one centered row.
template <typename Scalar, typename Derived>
Scalar predict(const BoostFit<Scalar>& fit, const Eigen::MatrixBase<Derived>& x_row) {
    if (x_row.size() != fit.p)
        throw std::invalid_argument("predict: row has " + std::to_string(x_row.size()) + " entries, model has " +
                                    std::to_string(fit.p));
    return fit.averaged_intercept() + fit.averaged_slopes().dot(x_row.derived().template cast<Scalar>());
}

/// Prediction of imputation m's own (non-averaged) model.
template <typename Scalar, typename Derived>
Scalar predict_imputation(const BoostFit<Scalar>& fit, Index m, const Eigen::MatrixBase<Derived>& x_row) {
    return fit.offsets(m) + fit.coefficients(m, 0) +
           fit.coefficients.row(m).tail(fit.p).dot(x_row.derived().template cast<Scalar>());
}

/// Counts iterations where some imputation changed a slope other than the
/// selected one, or where imputations disagree on which slope moved.
template <typename Scalar>
class UniformSelectionAudit {
public:
    template <typename Booster>
    void operator()(const Booster& booster, const StepRecord<Scalar>& rec) {
        const auto& coef = booster.fit().coefficients;
        if (previous_.size() == 0) previous_ = Matrix<Scalar>::Zero(coef.rows(), coef.cols());
        ++iterations_;
        bool violation = false;
        for (Index m = 0; m < coef.rows(); ++m)
            for (Index j = 1; j < coef.cols(); ++j)
                if (j != rec.component + 1 && coef(m, j) != previous_(m, j)) violation = true;
        if (booster.fit().selection_path.back() != rec.component) violation = true;
        if (violation) ++violations_;
        previous_ = coef;
    }

    Index iterations() const { return iterations_; }
    Index violations() const { return violations_; }

private:
    Matrix<Scalar> previous_;
    Index iterations_ = 0;
    Index violations_ = 0;
};

/// A single linear predictor on centered covariates (averaged boosting
/// model or penalized regression fit).
struct LinearModel {
    double intercept = 0;
    Vector<double> slopes;

    template <typename Derived>
    double operator()(const Eigen::MatrixBase<Derived>& x_row) const {
        return intercept + slopes.dot(x_row.derived());
    }
    std::vector<Index> selected() const {
        std::vector<Index> out;
        for (Index j = 0; j < slopes.size(); ++j)
            if (slopes(j) != 0.0) out.push_back(j);
        return out;
    }
};

inline LinearModel to_linear_model(const BoostFit<double>& fit) {
    return {fit.averaged_intercept(), fit.averaged_slopes()};
}

std::string to_json(const BoostFit<double>& fit, std::span<const std::string> names = {});

}  // namespace miboost
