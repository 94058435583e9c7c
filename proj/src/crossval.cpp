#include "miboost/crossval.hpp"

#include "miboost/parallel.hpp"
#include "miboost/rng.hpp"

#include <sstream>

namespace miboost {

void CvConfig::validate() const {
    if (K < 2) throw std::invalid_argument("K must be >= 2");
    if (M < 1) throw std::invalid_argument("M must be >= 1");
    if (t_stop_max < 1) throw std::invalid_argument("t_stop_max must be >= 1");
    if (!(nu > 0.0 && nu <= 1.0)) throw std::invalid_argument("nu must lie in (0, 1]");
}

Index argmin_first(const Vector<double>& v) {
    Index best = 0;
    for (Index t = 1; t < v.size(); ++t)
        if (v(t) < v(best)) best = t;
    return best;
}

std::vector<PreparedFold> prepare_folds(const MissingDataset& d, const FoldAssignment& folds,
                                        const FoldPlan& plan) {
    if (static_cast<Index>(folds.fold_of.size()) != d.rows())
        throw std::invalid_argument("fold assignment does not cover the dataset");
    std::vector<PreparedFold> out(folds.K);
    parallel_for(static_cast<std::size_t>(folds.K), plan.threads, [&](std::size_t k) {
        PreparedFold& f = out[k];
        f.train_rows = folds.rows_not_in(static_cast<int>(k));
        f.val_rows = folds.rows_in(static_cast<int>(k));
        const MissingDataset train = select_rows(d, f.train_rows);
        const MissingDataset val = select_rows(d, f.val_rows);
        if (!val.y_observed.any())
            throw std::invalid_argument("fold " + std::to_string(k + 1) +
                                        " has no observed response in its validation part");
        f.val_response_observed = val.y_observed;
        f.train_imputation = mice_fit(train, plan.M, plan.imputation, derive_seed("fold-impute", plan.seed, {k}));
        const auto val_seed = derive_seed("fold-validation", plan.seed, {k});
        for (int m = 0; m < plan.M; ++m) {
            const CompletedDataset val_m = mice_apply(f.train_imputation.models[m], val, val_seed);
            f.centering.push_back(center_fit(f.train_imputation.completed[m]));
            f.train.push_back(center_apply(f.train_imputation.completed[m], f.centering.back()));
            f.validation.push_back(center_apply(val_m, f.centering.back()));
        }
    });
    return out;
}

PreparedFull prepare_full(const MissingDataset& d, const FoldPlan& plan) {
    PreparedFull full;
    full.imputation = mice_fit(d, plan.M, plan.imputation, derive_seed("full-impute", plan.seed), plan.threads);
    for (const auto& c : full.imputation.completed) {
        full.centering.push_back(center_fit(c));
        full.centered.push_back(center_apply(c, full.centering.back()));
    }
    return full;
}

namespace {

double scored_mse(const Vector<double>& y, const Eigen::Ref<const Vector<double>>& pred, const MaskVector* observed,
                  bool exclude) {
    double sum = 0;
    Index count = 0;
    for (Index i = 0; i < y.size(); ++i) {
        if (exclude && observed != nullptr && !(*observed)(i)) continue;
        const double r = y(i) - pred(i);
        sum += r * r;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("validation set has no scored rows");
    return sum / static_cast<double>(count);
}

}  // namespace

double validation_error(const LinearModel& model, std::span<const CompletedDataset> val_sets,
                        const MaskVector* response_observed, bool exclude_imputed_response) {
    if (val_sets.empty()) throw std::invalid_argument("validation_error: no validation sets");
    double total = 0;
    for (const auto& v : val_sets) {
        if (v.rows() == 0) throw std::invalid_argument("validation_error: empty validation set");
        if (v.cols() != model.slopes.size()) throw std::invalid_argument("validation_error: dimension mismatch");
        const Vector<double> pred = (v.X * model.slopes).array() + model.intercept;
        total += scored_mse(v.y, pred, response_observed, exclude_imputed_response);
    }
    return total / static_cast<double>(val_sets.size());
}

double validation_error(const BoostFit<double>& fit, std::span<const CompletedDataset> val_sets,
                        const MaskVector* response_observed, bool exclude_imputed_response) {
    return validation_error(to_linear_model(fit), val_sets, response_observed, exclude_imputed_response);
}

Vector<double> fold_curve(const PreparedFold& fold, const CvConfig& cfg, BoostFit<double>* fit_out,
                          UniformSelectionAudit<double>* audit) {
    const Index T = cfg.t_stop_max;
    const auto& val = fold.validation;
    const Index M = static_cast<Index>(val.size());
    const MaskVector* observed = &fold.val_response_observed;
    const bool exclude = cfg.exclude_imputed_response;

    MiBoost<double> booster(std::span<const CompletedDataset>(fold.train), cfg.nu);
    const Index n_val = val.front().rows();
    Matrix<double> pred(n_val, M);
    pred.setConstant(booster.fit().mean_offset());

    auto error_now = [&] {
        double total = 0;
        for (Index m = 0; m < M; ++m) total += scored_mse(val[m].y, pred.col(m), observed, exclude);
        return total / static_cast<double>(M);
    };

    Vector<double> curve(T + 1);
    curve(0) = error_now();
    for (Index t = 1; t <= T; ++t) {
        const auto rec = booster.step();
        if (audit != nullptr) (*audit)(booster, rec);
        const double d0 = rec.intercepts.mean();
        const double ds = rec.slopes.mean();
        for (Index m = 0; m < M; ++m) pred.col(m).array() += d0 + ds * val[m].X.col(rec.component).array();
        curve(t) = error_now();
    }
    if (fit_out != nullptr) *fit_out = booster.fit();
    return curve;
}

MiBoostCvResult miboost_cv(std::span<const PreparedFold> folds, const PreparedFull& full, const CvConfig& cfg) {
    cfg.validate();
    const auto K = static_cast<Index>(folds.size());
    MiBoostCvResult result;
    result.curve.per_fold.resize(K, cfg.t_stop_max + 1);
    std::vector<BoostFit<double>> fits(K);
    std::vector<UniformSelectionAudit<double>> audits(K);
    std::vector<Vector<double>> curves(K);
    parallel_for(static_cast<std::size_t>(K), cfg.threads, [&](std::size_t k) {
        curves[k] = fold_curve(folds[k], cfg, &fits[k], &audits[k]);
    });
    for (Index k = 0; k < K; ++k) {
        result.curve.per_fold.row(k) = curves[k].transpose();
        result.audited_iterations += audits[k].iterations();
        result.uniform_violations += audits[k].violations();
    }
    result.curve.errors = result.curve.per_fold.colwise().mean().transpose();
    result.curve.t_star = argmin_first(result.curve.errors);

    UniformSelectionAudit<double> final_audit;
    result.final_fit = run_miboost<double>(std::span<const CompletedDataset>(full.centered), cfg.nu,
                                           result.curve.t_star, SquaredErrorLoss<double>{}, final_audit);
    result.audited_iterations += final_audit.iterations();
    result.uniform_violations += final_audit.violations();

    if (cfg.keep_fold_artifacts) {
        result.fold_fits = std::move(fits);
        for (const auto& f : folds) result.fold_imputations.push_back(f.train_imputation);
    }
    return result;
}

MiBoostCvResult miboost_cv(const MissingDataset& d, const CvConfig& cfg) {
    cfg.validate();
    d.validate();
    const FoldAssignment folds = make_folds(d.rows(), cfg.K, derive_seed("cv-folds", cfg.seed));
    const FoldPlan plan{cfg.M, cfg.imputation, cfg.seed, cfg.threads};
    const auto prepared = prepare_folds(d, folds, plan);
    const auto full = prepare_full(d, plan);
    return miboost_cv(prepared, full, cfg);
}

CvCurve boosting_cv(const CompletedDataset& data, const FoldAssignment& folds, double nu, Index t_stop_max) {
    CvCurve curve;
    curve.per_fold.resize(folds.K, t_stop_max + 1);
    for (int k = 0; k < folds.K; ++k) {
        const auto train_rows = folds.rows_not_in(k);
        const auto val_rows = folds.rows_in(k);
        const CompletedDataset train = select_rows(data, train_rows);
        const auto c = center_fit(train);
        PreparedFold f;
        f.train.push_back(center_apply(train, c));
        f.validation.push_back(center_apply(select_rows(data, val_rows), c));
        f.val_response_observed = MaskVector::Constant(static_cast<Index>(val_rows.size()), true);
        CvConfig cfg;
        cfg.M = 1;
        cfg.nu = nu;
        cfg.t_stop_max = t_stop_max;
        curve.per_fold.row(k) = fold_curve(f, cfg).transpose();
    }
    curve.errors = curve.per_fold.colwise().mean().transpose();
    curve.t_star = argmin_first(curve.errors);
    return curve;
}

std::string cv_report_csv(const CvCurve& curve) {
    std::ostringstream out;
    out << "fold,t,error\n";
    for (Index k = 0; k < curve.per_fold.rows(); ++k)
        for (Index t = 0; t < curve.per_fold.cols(); ++t)
            out << (k + 1) << ',' << t << ',' << format_double(curve.per_fold(k, t)) << '\n';
    for (Index t = 0; t < curve.errors.size(); ++t)
        out << "mean," << t << ',' << format_double(curve.errors(t)) << '\n';
    return out.str();
}

}  // namespace miboost
