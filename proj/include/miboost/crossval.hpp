#pragma once

#include "miboost/boosting.hpp"
#include "miboost/data.hpp"
#include "miboost/imputation.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace miboost {

struct CvConfig {
    int K = 5;
    int M = 10;
    Index t_stop_max = 1000;
    double nu = 0.1;
    ImputationParams imputation;
    std::uint64_t seed = 1;
    /// Score only validation rows whose response was observed.
    bool exclude_imputed_response = false;
    std::size_t threads = 1;
    /// Keep each fold's training imputation and boosting fit in the result.
    bool keep_fold_artifacts = false;

    void validate() const;
};

struct CvCurve {
    Vector<double> errors;    ///< length t_stop_max + 1, mean over folds
    Matrix<double> per_fold;  ///< K x (t_stop_max + 1)
    Index t_star = 0;

    double min_error() const { return errors(t_star); }
};

/// Argmin with ties resolved to the smallest t.
Index argmin_first(const Vector<double>& v);

/// One fold after split-before-impute: training imputed M times, validation
/// imputed with the training models, both centered with training means.
struct PreparedFold {
    std::vector<Index> train_rows;
    std::vector<Index> val_rows;
    ImputationSet train_imputation;
    std::vector<CompletedDataset> train;       ///< centered
    std::vector<CompletedDataset> validation;  ///< centered with training means
    std::vector<CenteringInfo> centering;
    MaskVector val_response_observed;
};

/// The whole dataset imputed M times and centered within each imputation.
struct PreparedFull {
    ImputationSet imputation;
    std::vector<CompletedDataset> centered;
    std::vector<CenteringInfo> centering;
};

struct FoldPlan {
    int M = 10;
    ImputationParams imputation;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
};

std::vector<PreparedFold> prepare_folds(const MissingDataset& d, const FoldAssignment& folds,
                                        const FoldPlan& plan);
PreparedFull prepare_full(const MissingDataset& d, const FoldPlan& plan);

/// Mean over imputations of the validation MSE of the averaged model.
/// `response_observed`, when given with `exclude_imputed_response`, limits
/// scoring to rows whose response was originally observed.
double validation_error(const BoostFit<double>& fit, std::span<const CompletedDataset> val_sets,
                        const MaskVector* response_observed = nullptr, bool exclude_imputed_response = false);

/// Same metric for an arbitrary linear model.
double validation_error(const LinearModel& model, std::span<const CompletedDataset> val_sets,
                        const MaskVector* response_observed = nullptr, bool exclude_imputed_response = false);

struct MiBoostCvResult {
    CvCurve curve;
    BoostFit<double> final_fit;
    std::vector<BoostFit<double>> fold_fits;          ///< only with keep_fold_artifacts
    std::vector<ImputationSet> fold_imputations;      ///< only with keep_fold_artifacts
    Index audited_iterations = 0;
    Index uniform_violations = 0;
};

/// Leakage-free K-fold choice of the stopping iteration followed by the
/// final fit on the full dataset.
MiBoostCvResult miboost_cv(const MissingDataset& d, const CvConfig& cfg);

/// Same protocol on already prepared folds (lets several methods share
/// one set of fold imputations).
MiBoostCvResult miboost_cv(std::span<const PreparedFold> folds, const PreparedFull& full, const CvConfig& cfg);

/// Per-fold validation curve of MIBoost for t = 0..t_stop_max.
Vector<double> fold_curve(const PreparedFold& fold, const CvConfig& cfg, BoostFit<double>* fit_out = nullptr,
                          UniformSelectionAudit<double>* audit = nullptr);

/// Ordinary K-fold CV of component-wise boosting on one completed dataset
/// (no re-imputation). Returns the fold-averaged curve.
CvCurve boosting_cv(const CompletedDataset& data, const FoldAssignment& folds, double nu, Index t_stop_max);

/// CSV rows (fold, t, error): folds numbered from 1, then rows labelled
/// "mean" for the fold average.
std::string cv_report_csv(const CvCurve& curve);

}  // namespace miboost
