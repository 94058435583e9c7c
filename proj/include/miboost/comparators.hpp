#pragma once

#include "miboost/boosting.hpp"
#include "miboost/crossval.hpp"
#include "miboost/penalized.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace miboost {

// ---------------------------------------------------------------------------
// Estimate-averaging boosting

struct EaBoostResult {
    std::vector<Index> t_star;               ///< CV-chosen iterations per imputation
    std::vector<BoostFit<double>> fits;      ///< one single-dataset fit per imputation
    Vector<double> averaged;                 ///< mean of the per-imputation coefficient rows
    double mean_offset = 0;
    std::vector<Index> selected;             ///< union over imputations

    LinearModel model() const;
    double mean_t_star() const;
};

/// Independent boosting per completed dataset, each stopped by its own
/// K-fold CV, then coefficient averaging.
EaBoostResult ea_boost(std::span<const CompletedDataset> centered, double nu, int K, Index t_stop_max,
                       std::uint64_t seed, std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Stacked adaptive LASSO / elastic net

enum class StackedMethod { salasso, saenet };

std::string to_string(StackedMethod m);

struct PenalizedGridSpec {
    Index n_lambda = 200;
    double lambda_min_ratio = 1e-4;
    std::vector<double> alphas = alpha_grid(41);
    int K = 5;
    double tol = 1e-7;
    double final_tol = 1e-10;
    int max_iter = 100000;
    bool exclude_imputed_response = false;

    static std::vector<double> alpha_grid(int count);
};

struct GridSearchResult {
    std::vector<double> alphas;
    Matrix<double> lambdas;   ///< n_lambda x n_alpha, each column descending
    Matrix<double> cv_error;  ///< n_lambda x n_alpha
    Index best_lambda_index = 0;
    Index best_alpha_index = 0;
    double best_lambda = 0;
    double best_alpha = 1;
    PenalizedFit<double> final;
};

/// Grid minimum; ties prefer the larger lambda, then the smaller alpha.
std::pair<Index, Index> best_grid_point(const Matrix<double>& cv_error, const Matrix<double>& lambdas);

/// 1/|b_j| with +inf where b_j == 0. Throws NumericError when every
/// coefficient is zero.
Vector<double> adaptive_weights_from_coefficients(const Vector<double>& beta);

/// Equal-weight stacked elastic net tuned over (lambda, alpha) by K-fold CV
/// with folds formed over subjects, so all copies of a subject stay together.
GridSearchResult tune_senet(const StackedDesign<double>& design, const PenalizedGridSpec& spec, std::uint64_t seed);

/// Adaptive weights from the tuned preliminary elastic net.
Vector<double> adaptive_weights_from_senet(const StackedDesign<double>& design, const PenalizedGridSpec& spec,
                                           std::uint64_t seed);

/// Per-fold and full-data stacked statistics plus adaptive weights, shared
/// between SaLASSO and SaENET.
struct StackedContext {
    WeightedGram<double> full_gram;
    Vector<double> full_weights;
    std::vector<WeightedGram<double>> fold_grams;
    std::vector<Vector<double>> fold_weights;
};

StackedContext prepare_stacked(std::span<const PreparedFold> folds, const PreparedFull& full,
                               const PenalizedGridSpec& spec, std::uint64_t seed, std::size_t threads = 1);

GridSearchResult tune_stacked(StackedMethod method, const StackedContext& ctx, std::span<const PreparedFold> folds,
                              const PenalizedGridSpec& spec);

/// Full protocol from raw data: split into folds, impute after splitting,
/// stack, adaptive weights, grid CV, refit on the fully imputed data.
GridSearchResult tune_stacked(StackedMethod method, const MissingDataset& d, int M, const ImputationParams& imputation,
                              const PenalizedGridSpec& spec, std::uint64_t seed, std::size_t threads = 1);

inline LinearModel to_linear_model(const PenalizedFit<double>& fit) { return {fit.intercept, fit.coefficients}; }

/// Mean squared error over a set of rows computed from pooled second
/// moments, so scoring a fit costs O(active^2) instead of O(rows * p).
class QuadraticScorer {
public:
    QuadraticScorer() = default;
    /// Rows with weight 0 are skipped.
    QuadraticScorer(const Matrix<double>& X, const Vector<double>& y, const Vector<double>& weights);
    void add(const Matrix<double>& X, const Vector<double>& y, const Vector<double>& weights);
    double mse(double intercept, const Vector<double>& beta) const;

private:
    Matrix<double> xx_;
    Vector<double> xy_;
    Vector<double> xs_;
    double yy_ = 0, ys_ = 0, total_ = 0;
};

std::string to_json(const PenalizedFit<double>& fit, std::span<const std::string> names = {});

}  // namespace miboost
