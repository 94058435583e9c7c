#pragma once

#include "miboost/data.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace miboost {

// Variables are indexed 0..p-1 for covariates and p for the response.

struct ImputationParams {
    int cycles = 5;
    int donor_count = 5;
    double threshold = 0.1;  ///< minimum |Spearman| for a predictor to enter a model
};

/// Fitted chained-equations model for one target variable.
struct VariableModel {
    Index target = 0;
    std::vector<Index> predictors;
    Vector<double> coefficients;       ///< intercept first, then one per predictor
    Vector<double> donor_values;       ///< training-observed target values
    Matrix<double> donor_rows;         ///< predictor values of the donor rows
    Vector<double> donor_predictions;  ///< coefficients applied to donor_rows
    Index training_missing = 0;
};

/// One imputation's set of per-variable models, transferable to new rows.
struct ImputationModel {
    Index imputation = 0;
    Index covariates = 0;
    std::vector<std::string> names;
    std::vector<VariableModel> records;
    std::vector<Index> visit_order;  ///< targets in visiting order
    int cycles = 0;
    int donor_count = 0;

    const VariableModel* find(Index target) const;
};

struct ImputationSet {
    std::vector<CompletedDataset> completed;
    std::vector<ImputationModel> models;
    int M = 0;
    std::uint64_t source = 0;  ///< fingerprint() of the imputed dataset
};

/// Rank correlation on pairwise-observed entries (NaN marks a missing entry).
/// Returns 0 when either side is constant; throws with fewer than two pairs.
double spearman(std::span<const double> a, std::span<const double> b);

/// Variables (covariates and response, excluding target) with
/// |spearman| >= threshold; falls back to the single strongest variable.
std::vector<Index> screen_predictors(const MissingDataset& d, Index target, double threshold);

/// Multiple imputation by chained equations with predictive mean matching.
/// Imputation m draws from its own stream keyed by (seed, m), so the result
/// does not depend on `threads`.
ImputationSet mice_fit(const MissingDataset& d, int M, const ImputationParams& params,
                       std::uint64_t seed, std::size_t threads = 1);

/// One pass of a trained model over new rows: stored coefficients and stored
/// training donors only, nothing is refitted.
CompletedDataset mice_apply(const ImputationModel& model, const MissingDataset& d, std::uint64_t seed);

/// Full model as JSON text; doubles round-trip exactly.
std::string to_json(const ImputationModel& model);

/// Writes imputation_<m>.csv for every completion and a models.json manifest.
void dump_imputation_set(const ImputationSet& set, const MissingDataset& source,
                         const std::filesystem::path& dir);

}  // namespace miboost
