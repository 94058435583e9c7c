#pragma once

#include "miboost/boosting.hpp"
#include "miboost/comparators.hpp"
#include "miboost/crossval.hpp"
#include "miboost/data.hpp"
#include "miboost/imputation.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace miboost {

/// Study design. Defaults reproduce the reference setting: 500 rows, 55
/// covariates of which 5 informative, MAR missingness near 30%, 10
/// imputations, 5-fold CV, 100 rounds.
struct SimConfig {
    Index n = 500;
    Index p = 55;
    Index q = 5;
    double rho = 0.25;
    double outcome_intercept = 5.0;
    double noise_sd = 4.0;
    double beta_low = 1.0;
    double beta_high = 3.0;
    std::array<double, 2> gamma{0.75, -0.5};
    double target_missing = 0.30;
    int M = 10;
    int K = 5;
    int rounds = 100;
    double train_fraction = 0.8;
    double nu = 0.1;
    Index t_stop_max = 1000;
    ImputationParams imputation;
    PenalizedGridSpec penalized;
    std::uint64_t seed = 20251018;
    /// Average the M test predictions before squaring (false: average the M MSEs).
    bool average_test_predictions = true;
    bool exclude_imputed_response = false;

    void validate() const;
};

enum class Method { miboost, ea_boosting, salasso, saenet };

std::string to_string(Method m);
Method parse_method(const std::string& text);
const std::vector<Method>& all_methods();

struct GeneratedRound {
    MissingDataset data;
    CompletedDataset truth;
    Vector<double> beta;
    std::vector<Index> informative;
    double missing_intercept = 0;
};

/// Complete data from the linear model with exchangeable-correlated
/// informative covariates, then MAR missingness.
GeneratedRound generate_round(const SimConfig& cfg, Index round);

struct MarResult {
    MissingDataset data;
    double intercept = 0;
};

/// Solves for the intercept a with mean_i logistic(a + g1 x_i1 + g2 x_i2)
/// equal to `target`, then masks every cell outside the first two
/// covariates with that probability.
MarResult induce_mar(const CompletedDataset& complete, std::span<const std::string> names,
                     std::array<double, 2> gamma, double target, std::uint64_t seed);

double solve_missing_intercept(const Vector<double>& linear_part, double target);

/// Missing share among the cells that can be masked (covariates 3..p and y).
double maskable_missing_fraction(const MissingDataset& d);

struct TestError {
    double raw = 0;
    double normalized = 0;
    Index scored_rows = 0;
};

/// Imputes the test rows with the training imputation models, predicts
/// with `model` per imputation (centered by that imputation's training
/// means) and scores rows with an observed response.
TestError evaluate_on_test(const LinearModel& model, const MissingDataset& test, const ImputationSet& train_imputation,
                           std::span<const CenteringInfo> centering, std::uint64_t seed,
                           bool average_predictions = true);

struct MethodResult {
    Method method = Method::miboost;
    bool failed = false;
    std::string error;
    double mspe_raw = 0;
    double mspe_normalized = 0;
    double t_star = 0;  ///< boosting only (EA: mean over imputations)
    double lambda = 0;  ///< penalized only
    double alpha = 0;
    std::vector<Index> selected;
    double tpp = 0;
    double tnp = 0;
    Index audited_iterations = 0;
    Index uniform_violations = 0;
    double seconds = 0;
};

struct RoundResult {
    Index round = 0;
    double missing_fraction = 0;
    std::vector<MethodResult> methods;
};

struct MetricSummary {
    double mean = 0;
    double se = 0;
};

struct MethodSummary {
    Method method = Method::miboost;
    Index completed = 0;
    Index failed = 0;
    MetricSummary mspe_raw, mspe_normalized, t_star, lambda, alpha, tpp, tnp, n_selected;
    Index audited_iterations = 0;
    Index uniform_violations = 0;
};

struct StudySummary {
    std::vector<MethodSummary> methods;
    std::vector<RoundResult> rounds;
    MetricSummary missing_fraction;

    const MethodSummary& get(Method m) const;
};

RoundResult run_round(const SimConfig& cfg, std::span<const Method> methods, Index round);

using ProgressFn = std::function<void(const RoundResult&)>;

/// Rounds run concurrently on `threads` workers; aggregation is in round
/// order, so the summary does not depend on the worker count.
StudySummary run_study(const SimConfig& cfg, std::span<const Method> methods, std::size_t threads = 1,
                       const ProgressFn& progress = {});

StudySummary summarize(std::span<const RoundResult> rounds, std::span<const Method> methods);

std::string summary_csv(const StudySummary& s);
std::string rounds_csv(const StudySummary& s);
std::string timing_csv(const StudySummary& s);
std::string summary_table(const StudySummary& s);
std::string config_json(const SimConfig& cfg, std::span<const Method> methods);

/// results/{rounds,summary,timing}.csv and config.json under `dir`.
void write_results(const std::filesystem::path& dir, const SimConfig& cfg, std::span<const Method> methods,
                   const StudySummary& s);

}  // namespace miboost
