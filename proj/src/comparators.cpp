#include "miboost/comparators.hpp"

#include "miboost/parallel.hpp"
#include "miboost/rng.hpp"

#include <json.hpp>

#include <set>

namespace miboost {

LinearModel EaBoostResult::model() const {
    const Index p = averaged.size() - 1;
    return {mean_offset + averaged(0), averaged.tail(p)};
}

double EaBoostResult::mean_t_star() const {
    double s = 0;
    for (Index t : t_star) s += static_cast<double>(t);
    return t_star.empty() ? 0.0 : s / static_cast<double>(t_star.size());
}

EaBoostResult ea_boost(std::span<const CompletedDataset> centered, double nu, int K, Index t_stop_max,
                       std::uint64_t seed, std::size_t threads) {
    if (centered.empty()) throw std::invalid_argument("ea_boost: no datasets");
    const auto M = static_cast<Index>(centered.size());
    const Index n = centered.front().rows(), p = centered.front().cols();
    const FoldAssignment folds = make_folds(n, K, derive_seed("ea-folds", seed));

    EaBoostResult out;
    out.t_star.resize(M);
    out.fits.resize(M);
    parallel_for(static_cast<std::size_t>(M), threads, [&](std::size_t m) {
        // Predictions of intercept-carrying linear learners do not depend on
        // covariate shifts, so the full-data centering is reused inside folds.
        const CvCurve curve = boosting_cv(centered[m], folds, nu, t_stop_max);
        out.t_star[m] = curve.t_star;
        out.fits[m] = run_cwgb(centered[m], nu, curve.t_star);
    });

    out.averaged = Vector<double>::Zero(p + 1);
    std::set<Index> sel;
    double offsets = 0;
    for (const auto& f : out.fits) {
        out.averaged += f.coefficients.row(0).transpose();
        offsets += f.offsets(0);
        for (Index r : f.selection_path) sel.insert(r);
    }
    out.averaged /= static_cast<double>(M);
    out.mean_offset = offsets / static_cast<double>(M);
    out.selected.assign(sel.begin(), sel.end());
    return out;
}

std::string to_string(StackedMethod m) { return m == StackedMethod::salasso ? "SaLASSO" : "SaENET"; }

std::vector<double> PenalizedGridSpec::alpha_grid(int count) {
    if (count < 1) throw std::invalid_argument("alpha grid needs at least one value");
    std::vector<double> a(count);
    for (int i = 0; i < count; ++i) a[i] = count == 1 ? 1.0 : static_cast<double>(i) / (count - 1);
    return a;
}

QuadraticScorer::QuadraticScorer(const Matrix<double>& X, const Vector<double>& y, const Vector<double>& weights) {
    add(X, y, weights);
}

void QuadraticScorer::add(const Matrix<double>& X, const Vector<double>& y, const Vector<double>& weights) {
    const Index p = X.cols();
    if (xx_.size() == 0) {
        xx_ = Matrix<double>::Zero(p, p);
        xy_ = Vector<double>::Zero(p);
        xs_ = Vector<double>::Zero(p);
    }
    const Matrix<double> WX = X.array().colwise() * weights.array();
    xx_.noalias() += X.transpose() * WX;
    xy_.noalias() += WX.transpose() * y;
    xs_.noalias() += WX.colwise().sum().transpose();
    yy_ += (weights.array() * y.array().square()).sum();
    ys_ += weights.dot(y);
    total_ += weights.sum();
}

double QuadraticScorer::mse(double intercept, const Vector<double>& beta) const {
    if (!(total_ > 0)) throw std::invalid_argument("QuadraticScorer: no scored rows");
    std::vector<Index> active;
    for (Index j = 0; j < beta.size(); ++j)
        if (beta(j) != 0) active.push_back(j);
    double quad = 0, lin_y = 0, lin_s = 0;
    for (Index a : active) {
        lin_y += beta(a) * xy_(a);
        lin_s += beta(a) * xs_(a);
        double row = 0;
        for (Index b : active) row += xx_(a, b) * beta(b);
        quad += beta(a) * row;
    }
    const double sse = yy_ - 2 * lin_y - 2 * intercept * ys_ + quad + 2 * intercept * lin_s +
                       total_ * intercept * intercept;
    return std::max(0.0, sse) / total_;
}

std::pair<Index, Index> best_grid_point(const Matrix<double>& cv_error, const Matrix<double>& lambdas) {
    Index bi = 0, ba = 0;
    for (Index a = 0; a < cv_error.cols(); ++a) {
        for (Index i = 0; i < cv_error.rows(); ++i) {
            const double e = cv_error(i, a), best = cv_error(bi, ba);
            if (e < best || (e == best && (lambdas(i, a) > lambdas(bi, ba) ||
                                           (lambdas(i, a) == lambdas(bi, ba) && a < ba)))) {
                bi = i;
                ba = a;
            }
        }
    }
    return {bi, ba};
}

Vector<double> adaptive_weights_from_coefficients(const Vector<double>& beta) {
    Vector<double> w(beta.size());
    bool any = false;
    for (Index j = 0; j < beta.size(); ++j) {
        if (beta(j) == 0) {
            w(j) = std::numeric_limits<double>::infinity();
        } else {
            w(j) = 1.0 / std::abs(beta(j));
            any = true;
        }
    }
    if (!any) throw NumericError("preliminary elastic net set every coefficient to zero (over-shrunk grid)");
    return w;
}

namespace {

Matrix<double> lambda_table(const WeightedGram<double>& g, const std::vector<double>& alphas,
                            const Vector<double>& w, const PenalizedGridSpec& spec) {
    Matrix<double> lambdas(spec.n_lambda, static_cast<Index>(alphas.size()));
    for (std::size_t a = 0; a < alphas.size(); ++a)
        lambdas.col(static_cast<Index>(a)) = lambda_grid(lambda_max(g, alphas[a], w), spec.n_lambda, spec.lambda_min_ratio);
    return lambdas;
}

// Adds each fold's validation error over the whole (lambda, alpha) grid.
void accumulate_grid(Matrix<double>& cv_error, const WeightedGram<double>& train, const Vector<double>& w,
                     const QuadraticScorer& scorer, const std::vector<double>& alphas, const Matrix<double>& lambdas,
                     const PenalizedGridSpec& spec) {
    for (std::size_t a = 0; a < alphas.size(); ++a) {
        const auto path = enet_path<double>(train, lambdas.col(static_cast<Index>(a)), alphas[a], w, spec.tol,
                                            spec.max_iter);
        for (std::size_t i = 0; i < path.size(); ++i)
            cv_error(static_cast<Index>(i), static_cast<Index>(a)) += scorer.mse(path[i].intercept, path[i].coefficients);
    }
}

GridSearchResult finish(GridSearchResult r, Index folds, const WeightedGram<double>& full, const Vector<double>& w,
                        const PenalizedGridSpec& spec) {
    r.cv_error /= static_cast<double>(folds);
    std::tie(r.best_lambda_index, r.best_alpha_index) = best_grid_point(r.cv_error, r.lambdas);
    r.best_lambda = r.lambdas(r.best_lambda_index, r.best_alpha_index);
    r.best_alpha = r.alphas[r.best_alpha_index];
    r.final = coord_descent_enet(full, r.best_lambda, r.best_alpha, w, spec.final_tol, spec.max_iter);
    return r;
}

}  // namespace

GridSearchResult tune_senet(const StackedDesign<double>& design, const PenalizedGridSpec& spec, std::uint64_t seed) {
    const Index p = design.cols();
    const Vector<double> ones = Vector<double>::Ones(p);
    const auto full = WeightedGram<double>::from(design);

    GridSearchResult r;
    r.alphas = spec.alphas;
    r.lambdas = lambda_table(full, r.alphas, ones, spec);
    r.cv_error = Matrix<double>::Zero(spec.n_lambda, static_cast<Index>(r.alphas.size()));

    const FoldAssignment folds = make_folds(design.subjects, spec.K, seed);
    for (int k = 0; k < folds.K; ++k) {
        Vector<double> train_w = design.weights, val_w = design.weights;
        for (Index i = 0; i < design.rows(); ++i) {
            if (folds.fold_of[design.origin[i].second] == k)
                train_w(i) = 0;
            else
                val_w(i) = 0;
        }
        const auto train = WeightedGram<double>::from(design.X, design.y, train_w);
        const QuadraticScorer scorer(design.X, design.y, val_w);
        accumulate_grid(r.cv_error, train, ones, scorer, r.alphas, r.lambdas, spec);
    }
    return finish(std::move(r), folds.K, full, ones, spec);
}

Vector<double> adaptive_weights_from_senet(const StackedDesign<double>& design, const PenalizedGridSpec& spec,
                                           std::uint64_t seed) {
    return adaptive_weights_from_coefficients(tune_senet(design, spec, seed).final.coefficients);
}

StackedContext prepare_stacked(std::span<const PreparedFold> folds, const PreparedFull& full,
                               const PenalizedGridSpec& spec, std::uint64_t seed, std::size_t threads) {
    const auto K = folds.size();
    StackedContext ctx;
    ctx.fold_grams.resize(K);
    ctx.fold_weights.resize(K);
    parallel_for(K + 1, threads, [&](std::size_t unit) {
        const auto& data = unit == K ? full.centered : folds[unit].train;
        const auto design = stack_imputations<double>(data);
        auto weights = adaptive_weights_from_senet(design, spec, derive_seed("senet", seed, {unit}));
        auto gram = WeightedGram<double>::from(design);
        if (unit == K) {
            ctx.full_gram = std::move(gram);
            ctx.full_weights = std::move(weights);
        } else {
            ctx.fold_grams[unit] = std::move(gram);
            ctx.fold_weights[unit] = std::move(weights);
        }
    });
    return ctx;
}

GridSearchResult tune_stacked(StackedMethod method, const StackedContext& ctx, std::span<const PreparedFold> folds,
                              const PenalizedGridSpec& spec) {
    GridSearchResult r;
    r.alphas = method == StackedMethod::salasso ? std::vector<double>{1.0} : spec.alphas;
    r.lambdas = lambda_table(ctx.full_gram, r.alphas, ctx.full_weights, spec);
    r.cv_error = Matrix<double>::Zero(spec.n_lambda, static_cast<Index>(r.alphas.size()));
    for (std::size_t k = 0; k < folds.size(); ++k) {
        const auto& fold = folds[k];
        QuadraticScorer scorer;
        for (const auto& v : fold.validation) {
            Vector<double> w = Vector<double>::Ones(v.rows());
            if (spec.exclude_imputed_response)
                for (Index i = 0; i < v.rows(); ++i)
                    if (!fold.val_response_observed(i)) w(i) = 0;
            scorer.add(v.X, v.y, w);
        }
        accumulate_grid(r.cv_error, ctx.fold_grams[k], ctx.fold_weights[k], scorer, r.alphas, r.lambdas, spec);
    }
    return finish(std::move(r), static_cast<Index>(folds.size()), ctx.full_gram, ctx.full_weights, spec);
}

GridSearchResult tune_stacked(StackedMethod method, const MissingDataset& d, int M, const ImputationParams& imputation,
                              const PenalizedGridSpec& spec, std::uint64_t seed, std::size_t threads) {
    d.validate();
    const FoldAssignment folds = make_folds(d.rows(), spec.K, derive_seed("cv-folds", seed));
    const FoldPlan plan{M, imputation, seed, threads};
    const auto prepared = prepare_folds(d, folds, plan);
    const auto full = prepare_full(d, plan);
    const auto ctx = prepare_stacked(prepared, full, spec, seed, threads);
    return tune_stacked(method, ctx, prepared, spec);
}

std::string to_json(const PenalizedFit<double>& fit, std::span<const std::string> names) {
    using nlohmann::json;
    json j;
    j["intercept"] = fit.intercept;
    j["lambda"] = fit.lambda;
    j["alpha"] = fit.alpha;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["coefficients"] = std::vector<double>(fit.coefficients.data(), fit.coefficients.data() + fit.coefficients.size());
    json w = json::array();
    for (Index k = 0; k < fit.adaptive_weights.size(); ++k) {
        if (std::isinf(fit.adaptive_weights(k)))
            w.push_back("inf");
        else
            w.push_back(fit.adaptive_weights(k));
    }
    j["adaptive_weights"] = std::move(w);
    json sel = json::array();
    for (Index k : fit.selected()) {
        if (names.empty())
            sel.push_back(k);
        else
            sel.push_back(names[k]);
    }
    j["selected"] = std::move(sel);
    return j.dump(2);
}

}  // namespace miboost
