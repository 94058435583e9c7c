#include "miboost/imputation.hpp"

#include "miboost/parallel.hpp"
#include "miboost/rng.hpp"

#include <json.hpp>

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace miboost {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> midranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return v[a] < v[b] || (v[a] == v[b] && a < b);
    });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

// Column view of a variable with NaN wherever the mask is false.
std::vector<double> variable_column(const MissingDataset& d, Index v) {
    const Index n = d.rows();
    std::vector<double> col(n, kNaN);
    for (Index i = 0; i < n; ++i) {
        if (v == d.cols()) {
            if (d.y_observed(i)) col[i] = d.y(i);
        } else if (d.x_observed(i, v)) {
            col[i] = d.X(i, v);
        }
    }
    return col;
}

std::string variable_name(const MissingDataset& d, Index v) {
    return v == d.cols() ? d.response_name : d.names[v];
}

bool observed(const MissingDataset& d, Index i, Index v) {
    return v == d.cols() ? d.y_observed(i) : d.x_observed(i, v);
}

Index missing_in(const MissingDataset& d, Index v) {
    return v == d.cols() ? (!d.y_observed).count() : (!d.x_observed.col(v)).count();
}

// Working matrix [X, y]; masked cells are filled later, never copied from d.
Matrix<double> working_matrix(const MissingDataset& d) {
    const Index n = d.rows(), p = d.cols();
    Matrix<double> Z = Matrix<double>::Zero(n, p + 1);
    for (Index i = 0; i < n; ++i)
        for (Index v = 0; v <= p; ++v)
            if (observed(d, i, v)) Z(i, v) = v == p ? d.y(i) : d.X(i, v);
    return Z;
}

Vector<double> fit_ols(const Matrix<double>& A, const Vector<double>& t) {
    Matrix<double> G = A.transpose() * A;
    const Vector<double> b = A.transpose() * t;
    Eigen::LDLT<Matrix<double>> ldlt(G);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12)) {
        G.diagonal().array() += 1e-8 * G.diagonal().mean();
        ldlt.compute(G);
    }
    Vector<double> beta = ldlt.solve(b);
    if (!beta.allFinite()) throw NumericError("imputation regression produced non-finite coefficients");
    return beta;
}

Matrix<double> design_rows(const Matrix<double>& Z, std::span<const Index> rows,
                           std::span<const Index> predictors) {
    Matrix<double> A(static_cast<Index>(rows.size()), static_cast<Index>(predictors.size()) + 1);
    for (Index r = 0; r < A.rows(); ++r) {
        A(r, 0) = 1.0;
        for (Index c = 0; c < static_cast<Index>(predictors.size()); ++c)
            A(r, c + 1) = Z(rows[r], predictors[c]);
    }
    return A;
}

// Uniform draw among the k donors whose predictions are closest to `target`.
Index pick_donor(const Vector<double>& donor_predictions, double target, int k, Rng& rng,
                 std::vector<Index>& scratch) {
    const Index n = donor_predictions.size();
    scratch.resize(n);
    std::iota(scratch.begin(), scratch.end(), Index{0});
    const auto kk = std::min<Index>(k, n);
    std::partial_sort(scratch.begin(), scratch.begin() + kk, scratch.end(), [&](Index a, Index b) {
        const double da = std::abs(donor_predictions(a) - target);
        const double db = std::abs(donor_predictions(b) - target);
        return da < db || (da == db && a < b);
    });
    std::uniform_int_distribution<Index> pick(0, kk - 1);
    return scratch[pick(rng)];
}

struct Plan {
    std::vector<Index> visit_order;
    std::vector<std::vector<Index>> predictors;  // per variable
    std::vector<Index> missing;                  // per variable
};

ImputationModel impute_one(const MissingDataset& d, const Plan& plan, const ImputationParams& params,
                           std::uint64_t seed, Index m, Matrix<double>& Z) {
    const Index n = d.rows(), p = d.cols();
    auto rng = make_stream("mice", seed, {static_cast<std::uint64_t>(m)});

    std::vector<std::vector<Index>> obs_rows(p + 1), mis_rows(p + 1);
    for (Index v = 0; v <= p; ++v)
        for (Index i = 0; i < n; ++i) (observed(d, i, v) ? obs_rows[v] : mis_rows[v]).push_back(i);

    for (Index v = 0; v <= p; ++v) {
        if (mis_rows[v].empty()) continue;
        std::uniform_int_distribution<Index> pick(0, static_cast<Index>(obs_rows[v].size()) - 1);
        for (Index i : mis_rows[v]) Z(i, v) = Z(obs_rows[v][pick(rng)], v);
    }

    ImputationModel model;
    model.imputation = m;
    model.covariates = p;
    model.names = d.names;
    model.names.push_back(d.response_name);
    model.visit_order = plan.visit_order;
    model.cycles = params.cycles;
    model.donor_count = params.donor_count;

    std::vector<Index> scratch;
    for (int cycle = 0; cycle < params.cycles; ++cycle) {
        const bool last = cycle + 1 == params.cycles;
        for (Index v : plan.visit_order) {
            if (mis_rows[v].empty() && !last) continue;
            const auto& preds = plan.predictors[v];
            const Matrix<double> A = design_rows(Z, obs_rows[v], preds);
            Vector<double> target(static_cast<Index>(obs_rows[v].size()));
            for (Index r = 0; r < target.size(); ++r) target(r) = Z(obs_rows[v][r], v);
            const Vector<double> beta = fit_ols(A, target);
            const Vector<double> donor_pred = A * beta;
            if (!mis_rows[v].empty()) {
                const Vector<double> mis_pred = design_rows(Z, mis_rows[v], preds) * beta;
                for (Index r = 0; r < mis_pred.size(); ++r) {
                    const Index donor = pick_donor(donor_pred, mis_pred(r), params.donor_count, rng, scratch);
                    Z(mis_rows[v][r], v) = target(donor);
                }
            }
            if (last) {
                VariableModel rec;
                rec.target = v;
                rec.predictors = preds;
                rec.coefficients = beta;
                rec.donor_values = target;
                rec.donor_rows = A.rightCols(A.cols() - 1);
                rec.donor_predictions = donor_pred;
                rec.training_missing = plan.missing[v];
                model.records.push_back(std::move(rec));
            }
        }
    }
    return model;
}

CompletedDataset split_working(const Matrix<double>& Z) {
    const Index p = Z.cols() - 1;
    return {Z.leftCols(p), Z.col(p)};
}

}  // namespace

const VariableModel* ImputationModel::find(Index target) const {
    for (const auto& r : records)
        if (r.target == target) return &r;
    return nullptr;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
    std::vector<double> xa, xb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::isnan(a[i]) || std::isnan(b[i])) continue;
        xa.push_back(a[i]);
        xb.push_back(b[i]);
    }
    if (xa.size() < 2) throw std::invalid_argument("spearman: fewer than 2 pairwise-observed entries");
    const auto ra = midranks(xa);
    const auto rb = midranks(xb);
    const double n = static_cast<double>(ra.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa <= 0 || sbb <= 0) return 0.0;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

namespace {

std::vector<Index> screen_with_columns(const std::vector<std::vector<double>>& cols, Index target,
                                       double threshold) {
    std::vector<Index> chosen;
    Index best = -1;
    double best_abs = -1;
    for (Index v = 0; v < static_cast<Index>(cols.size()); ++v) {
        if (v == target) continue;
        double r = 0;
        try {
            r = std::abs(spearman(cols[target], cols[v]));
        } catch (const std::invalid_argument&) {
            continue;
        }
        if (r >= threshold) chosen.push_back(v);
        if (r > best_abs) {
            best_abs = r;
            best = v;
        }
    }
    if (chosen.empty() && best >= 0) chosen.push_back(best);
    return chosen;
}

}  // namespace

std::vector<Index> screen_predictors(const MissingDataset& d, Index target, double threshold) {
    if (target < 0 || target > d.cols()) throw std::invalid_argument("screen_predictors: bad target");
    std::vector<std::vector<double>> cols;
    for (Index v = 0; v <= d.cols(); ++v) cols.push_back(variable_column(d, v));
    return screen_with_columns(cols, target, threshold);
}

ImputationSet mice_fit(const MissingDataset& d, int M, const ImputationParams& params,
                       std::uint64_t seed, std::size_t threads) {
    d.validate();
    if (M < 1) throw std::invalid_argument("mice_fit: M must be >= 1");
    if (params.cycles < 1) throw std::invalid_argument("mice_fit: cycles must be >= 1");
    if (params.donor_count < 1) throw std::invalid_argument("mice_fit: donor_count must be >= 1");

    ImputationSet set;
    set.M = M;
    set.source = fingerprint(d);
    const Index p = d.cols();
    const Matrix<double> Z0 = working_matrix(d);

    if (d.complete()) {
        for (int m = 0; m < M; ++m) {
            set.completed.push_back(split_working(Z0));
            ImputationModel model;
            model.imputation = m;
            model.covariates = p;
            model.names = d.names;
            model.names.push_back(d.response_name);
            model.cycles = params.cycles;
            model.donor_count = params.donor_count;
            set.models.push_back(std::move(model));
        }
        return set;
    }

    Plan plan;
    plan.predictors.resize(p + 1);
    plan.missing.resize(p + 1);
    std::vector<std::vector<double>> cols;
    for (Index v = 0; v <= p; ++v) cols.push_back(variable_column(d, v));
    const Index need = std::max(2, params.donor_count);
    for (Index v = 0; v <= p; ++v) {
        plan.missing[v] = missing_in(d, v);
        const Index obs = d.rows() - plan.missing[v];
        if (obs < need)
            throw std::invalid_argument("variable \"" + variable_name(d, v) + "\" has " +
                                        std::to_string(obs) + " observed entries; imputation needs " +
                                        std::to_string(need));
        plan.predictors[v] = screen_with_columns(cols, v, params.threshold);
        plan.visit_order.push_back(v);
    }
    std::stable_sort(plan.visit_order.begin(), plan.visit_order.end(), [&](Index a, Index b) {
        const bool ra = a == p, rb = b == p;
        if (ra != rb) return rb;
        return plan.missing[a] > plan.missing[b];
    });

    set.completed.resize(M);
    set.models.resize(M);
    parallel_for(static_cast<std::size_t>(M), threads, [&](std::size_t m) {
        Matrix<double> Z = Z0;
        set.models[m] = impute_one(d, plan, params, seed, static_cast<Index>(m), Z);
        set.completed[m] = split_working(Z);
    });
    return set;
}

CompletedDataset mice_apply(const ImputationModel& model, const MissingDataset& d, std::uint64_t seed) {
    d.validate();
    if (d.cols() != model.covariates)
        throw std::invalid_argument("mice_apply: dataset has " + std::to_string(d.cols()) +
                                    " covariates, model expects " + std::to_string(model.covariates));
    if (!model.names.empty()) {
        for (Index j = 0; j < d.cols(); ++j)
            if (d.names[j] != model.names[j])
                throw std::invalid_argument("mice_apply: column " + std::to_string(j + 1) + " is \"" +
                                            d.names[j] + "\", model expects \"" + model.names[j] + "\"");
    }
    const Index n = d.rows(), p = d.cols();
    Matrix<double> Z = working_matrix(d);
    if (d.complete()) return split_working(Z);

    auto rng = make_stream("mice", seed, {static_cast<std::uint64_t>(model.imputation)});
    std::vector<std::vector<Index>> mis_rows(p + 1);
    for (Index v = 0; v <= p; ++v)
        for (Index i = 0; i < n; ++i)
            if (!observed(d, i, v)) mis_rows[v].push_back(i);

    for (Index v = 0; v <= p; ++v) {
        if (mis_rows[v].empty()) continue;
        const VariableModel* rec = model.find(v);
        if (rec == nullptr)
            throw std::invalid_argument("mice_apply: no imputation model for variable \"" +
                                        variable_name(d, v) + "\"");
        std::uniform_int_distribution<Index> pick(0, rec->donor_values.size() - 1);
        for (Index i : mis_rows[v]) Z(i, v) = rec->donor_values(pick(rng));
    }

    std::vector<Index> scratch;
    for (Index v : model.visit_order) {
        if (mis_rows[v].empty()) continue;
        const VariableModel& rec = *model.find(v);
        const Vector<double> mis_pred = design_rows(Z, mis_rows[v], rec.predictors) * rec.coefficients;
        for (Index r = 0; r < mis_pred.size(); ++r) {
            const Index donor = pick_donor(rec.donor_predictions, mis_pred(r), model.donor_count, rng, scratch);
            Z(mis_rows[v][r], v) = rec.donor_values(donor);
        }
    }
    return split_working(Z);
}

namespace {

nlohmann::json model_json(const ImputationModel& model) {
    using nlohmann::json;
    json jm;
    jm["imputation"] = model.imputation + 1;
    jm["cycles"] = model.cycles;
    jm["donor_count"] = model.donor_count;
    jm["visit_order"] = json::array();
    for (Index v : model.visit_order) jm["visit_order"].push_back(model.names[v]);
    jm["variables"] = json::array();
    for (const auto& rec : model.records) {
        json jr;
        jr["target"] = model.names[rec.target];
        jr["training_missing"] = rec.training_missing;
        jr["predictors"] = json::array();
        for (Index v : rec.predictors) jr["predictors"].push_back(model.names[v]);
        jr["coefficients"] = std::vector<double>(rec.coefficients.data(),
                                                 rec.coefficients.data() + rec.coefficients.size());
        jr["donor_values"] = std::vector<double>(rec.donor_values.data(),
                                                 rec.donor_values.data() + rec.donor_values.size());
        jr["donor_predictions"] = std::vector<double>(
            rec.donor_predictions.data(), rec.donor_predictions.data() + rec.donor_predictions.size());
        json rows = json::array();
        for (Index r = 0; r < rec.donor_rows.rows(); ++r) {
            json row = json::array();
            for (Index c = 0; c < rec.donor_rows.cols(); ++c) row.push_back(rec.donor_rows(r, c));
            rows.push_back(std::move(row));
        }
        jr["donor_rows"] = std::move(rows);
        jm["variables"].push_back(std::move(jr));
    }
    return jm;
}

}  // namespace

std::string to_json(const ImputationModel& model) { return model_json(model).dump(2); }

void dump_imputation_set(const ImputationSet& set, const MissingDataset& source,
                         const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    using nlohmann::json;
    json manifest;
    manifest["M"] = set.M;
    manifest["source_fingerprint"] = set.source;
    manifest["models"] = json::array();
    for (int m = 0; m < set.M; ++m) {
        std::ofstream out(dir / ("imputation_" + std::to_string(m + 1) + ".csv"));
        write_csv(out, set.completed[m], source.names, source.response_name);
        manifest["models"].push_back(model_json(set.models[m]));
    }
    std::ofstream out(dir / "models.json");
    out << manifest.dump(2) << '\n';
}

}  // namespace miboost
