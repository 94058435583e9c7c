#include "miboost/simulation.hpp"

#include "miboost/parallel.hpp"
#include "miboost/rng.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

namespace miboost {

void SimConfig::validate() const {
    if (n < 4 || p < 3) throw std::invalid_argument("simulation needs n >= 4 and p >= 3");
    if (q < 1 || q > p) throw std::invalid_argument("q must lie in [1, p]");
    if (!(rho > -1.0 / static_cast<double>(std::max<Index>(q - 1, 1)) && rho < 1.0))
        throw std::invalid_argument("rho does not give a positive-definite correlation matrix");
    if (!(noise_sd >= 0)) throw std::invalid_argument("noise_sd must be >= 0");
    if (!(beta_low <= beta_high)) throw std::invalid_argument("beta range is empty");
    if (!(target_missing >= 0 && target_missing < 1)) throw std::invalid_argument("target_missing must lie in [0, 1)");
    if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    if (M < 1 || K < 2) throw std::invalid_argument("need M >= 1 and K >= 2");
    if (!(train_fraction > 0 && train_fraction < 1)) throw std::invalid_argument("train_fraction must lie in (0, 1)");
    if (!(nu > 0 && nu <= 1)) throw std::invalid_argument("nu must lie in (0, 1]");
    if (t_stop_max < 1) throw std::invalid_argument("t_stop_max must be >= 1");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::miboost: return "MIBoost";
        case Method::ea_boosting: return "EA-Boosting";
        case Method::salasso: return "SaLASSO";
        case Method::saenet: return "SaENET";
    }
    return "unknown";
}

Method parse_method(const std::string& text) {
    std::string t;
    for (char c : text)
        if (c != '-' && c != '_') t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (t == "miboost") return Method::miboost;
    if (t == "eaboosting" || t == "ea" || t == "eaboost") return Method::ea_boosting;
    if (t == "salasso") return Method::salasso;
    if (t == "saenet") return Method::saenet;
    throw std::invalid_argument("unknown method \"" + text + "\" (expected miboost, ea-boosting, salasso, saenet)");
}

const std::vector<Method>& all_methods() {
    static const std::vector<Method> m{Method::ea_boosting, Method::miboost, Method::salasso, Method::saenet};
    return m;
}

double solve_missing_intercept(const Vector<double>& linear_part, double target) {
    auto rate = [&](double a) {
        return (1.0 / (1.0 + (-(linear_part.array() + a)).exp())).mean();
    };
    double lo = -60, hi = 60;
    if (!(rate(lo) <= target && rate(hi) >= target))
        throw NumericError("missingness intercept is not bracketed");
    double mid = 0;
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double r = rate(mid);
        if (std::abs(r - target) < 1e-10) break;
        (r < target ? lo : hi) = mid;
    }
    return mid;
}

MarResult induce_mar(const CompletedDataset& complete, std::span<const std::string> names,
                     std::array<double, 2> gamma, double target, std::uint64_t seed) {
    const Index n = complete.rows(), p = complete.cols();
    if (p < 2) throw std::invalid_argument("induce_mar: needs at least two covariates");
    if (!(target > 0 && target < 1)) throw std::invalid_argument("induce_mar: target must lie in (0, 1)");
    const Vector<double> lin = gamma[0] * complete.X.col(0) + gamma[1] * complete.X.col(1);
    MarResult out;
    out.intercept = solve_missing_intercept(lin, target);
    const Vector<double> prob = (1.0 / (1.0 + (-(lin.array() + out.intercept)).exp())).matrix();

    std::vector<std::string> nm(names.begin(), names.end());
    if (nm.empty()) nm = default_names(p);
    out.data = MissingDataset::from_complete(complete.X, complete.y, nm);
    auto rng = make_stream("mar", seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (Index v = 2; v <= p; ++v) {
        for (Index i = 0; i < n; ++i) {
            if (unif(rng) >= prob(i)) continue;
            if (v == p) {
                out.data.y_observed(i) = false;
                out.data.y(i) = nan;
            } else {
                out.data.x_observed(i, v) = false;
                out.data.X(i, v) = nan;
            }
        }
    }
    return out;
}

double maskable_missing_fraction(const MissingDataset& d) {
    const Index n = d.rows(), p = d.cols();
    Index missing = (!d.y_observed).count();
    for (Index j = 2; j < p; ++j) missing += (!d.x_observed.col(j)).count();
    return static_cast<double>(missing) / static_cast<double>(n * (p - 1));
}

GeneratedRound generate_round(const SimConfig& cfg, Index round) {
    cfg.validate();
    const Index n = cfg.n, p = cfg.p, q = cfg.q;
    auto rng = make_stream("generate", cfg.seed, {static_cast<std::uint64_t>(round)});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> beta_dist(cfg.beta_low, cfg.beta_high);

    GeneratedRound g;
    g.beta = Vector<double>::Zero(p);
    for (Index j = 0; j < q; ++j) {
        g.beta(j) = beta_dist(rng);
        g.informative.push_back(j);
    }

    Matrix<double> sigma = Matrix<double>::Constant(q, q, cfg.rho);
    sigma.diagonal().setOnes();
    const Eigen::SelfAdjointEigenSolver<Matrix<double>> eig(sigma);
    const Matrix<double> root =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();

    Matrix<double> Z(n, p);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) Z(i, j) = normal(rng);
    g.truth.X = Z;
    g.truth.X.leftCols(q) = Z.leftCols(q) * root;
    g.truth.y.resize(n);
    for (Index i = 0; i < n; ++i) g.truth.y(i) = cfg.outcome_intercept + cfg.noise_sd * normal(rng);
    g.truth.y.noalias() += g.truth.X * g.beta;

    if (cfg.target_missing > 0) {
        auto mar = induce_mar(g.truth, default_names(p), cfg.gamma, cfg.target_missing,
                              derive_seed("mar", cfg.seed, {static_cast<std::uint64_t>(round)}));
        g.data = std::move(mar.data);
        g.missing_intercept = mar.intercept;
    } else {
        g.data = MissingDataset::from_complete(g.truth.X, g.truth.y);
        g.missing_intercept = -std::numeric_limits<double>::infinity();
    }
    return g;
}

TestError evaluate_on_test(const LinearModel& model, const MissingDataset& test, const ImputationSet& train_imputation,
                           std::span<const CenteringInfo> centering, std::uint64_t seed, bool average_predictions) {
    const Index n = test.rows();
    const Index observed = test.y_observed.count();
    if (observed == 0) throw std::invalid_argument("evaluate_on_test: no observed test responses");
    const auto M = static_cast<Index>(train_imputation.models.size());
    if (static_cast<Index>(centering.size()) != M)
        throw std::invalid_argument("evaluate_on_test: centering count does not match imputation count");

    Matrix<double> pred(n, M);
    for (Index m = 0; m < M; ++m) {
        const CompletedDataset filled = mice_apply(train_imputation.models[m], test, seed);
        const CompletedDataset c = center_apply(filled, centering[m]);
        pred.col(m) = (c.X * model.slopes).array() + model.intercept;
    }

    TestError err;
    err.scored_rows = observed;
    double sse = 0;
    for (Index i = 0; i < n; ++i) {
        if (!test.y_observed(i)) continue;
        if (average_predictions) {
            const double r = test.y(i) - pred.row(i).mean();
            sse += r * r;
        } else {
            sse += (test.y(i) - pred.row(i).array()).square().mean();
        }
    }
    err.raw = sse / static_cast<double>(observed);

    double mean = 0;
    for (Index i = 0; i < n; ++i)
        if (test.y_observed(i)) mean += test.y(i);
    mean /= static_cast<double>(observed);
    double ss = 0;
    for (Index i = 0; i < n; ++i)
        if (test.y_observed(i)) ss += (test.y(i) - mean) * (test.y(i) - mean);
    err.normalized = observed > 1 ? err.raw / (ss / static_cast<double>(observed - 1))
                                  : std::numeric_limits<double>::quiet_NaN();
    return err;
}

namespace {

void score_selection(MethodResult& r, const std::vector<Index>& informative, Index p) {
    std::set<Index> info(informative.begin(), informative.end());
    Index tp = 0, fp = 0;
    for (Index j : r.selected) (info.count(j) ? tp : fp) += 1;
    const auto q = static_cast<Index>(info.size());
    r.tpp = q > 0 ? static_cast<double>(tp) / static_cast<double>(q) : 1.0;
    r.tnp = p > q ? static_cast<double>((p - q) - fp) / static_cast<double>(p - q) : 1.0;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

RoundResult run_round(const SimConfig& cfg, std::span<const Method> methods, Index round) {
    const auto key = static_cast<std::uint64_t>(round);
    RoundResult out;
    out.round = round;
    for (Method m : methods) {
        MethodResult r;
        r.method = m;
        out.methods.push_back(r);
    }

    auto fail_all = [&](const std::string& what) {
        for (auto& r : out.methods) {
            r.failed = true;
            r.error = what;
        }
    };

    try {
        const auto prep_start = std::chrono::steady_clock::now();
        const GeneratedRound g = generate_round(cfg, round);
        out.missing_fraction = maskable_missing_fraction(g.data);
        auto [train, test] = split_train_test(g.data, cfg.train_fraction, derive_seed("split", cfg.seed, {key}));

        const std::uint64_t method_seed = derive_seed("methods", cfg.seed, {key});
        const FoldAssignment folds = make_folds(train.rows(), cfg.K, derive_seed("cv-folds", method_seed));
        const FoldPlan plan{cfg.M, cfg.imputation, method_seed, 1};
        const auto prepared = prepare_folds(train, folds, plan);
        const auto full = prepare_full(train, plan);
        const std::uint64_t test_seed = derive_seed("test-impute", cfg.seed, {key});
        const double prep_seconds = seconds_since(prep_start);

        std::optional<StackedContext> stacked;
        PenalizedGridSpec spec = cfg.penalized;
        spec.K = cfg.K;
        spec.exclude_imputed_response = cfg.exclude_imputed_response;

        for (auto& r : out.methods) {
            const auto start = std::chrono::steady_clock::now();
            try {
                LinearModel model;
                switch (r.method) {
                    case Method::miboost: {
                        CvConfig cv;
                        cv.K = cfg.K;
                        cv.M = cfg.M;
                        cv.t_stop_max = cfg.t_stop_max;
                        cv.nu = cfg.nu;
                        cv.imputation = cfg.imputation;
                        cv.seed = method_seed;
                        cv.exclude_imputed_response = cfg.exclude_imputed_response;
                        const auto res = miboost_cv(prepared, full, cv);
                        model = to_linear_model(res.final_fit);
                        r.t_star = static_cast<double>(res.curve.t_star);
                        r.selected = res.final_fit.selected();
                        r.audited_iterations = res.audited_iterations;
                        r.uniform_violations = res.uniform_violations;
                        break;
                    }
                    case Method::ea_boosting: {
                        const auto res = ea_boost(full.centered, cfg.nu, cfg.K, cfg.t_stop_max, method_seed);
                        model = res.model();
                        r.t_star = res.mean_t_star();
                        r.selected = res.selected;
                        break;
                    }
                    case Method::salasso:
                    case Method::saenet: {
                        if (!stacked) stacked = prepare_stacked(prepared, full, spec, method_seed);
                        const auto which = r.method == Method::salasso ? StackedMethod::salasso : StackedMethod::saenet;
                        const auto res = tune_stacked(which, *stacked, prepared, spec);
                        model = to_linear_model(res.final);
                        r.lambda = res.best_lambda;
                        r.alpha = res.best_alpha;
                        r.selected = res.final.selected();
                        break;
                    }
                }
                const TestError e =
                    evaluate_on_test(model, test, full.imputation, full.centering, test_seed, cfg.average_test_predictions);
                r.mspe_raw = e.raw;
                r.mspe_normalized = e.normalized;
                score_selection(r, g.informative, cfg.p);
            } catch (const std::exception& ex) {
                r.failed = true;
                r.error = ex.what();
            }
            r.seconds = seconds_since(start) + prep_seconds;
        }
    } catch (const std::exception& ex) {
        fail_all(ex.what());
    }
    return out;
}

namespace {

MetricSummary summarize_values(const std::vector<double>& v) {
    MetricSummary s;
    if (v.empty()) {
        s.mean = s.se = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double sum = 0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
    return s;
}

}  // namespace

const MethodSummary& StudySummary::get(Method m) const {
    for (const auto& s : methods)
        if (s.method == m) return s;
    throw std::out_of_range("method " + to_string(m) + " not in study");
}

StudySummary summarize(std::span<const RoundResult> rounds, std::span<const Method> methods) {
    StudySummary s;
    s.rounds.assign(rounds.begin(), rounds.end());
    std::vector<double> missing;
    for (const auto& r : rounds) missing.push_back(r.missing_fraction);
    s.missing_fraction = summarize_values(missing);
    for (std::size_t k = 0; k < methods.size(); ++k) {
        MethodSummary ms;
        ms.method = methods[k];
        std::vector<double> raw, norm, tstar, lam, alp, tpp, tnp, nsel;
        for (const auto& r : rounds) {
            const auto& mr = r.methods[k];
            if (mr.failed) {
                ++ms.failed;
                continue;
            }
            ++ms.completed;
            raw.push_back(mr.mspe_raw);
            norm.push_back(mr.mspe_normalized);
            tstar.push_back(mr.t_star);
            lam.push_back(mr.lambda);
            alp.push_back(mr.alpha);
            tpp.push_back(mr.tpp);
            tnp.push_back(mr.tnp);
            nsel.push_back(static_cast<double>(mr.selected.size()));
            ms.audited_iterations += mr.audited_iterations;
            ms.uniform_violations += mr.uniform_violations;
        }
        ms.mspe_raw = summarize_values(raw);
        ms.mspe_normalized = summarize_values(norm);
        ms.t_star = summarize_values(tstar);
        ms.lambda = summarize_values(lam);
        ms.alpha = summarize_values(alp);
        ms.tpp = summarize_values(tpp);
        ms.tnp = summarize_values(tnp);
        ms.n_selected = summarize_values(nsel);
        s.methods.push_back(ms);
    }
    return s;
}

StudySummary run_study(const SimConfig& cfg, std::span<const Method> methods, std::size_t threads,
                       const ProgressFn& progress) {
    cfg.validate();
    if (methods.empty()) throw std::invalid_argument("run_study: no methods requested");
    std::vector<RoundResult> rounds(cfg.rounds);
    std::mutex report;
    parallel_for(static_cast<std::size_t>(cfg.rounds), threads, [&](std::size_t r) {
        rounds[r] = run_round(cfg, methods, static_cast<Index>(r));
        if (progress) {
            std::lock_guard lock(report);
            progress(rounds[r]);
        }
    });
    return summarize(rounds, methods);
}

namespace {

bool is_boosting(Method m) { return m == Method::miboost || m == Method::ea_boosting; }

std::string num(double v) { return std::isnan(v) ? std::string() : format_double(v); }

}  // namespace

std::string summary_csv(const StudySummary& s) {
    std::ostringstream out;
    out << "method,rounds,failed,mspe_raw,mspe_raw_se,mspe_normalized,mspe_normalized_se,t_star,t_star_se,"
           "lambda,alpha,tpp,tpp_se,tnp,tnp_se,n_selected,n_selected_se,uniform_violations\n";
    for (const auto& m : s.methods) {
        const bool boost = is_boosting(m.method);
        out << to_string(m.method) << ',' << m.completed << ',' << m.failed << ',' << num(m.mspe_raw.mean) << ','
            << num(m.mspe_raw.se) << ',' << num(m.mspe_normalized.mean) << ',' << num(m.mspe_normalized.se) << ','
            << (boost ? num(m.t_star.mean) : "") << ',' << (boost ? num(m.t_star.se) : "") << ','
            << (boost ? "" : num(m.lambda.mean)) << ',' << (boost ? "" : num(m.alpha.mean)) << ',' << num(m.tpp.mean)
            << ',' << num(m.tpp.se) << ',' << num(m.tnp.mean) << ',' << num(m.tnp.se) << ',' << num(m.n_selected.mean)
            << ',' << num(m.n_selected.se) << ',' << m.uniform_violations << '\n';
    }
    return out.str();
}

std::string rounds_csv(const StudySummary& s) {
    std::ostringstream out;
    out << "round,method,missing_fraction,failed,mspe_raw,mspe_normalized,t_star,lambda,alpha,tpp,tnp,n_selected,"
           "selected,uniform_violations,error\n";
    for (const auto& r : s.rounds) {
        for (const auto& m : r.methods) {
            const bool boost = is_boosting(m.method);
            std::string sel;
            for (std::size_t k = 0; k < m.selected.size(); ++k) {
                if (k) sel += ';';
                sel += "X" + std::to_string(m.selected[k] + 1);
            }
            std::string err = m.error;
            for (char& c : err)
                if (c == ',' || c == '\n') c = ' ';
            out << (r.round + 1) << ',' << to_string(m.method) << ',' << format_double(r.missing_fraction) << ','
                << (m.failed ? 1 : 0) << ',' << num(m.mspe_raw) << ',' << num(m.mspe_normalized) << ','
                << (boost ? num(m.t_star) : "") << ',' << (boost ? "" : num(m.lambda)) << ','
                << (boost ? "" : num(m.alpha)) << ',' << num(m.tpp) << ',' << num(m.tnp) << ',' << m.selected.size()
                << ',' << sel << ',' << m.uniform_violations << ',' << err << '\n';
        }
    }
    return out.str();
}

std::string timing_csv(const StudySummary& s) {
    std::ostringstream out;
    out << "round,method,seconds\n";
    for (const auto& r : s.rounds)
        for (const auto& m : r.methods)
            out << (r.round + 1) << ',' << to_string(m.method) << ',' << std::fixed << std::setprecision(3) << m.seconds
                << '\n';
    return out.str();
}

std::string summary_table(const StudySummary& s) {
    std::ostringstream out;
    out << std::left << std::setw(13) << "Method" << std::right << std::setw(10) << "MSPE" << std::setw(10)
        << "MSPE/var" << std::setw(22) << "lambda*/alpha*" << std::setw(9) << "t_stop*" << std::setw(7) << "TPP"
        << std::setw(7) << "TNP" << std::setw(9) << "# Selec." << std::setw(8) << "failed" << '\n';
    for (const auto& m : s.methods) {
        const bool boost = is_boosting(m.method);
        std::ostringstream pen, ts;
        if (!boost) {
            pen << std::scientific << std::setprecision(1) << m.lambda.mean;
            if (m.method == Method::saenet) pen << '/' << std::fixed << std::setprecision(2) << m.alpha.mean;
        } else {
            ts << std::fixed << std::setprecision(0) << m.t_star.mean;
        }
        out << std::left << std::setw(13) << to_string(m.method) << std::right << std::fixed << std::setprecision(3)
            << std::setw(10) << m.mspe_raw.mean << std::setw(10) << m.mspe_normalized.mean << std::setw(22) << pen.str()
            << std::setw(9) << ts.str() << std::setprecision(2) << std::setw(7) << m.tpp.mean << std::setw(7)
            << m.tnp.mean << std::setprecision(1) << std::setw(9) << m.n_selected.mean << std::setw(8) << m.failed
            << '\n';
    }
    return out.str();
}

std::string config_json(const SimConfig& cfg, std::span<const Method> methods) {
    using nlohmann::json;
    json j;
    j["n"] = cfg.n;
    j["p"] = cfg.p;
    j["q"] = cfg.q;
    j["rho"] = cfg.rho;
    j["outcome_intercept"] = cfg.outcome_intercept;
    j["noise_sd"] = cfg.noise_sd;
    j["beta_range"] = {cfg.beta_low, cfg.beta_high};
    j["gamma"] = {cfg.gamma[0], cfg.gamma[1]};
    j["target_missing"] = cfg.target_missing;
    j["M"] = cfg.M;
    j["K"] = cfg.K;
    j["rounds"] = cfg.rounds;
    j["train_fraction"] = cfg.train_fraction;
    j["nu"] = cfg.nu;
    j["t_stop_max"] = cfg.t_stop_max;
    j["cycles"] = cfg.imputation.cycles;
    j["donor_count"] = cfg.imputation.donor_count;
    j["screen_threshold"] = cfg.imputation.threshold;
    j["n_lambda"] = cfg.penalized.n_lambda;
    j["lambda_min_ratio"] = cfg.penalized.lambda_min_ratio;
    j["n_alpha"] = cfg.penalized.alphas.size();
    j["seed"] = cfg.seed;
    j["average_test_predictions"] = cfg.average_test_predictions;
    j["exclude_imputed_response"] = cfg.exclude_imputed_response;
    json m = json::array();
    for (Method x : methods) m.push_back(to_string(x));
    j["methods"] = std::move(m);
    return j.dump(2);
}

void write_results(const std::filesystem::path& dir, const SimConfig& cfg, std::span<const Method> methods,
                   const StudySummary& s) {
    std::filesystem::create_directories(dir);
    auto write = [&](const char* name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        out << text;
    };
    write("rounds.csv", rounds_csv(s));
    write("summary.csv", summary_csv(s));
    write("timing.csv", timing_csv(s));
    write("config.json", config_json(cfg, methods) + "\n");
}

}  // namespace miboost
