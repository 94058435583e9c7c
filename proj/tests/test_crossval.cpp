#include <doctest.h>

#include "oracles.hpp"

#include "miboost/crossval.hpp"
#include "miboost/rng.hpp"

#include <random>

using namespace miboost;

namespace {

MissingDataset linear_data(Index n, Index p, double rate, std::uint64_t seed) {
    auto rng = make_stream("cv-test", seed);
    std::normal_distribution<double> z;
    std::bernoulli_distribution miss(rate);
    Matrix<double> X(n, p);
    Vector<double> y(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) X(i, j) = z(rng);
        y(i) = 1.0 + 2.0 * X(i, 0) - 1.5 * X(i, 1) + z(rng);
    }
    auto d = MissingDataset::from_complete(X, y);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 1; j < p; ++j)
            if (miss(rng)) d.x_observed(i, j) = false;
        if (miss(rng)) d.y_observed(i) = false;
    }
    return d;
}

CompletedDataset constant_set(const Vector<double>& y, Index p) {
    return CompletedDataset{Matrix<double>::Zero(y.size(), p), y};
}

}  // namespace

TEST_CASE("validation error averages per-imputation MSEs") {
    const LinearModel zero{0.0, Vector<double>::Zero(1)};
    std::vector<CompletedDataset> sets{constant_set(Vector<double>::Constant(2, 1.0), 1),
                                       constant_set(Vector<double>::Constant(2, std::sqrt(3.0)), 1)};
    CHECK(validation_error(zero, sets) == doctest::Approx(2.0));

    Vector<double> y(4);
    y << 1, 2, 4, 9;
    std::vector<CompletedDataset> one{constant_set(y, 2)};
    const LinearModel c{3.0, Vector<double>::Zero(2)};
    CHECK(validation_error(c, one) == doctest::Approx((y.array() - 3.0).square().sum() / 4));

    const LinearModel exact{0.0, Vector<double>::Ones(2)};
    CompletedDataset perfect{Matrix<double>::Random(5, 2), Vector<double>()};
    perfect.y = perfect.X.rowwise().sum();
    std::vector<CompletedDataset> p{perfect};
    CHECK(validation_error(exact, p) == doctest::Approx(0.0));

    MaskVector mask(4);
    mask << true, false, true, false;
    CHECK(validation_error(c, one, &mask, true) == doctest::Approx((4.0 + 1.0) / 2));
}

TEST_CASE("argmin takes the first minimum") {
    Vector<double> v(5);
    v << 3, 1, 2, 1, 5;
    CHECK(argmin_first(v) == 1);
}

TEST_CASE("complete data with one imputation is ordinary boosting CV") {
    const auto d = linear_data(60, 4, 0.0, 1);
    CvConfig cfg;
    cfg.M = 1;
    cfg.K = 3;
    cfg.t_stop_max = 25;
    cfg.seed = 5;
    const auto res = miboost_cv(d, cfg);

    const auto folds = make_folds(d.rows(), cfg.K, derive_seed("cv-folds", cfg.seed));
    Vector<double> expected = Vector<double>::Zero(cfg.t_stop_max + 1);
    for (int k = 0; k < cfg.K; ++k) {
        const auto tr = folds.rows_not_in(k), va = folds.rows_in(k);
        Matrix<double> Xt(tr.size(), 4), Xv(va.size(), 4);
        Vector<double> yt(tr.size()), yv(va.size());
        for (std::size_t i = 0; i < tr.size(); ++i) {
            Xt.row(i) = d.X.row(tr[i]);
            yt(i) = d.y(tr[i]);
        }
        for (std::size_t i = 0; i < va.size(); ++i) {
            Xv.row(i) = d.X.row(va[i]);
            yv(i) = d.y(va[i]);
        }
        const Vector<double> mean = Xt.colwise().mean();
        Xt.rowwise() -= mean.transpose();
        Xv.rowwise() -= mean.transpose();
        for (Index t = 0; t <= cfg.t_stop_max; ++t) {
            const auto ref = oracle::naive_cwgb(Xt, yt, cfg.nu, t);
            const Vector<double> pred = (Xv * ref.coefficients.tail(4)).array() + ref.offset + ref.coefficients(0);
            expected(t) += (yv - pred).squaredNorm() / static_cast<double>(va.size()) / cfg.K;
        }
    }
    CHECK((res.curve.errors - expected).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(res.curve.t_star == argmin_first(expected));

    // the final fit is plain boosting on the centered full data
    Matrix<double> Xc = d.X.rowwise() - d.X.colwise().mean();
    const auto ref = oracle::naive_cwgb(Xc, d.y, cfg.nu, res.curve.t_star);
    CHECK(res.final_fit.selection_path == ref.path);
}

TEST_CASE("null model error at t = 0") {
    const auto d = linear_data(50, 3, 0.0, 2);
    CvConfig cfg;
    cfg.M = 1;
    cfg.K = 5;
    cfg.t_stop_max = 3;
    const auto res = miboost_cv(d, cfg);
    const auto folds = make_folds(d.rows(), cfg.K, derive_seed("cv-folds", cfg.seed));
    double expected = 0;
    for (int k = 0; k < cfg.K; ++k) {
        double train_mean = 0;
        const auto tr = folds.rows_not_in(k), va = folds.rows_in(k);
        for (Index i : tr) train_mean += d.y(i);
        train_mean /= static_cast<double>(tr.size());
        double sse = 0;
        for (Index i : va) sse += (d.y(i) - train_mean) * (d.y(i) - train_mean);
        expected += sse / static_cast<double>(va.size()) / cfg.K;
    }
    CHECK(res.curve.errors(0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cross-validation is deterministic across thread counts") {
    const auto d = linear_data(80, 5, 0.2, 3);
    CvConfig cfg;
    cfg.M = 3;
    cfg.K = 4;
    cfg.t_stop_max = 40;
    cfg.threads = 1;
    const auto a = miboost_cv(d, cfg);
    cfg.threads = 4;
    const auto b = miboost_cv(d, cfg);
    CHECK(a.curve.per_fold == b.curve.per_fold);
    CHECK(a.final_fit.coefficients == b.final_fit.coefficients);
    CHECK(a.uniform_violations == 0);
    CHECK(a.audited_iterations == cfg.K * cfg.t_stop_max + a.curve.t_star);
}

TEST_CASE("validation covariates do not reach training artifacts") {
    const auto d = linear_data(70, 4, 0.2, 4);
    CvConfig cfg;
    cfg.M = 2;
    cfg.K = 3;
    cfg.t_stop_max = 30;
    cfg.keep_fold_artifacts = true;
    const auto a = miboost_cv(d, cfg);
    const auto folds = make_folds(d.rows(), cfg.K, derive_seed("cv-folds", cfg.seed));
    auto mutated = d;
    for (Index i : folds.rows_in(0)) mutated.X.row(i).array() += 10.0;
    const auto b = miboost_cv(mutated, cfg);
    for (int m = 0; m < cfg.M; ++m)
        CHECK(to_json(a.fold_imputations[0].models[m]) == to_json(b.fold_imputations[0].models[m]));
    CHECK(to_json(a.fold_fits[0]) == to_json(b.fold_fits[0]));
    CHECK(a.curve.per_fold.row(0) != b.curve.per_fold.row(0));
}

TEST_CASE("a validation fold without observed responses is an error") {
    auto d = linear_data(20, 3, 0.0, 5);
    const auto folds = make_folds(d.rows(), 2, derive_seed("cv-folds", 1));
    for (Index i : folds.rows_in(1)) d.y_observed(i) = false;
    CvConfig cfg;
    cfg.M = 1;
    cfg.K = 2;
    cfg.t_stop_max = 5;
    CHECK_THROWS_AS((void)miboost_cv(d, cfg), std::invalid_argument);
}

TEST_CASE("invalid configuration is rejected") {
    CvConfig cfg;
    cfg.K = 1;
    CHECK_THROWS(cfg.validate());
    cfg.K = 5;
    cfg.nu = 0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("cv report lists folds then the mean") {
    CvCurve c;
    c.per_fold = Matrix<double>::Ones(2, 3);
    c.errors = Vector<double>::Ones(3);
    const std::string text = cv_report_csv(c);
    CHECK(text.rfind("fold,t,error\n1,0,1\n", 0) == 0);
    CHECK(text.find("mean,2,1\n") != std::string::npos);
}
