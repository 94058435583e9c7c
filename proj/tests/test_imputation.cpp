#include <doctest.h>

#include "miboost/imputation.hpp"
#include "miboost/rng.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <set>

using namespace miboost;

namespace {

/// Pearson correlation of average ranks, computed by brute force.
double spearman_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ranks = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double less = 0, equal = 0;
            for (double w : v) {
                less += w < v[i];
                equal += w == v[i];
            }
            r[i] = less + (equal + 1) / 2;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(ra.size());
    mb /= static_cast<double>(rb.size());
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

MissingDataset random_missing(Index n, Index p, double rate, std::uint64_t seed) {
    auto rng = make_stream("test-data", seed);
    std::normal_distribution<double> z;
    std::bernoulli_distribution miss(rate);
    Matrix<double> X(n, p);
    Vector<double> y(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) X(i, j) = z(rng);
        y(i) = X.row(i).sum() + z(rng);
    }
    auto d = MissingDataset::from_complete(X, y);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 1; j < p; ++j)
            if (miss(rng)) d.x_observed(i, j) = false;
        if (miss(rng)) d.y_observed(i) = false;
    }
    return d;
}

}  // namespace

TEST_CASE("spearman on small vectors") {
    const std::vector<double> a{1, 2, 3}, b{2, 4, 6}, c{3, 2, 1};
    CHECK(spearman(a, b) == doctest::Approx(1.0));
    CHECK(spearman(a, c) == doctest::Approx(-1.0));
    const std::vector<double> d{1, 2, 3, 4}, e{1, 3, 2, 4};
    CHECK(spearman(d, e) == doctest::Approx(spearman_oracle({1, 2, 3, 4}, {1, 3, 2, 4})));
    CHECK(spearman(d, e) == doctest::Approx(0.8));
}

TEST_CASE("spearman matches the rank oracle with ties and missing pairs") {
    auto rng = make_stream("spearman-test", 1);
    std::uniform_int_distribution<int> level(0, 6);
    std::bernoulli_distribution miss(0.2);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> a(40), b(40), ao, bo;
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = level(rng);
            b[i] = level(rng) + 0.5 * a[i];
            if (miss(rng)) a[i] = nan;
            if (miss(rng)) b[i] = nan;
            if (!std::isnan(a[i]) && !std::isnan(b[i])) {
                ao.push_back(a[i]);
                bo.push_back(b[i]);
            }
        }
        CHECK(spearman(a, b) == doctest::Approx(spearman_oracle(ao, bo)).epsilon(1e-12));
    }
    const std::vector<double> constant{1, 1, 1}, other{1, 2, 3};
    CHECK(spearman(constant, other) == 0.0);
    const std::vector<double> one{1}, two{2};
    CHECK_THROWS((void)spearman(one, two));
}

TEST_CASE("predictor screening") {
    auto rng = make_stream("screen-test", 2);
    std::normal_distribution<double> z;
    const Index n = 300;
    Matrix<double> X(n, 4);
    Vector<double> y(n);
    for (Index i = 0; i < n; ++i) {
        y(i) = z(rng);
        X(i, 0) = y(i) + 1e-3 * z(rng);
        for (Index j = 1; j < 4; ++j) X(i, j) = z(rng);
    }
    const auto d = MissingDataset::from_complete(X, y);
    const Index target = 4;  // response

    const auto all = screen_predictors(d, target, 0.0);
    CHECK(all == std::vector<Index>{0, 1, 2, 3});

    const auto fallback = screen_predictors(d, target, 1.01);
    REQUIRE(fallback.size() == 1);
    CHECK(fallback[0] == 0);

    const auto picked = screen_predictors(d, target, 0.1);
    CHECK(std::find(picked.begin(), picked.end(), 0) != picked.end());
    for (Index j : picked) {
        std::vector<double> a(X.col(j).data(), X.col(j).data() + n), b(y.data(), y.data() + n);
        CHECK(std::abs(spearman_oracle(a, b)) >= 0.1);
    }
}

TEST_CASE("complete data imputes to identical copies with no records") {
    const auto d = MissingDataset::from_complete(Matrix<double>::Random(20, 3), Vector<double>::Random(20));
    const auto set = mice_fit(d, 3, {}, 5);
    REQUIRE(set.completed.size() == 3);
    for (const auto& c : set.completed) {
        CHECK(c.X == d.X);
        CHECK(c.y == d.y);
    }
    for (const auto& m : set.models) CHECK(m.records.empty());
    CHECK(mice_apply(set.models[0], d, 1).X == d.X);
}

TEST_CASE("imputed values are observed donor values and observed cells are kept") {
    const auto d = random_missing(120, 5, 0.25, 3);
    const auto set = mice_fit(d, 4, {}, 9);
    for (const auto& c : set.completed) {
        for (Index j = 0; j < d.cols(); ++j) {
            std::set<double> pool;
            for (Index i = 0; i < d.rows(); ++i)
                if (d.x_observed(i, j)) pool.insert(d.X(i, j));
            for (Index i = 0; i < d.rows(); ++i) {
                if (d.x_observed(i, j))
                    CHECK(c.X(i, j) == d.X(i, j));
                else
                    CHECK(pool.count(c.X(i, j)) == 1);
            }
        }
        std::set<double> ypool;
        for (Index i = 0; i < d.rows(); ++i)
            if (d.y_observed(i)) ypool.insert(d.y(i));
        for (Index i = 0; i < d.rows(); ++i)
            if (!d.y_observed(i)) CHECK(ypool.count(c.y(i)) == 1);
    }
}

TEST_CASE("strongly related covariate is imputed accurately") {
    auto rng = make_stream("pmm-accuracy", 4);
    std::normal_distribution<double> z;
    std::bernoulli_distribution miss(0.3);
    const Index n = 200;
    Matrix<double> X(n, 2);
    Vector<double> y(n);
    for (Index i = 0; i < n; ++i) {
        X(i, 0) = 1.5 * z(rng);
        X(i, 1) = 2 * X(i, 0) + 0.01 * z(rng);
        y(i) = z(rng);
    }
    auto d = MissingDataset::from_complete(X, y);
    for (Index i = 0; i < n; ++i)
        if (miss(rng)) d.x_observed(i, 1) = false;
    const auto set = mice_fit(d, 5, {}, 12);
    for (const auto& c : set.completed) {
        double err = 0;
        Index count = 0;
        for (Index i = 0; i < n; ++i) {
            if (d.x_observed(i, 1)) continue;
            err += std::abs(c.X(i, 1) - X(i, 1));
            ++count;
        }
        REQUIRE(count > 0);
        CHECK(err / static_cast<double>(count) < 0.5);
    }
}

TEST_CASE("imputation is reproducible and independent of thread count") {
    const auto d = random_missing(80, 4, 0.2, 5);
    const auto a = mice_fit(d, 3, {}, 21, 1);
    const auto b = mice_fit(d, 3, {}, 21, 3);
    for (int m = 0; m < 3; ++m) {
        CHECK(a.completed[m].X == b.completed[m].X);
        CHECK(a.completed[m].y == b.completed[m].y);
        CHECK(to_json(a.models[m]) == to_json(b.models[m]));
    }
    const auto c = mice_fit(d, 3, {}, 22, 1);
    CHECK(c.completed[0].X != a.completed[0].X);
}

TEST_CASE("trained models transfer to new rows without refitting") {
    const auto train = random_missing(100, 4, 0.2, 6);
    const auto test = random_missing(30, 4, 0.2, 7);
    const auto set = mice_fit(train, 2, {}, 3);
    const std::string before = to_json(set.models[0]);
    const auto filled = mice_apply(set.models[0], test, 8);
    CHECK(to_json(set.models[0]) == before);
    CHECK(filled.X.allFinite());
    CHECK(filled.y.allFinite());
    for (Index i = 0; i < test.rows(); ++i)
        for (Index j = 0; j < test.cols(); ++j)
            if (test.x_observed(i, j)) CHECK(filled.X(i, j) == test.X(i, j));
    const auto again = mice_apply(set.models[0], test, 8);
    CHECK(again.X == filled.X);
    const auto* rec = set.models[0].find(1);
    REQUIRE(rec != nullptr);
    for (Index i = 0; i < test.rows(); ++i) {
        if (test.x_observed(i, 1)) continue;
        bool donor = false;
        for (Index k = 0; k < rec->donor_values.size(); ++k) donor = donor || rec->donor_values(k) == filled.X(i, 1);
        CHECK(donor);
    }
}

TEST_CASE("mice_apply rejects a schema mismatch") {
    const auto train = random_missing(60, 4, 0.2, 9);
    const auto set = mice_fit(train, 1, {}, 3);
    const auto other = random_missing(10, 3, 0.2, 10);
    CHECK_THROWS((void)mice_apply(set.models[0], other, 1));
}

TEST_CASE("collinear predictors do not break the imputer") {
    auto d = random_missing(60, 3, 0.2, 11);
    d.X.col(2) = d.X.col(0);
    d.x_observed.col(2) = d.x_observed.col(0);
    d.x_observed(0, 1) = false;
    const auto set = mice_fit(d, 2, {}, 4);
    CHECK(set.completed[0].X.allFinite());
}
