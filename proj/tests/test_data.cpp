#include <doctest.h>

#include "miboost/data.hpp"

#include <algorithm>
#include <set>
#include <sstream>

using namespace miboost;

TEST_CASE("csv with one NA cell has exactly one missing entry") {
    std::istringstream in("y,X1\n1,2\nNA,3\n4,5\n");
    const MissingDataset d = parse_csv(in, "y");
    CHECK(d.rows() == 3);
    CHECK(d.cols() == 1);
    CHECK(d.missing_count() == 1);
    CHECK_FALSE(d.y_observed(1));
    CHECK(d.X(2, 0) == 5.0);
}

TEST_CASE("csv without missing tokens is fully observed") {
    std::istringstream in("X1,y,X2\n1,2,3\n4,5,6\n");
    const MissingDataset d = parse_csv(in, "y");
    CHECK(d.complete());
    CHECK(d.names == std::vector<std::string>{"X1", "X2"});
    CHECK(d.y(1) == 5.0);
    CHECK(d.X(1, 1) == 6.0);
}

TEST_CASE("empty cells and custom tokens are missing") {
    std::istringstream in("y,X1,X2\n1,,3\n2,.,4\n");
    const MissingDataset d = parse_csv(in, "y", ".");
    CHECK_FALSE(d.x_observed(0, 0));
    CHECK_FALSE(d.x_observed(1, 0));
    CHECK(d.missing_count() == 2);
}

TEST_CASE("unparseable cell names row and column") {
    std::istringstream in("y,X1,X2,X3\n1,2,3,abc\n");
    try {
        (void)parse_csv(in, "y");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 2") != std::string::npos);
        CHECK(msg.find("\"X3\"") != std::string::npos);
    }
}

TEST_CASE("missing response column and duplicate labels are rejected") {
    std::istringstream a("X1,X2\n1,2\n");
    CHECK_THROWS_AS((void)parse_csv(a, "y"), ParseError);
    std::istringstream b("y,X1,X1\n1,2,3\n");
    CHECK_THROWS_AS((void)parse_csv(b, "y"), ParseError);
}

TEST_CASE("csv round trip keeps values and masks") {
    std::istringstream in("y,X1,X2\n1.5,NA,-3\n0.1,2e-3,7\n");
    const MissingDataset d = parse_csv(in, "y");
    std::ostringstream out;
    write_csv(out, d);
    std::istringstream again(out.str());
    const MissingDataset e = parse_csv(again, "y");
    CHECK((e.x_observed == d.x_observed).all());
    CHECK(e.X(1, 0) == d.X(1, 0));
    CHECK(e.y(1) == 0.1);
}

TEST_CASE("split sizes follow the floor rule") {
    const auto make = [](Index n) {
        return MissingDataset::from_complete(Matrix<double>::Random(n, 2), Vector<double>::Random(n));
    };
    auto [tr, te] = split_train_test(make(500), 0.8, 7);
    CHECK(tr.rows() == 400);
    CHECK(te.rows() == 100);
    auto [a, b] = split_train_test(make(2), 0.9, 7);
    CHECK(a.rows() == 1);
    CHECK(b.rows() == 1);
}

TEST_CASE("split is deterministic and partitions the rows") {
    Matrix<double> X(10, 1);
    for (Index i = 0; i < 10; ++i) X(i, 0) = static_cast<double>(i);
    const auto d = MissingDataset::from_complete(X, Vector<double>::Zero(10));
    auto [a1, b1] = split_train_test(d, 0.5, 11);
    auto [a2, b2] = split_train_test(d, 0.5, 11);
    CHECK(a1.X == a2.X);
    CHECK(b1.X == b2.X);
    std::set<double> all;
    for (Index i = 0; i < a1.rows(); ++i) all.insert(a1.X(i, 0));
    for (Index i = 0; i < b1.rows(); ++i) all.insert(b1.X(i, 0));
    CHECK(all.size() == 10);
}

TEST_CASE("fold sizes") {
    auto even = make_folds(10, 5, 3).sizes();
    CHECK(std::all_of(even.begin(), even.end(), [](Index s) { return s == 2; }));
    auto odd = make_folds(11, 5, 3).sizes();
    std::sort(odd.begin(), odd.end());
    CHECK(odd == std::vector<Index>{2, 2, 2, 2, 3});
    CHECK(make_folds(400, 5, 9).fold_of == make_folds(400, 5, 9).fold_of);
    CHECK(make_folds(400, 5, 9).fold_of != make_folds(400, 5, 10).fold_of);
}

TEST_CASE("fold rows partition the index set") {
    const auto f = make_folds(23, 4, 1);
    std::vector<int> seen(23, 0);
    for (int k = 0; k < f.K; ++k) {
        for (Index i : f.rows_in(k)) ++seen[i];
        CHECK(f.rows_in(k).size() + f.rows_not_in(k).size() == 23);
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("centering") {
    CompletedDataset d;
    d.X.resize(3, 2);
    d.X << 1, 5, 2, 5, 3, 5;
    d.y = Vector<double>::Zero(3);
    const auto c = center_fit(d);
    CHECK(c.means(0) == doctest::Approx(2.0));
    CHECK(c.means(1) == doctest::Approx(5.0));
    const auto z = center_apply(d, c);
    CHECK(z.X.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
    CHECK(center_fit(z).means.cwiseAbs().maxCoeff() < 1e-12);

    CompletedDataset v;
    v.X.resize(2, 1);
    v.X << 4, 6;
    v.y = Vector<double>::Zero(2);
    const auto shifted = center_apply(v, CenteringInfo{Vector<double>::Constant(1, 3.0)});
    CHECK(shifted.X(0, 0) == 1.0);
    CHECK(shifted.X(1, 0) == 3.0);
    CHECK(center_apply(v, CenteringInfo{Vector<double>::Zero(1)}).X == v.X);
}

TEST_CASE("fingerprint ignores values under a missing mask") {
    auto d = MissingDataset::from_complete(Matrix<double>::Ones(3, 2), Vector<double>::Ones(3));
    d.x_observed(1, 1) = false;
    const auto before = fingerprint(d);
    d.X(1, 1) = 42.0;
    CHECK(fingerprint(d) == before);
    d.X(0, 0) = 2.0;
    CHECK(fingerprint(d) != before);
}
