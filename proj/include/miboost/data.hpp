#pragma once

#include "miboost/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace miboost {

/// Response plus covariates with observation masks (true = observed).
/// The numeric value stored under a false mask entry is never read.
struct MissingDataset {
    Vector<double> y;
    Matrix<double> X;
    MaskVector y_observed;
    MaskMatrix x_observed;
    std::vector<std::string> names;
    std::string response_name = "y";

    Index rows() const { return X.rows(); }
    Index cols() const { return X.cols(); }
    Index missing_count() const;
    bool complete() const { return missing_count() == 0; }

    /// Throws std::invalid_argument when dimensions or masks disagree.
    void validate() const;

    static MissingDataset from_complete(Matrix<double> X, Vector<double> y,
                                        std::vector<std::string> names = {});
};

template <typename Scalar>
struct BasicCompletedDataset {
    Matrix<Scalar> X;
    Vector<Scalar> y;

    Index rows() const { return X.rows(); }
    Index cols() const { return X.cols(); }
};

using CompletedDataset = BasicCompletedDataset<double>;

template <typename Scalar>
struct BasicCenteringInfo {
    Vector<Scalar> means;
};

using CenteringInfo = BasicCenteringInfo<double>;

/// fold_of[i] in [0, K); fold sizes differ by at most one.
struct FoldAssignment {
    std::vector<int> fold_of;
    int K = 0;

    std::vector<Index> rows_in(int k) const;
    std::vector<Index> rows_not_in(int k) const;
    std::vector<Index> sizes() const;
};

std::vector<std::string> default_names(Index p);

MissingDataset parse_csv(std::istream& in, const std::string& response_column,
                         const std::string& missing_token = "NA");
MissingDataset load_csv(const std::filesystem::path& path, const std::string& response_column,
                        const std::string& missing_token = "NA");

/// Response first, then covariates in order; masked cells written as the token.
void write_csv(std::ostream& out, const MissingDataset& d, const std::string& missing_token = "NA");
void write_csv(std::ostream& out, const CompletedDataset& d, std::span<const std::string> names,
               const std::string& response_name);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

MissingDataset select_rows(const MissingDataset& d, std::span<const Index> rows);
CompletedDataset select_rows(const CompletedDataset& d, std::span<const Index> rows);

std::pair<MissingDataset, MissingDataset> split_train_test(const MissingDataset& d,
                                                           double train_fraction,
                                                           std::uint64_t seed);

FoldAssignment make_folds(Index n, int K, std::uint64_t seed);

template <typename Scalar>
BasicCenteringInfo<Scalar> center_fit(const BasicCompletedDataset<Scalar>& d) {
    if (d.rows() < 1) throw std::invalid_argument("center_fit: empty dataset");
    return {d.X.colwise().mean().transpose()};
}

/// Subtracts the stored means from the covariates; the response is left alone.
template <typename Scalar>
BasicCompletedDataset<Scalar> center_apply(const BasicCompletedDataset<Scalar>& d,
                                           const BasicCenteringInfo<Scalar>& c) {
    if (c.means.size() != d.cols())
        throw std::invalid_argument("center_apply: " + std::to_string(c.means.size()) +
                                    " means for " + std::to_string(d.cols()) + " columns");
    BasicCompletedDataset<Scalar> out{d.X, d.y};
    out.X.rowwise() -= c.means.transpose();
    return out;
}

template <typename Scalar>
BasicCenteringInfo<Scalar> negate(const BasicCenteringInfo<Scalar>& c) {
    return {-c.means};
}

/// Content hash of observed values and masks; masked cells do not contribute.
std::uint64_t fingerprint(const MissingDataset& d);

}  // namespace miboost
