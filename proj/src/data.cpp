#include "miboost/data.hpp"

#include "miboost/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace miboost {

Index MissingDataset::missing_count() const {
    return (!y_observed).count() + (!x_observed).count();
}

void MissingDataset::validate() const {
    if (rows() < 1 || cols() < 1) throw std::invalid_argument("dataset needs n >= 1 and p >= 1");
    if (y.size() != rows() || y_observed.size() != rows())
        throw std::invalid_argument("response length does not match row count");
    if (x_observed.rows() != rows() || x_observed.cols() != cols())
        throw std::invalid_argument("covariate mask shape does not match data");
    if (static_cast<Index>(names.size()) != cols())
        throw std::invalid_argument("covariate name count does not match column count");
}

std::vector<std::string> default_names(Index p) {
    std::vector<std::string> names;
    names.reserve(p);
    for (Index j = 0; j < p; ++j) names.push_back("X" + std::to_string(j + 1));
    return names;
}

MissingDataset MissingDataset::from_complete(Matrix<double> X, Vector<double> y,
                                             std::vector<std::string> names) {
    MissingDataset d;
    if (names.empty()) names = default_names(X.cols());
    d.y_observed = MaskVector::Constant(y.size(), true);
    d.x_observed = MaskMatrix::Constant(X.rows(), X.cols(), true);
    d.X = std::move(X);
    d.y = std::move(y);
    d.names = std::move(names);
    d.validate();
    return d;
}

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            cells.push_back(trim(cell));
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    cells.push_back(trim(cell));
    return cells;
}

bool parse_real(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

MissingDataset parse_csv(std::istream& in, const std::string& response_column,
                         const std::string& missing_token) {
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) {
            header = split_line(line);
            break;
        }
    }
    if (header.empty()) throw ParseError("empty file: no header row");
    if (!header.empty() && header[0].size() >= 3 && header[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
        header[0] = header[0].substr(3);

    std::set<std::string> seen;
    for (const auto& h : header)
        if (!seen.insert(h).second) throw ParseError("duplicate column label \"" + h + "\"");
    auto it = std::find(header.begin(), header.end(), response_column);
    if (it == header.end()) throw ParseError("response column \"" + response_column + "\" not found");
    const auto response_pos = static_cast<std::size_t>(it - header.begin());
    if (header.size() < 2) throw ParseError("need at least one covariate column");

    std::vector<std::vector<double>> values;
    std::vector<std::vector<char>> observed;
    std::size_t file_row = 1;
    while (std::getline(in, line)) {
        ++file_row;
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(file_row) + ": expected " +
                             std::to_string(header.size()) + " cells, found " +
                             std::to_string(cells.size()));
        std::vector<double> v(cells.size(), std::numeric_limits<double>::quiet_NaN());
        std::vector<char> o(cells.size(), 0);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (cells[c].empty() || cells[c] == missing_token) continue;
            if (!parse_real(cells[c], v[c]))
                throw ParseError("row " + std::to_string(file_row) + ", column \"" + header[c] +
                                 "\": cannot parse \"" + cells[c] + "\" as a finite number");
            o[c] = 1;
        }
        values.push_back(std::move(v));
        observed.push_back(std::move(o));
    }
    if (values.empty()) throw ParseError("file has a header but no data rows");

    const auto n = static_cast<Index>(values.size());
    const auto p = static_cast<Index>(header.size() - 1);
    MissingDataset d;
    d.response_name = response_column;
    d.y.resize(n);
    d.y_observed.resize(n);
    d.X.resize(n, p);
    d.x_observed.resize(n, p);
    for (std::size_t c = 0; c < header.size(); ++c)
        if (c != response_pos) d.names.push_back(header[c]);
    for (Index i = 0; i < n; ++i) {
        Index j = 0;
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c == response_pos) {
                d.y(i) = values[i][c];
                d.y_observed(i) = observed[i][c] != 0;
            } else {
                d.X(i, j) = values[i][c];
                d.x_observed(i, j) = observed[i][c] != 0;
                ++j;
            }
        }
    }
    d.validate();
    return d;
}

MissingDataset load_csv(const std::filesystem::path& path, const std::string& response_column,
                        const std::string& missing_token) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return parse_csv(in, response_column, missing_token);
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const MissingDataset& d, const std::string& missing_token) {
    out << d.response_name;
    for (const auto& n : d.names) out << ',' << n;
    out << '\n';
    for (Index i = 0; i < d.rows(); ++i) {
        out << (d.y_observed(i) ? format_double(d.y(i)) : missing_token);
        for (Index j = 0; j < d.cols(); ++j)
            out << ',' << (d.x_observed(i, j) ? format_double(d.X(i, j)) : missing_token);
        out << '\n';
    }
}

void write_csv(std::ostream& out, const CompletedDataset& d, std::span<const std::string> names,
               const std::string& response_name) {
    out << response_name;
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (Index i = 0; i < d.rows(); ++i) {
        out << format_double(d.y(i));
        for (Index j = 0; j < d.cols(); ++j) out << ',' << format_double(d.X(i, j));
        out << '\n';
    }
}

MissingDataset select_rows(const MissingDataset& d, std::span<const Index> rows) {
    MissingDataset out;
    const auto n = static_cast<Index>(rows.size());
    out.y.resize(n);
    out.y_observed.resize(n);
    out.X.resize(n, d.cols());
    out.x_observed.resize(n, d.cols());
    for (Index i = 0; i < n; ++i) {
        const Index r = rows[i];
        out.y(i) = d.y(r);
        out.y_observed(i) = d.y_observed(r);
        out.X.row(i) = d.X.row(r);
        out.x_observed.row(i) = d.x_observed.row(r);
    }
    out.names = d.names;
    out.response_name = d.response_name;
    return out;
}

CompletedDataset select_rows(const CompletedDataset& d, std::span<const Index> rows) {
    CompletedDataset out;
    const auto n = static_cast<Index>(rows.size());
    out.y.resize(n);
    out.X.resize(n, d.cols());
    for (Index i = 0; i < n; ++i) {
        out.y(i) = d.y(rows[i]);
        out.X.row(i) = d.X.row(rows[i]);
    }
    return out;
}

std::pair<MissingDataset, MissingDataset> split_train_test(const MissingDataset& d,
                                                           double train_fraction,
                                                           std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("train_fraction must lie in (0, 1)");
    const Index n = d.rows();
    const auto n_train = static_cast<Index>(std::floor(train_fraction * static_cast<double>(n)));
    if (n_train < 1 || n - n_train < 1)
        throw std::invalid_argument("degenerate split: " + std::to_string(n_train) + " training / " +
                                    std::to_string(n - n_train) + " test rows");
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    auto rng = make_stream("split", seed, {static_cast<std::uint64_t>(n)});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Index> train(perm.begin(), perm.begin() + n_train);
    std::vector<Index> test(perm.begin() + n_train, perm.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {select_rows(d, train), select_rows(d, test)};
}

FoldAssignment make_folds(Index n, int K, std::uint64_t seed) {
    if (K < 2 || K > n)
        throw std::invalid_argument("make_folds: need 2 <= K <= n (K=" + std::to_string(K) +
                                    ", n=" + std::to_string(n) + ")");
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    auto rng = make_stream("folds", seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(K)});
    std::shuffle(perm.begin(), perm.end(), rng);
    FoldAssignment f;
    f.K = K;
    f.fold_of.assign(n, 0);
    for (Index pos = 0; pos < n; ++pos) f.fold_of[perm[pos]] = static_cast<int>(pos % K);
    return f;
}

std::vector<Index> FoldAssignment::rows_in(int k) const {
    std::vector<Index> rows;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] == k) rows.push_back(static_cast<Index>(i));
    return rows;
}

std::vector<Index> FoldAssignment::rows_not_in(int k) const {
    std::vector<Index> rows;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] != k) rows.push_back(static_cast<Index>(i));
    return rows;
}

std::vector<Index> FoldAssignment::sizes() const {
    std::vector<Index> s(K, 0);
    for (int f : fold_of) ++s[f];
    return s;
}

std::uint64_t fingerprint(const MissingDataset& d) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, std::size_t len) {
        auto bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    const std::int64_t dims[2] = {d.rows(), d.cols()};
    mix(dims, sizeof(dims));
    for (Index i = 0; i < d.rows(); ++i) {
        const char o = d.y_observed(i) ? 1 : 0;
        mix(&o, 1);
        if (o) mix(&d.y(i), sizeof(double));
        for (Index j = 0; j < d.cols(); ++j) {
            const char ox = d.x_observed(i, j) ? 1 : 0;
            mix(&ox, 1);
            if (ox) mix(&d.X(i, j), sizeof(double));
        }
    }
    return h;
}

}  // namespace miboost
