#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace mdlselect {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class SubsetKind { linear_predictor, additive_group };

/// A candidate model: a strictly increasing set of 0-based predictor
/// (or covariate-group) indices. Output layers add 1 when printing.
class ModelSubset {
public:
    ModelSubset() = default;

    ModelSubset(std::vector<Index> indices, Index universe,
                SubsetKind kind = SubsetKind::linear_predictor)
        : indices_(std::move(indices)), universe_(universe), kind_(kind) {
        std::sort(indices_.begin(), indices_.end());
        if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end())
            throw InputError("model subset contains duplicate indices");
        if (!indices_.empty() && (indices_.front() < 0 || indices_.back() >= universe_))
            throw InputError("model subset index out of range [0, " +
                             std::to_string(universe_) + ")");
    }

    static ModelSubset empty(Index universe, SubsetKind kind = SubsetKind::linear_predictor) {
        return ModelSubset({}, universe, kind);
    }

    const std::vector<Index>& indices() const noexcept { return indices_; }
    Index size() const noexcept { return static_cast<Index>(indices_.size()); }
    bool is_empty() const noexcept { return indices_.empty(); }
    Index universe() const noexcept { return universe_; }
    SubsetKind kind() const noexcept { return kind_; }

    bool contains(Index j) const {
        return std::binary_search(indices_.begin(), indices_.end(), j);
    }

    friend bool operator==(const ModelSubset& a, const ModelSubset& b) {
        return a.indices_ == b.indices_ && a.universe_ == b.universe_ && a.kind_ == b.kind_;
    }

private:
    std::vector<Index> indices_;
    Index universe_ = 0;
    SubsetKind kind_ = SubsetKind::linear_predictor;
};

/// Response vector and predictor matrix, plus the affine map applied by
/// standardize(). Immutable once built; all transforms return new values.
class Dataset {
public:
    Dataset(Vector y, Matrix X, std::vector<std::string> names = {})
        : y_(std::move(y)), X_(std::move(X)), names_(std::move(names)),
          col_means_(Vector::Zero(X_.cols())), col_scales_(Vector::Ones(X_.cols())) {
        if (X_.rows() != y_.size())
            throw InputError("response length " + std::to_string(y_.size()) +
                             " does not match predictor rows " + std::to_string(X_.rows()));
        if (y_.size() < 2) throw InputError("too few rows: need n >= 2, got " +
                                            std::to_string(y_.size()));
        if (X_.cols() < 1) throw InputError("no predictor columns");
        if (!y_.allFinite() || !X_.allFinite())
            throw InputError("dataset contains non-finite values");
        if (names_.empty()) {
            names_.reserve(static_cast<std::size_t>(X_.cols()));
            for (Index j = 0; j < X_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
        } else if (static_cast<Index>(names_.size()) != X_.cols()) {
            throw InputError("column name count does not match predictor columns");
        }
    }

    Index n() const noexcept { return X_.rows(); }
    Index p() const noexcept { return X_.cols(); }
    const Vector& y() const noexcept { return y_; }
    const Matrix& X() const noexcept { return X_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const Vector& col_means() const noexcept { return col_means_; }
    const Vector& col_scales() const noexcept { return col_scales_; }
    bool standardized() const noexcept { return standardized_; }

    /// Copy restricted to the given predictor columns (metadata follows).
    Dataset select_columns(const std::vector<Index>& cols) const {
        Matrix Xs(n(), static_cast<Index>(cols.size()));
        Vector means(Xs.cols()), scales(Xs.cols());
        std::vector<std::string> names;
        for (std::size_t k = 0; k < cols.size(); ++k) {
            const auto j = cols[k];
            Xs.col(static_cast<Index>(k)) = X_.col(j);
            means(static_cast<Index>(k)) = col_means_(j);
            scales(static_cast<Index>(k)) = col_scales_(j);
            names.push_back(names_[static_cast<std::size_t>(j)]);
        }
        Dataset out(y_, std::move(Xs), std::move(names));
        out.col_means_ = std::move(means);
        out.col_scales_ = std::move(scales);
        out.standardized_ = standardized_;
        return out;
    }

    /// Same predictors, different response (used for rescaling and centering).
    Dataset with_response(Vector y) const {
        Dataset out = *this;
        if (y.size() != n()) throw InputError("replacement response has wrong length");
        out.y_ = std::move(y);
        return out;
    }

private:
    friend Dataset standardize(const Dataset& d);

    Vector y_;
    Matrix X_;
    std::vector<std::string> names_;
    Vector col_means_;
    Vector col_scales_;
    bool standardized_ = false;
};

/// Centers every predictor column and scales it to unit variance under
/// the 1/n convention. y is left untouched. Applying it to an already
/// standardized dataset composes the affine maps.
inline Dataset standardize(const Dataset& d) {
    const double n = static_cast<double>(d.n());
    Matrix X = d.X();
    Vector means(d.p()), scales(d.p());
    for (Index j = 0; j < d.p(); ++j) {
        const double mean = X.col(j).mean();
        X.col(j).array() -= mean;
        const double scale = std::sqrt(X.col(j).squaredNorm() / n);
        // relative test so that large-magnitude constant columns are caught
        if (!(scale > 1e-12 * std::max(1.0, std::abs(mean))))
            throw InputError("zero-variance column '" + d.names()[static_cast<std::size_t>(j)] + "'");
        X.col(j) /= scale;
        means(j) = mean;
        scales(j) = scale;
    }
    Dataset out(d.y(), std::move(X), d.names());
    if (d.standardized()) {
        // x_std = ((x - m0)/s0 - m1)/s1 = (x - (m0 + s0 m1)) / (s0 s1)
        out.col_means_ = d.col_means().array() + d.col_scales().array() * means.array();
        out.col_scales_ = d.col_scales().array() * scales.array();
    } else {
        out.col_means_ = std::move(means);
        out.col_scales_ = std::move(scales);
    }
    out.standardized_ = true;
    return out;
}

struct OriginalScaleCoefficients {
    Vector beta;
    /// Added to X_orig * beta to reproduce X_std * beta_std.
    double intercept_shift = 0.0;
};

/// Maps coefficients fitted on standardized columns S back to the
/// original column units.
inline OriginalScaleCoefficients unstandardize_coefficients(const Dataset& d, const ModelSubset& S,
                                                            const Vector& beta_std) {
    if (!d.standardized()) throw ContractError("dataset carries no standardization metadata");
    if (beta_std.size() != S.size()) throw InputError("coefficient vector does not match subset size");
    OriginalScaleCoefficients out;
    out.beta.resize(S.size());
    for (Index k = 0; k < S.size(); ++k) {
        const auto j = S.indices()[static_cast<std::size_t>(k)];
        out.beta(k) = beta_std(k) / d.col_scales()(j);
        out.intercept_shift -= out.beta(k) * d.col_means()(j);
    }
    return out;
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        return std::nullopt;
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Reads a comma-separated file with one header row. Every column except
/// `response_column` becomes a predictor, in file order.
inline Dataset load_csv(std::istream& in, const std::string& response_column) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty CSV: no header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    std::vector<std::string> header;
    for (auto f : detail::split_csv_line(line)) header.emplace_back(detail::trim(f));

    const auto it = std::find(header.begin(), header.end(), response_column);
    if (it == header.end()) throw InputError("response column '" + response_column + "' not found");
    const auto response_pos = static_cast<std::size_t>(it - header.begin());

    std::vector<std::string> names;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (c != response_pos) names.push_back(header[c]);

    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw InputError("row " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const auto v = detail::parse_double(fields[c]);
            if (!v)
                throw InputError("row " + std::to_string(line_no) + ", column '" + header[c] +
                                 "': cannot parse '" + std::string(detail::trim(fields[c])) + "'");
            values.push_back(*v);
        }
        ++rows;
    }
    if (rows < 2) throw InputError("too few rows: need n >= 2, got " + std::to_string(rows));
    if (names.empty()) throw InputError("no predictor columns besides the response");

    const auto cols = header.size();
    Vector y(static_cast<Index>(rows));
    Matrix X(static_cast<Index>(rows), static_cast<Index>(cols - 1));
    for (std::size_t r = 0; r < rows; ++r) {
        Index xc = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = values[r * cols + c];
            if (c == response_pos) y(static_cast<Index>(r)) = v;
            else X(static_cast<Index>(r), xc++) = v;
        }
    }
    return Dataset(std::move(y), std::move(X), std::move(names));
}

inline Dataset load_csv(const std::string& path, const std::string& response_column) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    return load_csv(in, response_column);
}

/// Writes the response first, then predictors. Values use the shortest
/// representation that round-trips exactly.
inline void save_csv(std::ostream& out, const Dataset& d, const std::string& response_name = "y") {
    out << response_name;
    for (const auto& name : d.names()) out << ',' << name;
    out << '\n';
    for (Index i = 0; i < d.n(); ++i) {
        out << detail::format_double(d.y()(i));
        for (Index j = 0; j < d.p(); ++j) out << ',' << detail::format_double(d.X()(i, j));
        out << '\n';
    }
}

inline void save_csv(const std::string& path, const Dataset& d, const std::string& response_name = "y") {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    save_csv(out, d, response_name);
}

}  // namespace mdlselect
