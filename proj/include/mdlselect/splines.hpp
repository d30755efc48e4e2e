#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "error.hpp"

namespace mdlselect::splines {

/// Degree and dimension of a clamped B-spline basis with evenly spaced
/// interior knots. The interior knot count is basis_dim - degree - 1.
struct SplineBasisSpec {
    int degree = 3;
    int basis_dim = 9;

    int interior_knots() const { return basis_dim - degree - 1; }

    void validate() const {
        if (degree < 0) throw InputError("spline degree must be nonnegative");
        if (basis_dim < degree + 1)
            throw InputError("basis dimension " + std::to_string(basis_dim) +
                             " is below degree + 1 = " + std::to_string(degree + 1));
    }
};

/// Full knot vector on [a, b]: degree+1 copies of each endpoint and the
/// interior knots evenly spaced between them.
inline std::vector<double> knot_vector(const SplineBasisSpec& spec, double a, double b) {
    spec.validate();
    const int l = spec.degree;
    const int interior = spec.interior_knots();
    std::vector<double> t;
    t.reserve(static_cast<std::size_t>(spec.basis_dim + l + 1));
    for (int i = 0; i <= l; ++i) t.push_back(a);
    for (int i = 1; i <= interior; ++i) t.push_back(a + (b - a) * i / (interior + 1));
    for (int i = 0; i <= l; ++i) t.push_back(b);
    return t;
}

namespace detail {

/// Index s of the knot span with t[s] <= x < t[s+1]; x == b maps to the
/// last nonempty span.
inline int find_span(const std::vector<double>& t, int degree, int basis_dim, double x) {
    if (x >= t[static_cast<std::size_t>(basis_dim)]) return basis_dim - 1;
    const auto it = std::upper_bound(t.begin() + degree, t.begin() + basis_dim + 1, x);
    return static_cast<int>(it - t.begin()) - 1;
}

/// The degree+1 basis functions that are nonzero on span s, computed with
/// the triangular (de Boor) scheme; out[r] is N_{s-degree+r}.
inline void nonzero_basis(const std::vector<double>& t, int degree, int s, double x, double* out) {
    std::vector<double> left(static_cast<std::size_t>(degree + 1)), right(static_cast<std::size_t>(degree + 1));
    out[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[static_cast<std::size_t>(j)] = x - t[static_cast<std::size_t>(s + 1 - j)];
        right[static_cast<std::size_t>(j)] = t[static_cast<std::size_t>(s + j)] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double denom = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
            const double temp = out[r] / denom;
            out[r] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
            saved = left[static_cast<std::size_t>(j - r)] * temp;
        }
        out[j] = saved;
    }
}

}  // namespace detail

/// Evaluates the normalized B-spline basis at each x; row i holds the
/// basis_dim values at x(i). Points outside [a, b] are clamped.
inline Matrix basis_eval(const SplineBasisSpec& spec, double a, double b, const Vector& x) {
    spec.validate();
    if (!(a < b)) throw InputError("spline domain requires a < b");
    const auto t = knot_vector(spec, a, b);
    Matrix B = Matrix::Zero(x.size(), spec.basis_dim);
    std::vector<double> vals(static_cast<std::size_t>(spec.degree + 1));
    for (Index i = 0; i < x.size(); ++i) {
        const double xi = std::clamp(x(i), a, b);
        const int s = detail::find_span(t, spec.degree, spec.basis_dim, xi);
        detail::nonzero_basis(t, spec.degree, s, xi, vals.data());
        for (int r = 0; r <= spec.degree; ++r) B(i, s - spec.degree + r) = vals[static_cast<std::size_t>(r)];
    }
    return B;
}

/// Basis for one covariate, centered on the training sample.
struct GroupBasis {
    Index covariate = 0;
    double lower = 0.0;
    double upper = 1.0;
    Vector column_means;  // subtracted from raw basis values

    /// Centered basis rows at arbitrary points (clamped to the domain).
    Matrix evaluate(const SplineBasisSpec& spec, const Vector& x) const {
        Matrix B = basis_eval(spec, lower, upper, x);
        B.rowwise() -= column_means.transpose();
        return B;
    }
};

/// Concatenated, column-centered basis blocks for several covariates.
/// Block g occupies columns [g*basis_dim, (g+1)*basis_dim).
struct AdditiveDesign {
    SplineBasisSpec spec;
    Matrix B;
    std::vector<GroupBasis> groups;

    Index group_count() const { return static_cast<Index>(groups.size()); }
    auto block(Index g) const { return B.middleCols(g * spec.basis_dim, spec.basis_dim); }

    /// Columns for refitting the given blocks: the centered columns of a
    /// block sum to zero, so the last one is dropped from each block.
    /// Block g then occupies columns [k*(d-1), (k+1)*(d-1)) for its rank k in
    /// `blocks`.
    Matrix identifiable_columns(const std::vector<Index>& blocks) const {
        const Index w = spec.basis_dim - 1;
        Matrix Z(B.rows(), static_cast<Index>(blocks.size()) * w);
        for (std::size_t k = 0; k < blocks.size(); ++k)
            Z.middleCols(static_cast<Index>(k) * w, w) = B.middleCols(blocks[k] * spec.basis_dim, w);
        return Z;
    }
};

inline GroupBasis fit_group_basis(const Dataset& d, Index j, const SplineBasisSpec& spec, Matrix* centered) {
    const auto x = d.X().col(j);
    const double lo = x.minCoeff();
    const double hi = x.maxCoeff();
    if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(lo))))
        throw NumericalError("degenerate domain for covariate '" + d.names()[static_cast<std::size_t>(j)] +
                             "' (index " + std::to_string(j + 1) + ")");
    GroupBasis g{j, lo, hi, {}};
    Matrix B = basis_eval(spec, lo, hi, x);
    g.column_means = B.colwise().mean().transpose();
    B.rowwise() -= g.column_means.transpose();
    if (centered) *centered = std::move(B);
    return g;
}

/// Evaluates and centers each requested covariate's basis on [min x_j, max x_j]
/// and concatenates the blocks in ascending covariate order.
inline AdditiveDesign build_additive_design(const Dataset& d, const ModelSubset& groups,
                                            const SplineBasisSpec& spec) {
    spec.validate();
    if (groups.is_empty()) throw InputError("additive design needs at least one group");
    AdditiveDesign out;
    out.spec = spec;
    out.B.resize(d.n(), groups.size() * spec.basis_dim);
    Index g = 0;
    for (const auto j : groups.indices()) {
        Matrix block;
        out.groups.push_back(fit_group_basis(d, j, spec, &block));
        out.B.middleCols(g * spec.basis_dim, spec.basis_dim) = block;
        ++g;
    }
    return out;
}

}  // namespace mdlselect::splines
