#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "error.hpp"
#include "splines.hpp"

namespace mdlselect::screening {

struct ScreenResult {
    ModelSubset survivors;
    Vector scores;  // one per predictor / covariate, higher is more relevant
};

/// Indices of the m largest scores, ties to the smaller index, returned
/// in ascending index order.
inline std::vector<Index> top_m(const Vector& scores, Index m) {
    std::vector<Index> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), Index{0});
    const auto by_score = [&](Index a, Index b) {
        return scores(a) > scores(b) || (scores(a) == scores(b) && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + m, order.end(), by_score);
    order.resize(static_cast<std::size_t>(m));
    std::sort(order.begin(), order.end());
    return order;
}

/// Default linear screen size, n - 1, capped at p.
inline Index default_sis_size(Index n, Index p) { return std::min(n - 1, p); }

/// Sure independence screening: rank standardized columns by |x_j' y|.
inline ScreenResult sis(const Dataset& d, Index m) {
    if (!d.standardized()) throw ContractError("sis requires a standardized dataset");
    if (m < 1 || m > d.p())
        throw InputError("screen size " + std::to_string(m) + " outside [1, " + std::to_string(d.p()) + "]");
    ScreenResult out;
    out.scores = (d.X().transpose() * d.y()).cwiseAbs();
    out.survivors = ModelSubset(top_m(out.scores, m), d.p());
    return out;
}

/// Default additive screen size floor(n / d_n) - 1, capped at p and at
/// least 1.
inline Index default_nis_size(Index n, Index p, int basis_dim) {
    return std::clamp<Index>(n / basis_dim - 1, 1, p);
}

/// Reduction in residual sum of squares from regressing centered y on the
/// centered spline basis of covariate j. Constant covariates score 0.
inline double marginal_spline_score(const Dataset& d, Index j, const splines::SplineBasisSpec& spec,
                                    const Vector& y_centered) {
    Matrix B;
    try {
        splines::fit_group_basis(d, j, spec, &B);
    } catch (const NumericalError&) {
        return 0.0;
    }
    // the centered columns sum to zero; the first d_n - 1 span the block
    const auto Z = B.leftCols(spec.basis_dim - 1);
    Eigen::ColPivHouseholderQR<Matrix> qr(Z);
    const Vector fitted = Z * qr.solve(y_centered);
    return fitted.squaredNorm();
}

/// Nonparametric independence screening over covariate spline fits.
inline ScreenResult nis(const Dataset& d, const splines::SplineBasisSpec& spec, Index m) {
    spec.validate();
    if (m < 1 || m > d.p())
        throw InputError("screen size " + std::to_string(m) + " outside [1, " + std::to_string(d.p()) + "]");
    if (d.n() <= spec.basis_dim + 1)
        throw InputError("too few observations (" + std::to_string(d.n()) + ") for basis dimension " +
                         std::to_string(spec.basis_dim));
    const Vector yc = d.y().array() - d.y().mean();
    ScreenResult out;
    out.scores.resize(d.p());
    for (Index j = 0; j < d.p(); ++j) out.scores(j) = marginal_spline_score(d, j, spec, yc);
    out.survivors = ModelSubset(top_m(out.scores, m), d.p(), SubsetKind::additive_group);
    return out;
}

}  // namespace mdlselect::screening
