#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "error.hpp"

namespace mdlselect::refit {

/// Relative threshold on the pivoted-QR diagonal below which a design is
/// declared rank deficient.
inline constexpr double kRankTolerance = 1e-10;

struct RefitResult {
    ModelSubset subset;
    Vector coefficients;  // one per subset member, in subset order
    double intercept = 0.0;
    bool has_intercept = false;
    Vector residuals;
    double rss = 0.0;
    double sae = 0.0;
    double sigma2_hat = 0.0;  // rss / n
    double b_hat = 0.0;       // sae / n
    bool converged = true;
    int iterations = 0;
};

/// Thrown for rank-deficient designs; carries the offending design columns
/// (0-based positions within the subset; -1 denotes the intercept).
class SingularDesignError : public NumericalError {
public:
    SingularDesignError(const std::string& what, std::vector<Index> columns)
        : NumericalError(what), columns_(std::move(columns)) {}
    const std::vector<Index>& columns() const noexcept { return columns_; }

private:
    std::vector<Index> columns_;
};

struct IrlsOptions {
    double smoothing = 1e-8;
    double tolerance = 1e-8;
    int max_iterations = 200;
    /// Basis exchanges allowed in the exact vertex finisher.
    int max_pivots = 5000;
};

namespace detail {

inline Matrix design_matrix(const Matrix& X, const ModelSubset& S, bool intercept) {
    const Index offset = intercept ? 1 : 0;
    Matrix Z(X.rows(), S.size() + offset);
    if (intercept) Z.col(0).setOnes();
    for (Index k = 0; k < S.size(); ++k) Z.col(k + offset) = X.col(S.indices()[static_cast<std::size_t>(k)]);
    return Z;
}

/// Least-squares solve with a loud rank check.
inline Vector least_squares(const Matrix& Z, const Vector& y, bool intercept_first) {
    if (Z.cols() == 0) return Vector(0);
    if (Z.cols() > Z.rows())
        throw SingularDesignError("design has more columns (" + std::to_string(Z.cols()) +
                                      ") than rows (" + std::to_string(Z.rows()) + ")",
                                  {});
    Eigen::ColPivHouseholderQR<Matrix> qr(Z);
    const auto R = qr.matrixR();
    const double largest = std::abs(R(0, 0));
    Index rank = 0;
    while (rank < Z.cols() && std::abs(R(rank, rank)) > kRankTolerance * largest) ++rank;
    if (largest == 0.0 || rank < Z.cols()) {
        std::vector<Index> bad;
        const auto& perm = qr.colsPermutation().indices();
        for (Index k = rank; k < Z.cols(); ++k) bad.push_back(perm(k) - (intercept_first ? 1 : 0));
        std::sort(bad.begin(), bad.end());
        std::string list;
        for (auto b : bad) list += (list.empty() ? "" : ",") + std::to_string(b);
        throw SingularDesignError("singular design: dependent columns {" + list + "}", bad);
    }
    return qr.solve(y);
}

inline void finish(RefitResult& out, const Vector& y) {
    const double n = static_cast<double>(y.size());
    out.rss = out.residuals.squaredNorm();
    out.sae = out.residuals.lpNorm<1>();
    out.sigma2_hat = out.rss / n;
    out.b_hat = out.sae / n;
}

inline void unpack(RefitResult& out, const Vector& theta, bool intercept) {
    if (intercept) {
        out.intercept = theta(0);
        out.coefficients = theta.tail(theta.size() - 1);
    } else {
        out.coefficients = theta;
    }
}

inline double sum_abs(const Vector& r) { return r.lpNorm<1>(); }

}  // namespace detail

/// Ordinary least squares of y on the columns S of X (the Gaussian
/// maximum-likelihood refit). With `intercept`, an unpenalized constant
/// column is prepended.
inline RefitResult ols(const Matrix& X, const Vector& y, const ModelSubset& S, bool intercept = false) {
    RefitResult out;
    out.subset = S;
    out.has_intercept = intercept;
    const Matrix Z = detail::design_matrix(X, S, intercept);
    const Vector theta = detail::least_squares(Z, y, intercept);
    detail::unpack(out, theta, intercept);
    out.residuals = Z.cols() ? Vector(y - Z * theta) : y;
    detail::finish(out, y);
    return out;
}

inline RefitResult ols(const Dataset& d, const ModelSubset& S, bool intercept = false) {
    return ols(d.X(), d.y(), S, intercept);
}

namespace detail {

/// Rows with the k smallest absolute residuals (ties to the lower row).
inline std::vector<Index> smallest_residual_rows(const Vector& r, Index k) {
    std::vector<Index> order(static_cast<std::size_t>(r.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
        return std::abs(r(a)) < std::abs(r(b)) || (std::abs(r(a)) == std::abs(r(b)) && a < b);
    });
    order.resize(static_cast<std::size_t>(k));
    return order;
}

/// Exact LAD finisher. Starting from the vertex through the k rows with
/// the smallest residuals of `theta`, repeatedly exchanges one basis row:
/// with g = sum_{i not in B} sign(r_i) z_i, the vertex is optimal iff
/// Z_B' u = -g has |u|_inf <= 1. Otherwise the row l with the largest
/// |u_l| leaves, theta moves along Z_B^{-1} (-sign(u_l) e_l) to the exact
/// line minimum (a weighted median of breakpoints), and the row at that
/// breakpoint enters. Every exchange strictly lowers the SAE.
struct VertexResult {
    bool valid = false;
    bool optimal = false;
    Vector theta;
    double sae = 0.0;
    int pivots = 0;
};

inline VertexResult vertex_descent(const Matrix& Z, const Vector& y, const Vector& theta, int max_pivots) {
    VertexResult out;
    const Index k = Z.cols();
    const Index n = Z.rows();
    auto basis = smallest_residual_rows(y - Z * theta, k);
    Matrix ZB(k, k);
    Vector yB(k);
    for (Index i = 0; i < k; ++i) {
        ZB.row(i) = Z.row(basis[static_cast<std::size_t>(i)]);
        yB(i) = y(basis[static_cast<std::size_t>(i)]);
    }
    Eigen::PartialPivLU<Matrix> lu(ZB);
    if (!(std::abs(lu.determinant()) > 0.0)) return out;
    Vector th = lu.solve(yB);
    if (!th.allFinite()) return out;
    Vector r = y - Z * th;
    double sae = r.lpNorm<1>();
    out.valid = std::isfinite(sae);
    if (!out.valid) return out;

    std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
    std::vector<std::pair<double, Index>> breaks;
    for (int pivot = 0;; ++pivot) {
        std::fill(in_basis.begin(), in_basis.end(), 0);
        for (const auto i : basis) in_basis[static_cast<std::size_t>(i)] = 1;
        Vector g = Vector::Zero(k);
        for (Index i = 0; i < n; ++i)
            if (!in_basis[static_cast<std::size_t>(i)] && r(i) != 0.0) g += (r(i) > 0.0 ? 1.0 : -1.0) * Z.row(i).transpose();
        const Vector u = lu.transpose().solve(Vector(-g));
        if (!u.allFinite()) break;
        Index leave = 0;
        const double worst = u.cwiseAbs().maxCoeff(&leave);
        if (worst <= 1.0 + 1e-9) {
            out.optimal = true;
            break;
        }
        if (pivot >= max_pivots) break;

        Vector e = Vector::Zero(k);
        e(leave) = u(leave) > 0.0 ? -1.0 : 1.0;
        const Vector dir = lu.solve(e);
        const Vector a = Z * dir;
        // minimize sum_i |r_i - t a_i| over t: weighted median of r_i / a_i
        breaks.clear();
        double total = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (a(i) == 0.0) continue;
            breaks.emplace_back(r(i) / a(i), i);
            total += std::abs(a(i));
        }
        std::sort(breaks.begin(), breaks.end());
        double acc = 0.0;
        std::size_t pick = 0;
        for (; pick < breaks.size(); ++pick) {
            acc += std::abs(a(breaks[pick].second));
            if (acc >= 0.5 * total) break;
        }
        if (pick >= breaks.size()) break;
        const auto [step, enter] = breaks[pick];
        if (!(step > 0.0) || in_basis[static_cast<std::size_t>(enter)]) break;

        const Vector th_next = th + step * dir;
        const Vector r_next = y - Z * th_next;
        const double sae_next = r_next.lpNorm<1>();
        if (!(sae_next < sae)) break;

        basis[static_cast<std::size_t>(leave)] = enter;
        ZB.row(leave) = Z.row(enter);
        lu.compute(ZB);
        if (!(std::abs(lu.determinant()) > 0.0)) break;
        th = th_next;
        r = r_next;
        sae = sae_next;
        ++out.pivots;
    }
    out.theta = th;
    out.sae = sae;
    return out;
}

}  // namespace detail

/// Least absolute deviations fit (the Laplace maximum-likelihood refit) by
/// iteratively reweighted least squares with weights 1/max(|r_i|, eps).
///
/// The smoothing starts coarse and is tightened tenfold each time the SAE
/// settles, down to `opt.smoothing`. Every few iterations the iterate is
/// snapped to the vertex through its k smallest residuals; when that vertex
/// passes the LP optimality check the fit is exact and iteration stops.
/// `start` optionally warm-starts with a full parameter vector (intercept
/// first when `intercept` is set). Non-convergence is reported through
/// `converged`, returning the best iterate seen.
inline RefitResult lad(const Matrix& X, const Vector& y, const ModelSubset& S, bool intercept = false,
                       const IrlsOptions& opt = {}, const Vector* start = nullptr) {
    RefitResult out;
    out.subset = S;
    out.has_intercept = intercept;
    const Matrix Z = detail::design_matrix(X, S, intercept);
    if (Z.cols() == 0) {
        out.residuals = y;
        detail::finish(out, y);
        return out;
    }

    // rank check and starting point in one go
    Vector theta = detail::least_squares(Z, y, intercept);
    if (start && start->size() == Z.cols()) {
        const Vector& s = *start;
        if (detail::sum_abs(y - Z * s) < detail::sum_abs(y - Z * theta)) theta = s;
    }
    Vector best = theta;
    double best_sae = detail::sum_abs(y - Z * theta);
    double prev_sae = best_sae;
    double eps = std::max(opt.smoothing, 1e-3 * best_sae / static_cast<double>(y.size()));

    const auto try_vertex = [&](const Vector& from, int max_pivots) {
        auto v = detail::vertex_descent(Z, y, from, max_pivots);
        if (v.valid && v.sae <= best_sae) {
            best_sae = v.sae;
            best = v.theta;
            return v.optimal;
        }
        return false;
    };

    Matrix ZtWZ(Z.cols(), Z.cols());
    Matrix Zw(Z.rows(), Z.cols());
    Vector sw(y.size());
    out.converged = false;
    int it = 0;
    while (it < opt.max_iterations) {
        const Vector r = y - Z * theta;
        for (Index i = 0; i < y.size(); ++i) sw(i) = 1.0 / std::sqrt(std::max(std::abs(r(i)), eps));
        Zw = sw.asDiagonal() * Z;
        ZtWZ.setZero();
        ZtWZ.selfadjointView<Eigen::Lower>().rankUpdate(Zw.transpose());
        const Vector rhs = Zw.transpose() * sw.cwiseProduct(y);
        Eigen::LDLT<Matrix> ldlt(ZtWZ.selfadjointView<Eigen::Lower>());
        if (ldlt.info() != Eigen::Success) break;
        const Vector next = ldlt.solve(rhs);
        if (!next.allFinite()) break;
        theta = next;
        ++it;
        const double sae = detail::sum_abs(y - Z * theta);
        if (sae < best_sae) {
            best_sae = sae;
            best = theta;
        }
        if (it % 5 == 0 && try_vertex(theta, 0)) {
            out.converged = true;
            break;
        }
        if (std::abs(prev_sae - sae) <= opt.tolerance * std::max(prev_sae, std::numeric_limits<double>::min())) {
            if (eps <= opt.smoothing) {
                out.converged = true;
                break;
            }
            eps = std::max(opt.smoothing, 0.1 * eps);
        }
        prev_sae = sae;
    }
    if (try_vertex(best, opt.max_pivots)) out.converged = true;

    out.iterations = it;
    detail::unpack(out, best, intercept);
    out.residuals = y - Z * best;
    detail::finish(out, y);
    return out;
}

inline RefitResult lad(const Dataset& d, const ModelSubset& S, bool intercept = false,
                       const IrlsOptions& opt = {}) {
    return lad(d.X(), d.y(), S, intercept, opt);
}

}  // namespace mdlselect::refit
