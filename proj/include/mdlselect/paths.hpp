#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "error.hpp"
#include "splines.hpp"

namespace mdlselect::paths {

/// Candidate models induced by first-activation order: model k holds the
/// first k activated indices, so the family is nested by construction.
struct NestedPath {
    std::vector<Index> activation_order;
    Index max_models = 0;
    Index universe = 0;
    SubsetKind kind = SubsetKind::linear_predictor;

    Index length() const { return static_cast<Index>(activation_order.size()); }

    ModelSubset candidate(Index k) const {
        return ModelSubset({activation_order.begin(), activation_order.begin() + k}, universe, kind);
    }
};

// ---------------------------------------------------------------------------
// LARS with the lasso modification, driven entirely by a Gram matrix G and
// the initial inner products c0 = X'y. Plain and robust orderings differ
// only in how G and c0 are estimated.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr double kStepEps = 1e-12;

inline Index argmax_abs(const Vector& c) {
    Index best = 0;
    for (Index j = 1; j < c.size(); ++j)
        if (std::abs(c(j)) > std::abs(c(best))) best = j;
    return best;
}

}  // namespace detail

/// First-activation order of the lasso path, up to `max_active` distinct
/// variables. Variables dropped by the lasso modification keep their
/// original position in the order.
inline std::vector<Index> lars_activation_order(const Matrix& G, const Vector& c0, Index max_active) {
    const Index m = c0.size();
    if (m < 1) throw InputError("LARS needs at least one column");
    if (G.rows() != m || G.cols() != m) throw InputError("Gram matrix does not match inner products");
    max_active = std::min(max_active, m);

    std::vector<Index> order;
    std::vector<Index> active;
    std::vector<char> in_active(static_cast<std::size_t>(m), 0), seen(static_cast<std::size_t>(m), 0);
    Vector beta = Vector::Zero(m);

    const auto activate = [&](Index j) {
        active.push_back(j);
        in_active[static_cast<std::size_t>(j)] = 1;
        if (!seen[static_cast<std::size_t>(j)]) {
            seen[static_cast<std::size_t>(j)] = 1;
            order.push_back(j);
        }
    };

    const Index first = detail::argmax_abs(c0);
    if (c0(first) == 0.0) return order;
    activate(first);

    const Index max_steps = 8 * m + 64;
    for (Index step = 0; step < max_steps && static_cast<Index>(order.size()) < max_active; ++step) {
        const Vector c = c0 - G * beta;
        const Index k = static_cast<Index>(active.size());
        double C = 0.0;
        Vector s(k);
        for (Index a = 0; a < k; ++a) {
            const double ca = c(active[static_cast<std::size_t>(a)]);
            C = std::max(C, std::abs(ca));
            s(a) = ca >= 0.0 ? 1.0 : -1.0;
        }
        if (C <= detail::kStepEps * std::max(1.0, c0.cwiseAbs().maxCoeff())) break;

        Matrix GA(k, k);
        for (Index a = 0; a < k; ++a)
            for (Index b = 0; b < k; ++b)
                GA(a, b) = G(active[static_cast<std::size_t>(a)], active[static_cast<std::size_t>(b)]);
        Eigen::LDLT<Matrix> ldlt(GA);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
        const Vector w = ldlt.solve(s);
        const double sw = s.dot(w);
        if (!(sw > 0.0) || !w.allFinite()) break;
        const double AA = 1.0 / std::sqrt(sw);
        const Vector u = AA * w;  // equiangular direction in coefficient space

        Vector a = Vector::Zero(m);  // X' (X_A u)
        for (Index b = 0; b < k; ++b) a += G.col(active[static_cast<std::size_t>(b)]) * u(b);

        double gamma = C / AA;
        Index entering = -1;
        for (Index j = 0; j < m; ++j) {
            if (in_active[static_cast<std::size_t>(j)]) continue;
            for (const double g : {(C - c(j)) / (AA - a(j)), (C + c(j)) / (AA + a(j))}) {
                if (g > detail::kStepEps && g < gamma) {
                    gamma = g;
                    entering = j;
                }
            }
        }
        Index dropping = -1;
        for (Index b = 0; b < k; ++b) {
            const Index j = active[static_cast<std::size_t>(b)];
            if (u(b) == 0.0) continue;
            const double g = -beta(j) / u(b);
            if (g > detail::kStepEps && g < gamma) {
                gamma = g;
                dropping = b;
                entering = -1;
            }
        }

        for (Index b = 0; b < k; ++b) beta(active[static_cast<std::size_t>(b)]) += gamma * u(b);

        if (dropping >= 0) {
            const Index j = active[static_cast<std::size_t>(dropping)];
            beta(j) = 0.0;
            in_active[static_cast<std::size_t>(j)] = 0;
            active.erase(active.begin() + dropping);
        } else if (entering >= 0) {
            activate(entering);
        } else {
            break;  // reached the least-squares end of the path
        }
    }
    return order;
}

inline Index default_path_cap(Index n, Index m) { return std::min(m, n - 1); }

/// Lasso/LARS activation order on standardized columns.
inline NestedPath lasso_order(const Dataset& d, Index max_models = -1) {
    if (d.p() < 1) throw InputError("lasso_order needs at least one column");
    if (!d.standardized()) throw ContractError("lasso_order requires standardized columns");
    NestedPath path;
    path.universe = d.p();
    path.max_models = max_models < 0 ? default_path_cap(d.n(), d.p()) : std::min(max_models, d.p());
    const Matrix G = d.X().transpose() * d.X();
    const Vector c0 = d.X().transpose() * d.y();
    path.activation_order = lars_activation_order(G, c0, path.max_models);
    return path;
}

// ---------------------------------------------------------------------------
// Robust correlations: each variable is centered at its median, scaled by
// the normal-consistent MAD, clipped to [-c, c], and the Pearson
// correlation of the clipped data is used in place of the sample one.
// ---------------------------------------------------------------------------

inline constexpr double kWinsorConstant = 2.0;
inline constexpr double kMadConsistency = 1.482602218505602;

namespace detail {

inline double median_of(std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double med = *mid;
    if (v.size() % 2 == 0) med = 0.5 * (med + *std::max_element(v.begin(), mid));
    return med;
}

}  // namespace detail

/// Winsorized, unit-norm version of x; a zero vector when x has no spread.
inline Vector winsorize(const Eigen::Ref<const Vector>& x, double c = kWinsorConstant) {
    std::vector<double> v(x.data(), x.data() + x.size());
    const double med = detail::median_of(v);
    for (auto& e : v) e = std::abs(e - med);
    double scale = kMadConsistency * detail::median_of(v);
    if (!(scale > 0.0)) scale = (x.array() - med).abs().mean() * std::sqrt(M_PI / 2.0);
    if (!(scale > 0.0)) return Vector::Zero(x.size());
    Vector z = ((x.array() - med) / scale).cwiseMax(-c).cwiseMin(c);
    z.array() -= z.mean();
    const double norm = z.norm();
    return norm > 0.0 ? Vector(z / norm) : Vector(Vector::Zero(x.size()));
}

/// Robust correlation between two vectors.
inline double winsorized_correlation(const Vector& x, const Vector& y, double c = kWinsorConstant) {
    return winsorize(x, c).dot(winsorize(y, c));
}

/// LARS on the robust correlation matrix of (X, y).
inline NestedPath robust_order(const Dataset& d, Index max_models = -1) {
    if (d.p() < 1) throw InputError("robust_order needs at least one column");
    NestedPath path;
    path.universe = d.p();
    path.max_models = max_models < 0 ? default_path_cap(d.n(), d.p()) : std::min(max_models, d.p());
    Matrix W(d.n(), d.p());
    for (Index j = 0; j < d.p(); ++j) W.col(j) = winsorize(d.X().col(j));
    const Vector wy = winsorize(d.y());
    const Matrix R = W.transpose() * W;
    const Vector r = W.transpose() * wy;
    path.activation_order = lars_activation_order(R, r, path.max_models);
    return path;
}

// ---------------------------------------------------------------------------
// Group lasso: min 1/2 |y - B a|^2 + lambda * sum_j sqrt(d) |a_j|
// ---------------------------------------------------------------------------

struct GroupLassoOptions {
    int grid_size = 100;
    double lambda_min_ratio = 1e-3;
    double tolerance = 1e-9;
    int max_sweeps = 10000;
    int max_inner = 500;
    /// Called after every block update with the objective before and after.
    std::function<void(double, double)> on_block_update;
};

/// Block coordinate descent state for one design; reusable across lambdas
/// for warm starts.
class GroupLassoSolver {
public:
    GroupLassoSolver(const Matrix& B, Index block_width, const Vector& y)
        : B_(B), width_(block_width), y_(y) {
        if (B.cols() == 0 || B.rows() == 0) throw InputError("group lasso needs a nonempty design");
        if (block_width < 1 || B.cols() % block_width != 0)
            throw InputError("design columns are not a whole number of blocks");
        if (y.size() != B.rows()) throw InputError("response length does not match design rows");
        groups_ = B.cols() / block_width;
        weight_ = std::sqrt(static_cast<double>(block_width));
        gram_.reserve(static_cast<std::size_t>(groups_));
        lipschitz_.resize(groups_);
        for (Index g = 0; g < groups_; ++g) {
            const auto Bg = B_.middleCols(g * width_, width_);
            Matrix Ggg = Bg.transpose() * Bg;
            Eigen::SelfAdjointEigenSolver<Matrix> es(Ggg, Eigen::EigenvaluesOnly);
            lipschitz_(g) = std::max(es.eigenvalues().maxCoeff(), 1e-300);
            gram_.push_back(std::move(Ggg));
        }
        alpha_ = Vector::Zero(B.cols());
        residual_ = y_;
    }

    Index groups() const { return groups_; }
    double group_weight() const { return weight_; }
    const Vector& coefficients() const { return alpha_; }
    const Vector& residual() const { return residual_; }
    auto block(Index g) const { return alpha_.segment(g * width_, width_); }

    /// Smallest lambda at which every block is zero.
    double lambda_max() const {
        double best = 0.0;
        for (Index g = 0; g < groups_; ++g)
            best = std::max(best, (B_.middleCols(g * width_, width_).transpose() * y_).norm());
        return best / weight_;
    }

    double objective(double lambda) const {
        double pen = 0.0;
        for (Index g = 0; g < groups_; ++g) pen += block(g).norm();
        return 0.5 * residual_.squaredNorm() + lambda * weight_ * pen;
    }

    /// Solves at `lambda` starting from the current coefficients. Returns
    /// the number of sweeps; throws NumericalError on non-convergence.
    int solve(double lambda, const GroupLassoOptions& opt = {}) {
        double obj = objective(lambda);
        for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
            for (Index g = 0; g < groups_; ++g) update_block(g, lambda, opt);
            const double next = objective(lambda);
            if (std::abs(obj - next) <= opt.tolerance * std::max(std::abs(obj), 1e-300)) return sweep;
            obj = next;
        }
        std::ostringstream msg;
        msg << "group lasso did not converge at lambda = " << lambda;
        throw NumericalError(msg.str());
    }

private:
    void update_block(Index g, double lambda, const GroupLassoOptions& opt) {
        const auto Bg = B_.middleCols(g * width_, width_);
        auto ag = alpha_.segment(g * width_, width_);
        const double before = opt.on_block_update ? objective(lambda) : 0.0;
        const double thresh = lambda * weight_;
        // gradient of the smooth part at the current block value, kept in
        // sync through the block Gram matrix while the block moves
        Vector h = Bg.transpose() * residual_;
        if (ag.isZero(0.0) && h.norm() <= thresh) {
            if (opt.on_block_update) opt.on_block_update(before, before);
            return;
        }
        const Vector start = ag;
        const double L = lipschitz_(g);
        const Matrix& Ggg = gram_[static_cast<std::size_t>(g)];
        Vector cur = ag;
        for (int it = 0; it < opt.max_inner; ++it) {
            const Vector z = cur + h / L;
            const double zn = z.norm();
            const Vector next = zn > thresh / L ? Vector((1.0 - thresh / (L * zn)) * z) : Vector(Vector::Zero(width_));
            const Vector delta = next - cur;
            h -= Ggg * delta;
            cur = next;
            if (delta.norm() <= 1e-12 * std::max(1.0, cur.norm())) break;
        }
        const Vector moved = cur - start;
        ag = cur;
        residual_ -= Bg * moved;
        if (opt.on_block_update) opt.on_block_update(before, objective(lambda));
    }

    const Matrix& B_;
    Index width_;
    const Vector& y_;
    Index groups_ = 0;
    double weight_ = 1.0;
    std::vector<Matrix> gram_;
    Vector lipschitz_;
    Vector alpha_;
    Vector residual_;
};

/// Geometric grid from lambda_max down to ratio * lambda_max.
inline std::vector<double> lambda_grid(double lambda_max, int size, double ratio) {
    std::vector<double> grid(static_cast<std::size_t>(size));
    for (int k = 0; k < size; ++k)
        grid[static_cast<std::size_t>(k)] =
            lambda_max * (size == 1 ? 1.0 : std::pow(ratio, static_cast<double>(k) / (size - 1)));
    return grid;
}

/// Groups in order of first activation along the lambda grid. Groups that
/// activate at the same grid point are ordered by decreasing block norm.
inline NestedPath group_lasso_order(const splines::AdditiveDesign& design, const Vector& y_centered,
                                    Index max_groups = -1, const GroupLassoOptions& opt = {}) {
    if (design.B.cols() == 0) throw InputError("group lasso needs a nonempty design");
    const Index width = design.spec.basis_dim;
    GroupLassoSolver solver(design.B, width, y_centered);
    const Index G = solver.groups();

    NestedPath path;
    path.universe = G;
    path.kind = SubsetKind::additive_group;
    path.max_models = max_groups < 0 ? std::min<Index>(G, (design.B.rows() - 1) / width) : std::min(max_groups, G);

    std::vector<char> seen(static_cast<std::size_t>(G), 0);
    for (const double lambda : lambda_grid(solver.lambda_max(), opt.grid_size, opt.lambda_min_ratio)) {
        if (path.length() >= path.max_models) break;
        solver.solve(lambda, opt);
        std::vector<std::pair<double, Index>> fresh;
        for (Index g = 0; g < G; ++g) {
            const double norm = solver.block(g).norm();
            if (norm > 0.0 && !seen[static_cast<std::size_t>(g)]) fresh.emplace_back(-norm, g);
        }
        std::sort(fresh.begin(), fresh.end());
        for (const auto& [neg_norm, g] : fresh) {
            if (path.length() >= path.max_models) break;
            seen[static_cast<std::size_t>(g)] = 1;
            path.activation_order.push_back(g);
        }
    }
    return path;
}

}  // namespace mdlselect::paths
