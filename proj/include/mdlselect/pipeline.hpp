#pragma once

#include <chrono>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "criteria.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "paths.hpp"
#include "refit.hpp"
#include "screening.hpp"
#include "splines.hpp"

/// The three-stage selection procedures (screen, order, refit-and-score)
/// and an exhaustive search used to validate them on small problems.
namespace mdlselect::pipeline {

using criteria::Criterion;
using criteria::MdlValue;

/// Stage-3 LAD settings: a short IRLS run whose iterate seeds the exact
/// vertex finisher, which certifies the optimum.
inline constexpr refit::IrlsOptions kStageThreeIrls{1e-8, 1e-8, 30, 5000};

struct CurvePoint {
    Index size = 0;
    MdlValue value;
    bool skipped = false;
};

struct StageTimings {
    double screen_ms = 0.0;
    double path_ms = 0.0;
    double refit_ms = 0.0;
};

/// One selected additive component: its centered basis and coefficients.
struct AdditiveComponent {
    splines::GroupBasis basis;
    Vector coefficients;    // basis_dim entries
    Vector fitted_values;   // f_j at the observed points, centered

    /// f_j at arbitrary points (clamped to the training range).
    Vector evaluate(const splines::SplineBasisSpec& spec, const Vector& x) const {
        return basis.evaluate(spec, x) * coefficients;
    }
};

struct FitReport {
    Criterion method = Criterion::linear;
    ModelSubset selected;
    /// Original-scale coefficients, one per selected predictor (linear) or
    /// the concatenated basis coefficients of the selected groups (additive).
    Vector coefficients;
    double intercept = 0.0;
    std::vector<CurvePoint> criterion_curve;
    /// Original (0-based) indices in activation order.
    std::vector<Index> path;
    Index screen_size = 0;
    Index path_length = 0;
    StageTimings timings;
    std::vector<std::string> warnings;
    /// Fitted mean at the observed rows on the original scale.
    Vector fitted;

    std::optional<splines::SplineBasisSpec> spec;
    std::vector<AdditiveComponent> components;
    std::int64_t candidates_evaluated = 0;

    const CurvePoint& selected_point() const {
        for (const auto& pt : criterion_curve)
            if (!pt.skipped && pt.size == selected.size()) return pt;
        throw ContractError("selected model missing from criterion curve");
    }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Maps a fitted coefficient vector keyed by column onto a new subset,
/// zero-filling new members; intercept first.
inline Vector warm_start(const std::map<Index, double>& prev, double intercept, const ModelSubset& S) {
    Vector theta(S.size() + 1);
    theta(0) = intercept;
    for (Index k = 0; k < S.size(); ++k) {
        const auto it = prev.find(S.indices()[static_cast<std::size_t>(k)]);
        theta(k + 1) = it == prev.end() ? 0.0 : it->second;
    }
    return theta;
}

struct Prepared {
    Dataset standardized;
    double y_mean;
    Vector y_centered;
};

inline Prepared prepare_linear(const Dataset& d) {
    Dataset ds = standardize(d);
    const double ybar = d.y().mean();
    Vector yc = d.y().array() - ybar;
    return {ds.with_response(yc), ybar, std::move(yc)};
}

inline void finish_linear(FitReport& rep, const Dataset& original, const Dataset& standardized,
                          const refit::RefitResult& fit, double y_mean) {
    const auto orig = unstandardize_coefficients(standardized, fit.subset, fit.coefficients);
    rep.selected = fit.subset;
    rep.coefficients = orig.beta;
    rep.intercept = (fit.has_intercept ? fit.intercept : y_mean) + orig.intercept_shift;
    rep.fitted = Vector::Constant(original.n(), rep.intercept);
    for (Index k = 0; k < fit.subset.size(); ++k)
        rep.fitted += original.X().col(fit.subset.indices()[static_cast<std::size_t>(k)]) * orig.beta(k);
}

/// Stage 3 for linear criteria along a nested path of original indices.
inline void score_linear_path(FitReport& rep, const Dataset& original, const Prepared& prep, bool robust) {
    const auto t0 = Clock::now();
    const Index n = original.n();
    const Index p = original.p();
    std::optional<refit::RefitResult> best_fit;
    double best_total = std::numeric_limits<double>::infinity();
    std::map<Index, double> prev_coef;
    double prev_intercept = 0.0;
    for (Index k = 0; k <= rep.path_length; ++k) {
        const ModelSubset S({rep.path.begin(), rep.path.begin() + k}, p);
        CurvePoint pt;
        pt.size = k;
        try {
            refit::RefitResult fit;
            if (robust) {
                const Vector start = warm_start(prev_coef, prev_intercept, S);
                fit = refit::lad(prep.standardized.X(), original.y(), S, true, kStageThreeIrls, &start);
                if (!fit.converged)
                    rep.warnings.push_back("LAD refit of size " + std::to_string(k) +
                                           " stopped before convergence");
                prev_coef.clear();
                for (Index c = 0; c < S.size(); ++c)
                    prev_coef[S.indices()[static_cast<std::size_t>(c)]] = fit.coefficients(c);
                prev_intercept = fit.intercept;
                pt.value = criteria::mdl_robust(fit.sae, k, n, p);
            } else {
                fit = refit::ols(prep.standardized.X(), prep.y_centered, S, false);
                pt.value = criteria::mdl_linear(fit.rss, k, n, p);
            }
            ++rep.candidates_evaluated;
            if (pt.value.total < best_total) {
                best_total = pt.value.total;
                best_fit = std::move(fit);
            }
        } catch (const refit::SingularDesignError& e) {
            pt.skipped = true;
            rep.warnings.push_back("candidate of size " + std::to_string(k) + " skipped: " + e.what());
        }
        rep.criterion_curve.push_back(pt);
    }
    if (!best_fit) throw NumericalError("every candidate model was rank deficient");
    finish_linear(rep, original, prep.standardized, *best_fit, prep.y_mean);
    rep.timings.refit_ms = ms_since(t0);
}

inline FitReport run_linear(const Dataset& d, std::optional<Index> m, bool robust) {
    if (d.n() < 3) throw InputError("need at least 3 observations");
    FitReport rep;
    rep.method = robust ? Criterion::robust : Criterion::linear;
    const Prepared prep = prepare_linear(d);

    auto t0 = Clock::now();
    rep.screen_size = m.value_or(screening::default_sis_size(d.n(), d.p()));
    const auto screen = screening::sis(prep.standardized, rep.screen_size);
    rep.timings.screen_ms = ms_since(t0);

    t0 = Clock::now();
    const Dataset restricted = prep.standardized.select_columns(screen.survivors.indices());
    // centering uses one degree of freedom, so n - 2 predictors is the
    // largest model that still leaves a residual
    const Index cap = std::min(rep.screen_size, d.n() - 2);
    const auto path = robust ? paths::robust_order(restricted, cap) : paths::lasso_order(restricted, cap);
    for (const auto j : path.activation_order)
        rep.path.push_back(screen.survivors.indices()[static_cast<std::size_t>(j)]);
    rep.path_length = static_cast<Index>(rep.path.size());
    rep.timings.path_ms = ms_since(t0);

    score_linear_path(rep, d, prep, robust);
    return rep;
}

}  // namespace detail

/// Gaussian pipeline: SIS, lasso activation order, OLS refits scored by
/// the linear MDL criterion. `m` defaults to n - 1 (capped at p).
inline FitReport fit_linear(const Dataset& d, std::optional<Index> m = std::nullopt) {
    return detail::run_linear(d, m, false);
}

/// Laplace pipeline: SIS, robust LARS order, LAD refits (with intercept)
/// scored by the robust MDL criterion.
inline FitReport fit_robust(const Dataset& d, std::optional<Index> m = std::nullopt) {
    return detail::run_linear(d, m, true);
}

namespace detail {

/// Refits the additive model on the given design blocks; returns the refit
/// and the full-width coefficient blocks.
inline refit::RefitResult refit_additive(const splines::AdditiveDesign& design, const std::vector<Index>& blocks,
                                         const Vector& y, const Vector& y_centered, bool robust) {
    const Matrix Z = design.identifiable_columns(blocks);
    std::vector<Index> all(static_cast<std::size_t>(Z.cols()));
    for (Index c = 0; c < Z.cols(); ++c) all[static_cast<std::size_t>(c)] = c;
    const ModelSubset cols(all, Z.cols());
    return robust ? refit::lad(Z, y, cols, true, kStageThreeIrls) : refit::ols(Z, y_centered, cols, false);
}

/// Fills the selected groups, coefficients and fitted values of an additive
/// report from the winning refit over `blocks` of `design`.
inline void finish_additive(FitReport& rep, const splines::AdditiveDesign& design, const std::vector<Index>& blocks,
                            const refit::RefitResult& fit, double y_mean, Index p) {
    const Index width = design.spec.basis_dim;
    const Index n = design.B.rows();
    std::vector<Index> covariates;
    for (const auto g : blocks) covariates.push_back(design.groups[static_cast<std::size_t>(g)].covariate);
    rep.selected = ModelSubset(covariates, p, SubsetKind::additive_group);
    rep.intercept = fit.has_intercept ? fit.intercept : y_mean;
    rep.coefficients = Vector::Zero(static_cast<Index>(blocks.size()) * width);
    rep.fitted = Vector::Constant(n, rep.intercept);
    rep.components.clear();
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        AdditiveComponent comp;
        comp.basis = design.groups[static_cast<std::size_t>(blocks[k])];
        comp.coefficients = Vector::Zero(width);
        comp.coefficients.head(width - 1) = fit.coefficients.segment(static_cast<Index>(k) * (width - 1), width - 1);
        comp.fitted_values = design.block(blocks[k]) * comp.coefficients;
        rep.fitted += comp.fitted_values;
        rep.coefficients.segment(static_cast<Index>(k) * width, width) = comp.coefficients;
        rep.components.push_back(std::move(comp));
    }
}

}  // namespace detail

/// Additive pipeline: NIS screening, group-lasso order over centered spline
/// blocks, OLS (or LAD when `robust`) refits scored by the additive MDL
/// criterion.
inline FitReport fit_additive(const Dataset& d, const splines::SplineBasisSpec& spec = {},
                              std::optional<Index> m = std::nullopt, bool robust = false) {
    spec.validate();
    if (d.n() < 3) throw InputError("need at least 3 observations");
    FitReport rep;
    rep.method = robust ? Criterion::additive_robust : Criterion::additive;
    rep.spec = spec;
    const Index n = d.n();
    const Index p = d.p();
    const Index width = spec.basis_dim;
    const double ybar = d.y().mean();
    const Vector yc = d.y().array() - ybar;

    auto t0 = detail::Clock::now();
    rep.screen_size = m.value_or(screening::default_nis_size(n, p, width));
    const auto screen = screening::nis(d, spec, rep.screen_size);
    rep.timings.screen_ms = detail::ms_since(t0);

    t0 = detail::Clock::now();
    const auto design = splines::build_additive_design(d, screen.survivors, spec);
    const auto path = paths::group_lasso_order(design, yc);
    rep.path_length = path.length();
    for (const auto g : path.activation_order) rep.path.push_back(design.groups[static_cast<std::size_t>(g)].covariate);
    rep.timings.path_ms = detail::ms_since(t0);

    t0 = detail::Clock::now();
    std::optional<refit::RefitResult> best_fit;
    std::vector<Index> best_blocks;
    double best_total = std::numeric_limits<double>::infinity();
    for (Index q = 0; q <= rep.path_length; ++q) {
        CurvePoint pt;
        pt.size = q;
        if (q * width >= n) {
            pt.skipped = true;
            rep.warnings.push_back("candidate with " + std::to_string(q) + " groups skipped: q*d_n >= n");
            rep.criterion_curve.push_back(pt);
            continue;
        }
        std::vector<Index> blocks(path.activation_order.begin(), path.activation_order.begin() + q);
        std::sort(blocks.begin(), blocks.end());
        try {
            auto fit = detail::refit_additive(design, blocks, d.y(), yc, robust);
            if (!fit.converged)
                rep.warnings.push_back("LAD refit with " + std::to_string(q) + " groups stopped before convergence");
            pt.value = robust ? criteria::mdl_additive_robust(fit.sae, q, width, n, p)
                              : criteria::mdl_additive(fit.rss, q, width, n, p);
            ++rep.candidates_evaluated;
            if (pt.value.total < best_total) {
                best_total = pt.value.total;
                best_fit = std::move(fit);
                best_blocks = blocks;
            }
        } catch (const refit::SingularDesignError& e) {
            pt.skipped = true;
            rep.warnings.push_back("candidate with " + std::to_string(q) + " groups skipped: " + e.what());
        }
        rep.criterion_curve.push_back(pt);
    }
    if (!best_fit) throw NumericalError("every candidate model was rank deficient");

    detail::finish_additive(rep, design, best_blocks, *best_fit, ybar, p);
    rep.timings.refit_ms = detail::ms_since(t0);
    return rep;
}

// ---------------------------------------------------------------------------
// Exhaustive search
// ---------------------------------------------------------------------------

inline constexpr std::int64_t kExhaustiveBudget = 1'000'000;

/// sum_{k <= max_size} C(p, k), saturating just above the budget.
inline std::int64_t subset_count(Index p, Index max_size) {
    std::int64_t total = 0;
    std::int64_t binom = 1;
    for (Index k = 0; k <= std::min(max_size, p); ++k) {
        if (k > 0) {
            // C(p,k) = C(p,k-1) * (p-k+1) / k, exact in integers
            const auto num = static_cast<std::int64_t>(p - k + 1);
            if (binom > (std::numeric_limits<std::int64_t>::max() / 4) / std::max<std::int64_t>(num, 1))
                return std::numeric_limits<std::int64_t>::max();
            binom = binom * num / k;
        }
        total += binom;
        if (total > kExhaustiveBudget * 1000) return total;
    }
    return total;
}

/// Scores every subset with at most `max_size` members (predictors, or
/// covariate groups for additive criteria) by its maximum-likelihood refit
/// and returns the global minimizer. Ties go to the smaller model, then to
/// the lexicographically first subset.
inline FitReport exhaustive_oracle(const Dataset& d, Index max_size, Criterion criterion,
                                   const splines::SplineBasisSpec& spec = {}) {
    if (max_size < 0) throw InputError("max size must be nonnegative");
    max_size = std::min(max_size, d.p());
    const auto count = subset_count(d.p(), max_size);
    if (count > kExhaustiveBudget)
        throw InputError("exhaustive search over " + std::to_string(count) + " subsets exceeds the budget of " +
                         std::to_string(kExhaustiveBudget));

    const auto t0 = detail::Clock::now();
    const bool robust = criteria::is_robust(criterion);
    const bool additive = criteria::is_additive(criterion);
    const Index n = d.n();
    const Index p = d.p();

    FitReport rep;
    rep.method = criterion;
    rep.screen_size = p;
    rep.path_length = max_size;
    const double ybar = d.y().mean();
    const Vector yc = d.y().array() - ybar;

    std::optional<detail::Prepared> prep;
    std::optional<splines::AdditiveDesign> design;
    if (additive) {
        std::vector<Index> all(static_cast<std::size_t>(p));
        for (Index j = 0; j < p; ++j) all[static_cast<std::size_t>(j)] = j;
        design = splines::build_additive_design(d, ModelSubset(all, p), spec);
        rep.spec = spec;
    } else {
        prep = detail::prepare_linear(d);
    }

    std::optional<refit::RefitResult> best_fit;
    std::vector<Index> best_subset;
    double best_total = std::numeric_limits<double>::infinity();
    rep.criterion_curve.resize(static_cast<std::size_t>(max_size + 1));

    for (Index k = 0; k <= max_size; ++k) {
        CurvePoint& size_best = rep.criterion_curve[static_cast<std::size_t>(k)];
        size_best.size = k;
        size_best.skipped = true;
        size_best.value.total = std::numeric_limits<double>::infinity();
        std::vector<Index> idx(static_cast<std::size_t>(k));
        for (Index i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
        while (true) {
            MdlValue value;
            std::optional<refit::RefitResult> fit;
            try {
                if (additive) {
                    if (k * spec.basis_dim < n) {
                        fit = detail::refit_additive(*design, idx, d.y(), yc, robust);
                        value = criteria::evaluate(criterion, robust ? fit->sae : fit->rss, k, spec.basis_dim, n, p);
                    }
                } else {
                    const ModelSubset S(idx, p);
                    fit = robust ? refit::lad(prep->standardized.X(), d.y(), S, true, kStageThreeIrls)
                                 : refit::ols(prep->standardized.X(), prep->y_centered, S, false);
                    value = criteria::evaluate(criterion, robust ? fit->sae : fit->rss, k, 0, n, p);
                }
            } catch (const refit::SingularDesignError&) {
                fit.reset();
            }
            if (fit) {
                ++rep.candidates_evaluated;
                if (value.total < size_best.value.total) {
                    size_best.value = value;
                    size_best.skipped = false;
                }
                if (value.total < best_total) {
                    best_total = value.total;
                    best_fit = std::move(fit);
                    best_subset = idx;
                }
            }
            // next combination in lexicographic order
            Index i = k - 1;
            while (i >= 0 && idx[static_cast<std::size_t>(i)] == p - k + i) --i;
            if (i < 0) break;
            ++idx[static_cast<std::size_t>(i)];
            for (Index r = i + 1; r < k; ++r) idx[static_cast<std::size_t>(r)] = idx[static_cast<std::size_t>(r - 1)] + 1;
        }
    }
    if (!best_fit) throw NumericalError("every candidate model was rank deficient");

    rep.path = best_subset;
    if (additive) {
        detail::finish_additive(rep, *design, best_subset, *best_fit, ybar, p);
    } else {
        detail::finish_linear(rep, d, prep->standardized, *best_fit, prep->y_mean);
    }
    rep.timings.refit_ms = detail::ms_since(t0);
    return rep;
}

}  // namespace mdlselect::pipeline
