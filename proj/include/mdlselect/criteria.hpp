#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "error.hpp"

/// Two-part code lengths (in nats) for the four selection criteria.
///
/// Every criterion has the same shape:
///
///     total = fidelity + param_code + index_code
///
/// where `fidelity` is the (model-dependent part of the) negative log
/// likelihood of the residuals, `param_code` is (k/2) log n for the k
/// real-valued estimates and `index_code` is the cost of naming which of
/// the p candidates are in the model. For additive models k = q * d_n
/// while only q group indices need to be named.
namespace mdlselect::criteria {

struct MdlValue {
    double total = 0.0;
    double fidelity_term = 0.0;
    double param_code_term = 0.0;
    double index_code_term = 0.0;
};

enum class Criterion { linear, robust, additive, additive_robust };

inline std::string_view to_string(Criterion c) {
    switch (c) {
        case Criterion::linear: return "mdl-linear";
        case Criterion::robust: return "mdl-robust";
        case Criterion::additive: return "mdl-additive";
        case Criterion::additive_robust: return "mdl-additive-robust";
    }
    return "unknown";
}

inline bool is_robust(Criterion c) {
    return c == Criterion::robust || c == Criterion::additive_robust;
}

inline bool is_additive(Criterion c) {
    return c == Criterion::additive || c == Criterion::additive_robust;
}

/// Residual statistics below this multiple of n are clamped so that exact
/// fits give a finite code length.
inline constexpr double kFidelityFloor = 1e-12;

struct ParameterCode {
    double param_code = 0.0;
    double index_code = 0.0;
};

/// (k/2) log n for the estimates, plus `named` log p for the indices.
inline ParameterCode code_length_parameters(long size, long n, long p) {
    if (size < 0) throw InputError("model size must be nonnegative");
    if (n < 1 || p < 1) throw InputError("n and p must be positive");
    return {0.5 * static_cast<double>(size) * std::log(static_cast<double>(n)),
            static_cast<double>(size) * std::log(static_cast<double>(p))};
}

namespace detail {

inline MdlValue assemble(double fidelity, long estimates, long named, long n, long p) {
    if (estimates < 0 || named < 0) throw InputError("model size must be nonnegative");
    if (n < 1 || p < 1) throw InputError("n and p must be positive");
    const double param = 0.5 * static_cast<double>(estimates) * std::log(static_cast<double>(n));
    const double index = static_cast<double>(named) * std::log(static_cast<double>(p));
    return {fidelity + param + index, fidelity, param, index};
}

inline double floored_mean(double stat, long n, const char* what) {
    if (!(stat >= 0.0)) throw InputError(std::string(what) + " must be nonnegative");
    const double dn = static_cast<double>(n);
    return std::max(stat, kFidelityFloor * dn) / dn;
}

}  // namespace detail

/// Gaussian errors: (n/2) log(RSS/n) + (|S|/2) log n + |S| log p.
inline MdlValue mdl_linear(double rss, long size, long n, long p) {
    const double fid = 0.5 * static_cast<double>(n) * std::log(detail::floored_mean(rss, n, "RSS"));
    return detail::assemble(fid, size, size, n, p);
}

/// Laplace errors: n log(SAE/n) + (|S|/2) log n + |S| log p.
inline MdlValue mdl_robust(double sae, long size, long n, long p) {
    const double fid = static_cast<double>(n) * std::log(detail::floored_mean(sae, n, "SAE"));
    return detail::assemble(fid, size, size, n, p);
}

/// Additive model with q selected functions of d_n basis coefficients each.
inline MdlValue mdl_additive(double rss, long q, long basis_dim, long n, long p) {
    const double fid = 0.5 * static_cast<double>(n) * std::log(detail::floored_mean(rss, n, "RSS"));
    return detail::assemble(fid, q * basis_dim, q, n, p);
}

inline MdlValue mdl_additive_robust(double sae, long q, long basis_dim, long n, long p) {
    const double fid = static_cast<double>(n) * std::log(detail::floored_mean(sae, n, "SAE"));
    return detail::assemble(fid, q * basis_dim, q, n, p);
}

/// Dispatch on criterion; `stat` is RSS for Gaussian criteria and SAE for
/// robust ones, `basis_dim` is ignored for linear criteria.
inline MdlValue evaluate(Criterion c, double stat, long size, long basis_dim, long n, long p) {
    switch (c) {
        case Criterion::linear: return mdl_linear(stat, size, n, p);
        case Criterion::robust: return mdl_robust(stat, size, n, p);
        case Criterion::additive: return mdl_additive(stat, size, basis_dim, n, p);
        case Criterion::additive_robust: return mdl_additive_robust(stat, size, basis_dim, n, p);
    }
    throw InputError("unknown criterion");
}

}  // namespace mdlselect::criteria
