#pragma once

// State transition matrices Φ(t,k) = F_{t-1}···F_k of the free closed loop
// x_{t+1} = F_t x_t, the summability constants built from their norms, and
// stability classification for LTI and LTV loops.

#include "core.hpp"

#include <optional>
#include <string>

namespace regstab {

// ============================================================================
// Φ(t, k)
// ============================================================================

/// Row t of the transition table: blocks[k] = Φ(t, k) for 0 <= k <= t.
struct PhiRow {
    std::size_t         t = 0;
    std::vector<Matrix> blocks;

    static PhiRow initial(Eigen::Index n) { return PhiRow{0, {Matrix::Identity(n, n)}}; }

    /// Row t+1 from row t: Φ(t+1, k) = F_t Φ(t, k), plus Φ(t+1, t+1) = I.
    [[nodiscard]] PhiRow advance(const Matrix& F_t) const {
        PhiRow next;
        next.t = t + 1;
        next.blocks.reserve(blocks.size() + 1);
        for (const auto& b : blocks)
            next.blocks.push_back(F_t * b);
        next.blocks.push_back(Matrix::Identity(F_t.rows(), F_t.cols()));
        return next;
    }
};

[[nodiscard]] inline Matrix phi(const MatrixSequence& F, std::size_t t, std::size_t k) {
    if (k > t)
        throw ShapeError("phi(t, k) requires k <= t (got t=" + std::to_string(t) + ", k=" + std::to_string(k) + ")");
    const Eigen::Index n = F.at(0).rows();
    Matrix result = Matrix::Identity(n, n);
    for (std::size_t j = k; j < t; ++j)
        result = F.at(j) * result;
    return result;
}

/// Matrix power by repeated squaring; used to cross-check the LTI shortcut.
[[nodiscard]] inline Matrix matrix_power(const Matrix& F, std::size_t power) {
    Matrix result = Matrix::Identity(F.rows(), F.cols());
    Matrix base = F;
    while (power > 0) {
        if (power & 1U)
            result = result * base;
        base = base * base;
        power >>= 1U;
    }
    return result;
}

// ============================================================================
// BIBS sums and summability constants
// ============================================================================

struct BibsSums {
    std::vector<double> sums;        // sums[t] = Σ_{k=1}^t ‖Φ(t,k)‖, sums[0] = 0
    std::vector<double> running_sup; // running_sup[t] = max_{1<=s<=t} sums[s]
    double              sup = 0.0;
    bool                overflow = false;
};

[[nodiscard]] inline BibsSums bibs_partial_sums(const MatrixSequence& F, std::size_t T) {
    BibsSums out;
    out.sums.assign(1, 0.0);
    out.running_sup.assign(1, 0.0);
    PhiRow row = PhiRow::initial(F.at(0).rows());
    for (std::size_t t = 1; t <= T; ++t) {
        row = row.advance(F.at(t - 1));
        double s = 0.0;
        for (std::size_t k = 1; k <= t; ++k)
            s += spectral_norm(row.blocks[k]);
        if (!std::isfinite(s) || s > kOverflowNorm) {
            out.overflow = true;
            out.sup = std::numeric_limits<double>::infinity();
            break;
        }
        out.sums.push_back(s);
        out.sup = std::max(out.sup, s);
        out.running_sup.push_back(out.sup);
    }
    return out;
}

struct Summability {
    double              D_sum = 0.0;    // Σ_{t=0}^T ‖Φ(t,0)‖
    double              D_bar = 0.0;    // Σ_{t=0}^T ‖Φ(t,0)‖²
    double              H_bar = 0.0;    // max_{t<=T} Σ_{k=1}^t ‖Φ(t,k)‖²
    double              bibs_sup = 0.0; // max_{t<=T} Σ_{k=1}^t ‖Φ(t,k)‖
    std::vector<double> phi_norms;      // ‖Φ(t,0)‖, t = 0..T
    bool                converged = false;
    bool                overflow = false;

    [[nodiscard]] bool diverging() const noexcept { return overflow || !converged; }
};

namespace detail {

inline void finish_summability(Summability& s, double last_row_oldest_sq, double tail_tol) {
    const double last = s.phi_norms.back();
    s.converged = !s.overflow && last * last <= tail_tol * s.D_bar &&
                  last_row_oldest_sq <= tail_tol * std::max(s.H_bar, 1.0);
    if (s.overflow) {
        const double inf = std::numeric_limits<double>::infinity();
        s.D_sum = s.D_bar = s.H_bar = s.bibs_sup = inf;
    }
}

} // namespace detail

/// Partial sums through T plus a tail-decay flag: the sums are reported as
/// converged only when the last terms are below `tail_tol` relative to the
/// accumulated totals. Overflow is flagged, never thrown.
[[nodiscard]] inline Summability summability_constants(const MatrixSequence& F, std::size_t T,
                                                       double tail_tol = 1e-6) {
    Summability s;
    const Eigen::Index n = F.at(0).rows();
    double last_row_oldest_sq = 0.0;

    if (F.is_constant()) {
        // Φ(t,k) = F^{t-k}: one power per t suffices.
        Matrix power = Matrix::Identity(n, n);
        double row_sum = 0.0;
        double row_sq = 0.0;
        for (std::size_t t = 0; t <= T; ++t) {
            const double p = spectral_norm(power);
            if (!std::isfinite(p) || p > kOverflowNorm) {
                s.overflow = true;
                s.phi_norms.push_back(std::numeric_limits<double>::infinity());
                break;
            }
            s.phi_norms.push_back(p);
            s.D_sum += p;
            s.D_bar += p * p;
            if (t > 0) {
                s.bibs_sup = std::max(s.bibs_sup, row_sum);
                s.H_bar = std::max(s.H_bar, row_sq);
            }
            last_row_oldest_sq = s.phi_norms[t > 0 ? t - 1 : 0];
            last_row_oldest_sq *= last_row_oldest_sq;
            row_sum += p; // row t+1 gains ‖F^t‖
            row_sq += p * p;
            power = F.at(0) * power;
        }
        detail::finish_summability(s, last_row_oldest_sq, tail_tol);
        return s;
    }

    PhiRow row = PhiRow::initial(n);
    s.phi_norms.push_back(1.0);
    s.D_sum = s.D_bar = 1.0;
    for (std::size_t t = 1; t <= T; ++t) {
        row = row.advance(F.at(t - 1));
        const double p = spectral_norm(row.blocks[0]);
        double       row_sum = 0.0;
        double       row_sq = 0.0;
        for (std::size_t k = 1; k <= t; ++k) {
            const double q = spectral_norm(row.blocks[k]);
            row_sum += q;
            row_sq += q * q;
            if (k == 1)
                last_row_oldest_sq = q * q;
        }
        if (!std::isfinite(p) || !std::isfinite(row_sum) || p > kOverflowNorm || row_sum > kOverflowNorm) {
            s.overflow = true;
            s.phi_norms.push_back(std::numeric_limits<double>::infinity());
            break;
        }
        s.phi_norms.push_back(p);
        s.D_sum += p;
        s.D_bar += p * p;
        s.bibs_sup = std::max(s.bibs_sup, row_sum);
        s.H_bar = std::max(s.H_bar, row_sq);
    }
    detail::finish_summability(s, last_row_oldest_sq, tail_tol);
    return s;
}

// ============================================================================
// Exponential fit ‖Φ(t,0)‖ ≈ d·δ^t
// ============================================================================

struct ExponentialFit {
    double d = 0.0;
    double delta = 0.0;
};

/// Least-squares line through log‖Φ(t,0)‖ on the tail half of the samples.
[[nodiscard]] inline ExponentialFit exponential_fit(const std::vector<double>& phi_norms) {
    if (phi_norms.size() < 4)
        throw Error("exponential_fit needs at least 4 samples");
    const std::size_t first = phi_norms.size() / 2;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    double count = 0.0;
    for (std::size_t t = first; t < phi_norms.size(); ++t) {
        if (!(phi_norms[t] > 0.0) || !std::isfinite(phi_norms[t]))
            throw Error("exponential_fit needs positive finite norms (t=" + std::to_string(t) + ")");
        const double x = static_cast<double>(t);
        const double y = std::log(phi_norms[t]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        count += 1.0;
    }
    const double denom = count * sxx - sx * sx;
    const double slope = (count * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / count;
    return {std::exp(intercept), std::max(0.0, std::exp(slope))};
}

// ============================================================================
// Stability classification
// ============================================================================

enum class Stability { AsymptoticallyStable, MarginallyStable, Unstable, Inconclusive };

[[nodiscard]] inline const char* to_string(Stability s) {
    switch (s) {
    case Stability::AsymptoticallyStable: return "AsymptoticallyStable";
    case Stability::MarginallyStable: return "MarginallyStable";
    case Stability::Unstable: return "Unstable";
    case Stability::Inconclusive: return "Inconclusive";
    }
    return "Inconclusive";
}

struct StabilityOptions {
    double      marginal_tol = 1e-9;    // band around ρ = 1
    double      slope_tol = 1e-3;       // per-step log-slope band for LTV trends
    double      tail_tol = 1e-6;        // summability tail-decay threshold
    double      oscillation_ratio = 1e-6; // tail min/max below this with flat trend => Inconclusive
    double      rank_tol = 1e-12;       // σ_min/σ_max below this counts as singular
    std::size_t horizon = 200;          // diagnostics horizon
    std::size_t min_ltv_horizon = 50;
};

struct StabilityReport {
    Stability                     classification = Stability::Inconclusive;
    std::optional<double>         spectral_radius; // LTI only
    double                        phi_norm_tail = 0.0;
    double                        bibs_sup = 0.0;
    double                        D_sum = 0.0;
    double                        D_bar = 0.0;
    double                        H_bar = 0.0;
    bool                          summable = false;
    std::optional<ExponentialFit> exp_fit;
    bool                          full_rank_ok = true;
    std::string                   notes;
};

[[nodiscard]] inline bool is_full_rank(const Matrix& F, double rank_tol) {
    if (F.rows() == 1)
        return std::abs(F(0, 0)) > 0.0;
    Eigen::JacobiSVD<Matrix> svd(F);
    const auto& sv = svd.singularValues();
    return sv(sv.size() - 1) > rank_tol * std::max(sv(0), std::numeric_limits<double>::min());
}

namespace detail {

inline void fill_diagnostics(StabilityReport& r, const MatrixSequence& F, std::size_t T, double tail_tol) {
    const Summability s = summability_constants(F, T, tail_tol);
    const double inf = std::numeric_limits<double>::infinity();
    r.phi_norm_tail = s.phi_norms.back();
    r.summable = !s.diverging();
    r.bibs_sup = s.overflow ? inf : s.bibs_sup;
    r.D_sum = r.summable ? s.D_sum : inf;
    r.D_bar = r.summable ? s.D_bar : inf;
    r.H_bar = r.summable ? s.H_bar : inf;
}

} // namespace detail

/// ‖F^k‖ <= g·ε^k with ε = (1+ρ)/2, for ρ < 1. g is the sampled supremum.
[[nodiscard]] inline ExponentialFit lti_exponential_bound(const Matrix& F, double rho) {
    const double eps = 0.5 * (1.0 + rho);
    double g = 1.0;
    Matrix power = Matrix::Identity(F.rows(), F.cols());
    double scale = 1.0;
    for (std::size_t k = 1; k <= 100000; ++k) {
        power = F * power;
        scale *= eps;
        const double ratio = spectral_norm(power) / scale;
        g = std::max(g, ratio);
        if (k >= 16 && ratio < 1e-3 * g)
            break;
    }
    return {g, eps};
}

/// ρ(F) against 1 with tolerance band marginal_tol.
[[nodiscard]] inline StabilityReport classify_lti(const Matrix& F, const StabilityOptions& opt = {}) {
    if (F.rows() != F.cols())
        throw ShapeError("classify_lti needs a square matrix");
    StabilityReport r;
    r.full_rank_ok = is_full_rank(F, opt.rank_tol);
    double rho = 0.0;
    try {
        rho = spectral_radius(F);
    } catch (const Error& e) {
        r.classification = Stability::Inconclusive;
        r.notes = e.what();
        return r;
    }
    if (!std::isfinite(rho)) {
        r.classification = Stability::Inconclusive;
        r.notes = "non-finite spectral radius";
        return r;
    }
    r.spectral_radius = rho;
    if (rho < 1.0 - opt.marginal_tol) {
        r.classification = Stability::AsymptoticallyStable;
        r.exp_fit = lti_exponential_bound(F, rho);
    } else if (rho <= 1.0 + opt.marginal_tol) {
        r.classification = Stability::MarginallyStable;
    } else {
        r.classification = Stability::Unstable;
    }
    detail::fill_diagnostics(r, MatrixSequence::constant(F), opt.horizon, opt.tail_tol);
    return r;
}

/// Empirical classification from the trend of ‖Φ(t,0)‖ over t <= T. Exclusion of
/// chaotic behaviour can only be observed over the finite horizon, never decided.
[[nodiscard]] inline StabilityReport classify_ltv(const MatrixSequence& F, std::size_t T,
                                                  const StabilityOptions& opt = {}) {
    StabilityReport r;
    r.notes = "trend-based over a finite horizon; non-chaotic behaviour is observed, not certified";
    if (T < opt.min_ltv_horizon) {
        r.classification = Stability::Inconclusive;
        r.notes = "horizon shorter than " + std::to_string(opt.min_ltv_horizon) + " steps";
        return r;
    }

    const Eigen::Index  n = F.at(0).rows();
    std::vector<double> norms{1.0};
    Matrix              product = Matrix::Identity(n, n);
    bool                overflow = false;
    bool                reached_zero = false;
    for (std::size_t t = 0; t < T; ++t) {
        const Matrix& Ft = F.at(t);
        if (r.full_rank_ok && !is_full_rank(Ft, opt.rank_tol))
            r.full_rank_ok = false;
        product = Ft * product;
        const double p = spectral_norm(product);
        if (!std::isfinite(p) || p > kOverflowNorm) {
            overflow = true;
            break;
        }
        norms.push_back(p);
        if (p == 0.0) {
            reached_zero = true;
            break;
        }
    }
    if (!r.full_rank_ok)
        r.notes += "; singular F_t present, so Phi(T,0)->0 no longer characterises asymptotic stability";

    detail::fill_diagnostics(r, F, std::min(T, opt.horizon), opt.tail_tol);
    r.phi_norm_tail = norms.back();

    if (overflow) {
        r.classification = Stability::Unstable;
        r.phi_norm_tail = std::numeric_limits<double>::infinity();
        return r;
    }
    if (reached_zero) {
        r.classification = Stability::AsymptoticallyStable;
        return r;
    }

    const ExponentialFit fit = exponential_fit(norms);
    r.exp_fit = fit;
    const double slope = std::log(fit.delta);
    if (slope < -opt.slope_tol) {
        r.classification = Stability::AsymptoticallyStable;
    } else if (slope > opt.slope_tol) {
        r.classification = Stability::Unstable;
    } else {
        const auto tail_begin = norms.begin() + static_cast<std::ptrdiff_t>(norms.size() / 2);
        const auto [lo, hi] = std::minmax_element(tail_begin, norms.end());
        if (*lo < opt.oscillation_ratio * *hi) {
            r.classification = Stability::Inconclusive;
            r.notes += "; flat trend with wide oscillation: neither a limit nor a positive liminf is evident";
        } else {
            r.classification = Stability::MarginallyStable;
        }
    }
    return r;
}

} // namespace regstab
