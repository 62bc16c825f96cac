#pragma once

// Dynamic regret R_T = J_T(policy) - J_T(u★), regret curves over a horizon
// grid, the explicit linear-regret certificate for summable loops, the
// quadratic cost lower bound for loops with a dominant eigenvalue >= 1, and an
// empirical growth readout of R_T/T.

#include "adversary.hpp"
#include "hindsight.hpp"
#include "model.hpp"
#include "transition.hpp"

namespace regstab {

// ============================================================================
// Regret
// ============================================================================

struct RegretEvaluation {
    std::size_t                T = 0;
    double                     regret = 0.0;
    double                     policy_cost = 0.0;
    double                     benchmark_cost = 0.0;
    std::optional<std::size_t> overflow_at; // regret is +inf when set

    [[nodiscard]] bool overflow() const noexcept { return overflow_at.has_value(); }
};

[[nodiscard]] inline RegretEvaluation evaluate_regret(const SystemDynamics& system, const QuadraticStageCost& costs,
                                                      const LinearPolicy& policy, const Vector& x0,
                                                      const DisturbanceSignal& w, std::size_t T) {
    RegretEvaluation ev;
    ev.T = T;
    try {
        ev.policy_cost = simulate(system, policy, x0, w, costs, T).total_cost;
        ev.benchmark_cost = solve_hindsight(system, costs, x0, w, T).optimal_cost;
        ev.regret = ev.policy_cost - ev.benchmark_cost;
        if (!std::isfinite(ev.regret))
            throw OverflowError(T, std::numeric_limits<double>::infinity());
    } catch (const OverflowError& e) {
        ev.overflow_at = e.step();
        ev.regret = std::numeric_limits<double>::infinity();
    }
    return ev;
}

/// R_T(μ; w); +inf when the policy rollout overflows.
[[nodiscard]] inline double regret(const SystemDynamics& system, const QuadraticStageCost& costs,
                                   const LinearPolicy& policy, const Vector& x0, const DisturbanceSignal& w,
                                   std::size_t T) {
    return evaluate_regret(system, costs, policy, x0, w, T).regret;
}

// ============================================================================
// Regret curves
// ============================================================================

struct CurveMetadata {
    double      X = 0.0;
    double      W = 0.0;
    std::string policy_id;
    std::string disturbance_id;
};

struct RegretCurve {
    std::vector<std::size_t> horizons;
    std::vector<double>      regret;
    std::vector<double>      time_averaged;
    std::vector<std::string> flags; // "ok" or "overflow@<t>"
    CurveMetadata            metadata;

    [[nodiscard]] std::size_t size() const noexcept { return horizons.size(); }

    [[nodiscard]] bool any_overflow() const {
        return std::any_of(flags.begin(), flags.end(), [](const std::string& f) { return f != "ok"; });
    }
};

inline std::string overflow_flag(std::size_t t) { return "overflow@" + std::to_string(t); }

/// One regret evaluation per horizon; the generator supplies w of length T.
[[nodiscard]] inline RegretCurve regret_curve(const SystemDynamics& system, const QuadraticStageCost& costs,
                                              const LinearPolicy& policy, const Vector& x0,
                                              const DisturbanceGenerator& generator,
                                              const std::vector<std::size_t>& horizons, CurveMetadata metadata = {}) {
    for (std::size_t i = 1; i < horizons.size(); ++i)
        if (horizons[i] <= horizons[i - 1])
            throw Error("regret_curve horizons must be strictly increasing");
    RegretCurve curve;
    curve.metadata = std::move(metadata);
    curve.metadata.X = std::max(curve.metadata.X, x0.norm());
    for (const std::size_t T : horizons) {
        const DisturbanceSignal w = generator(T);
        curve.metadata.W = std::max(curve.metadata.W, w.bound());
        const RegretEvaluation ev = evaluate_regret(system, costs, policy, x0, w, T);
        curve.horizons.push_back(T);
        curve.regret.push_back(ev.regret);
        curve.time_averaged.push_back(T > 0 ? ev.regret / static_cast<double>(T) : ev.regret);
        curve.flags.push_back(ev.overflow() ? overflow_flag(*ev.overflow_at) : "ok");
    }
    return curve;
}

// ============================================================================
// Linear regret certificate (summable transition norms)
// ============================================================================

struct LinearRegretCertificate {
    bool        applicable = false;
    std::string reason;
    double      M = 0.0; // M̄(1 + max_t ‖K_t‖²)
    double      D_bar = 0.0;
    double      H_bar = 0.0;
    double      X = 0.0;
    double      W = 0.0;
    double      C_0 = 0.0; // 2 M D̄ X²
    double      C_w = 0.0; // 2 M H̄ W²
    bool        holds = false;
    double      max_violation = 0.0; // max_T (J_T - C_0 - C_w T) / max(1, C_0 + C_w T)
    std::size_t samples = 0;

    // The squared-row-sum constant H̄ only bounds ‖Σ_k Φ(t,k)w_{k-1}‖² for
    // uncorrelated disturbances; (sup_t Σ_k ‖Φ(t,k)‖)² bounds it for every
    // disturbance. Both are reported.
    double bibs_sup = 0.0;
    double C_w_bibs = 0.0; // 2 M (sup_t Σ_k ‖Φ(t,k)‖)² W²
    bool   holds_bibs = false;
    double max_violation_bibs = 0.0;
};

struct CertificateOptions {
    std::size_t   T_max = 300;
    std::size_t   trials = 10;
    std::uint64_t seed = 0;
    double        tail_tol = 1e-6;
    double        slack = 1e-9; // relative
};

/// Computes the constants at T_max and checks J_T <= C_0 + C_w T for every
/// T <= T_max on `trials` random draws (‖x0‖ = X, w uniform in the W-ball).
/// Not applicable when the transition sums have not converged by T_max.
[[nodiscard]] inline LinearRegretCertificate theorem1_certificate(const SystemDynamics& system,
                                                                  const QuadraticStageCost& costs,
                                                                  const LinearPolicy& policy, double X, double W,
                                                                  const CertificateOptions& opt = {}) {
    LinearRegretCertificate cert;
    cert.X = X;
    cert.W = W;
    if (policy.has_offsets()) {
        cert.reason = "affine offsets are not covered by the linear certificate";
        return cert;
    }

    const MatrixSequence F = closed_loop_sequence(system, policy, opt.T_max);
    const Summability    sums = summability_constants(F, opt.T_max, opt.tail_tol);
    if (sums.diverging()) {
        cert.reason = sums.overflow ? "transition norms overflow" : "transition norm sums do not converge";
        cert.D_bar = cert.H_bar = cert.bibs_sup = std::numeric_limits<double>::infinity();
        return cert;
    }
    cert.applicable = true;

    const CostBounds   bounds = cost_bounds(costs, opt.T_max);
    const double       k = policy.max_gain_norm(opt.T_max);
    cert.M = bounds.upper * (1.0 + k * k);
    cert.D_bar = sums.D_bar;
    cert.H_bar = sums.H_bar;
    cert.bibs_sup = sums.bibs_sup;
    cert.C_0 = 2.0 * cert.M * cert.D_bar * X * X;
    cert.C_w = 2.0 * cert.M * cert.H_bar * W * W;
    cert.C_w_bibs = 2.0 * cert.M * cert.bibs_sup * cert.bibs_sup * W * W;

    std::mt19937_64                  rng(opt.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index               n = system.n();
    cert.max_violation = cert.max_violation_bibs = -std::numeric_limits<double>::infinity();
    for (std::size_t trial = 0; trial < opt.trials; ++trial) {
        Vector dir(n);
        do {
            for (Eigen::Index i = 0; i < n; ++i)
                dir(i) = normal(rng);
        } while (dir.norm() == 0.0);
        const Vector            x0 = X * dir.normalized();
        const DisturbanceSignal w = random_ball(n, W, opt.T_max, opt.seed * 1000003ULL + trial + 1);
        const Trajectory        traj = simulate(system, policy, x0, w, costs, opt.T_max);
        double                  J = 0.0;
        for (std::size_t T = 0; T <= opt.T_max; ++T) {
            J += traj.stage_costs[T];
            const double Td = static_cast<double>(T);
            const double bound = cert.C_0 + cert.C_w * Td;
            const double bound_bibs = cert.C_0 + cert.C_w_bibs * Td;
            cert.max_violation = std::max(cert.max_violation, (J - bound) / std::max(1.0, bound));
            cert.max_violation_bibs = std::max(cert.max_violation_bibs, (J - bound_bibs) / std::max(1.0, bound_bibs));
            ++cert.samples;
        }
    }
    cert.holds = cert.max_violation <= opt.slack;
    cert.holds_bibs = cert.max_violation_bibs <= opt.slack;
    return cert;
}

// ============================================================================
// Quadratic lower bound for loops with a dominant eigenvalue >= 1
// ============================================================================

struct LowerBoundCheck {
    bool        applicable = false;
    std::string reason;
    double      bound = 0.0; // M̲ W² (T² + T) / 2
    double      cost = 0.0;  // J_T under the constant eigenvector disturbance, x0 = 0
    bool        satisfied = false;
};

/// Free loop x_{t+1} = F x_t + W v with F v = ρ(F) v, from x0 = 0.
[[nodiscard]] inline LowerBoundCheck theorem3_lower_bound_check(const Matrix& F, const QuadraticStageCost& costs,
                                                                double W, std::size_t T) {
    LowerBoundCheck out;
    const DominantDirection dom = dominant_direction(F);
    const double            rho = std::abs(dom.eigenvalue);
    if (dom.defective || !dom.real_eigenvector || dom.eigenvalue.real() <= 0.0) {
        out.reason = "no real positive dominant eigenvector";
        return out;
    }
    if (rho < 1.0 - 1e-12) {
        out.reason = "spectral radius below one";
        return out;
    }
    out.applicable = true;

    const Eigen::Index n = F.rows();
    const Eigen::Index m = costs.m();
    const auto         system = SystemDynamics::lti(F, Matrix::Zero(n, m));
    const auto         policy = LinearPolicy::stationary(Matrix::Zero(m, n));
    const auto         w = DisturbanceSignal(std::vector<Vector>(T, W * dom.v), W);
    out.cost = simulate(system, policy, Vector::Zero(n), w, costs, T).total_cost;

    const double Td = static_cast<double>(T);
    out.bound = cost_bounds(costs, T).lower * W * W * (Td * Td + Td) / 2.0;
    out.satisfied = out.cost >= out.bound * (1.0 - 1e-9);
    return out;
}

// ============================================================================
// Growth readout
// ============================================================================

enum class GrowthClass { BoundedAverage, LinearAverage, SuperlinearAverage };

[[nodiscard]] inline const char* to_string(GrowthClass g) {
    switch (g) {
    case GrowthClass::BoundedAverage: return "BoundedAverage";
    case GrowthClass::LinearAverage: return "LinearAverage";
    case GrowthClass::SuperlinearAverage: return "SuperlinearAverage";
    }
    return "SuperlinearAverage";
}

struct GrowthThresholds {
    double bounded_slope = 0.1; // below: R_T/T bounded, i.e. linear regret
    double linear_slope = 1.5;  // above: superlinear growth of R_T/T
};

struct GrowthReadout {
    GrowthClass growth = GrowthClass::SuperlinearAverage;
    double      slope = 0.0; // d log(R_T/T) / d log T over the upper half
};

/// Log-log slope of R_T/T against T over the horizons in the upper half of the
/// log-T range. Needs >= 10 horizons spanning at least a decade. Overflowed
/// horizons read as superlinear.
[[nodiscard]] inline GrowthReadout growth_readout(const RegretCurve& curve, const GrowthThresholds& th = {}) {
    if (curve.size() < 10)
        throw Error("growth classification needs at least 10 horizons");
    const double t_min = static_cast<double>(std::max<std::size_t>(curve.horizons.front(), 1));
    const double t_max = static_cast<double>(curve.horizons.back());
    if (t_max < 10.0 * t_min)
        throw Error("growth classification needs horizons spanning a decade");

    GrowthReadout out;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (curve.flags[i] != "ok" || !std::isfinite(curve.time_averaged[i])) {
            out.growth = GrowthClass::SuperlinearAverage;
            out.slope = std::numeric_limits<double>::infinity();
            return out;
        }
    }

    const double peak = *std::max_element(curve.time_averaged.begin(), curve.time_averaged.end());
    const double floor = 1e-12 * std::max(1.0, peak);
    const double split = 0.5 * (std::log(t_min) + std::log(t_max));
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, count = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (curve.horizons[i] == 0)
            continue;
        const double x = std::log(static_cast<double>(curve.horizons[i]));
        if (x < split)
            continue;
        const double y = std::log(std::max(curve.time_averaged[i], floor));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        count += 1.0;
    }
    if (count < 2.0)
        throw Error("growth classification: fewer than two horizons in the upper half");
    out.slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    if (out.slope < th.bounded_slope)
        out.growth = GrowthClass::BoundedAverage;
    else if (out.slope <= th.linear_slope)
        out.growth = GrowthClass::LinearAverage;
    else
        out.growth = GrowthClass::SuperlinearAverage;
    return out;
}

[[nodiscard]] inline GrowthClass growth_classify(const RegretCurve& curve, const GrowthThresholds& th = {}) {
    return growth_readout(curve, th).growth;
}

} // namespace regstab
