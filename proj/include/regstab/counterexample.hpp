#pragma once

// Discounted LQR as a counterexample: with stage costs α^t(x'Qx + u'Ru) there
// is no uniform lower bound on the cost, and for small enough α the
// discount-optimal gain K_α leaves F_α = A - B K_α unstable while the
// discounted cost still grows at most linearly in T.

#include "adversary.hpp"
#include "model.hpp"

namespace regstab {

// ============================================================================
// Modified DARE
// ============================================================================

struct DareOptions {
    double      tol = 1e-12;         // relative Frobenius change between iterates
    std::size_t max_iter = 100000;
    double      residual_tol = 1e-10; // accepted relative residual at the end
};

struct DareSolution {
    Matrix      P;
    std::size_t iterations = 0;
    double      residual = 0.0; // ‖Ric(P) - P‖_F / max(1, ‖P‖_F)
    bool        monotone = true; // every iterate >= the previous one
};

/// Ric(P) = Q + αA'PA - α²A'PB (R + αB'PB)⁻¹ B'PA.
[[nodiscard]] inline Matrix discounted_riccati_map(const Matrix& P, const Matrix& A, const Matrix& B, const Matrix& Q,
                                                   const Matrix& R, double alpha) {
    const Matrix PA = P * A;
    const Matrix G = R + alpha * B.transpose() * P * B;
    const Matrix BtPA = B.transpose() * PA;
    return symmetrize(Q + alpha * A.transpose() * PA - alpha * alpha * BtPA.transpose() * G.ldlt().solve(BtPA));
}

[[nodiscard]] inline double dare_residual(const Matrix& P, const Matrix& A, const Matrix& B, const Matrix& Q,
                                          const Matrix& R, double alpha) {
    return (discounted_riccati_map(P, A, B, Q, R, alpha) - P).norm() / std::max(1.0, P.norm());
}

/// Fixed-point iteration of the discounted Riccati map from P⁰ = Q.
[[nodiscard]] inline DareSolution dare_modified(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                                                double alpha, const DareOptions& opt = {}) {
    const Eigen::Index n = A.rows();
    require_shape(A, n, n, "A");
    require_shape(Q, n, n, "Q");
    require_shape(B, n, B.cols(), "B");
    require_shape(R, B.cols(), B.cols(), "R");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw Error("discount factor must lie in (0, 1)");

    DareSolution sol;
    Matrix P = Q;
    for (std::size_t k = 1; k <= opt.max_iter; ++k) {
        Matrix next = discounted_riccati_map(P, A, B, Q, R, alpha);
        if (!next.allFinite())
            throw ConvergenceError("Riccati iteration diverged at iteration " + std::to_string(k),
                                   std::numeric_limits<double>::infinity());
        const double scale = std::max(1.0, next.norm());
        if (symmetric_eigen_range(next - P).first < -1e-10 * scale)
            sol.monotone = false;
        const double change = (next - P).norm();
        P = std::move(next);
        sol.iterations = k;
        if (change <= opt.tol * scale)
            break;
    }
    sol.residual = dare_residual(P, A, B, Q, R, alpha);
    if (!(sol.residual <= opt.residual_tol))
        throw ConvergenceError("Riccati iteration did not converge (relative residual " +
                                   std::to_string(sol.residual) + ")",
                               sol.residual);
    sol.P = std::move(P);
    return sol;
}

struct DiscountedGain {
    Matrix K; // u = -K x
    Matrix F; // A - B K
};

/// K_α = α (R + αB'P_αB)⁻¹ B'P_α A, stored so that u = -K_α x and F_α = A - B K_α.
[[nodiscard]] inline DiscountedGain discounted_gain(const Matrix& P, const Matrix& A, const Matrix& B, const Matrix& R,
                                                    double alpha) {
    const Matrix G = R + alpha * B.transpose() * P * B;
    Eigen::LLT<Matrix> llt(G);
    if (llt.info() != Eigen::Success)
        throw ConditioningError("R + alpha B'PB is not positive definite", 0.0);
    DiscountedGain g;
    g.K = alpha * llt.solve(B.transpose() * P * A);
    g.F = A - B * g.K;
    return g;
}

// ============================================================================
// Model and Γ membership
// ============================================================================

struct DiscountedLqrModel {
    Matrix A, B, Q, R;
    double alpha = 0.0;
    Matrix P; // P_α
    Matrix K; // K_α
    Matrix F; // F_α
    double rho = 0.0;        // ρ(F_α)
    double alpha_norm = 0.0; // α‖F_α‖
    bool   in_gamma = false; // α‖F_α‖ < 1 and ρ(F_α) > 1
    double dare_residual = 0.0;
    bool   dare_monotone = true;

    static DiscountedLqrModel build(Matrix A, Matrix B, Matrix Q, Matrix R, double alpha,
                                    const DareOptions& opt = {}) {
        DiscountedLqrModel model;
        const DareSolution dare = dare_modified(A, B, Q, R, alpha, opt);
        const DiscountedGain gain = discounted_gain(dare.P, A, B, R, alpha);
        model.A = std::move(A);
        model.B = std::move(B);
        model.Q = std::move(Q);
        model.R = std::move(R);
        model.alpha = alpha;
        model.P = dare.P;
        model.K = gain.K;
        model.F = gain.F;
        model.rho = spectral_radius(gain.F);
        model.alpha_norm = alpha * spectral_norm(gain.F);
        model.in_gamma = model.alpha_norm < 1.0 && model.rho > 1.0;
        model.dare_residual = dare.residual;
        model.dare_monotone = dare.monotone;
        return model;
    }
};

struct GammaCheck {
    bool   in_gamma = false;
    double rho = 0.0;
    double alpha_norm = 0.0;
};

[[nodiscard]] inline GammaCheck gamma_check(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                                            double alpha) {
    const auto model = DiscountedLqrModel::build(A, B, Q, R, alpha);
    return {model.in_gamma, model.rho, model.alpha_norm};
}

struct GammaScanRow {
    double alpha = 0.0;
    bool   converged = false;
    bool   in_gamma = false;
    double rho = std::numeric_limits<double>::quiet_NaN();
    double alpha_norm = std::numeric_limits<double>::quiet_NaN();
};

[[nodiscard]] inline std::vector<GammaScanRow> gamma_scan(const Matrix& A, const Matrix& B, const Matrix& Q,
                                                          const Matrix& R, const std::vector<double>& alpha_grid) {
    std::vector<GammaScanRow> rows;
    rows.reserve(alpha_grid.size());
    for (const double alpha : alpha_grid) {
        GammaScanRow row;
        row.alpha = alpha;
        try {
            const GammaCheck g = gamma_check(A, B, Q, R, alpha);
            row.converged = true;
            row.in_gamma = g.in_gamma;
            row.rho = g.rho;
            row.alpha_norm = g.alpha_norm;
        } catch (const ConvergenceError&) {
            row.converged = false;
        }
        rows.push_back(row);
    }
    return rows;
}

// ============================================================================
// Closed-form discounted cost
// ============================================================================

/// Linear and constant terms of V_t(x) = α^t [x'P_α x + v_t'x + q_t].
struct DiscountedValueTerms {
    std::vector<Vector> v; // t = 0..T, v_T = 0
    std::vector<double> q; // t = 0..T, q_T = 0
};

/// v_t = 2α F_α'(P_α w_t + v_{t+1}/2),  q_t = α(w_t'P_α w_t + w_t'v_{t+1} + q_{t+1}).
[[nodiscard]] inline DiscountedValueTerms vq_recursion(const DiscountedLqrModel& model, const DisturbanceSignal& w,
                                                       std::size_t T) {
    if (w.size() < T)
        throw ShapeError("disturbance shorter than horizon");
    const Eigen::Index n = model.A.rows();
    DiscountedValueTerms out;
    out.v.assign(T + 1, Vector::Zero(n));
    out.q.assign(T + 1, 0.0);
    const Matrix Ft = model.F.transpose();
    for (std::size_t t = T; t-- > 0;) {
        const Vector Pw = model.P * w[t];
        out.v[t] = 2.0 * model.alpha * Ft * (Pw + 0.5 * out.v[t + 1]);
        out.q[t] = model.alpha * (w[t].dot(Pw) + w[t].dot(out.v[t + 1]) + out.q[t + 1]);
    }
    return out;
}

/// x0'P_α x0 + x0'v_0 + q_0.
[[nodiscard]] inline double discounted_cost_closed_form(const DiscountedLqrModel& model, const Vector& x0,
                                                        const DisturbanceSignal& w, std::size_t T) {
    const DiscountedValueTerms terms = vq_recursion(model, w, T);
    return x0.dot(model.P * x0) + x0.dot(terms.v[0]) + terms.q[0];
}

/// Rollout of u_t = -K_α x_t with cost α^T x_T'P_α x_T + Σ_{t<T} α^t (x_t'Q x_t + u_t'R u_t).
[[nodiscard]] inline double discounted_cost_simulated(const DiscountedLqrModel& model, const Vector& x0,
                                                      const DisturbanceSignal& w, std::size_t T) {
    if (w.size() < T)
        throw ShapeError("disturbance shorter than horizon");
    Vector x = x0;
    double weight = 1.0;
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        const Vector u = -(model.K * x);
        total += weight * (x.dot(model.Q * x) + u.dot(model.R * u));
        x = model.A * x + model.B * u + w[t];
        detail::guard_state(x, t + 1);
        weight *= model.alpha;
    }
    return total + weight * x.dot(model.P * x);
}

// ============================================================================
// Linear discounted cost despite an unstable loop
// ============================================================================

struct DiscountedBoundPoint {
    std::size_t T = 0;
    double      worst_cost = 0.0; // max over sampled (x0, w)
    double      bound = 0.0;      // C_0 + C_w T
};

struct DiscountedBoundReport {
    bool        applicable = false;
    std::string reason;
    double      alpha = 0.0;
    double      rho = 0.0;   // ρ(F_α)
    double      sigma = 0.0; // α‖F_α‖
    double      P_norm = 0.0;
    double      X = 0.0;
    double      W = 0.0;
    double      C_0 = 0.0;
    double      C_w = 0.0;
    bool        holds = false;
    bool        unstable = false; // ρ(F_α) > 1
    std::vector<DiscountedBoundPoint> points;

    // Same loop under undiscounted costs: (J_hi/T_hi) / (J_lo/T_lo).
    std::size_t undiscounted_T_lo = 20;
    std::size_t undiscounted_T_hi = 200;
    double      undiscounted_growth = 0.0;
};

struct DiscountedBoundOptions {
    std::size_t   random_samples = 8;
    std::uint64_t seed = 0;
    std::size_t   undiscounted_T_lo = 20;
    std::size_t   undiscounted_T_hi = 200;
};

/// Constants of the discounted-cost bound, with W² in the linear term:
///   C_0 = ‖P‖X² + 2‖P‖XW σ/(1-σ) + ‖P‖W² α/(1-α),   C_w = 2‖P‖W² σ/(1-σ),
/// σ = α‖F_α‖. The bound is checked on aligned and random disturbances.
[[nodiscard]] inline DiscountedBoundReport linear_regret_despite_instability(
    const DiscountedLqrModel& model, double W, double X, const std::vector<std::size_t>& T_grid,
    const DiscountedBoundOptions& opt = {}) {
    DiscountedBoundReport rep;
    rep.alpha = model.alpha;
    rep.rho = model.rho;
    rep.sigma = model.alpha_norm;
    rep.X = X;
    rep.W = W;
    rep.unstable = model.rho > 1.0;
    rep.undiscounted_T_lo = opt.undiscounted_T_lo;
    rep.undiscounted_T_hi = opt.undiscounted_T_hi;
    if (!model.in_gamma) {
        rep.reason = "discount factor not in Gamma";
        return rep;
    }
    rep.applicable = true;

    const double P = spectral_norm(model.P);
    const double s = rep.sigma;
    const double a = model.alpha;
    rep.P_norm = P;
    rep.C_0 = P * X * X + 2.0 * P * X * W * s / (1.0 - s) + P * W * W * a / (1.0 - a);
    rep.C_w = 2.0 * P * W * W * s / (1.0 - s);

    const Eigen::Index n = model.A.rows();
    const std::size_t  T_max = T_grid.empty() ? 0 : *std::max_element(T_grid.begin(), T_grid.end());

    // Candidates: disturbance along the dominant direction of F_α' with x0 along
    // the top eigenvector of P_α (both signs), then seeded random draws.
    std::vector<std::pair<Vector, DisturbanceSignal>> cases;
    const Vector                          u = dominant_direction(model.F.transpose()).v;
    Eigen::SelfAdjointEigenSolver<Matrix> pe(model.P);
    const Vector                          top = pe.eigenvectors().col(n - 1);
    for (const double sign : {1.0, -1.0}) {
        cases.emplace_back(sign * X * top, DisturbanceSignal(std::vector<Vector>(T_max, W * u), W));
        cases.emplace_back(sign * X * top, DisturbanceSignal(std::vector<Vector>(T_max, -W * u), W));
    }
    std::mt19937_64                  rng(opt.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < opt.random_samples; ++i) {
        Vector dir(n);
        do {
            for (Eigen::Index j = 0; j < n; ++j)
                dir(j) = normal(rng);
        } while (dir.norm() == 0.0);
        cases.emplace_back(X * dir.normalized(), random_ball(n, W, T_max, opt.seed + 7919 * (i + 1)));
    }

    rep.holds = true;
    for (const std::size_t T : T_grid) {
        DiscountedBoundPoint pt;
        pt.T = T;
        pt.bound = rep.C_0 + rep.C_w * static_cast<double>(T);
        for (const auto& [x0, w] : cases)
            pt.worst_cost = std::max(pt.worst_cost, discounted_cost_simulated(model, x0, w, T));
        if (pt.worst_cost > pt.bound * (1.0 + 1e-9))
            rep.holds = false;
        rep.points.push_back(pt);
    }

    // Undiscounted costs on the same loop.
    const auto system = SystemDynamics::lti(model.A, model.B);
    const auto policy = LinearPolicy::stationary(model.K);
    const auto costs = QuadraticStageCost::stationary(model.Q, model.R);
    const Vector x0 = (X > 0.0 ? X : 1.0) * top;
    const double Wu = W > 0.0 ? W : 1.0;
    const auto w = DisturbanceSignal(std::vector<Vector>(opt.undiscounted_T_hi, Wu * dominant_direction(model.F).v), Wu);
    try {
        const Trajectory traj = simulate(system, policy, x0, w, costs, opt.undiscounted_T_hi);
        double lo = 0.0;
        for (std::size_t t = 0; t <= opt.undiscounted_T_lo; ++t)
            lo += traj.stage_costs[t];
        rep.undiscounted_growth = (traj.total_cost / static_cast<double>(opt.undiscounted_T_hi)) /
                                  (lo / static_cast<double>(opt.undiscounted_T_lo));
    } catch (const OverflowError&) {
        rep.undiscounted_growth = std::numeric_limits<double>::infinity();
    }
    return rep;
}

} // namespace regstab
