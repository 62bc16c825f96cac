#pragma once

// The noncausal benchmark: the input sequence minimising Σ_{t=0}^T c_t(x_t,u_t)
// with the whole disturbance known in advance. The terminal input is zero.
//
// solve_hindsight runs a backward pass over affine-quadratic value functions
// V_t(x) = x'P_t x + p_t'x + s_t; batch_oracle solves the same problem as one
// dense least-squares system and exists only to check the recursion.

#include "model.hpp"

namespace regstab {

struct ValueParams {
    Matrix P;
    Vector p;
    double s = 0.0;
};

struct HindsightSolution {
    std::vector<Vector>      inputs;   // u★_0..u★_{T-1}
    std::vector<Vector>      states;   // x★_0..x★_T
    double                   optimal_cost = 0.0;
    std::vector<ValueParams> value;    // t = 0..T
    std::vector<Matrix>      feedback; // u★_t = -feedback[t]·x_t - feedforward[t]
    std::vector<Vector>      feedforward;

    /// The optimal law as an affine policy (zero at t = T).
    [[nodiscard]] LinearPolicy as_policy() const {
        std::vector<Matrix> K = feedback;
        std::vector<Vector> d;
        d.reserve(feedforward.size() + 1);
        for (const auto& k : feedforward)
            d.push_back(-k);
        K.push_back(Matrix::Zero(K.empty() ? 0 : K.front().rows(), states.front().size()));
        d.push_back(Vector::Zero(K.back().rows()));
        return LinearPolicy(MatrixSequence::table(std::move(K)), VectorSequence::table(std::move(d)));
    }
};

inline constexpr double kMinRcond = 1e-14;

[[nodiscard]] inline HindsightSolution solve_hindsight(const SystemDynamics& system, const QuadraticStageCost& costs,
                                                       const Vector& x0, const DisturbanceSignal& w, std::size_t T) {
    detail::check_rollout_shapes(system, costs, x0, w, T);
    const Eigen::Index n = system.n();

    HindsightSolution sol;
    sol.value.resize(T + 1);
    sol.feedback.resize(T);
    sol.feedforward.resize(T);
    sol.value[T] = {costs.Q(T), Vector::Zero(n), 0.0};

    for (std::size_t t = T; t-- > 0;) {
        const Matrix& A = system.A(t);
        const Matrix& B = system.B(t);
        const auto& next = sol.value[t + 1];

        const Matrix PB = next.P * B;
        const Matrix G = symmetrize(costs.R(t) + B.transpose() * PB);
        Eigen::LLT<Matrix> llt(G);
        const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
        if (!(rcond >= kMinRcond))
            throw ConditioningError("R_t + B_t'P_{t+1}B_t is too ill-conditioned at t=" + std::to_string(t), rcond);

        // P̃ = P - PB G⁻¹ B'P,  p̃ = p - PB G⁻¹ B'p
        const Matrix GinvBtP = llt.solve(PB.transpose());
        const Vector Btp = B.transpose() * next.p;
        const Vector GinvBtp = llt.solve(Btp);
        const Matrix Ptilde = symmetrize(next.P - PB * GinvBtP);
        const Vector ptilde = next.p - PB * GinvBtp;

        sol.feedback[t] = GinvBtP * A;
        sol.feedforward[t] = GinvBtP * w[t] + 0.5 * GinvBtp;

        ValueParams& v = sol.value[t];
        v.P = symmetrize(costs.Q(t) + A.transpose() * Ptilde * A);
        v.p = 2.0 * A.transpose() * (Ptilde * w[t]) + A.transpose() * ptilde;
        v.s = next.s + w[t].dot(Ptilde * w[t]) + w[t].dot(ptilde) - 0.25 * Btp.dot(GinvBtp);
    }

    const auto& v0 = sol.value[0];
    sol.optimal_cost = x0.dot(v0.P * x0) + v0.p.dot(x0) + v0.s;

    sol.states.reserve(T + 1);
    sol.inputs.reserve(T);
    Vector x = x0;
    sol.states.push_back(x);
    for (std::size_t t = 0; t < T; ++t) {
        Vector u = -(sol.feedback[t] * x) - sol.feedforward[t];
        x = system.A(t) * x + system.B(t) * u + w[t];
        detail::guard_state(x, t + 1);
        sol.inputs.push_back(std::move(u));
        sol.states.push_back(x);
    }
    return sol;
}

struct BatchSolution {
    std::vector<Vector> inputs;
    double              optimal_cost = 0.0;
};

inline constexpr std::size_t kBatchOracleMaxUnknowns = 2000;

/// Dense oracle: the state sequence is an affine map of the stacked inputs,
/// x = c + S u, so the cost is a strictly convex quadratic in u whose
/// stationarity system is solved directly.
[[nodiscard]] inline BatchSolution batch_oracle(const SystemDynamics& system, const QuadraticStageCost& costs,
                                                const Vector& x0, const DisturbanceSignal& w, std::size_t T) {
    detail::check_rollout_shapes(system, costs, x0, w, T);
    const Eigen::Index n = system.n();
    const Eigen::Index m = system.m();
    const std::size_t unknowns = T * static_cast<std::size_t>(m);
    if (unknowns > kBatchOracleMaxUnknowns)
        throw Error("batch oracle limited to T*m <= " + std::to_string(kBatchOracleMaxUnknowns));
    const Eigen::Index N = static_cast<Eigen::Index>(unknowns);

    // Rows of S and c for x_t, t = 0..T.
    std::vector<Matrix> S(T + 1, Matrix::Zero(n, N));
    std::vector<Vector> c(T + 1);
    c[0] = x0;
    for (std::size_t t = 1; t <= T; ++t) {
        const Matrix& A = system.A(t - 1);
        S[t] = A * S[t - 1];
        S[t].block(0, static_cast<Eigen::Index>(t - 1) * m, n, m) += system.B(t - 1);
        c[t] = A * c[t - 1] + w[t - 1];
    }

    Matrix H = Matrix::Zero(N, N);
    Vector g = Vector::Zero(N);
    for (std::size_t t = 0; t <= T; ++t) {
        const Matrix QS = costs.Q(t) * S[t];
        H += S[t].transpose() * QS;
        g += QS.transpose() * c[t];
    }
    for (std::size_t t = 0; t < T; ++t) {
        const auto off = static_cast<Eigen::Index>(t) * m;
        H.block(off, off, m, m) += costs.R(t);
    }
    H = symmetrize(H);

    BatchSolution out;
    Vector u = Vector::Zero(N);
    if (N > 0) {
        Eigen::LDLT<Matrix> ldlt(H);
        if (ldlt.info() != Eigen::Success)
            throw ConditioningError("batch Hessian factorisation failed", 0.0);
        u = -ldlt.solve(g);
    }
    out.inputs.reserve(T);
    for (std::size_t t = 0; t < T; ++t)
        out.inputs.push_back(u.segment(static_cast<Eigen::Index>(t) * m, m));
    // Evaluated by rollout rather than constant + g'u, which cancels badly.
    out.optimal_cost = simulate_open_loop(system, out.inputs, x0, w, costs, T).total_cost;
    return out;
}

} // namespace regstab
