#pragma once

// Linear dynamics x_{t+1} = A_t x_t + B_t u_t + w_t, linear (or affine) state
// feedback, time-varying quadratic stage costs, and closed-loop rollouts.

#include "core.hpp"

#include <optional>

namespace regstab {

enum class SystemKind { LTI, LTV };

// ============================================================================
// SystemDynamics
// ============================================================================

class SystemDynamics {
public:
    static SystemDynamics lti(Matrix A, Matrix B) {
        SystemDynamics s;
        s.n_ = A.rows();
        s.m_ = B.cols();
        require_shape(A, s.n_, s.n_, "A");
        require_shape(B, s.n_, s.m_, "B");
        s.A_ = MatrixSequence::constant(std::move(A));
        s.B_ = MatrixSequence::constant(std::move(B));
        s.kind_ = SystemKind::LTI;
        return s;
    }

    /// Explicit per-step matrices A_0..A_{H-1}, B_0..B_{H-1}.
    static SystemDynamics ltv(std::vector<Matrix> A, std::vector<Matrix> B) {
        if (A.empty() || A.size() != B.size())
            throw ShapeError("LTV system needs equally many A_t and B_t (and at least one)");
        SystemDynamics s;
        s.n_ = A.front().rows();
        s.m_ = B.front().cols();
        for (std::size_t t = 0; t < A.size(); ++t) {
            require_shape(A[t], s.n_, s.n_, "A_" + std::to_string(t));
            require_shape(B[t], s.n_, s.m_, "B_" + std::to_string(t));
        }
        s.horizon_hint_ = A.size();
        s.A_ = MatrixSequence::table(std::move(A));
        s.B_ = MatrixSequence::table(std::move(B));
        s.kind_ = SystemKind::LTV;
        return s;
    }

    /// Evaluates `generator(t)` once for t < horizon and keeps the results.
    static SystemDynamics generated(const std::function<std::pair<Matrix, Matrix>(std::size_t)>& generator,
                                    std::size_t horizon) {
        std::vector<Matrix> A;
        std::vector<Matrix> B;
        A.reserve(horizon);
        B.reserve(horizon);
        for (std::size_t t = 0; t < horizon; ++t) {
            auto [a, b] = generator(t);
            A.push_back(std::move(a));
            B.push_back(std::move(b));
        }
        return ltv(std::move(A), std::move(B));
    }

    [[nodiscard]] Eigen::Index n() const noexcept { return n_; }
    [[nodiscard]] Eigen::Index m() const noexcept { return m_; }
    [[nodiscard]] SystemKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t horizon_hint() const noexcept { return horizon_hint_; }

    [[nodiscard]] const Matrix& A(std::size_t t) const { return A_.at(t); }
    [[nodiscard]] const Matrix& B(std::size_t t) const { return B_.at(t); }
    [[nodiscard]] const MatrixSequence& A_sequence() const noexcept { return A_; }
    [[nodiscard]] const MatrixSequence& B_sequence() const noexcept { return B_; }

    /// Whether A_t, B_t exist for every t < T.
    [[nodiscard]] bool covers(std::size_t T) const noexcept { return T == 0 || A_.defined_through(T - 1); }

private:
    SystemDynamics() = default;

    MatrixSequence A_;
    MatrixSequence B_;
    Eigen::Index   n_ = 0;
    Eigen::Index   m_ = 0;
    SystemKind     kind_ = SystemKind::LTI;
    std::size_t    horizon_hint_ = 0;
};

// ============================================================================
// LinearPolicy:  u_t = -K_t x_t + d_t
// ============================================================================

class LinearPolicy {
public:
    explicit LinearPolicy(MatrixSequence gains, std::optional<VectorSequence> offsets = std::nullopt,
                          std::optional<double> offset_bound = std::nullopt)
        : K_(std::move(gains)), d_(std::move(offsets)) {
        const Matrix& K0 = K_.at(0);
        for (const auto& K : K_.items())
            require_shape(K, K0.rows(), K0.cols(), "policy gain");
        if (d_) {
            double largest = 0.0;
            for (const auto& d : d_->items()) {
                require_size(d, K0.rows(), "policy offset");
                largest = std::max(largest, d.norm());
            }
            if (offset_bound && largest > *offset_bound * (1.0 + 1e-12) + 1e-12)
                throw AssumptionViolation("policy offset exceeds its declared bound");
            d_max_ = offset_bound.value_or(largest);
        }
    }

    static LinearPolicy stationary(Matrix K) { return LinearPolicy(MatrixSequence::constant(std::move(K))); }

    static LinearPolicy time_varying(std::vector<Matrix> K) { return LinearPolicy(MatrixSequence::table(std::move(K))); }

    [[nodiscard]] LinearPolicy with_offsets(VectorSequence d, std::optional<double> bound = std::nullopt) const {
        return LinearPolicy(K_, std::move(d), bound);
    }

    [[nodiscard]] Eigen::Index m() const { return K_.at(0).rows(); }
    [[nodiscard]] Eigen::Index n() const { return K_.at(0).cols(); }

    [[nodiscard]] const Matrix& gain(std::size_t t) const { return K_.at(t); }
    [[nodiscard]] const MatrixSequence& gains() const noexcept { return K_; }
    [[nodiscard]] const std::optional<VectorSequence>& offsets() const noexcept { return d_; }
    [[nodiscard]] bool has_offsets() const noexcept { return d_.has_value(); }
    [[nodiscard]] double offset_bound() const noexcept { return d_max_; }

    [[nodiscard]] Vector input(std::size_t t, const Vector& x) const {
        Vector u = -(K_.at(t) * x);
        if (d_)
            u += d_->at(t);
        return u;
    }

    /// max_{0<=t<=T} ‖K_t‖.
    [[nodiscard]] double max_gain_norm(std::size_t T) const {
        if (K_.is_constant())
            return spectral_norm(K_.at(0));
        double best = 0.0;
        for (std::size_t t = 0; t <= T; ++t)
            best = std::max(best, spectral_norm(K_.at(t)));
        return best;
    }

private:
    MatrixSequence                K_;
    std::optional<VectorSequence> d_;
    double                        d_max_ = 0.0;
};

// ============================================================================
// QuadraticStageCost:  c_t(x, u) = x'Q_t x + u'R_t u
// ============================================================================

class QuadraticStageCost {
public:
    QuadraticStageCost(MatrixSequence Q, MatrixSequence R) : Q_(std::move(Q)), R_(std::move(R)) {
        const Eigen::Index n = Q_.at(0).rows();
        const Eigen::Index m = R_.at(0).rows();
        for (const auto& q : Q_.items()) {
            require_shape(q, n, n, "Q");
            if (!is_symmetric(q))
                throw AssumptionViolation("Q_t must be symmetric");
        }
        for (const auto& r : R_.items()) {
            require_shape(r, m, m, "R");
            if (!is_symmetric(r))
                throw AssumptionViolation("R_t must be symmetric");
        }
    }

    static QuadraticStageCost stationary(Matrix Q, Matrix R) {
        return {MatrixSequence::constant(std::move(Q)), MatrixSequence::constant(std::move(R))};
    }

    [[nodiscard]] Eigen::Index n() const { return Q_.at(0).rows(); }
    [[nodiscard]] Eigen::Index m() const { return R_.at(0).rows(); }
    [[nodiscard]] const Matrix& Q(std::size_t t) const { return Q_.at(t); }
    [[nodiscard]] const Matrix& R(std::size_t t) const { return R_.at(t); }
    [[nodiscard]] const MatrixSequence& Q_sequence() const noexcept { return Q_; }
    [[nodiscard]] const MatrixSequence& R_sequence() const noexcept { return R_; }
    [[nodiscard]] bool covers(std::size_t T) const noexcept { return Q_.defined_through(T) && R_.defined_through(T); }

    [[nodiscard]] double stage(std::size_t t, const Vector& x, const Vector& u) const {
        return x.dot(Q_.at(t) * x) + u.dot(R_.at(t) * u);
    }

    /// Every Q_t and R_t multiplied by gamma.
    [[nodiscard]] QuadraticStageCost scaled(double gamma) const {
        auto mul = [gamma](const Matrix& M) -> Matrix { return gamma * M; };
        return {Q_.map(mul), R_.map(mul)};
    }

private:
    MatrixSequence Q_;
    MatrixSequence R_;
};

struct CostBounds {
    double lower = 0.0; // inf_t λ_min(Q_t)
    double upper = 0.0; // sup_t max(λ_max(Q_t), λ_max(R_t))
};

/// Eigenvalue extrema of Q_t, R_t over 0..T. Any matrix that is not positive
/// definite means the state is not observable through the cost.
[[nodiscard]] inline CostBounds cost_bounds(const QuadraticStageCost& costs, std::size_t T) {
    CostBounds b{std::numeric_limits<double>::infinity(), 0.0};
    const std::size_t last_q = costs.Q_sequence().is_constant() ? 0 : T;
    const std::size_t last_r = costs.R_sequence().is_constant() ? 0 : T;
    for (std::size_t t = 0; t <= last_q; ++t) {
        auto [lo, hi] = symmetric_eigen_range(costs.Q(t));
        if (!(lo > 0.0))
            throw AssumptionViolation("Q_" + std::to_string(t) + " is not positive definite (lambda_min=" +
                                      std::to_string(lo) + ")");
        b.lower = std::min(b.lower, lo);
        b.upper = std::max(b.upper, hi);
    }
    for (std::size_t t = 0; t <= last_r; ++t) {
        auto [lo, hi] = symmetric_eigen_range(costs.R(t));
        if (!(lo > 0.0))
            throw AssumptionViolation("R_" + std::to_string(t) + " is not positive definite (lambda_min=" +
                                      std::to_string(lo) + ")");
        b.upper = std::max(b.upper, hi);
    }
    return b;
}

// ============================================================================
// DisturbanceSignal
// ============================================================================

class DisturbanceSignal {
public:
    DisturbanceSignal() = default;

    /// `bound` defaults to the largest sample norm; an explicit bound is checked.
    explicit DisturbanceSignal(std::vector<Vector> w, std::optional<double> bound = std::nullopt) : w_(std::move(w)) {
        double largest = 0.0;
        for (std::size_t t = 0; t < w_.size(); ++t) {
            if (t > 0)
                require_size(w_[t], w_[0].size(), "w_" + std::to_string(t));
            largest = std::max(largest, w_[t].norm());
        }
        if (bound && largest > *bound + 1e-12 * std::max(1.0, *bound))
            throw AssumptionViolation("disturbance sample exceeds bound W=" + std::to_string(*bound));
        W_ = bound.value_or(largest);
    }

    static DisturbanceSignal zeros(Eigen::Index n, std::size_t T) {
        return DisturbanceSignal(std::vector<Vector>(T, Vector::Zero(n)), 0.0);
    }

    [[nodiscard]] std::size_t size() const noexcept { return w_.size(); }
    [[nodiscard]] double bound() const noexcept { return W_; }
    [[nodiscard]] const Vector& operator[](std::size_t t) const { return w_.at(t); }
    [[nodiscard]] const std::vector<Vector>& samples() const noexcept { return w_; }

    [[nodiscard]] DisturbanceSignal prefix(std::size_t T) const {
        if (T > w_.size())
            throw ShapeError("disturbance prefix longer than signal");
        return DisturbanceSignal(std::vector<Vector>(w_.begin(), w_.begin() + static_cast<std::ptrdiff_t>(T)), W_);
    }

private:
    std::vector<Vector> w_;
    double              W_ = 0.0;
};

/// Emits a disturbance of the requested length; equal T gives equal output.
using DisturbanceGenerator = std::function<DisturbanceSignal(std::size_t T)>;

// ============================================================================
// Trajectory and rollouts
// ============================================================================

struct Trajectory {
    std::vector<Vector> states;      // x_0..x_T
    std::vector<Vector> inputs;      // u_0..u_T
    std::vector<double> stage_costs; // c_0..c_T
    double              total_cost = 0.0;

    [[nodiscard]] std::size_t horizon() const noexcept { return states.empty() ? 0 : states.size() - 1; }
};

namespace detail {

inline void check_rollout_shapes(const SystemDynamics& system, const QuadraticStageCost& costs, const Vector& x0,
                                 const DisturbanceSignal& w, std::size_t T) {
    require_size(x0, system.n(), "x0");
    if (costs.n() != system.n() || costs.m() != system.m())
        throw ShapeError("cost dimensions do not match the system");
    if (w.size() < T)
        throw ShapeError("disturbance has " + std::to_string(w.size()) + " samples, horizon needs " +
                         std::to_string(T));
    if (T > 0 && w[0].size() != system.n())
        throw ShapeError("disturbance dimension does not match the system");
    if (!system.covers(T))
        throw ShapeError("system matrices not defined through t=" + std::to_string(T - 1));
    if (!costs.covers(T))
        throw ShapeError("cost matrices not defined through t=" + std::to_string(T));
}

inline void guard_state(const Vector& x, std::size_t t) {
    const double norm = x.norm();
    if (!std::isfinite(norm) || norm > kOverflowNorm)
        throw OverflowError(t, norm);
}

} // namespace detail

/// Closed-loop rollout for t = 0..T; the terminal input is u_T = -K_T x_T + d_T.
[[nodiscard]] inline Trajectory simulate(const SystemDynamics& system, const LinearPolicy& policy, const Vector& x0,
                                         const DisturbanceSignal& w, const QuadraticStageCost& costs, std::size_t T) {
    detail::check_rollout_shapes(system, costs, x0, w, T);
    if (policy.n() != system.n() || policy.m() != system.m())
        throw ShapeError("policy gain dimensions do not match the system");

    Trajectory traj;
    traj.states.reserve(T + 1);
    traj.inputs.reserve(T + 1);
    traj.stage_costs.reserve(T + 1);

    Vector x = x0;
    detail::guard_state(x, 0);
    for (std::size_t t = 0;; ++t) {
        Vector u = policy.input(t, x);
        const double c = costs.stage(t, x, u);
        traj.total_cost += c;
        traj.stage_costs.push_back(c);
        traj.states.push_back(x);
        traj.inputs.push_back(u);
        if (t == T)
            break;
        x = system.A(t) * x + system.B(t) * u + w[t];
        detail::guard_state(x, t + 1);
    }
    return traj;
}

/// Open-loop rollout with given u_0..u_{T-1}; the terminal input is zero.
[[nodiscard]] inline Trajectory simulate_open_loop(const SystemDynamics& system, const std::vector<Vector>& inputs,
                                                   const Vector& x0, const DisturbanceSignal& w,
                                                   const QuadraticStageCost& costs, std::size_t T) {
    detail::check_rollout_shapes(system, costs, x0, w, T);
    if (inputs.size() < T)
        throw ShapeError("open-loop input sequence shorter than horizon");

    Trajectory traj;
    Vector     x = x0;
    for (std::size_t t = 0;; ++t) {
        Vector u = t < T ? inputs[t] : Vector::Zero(system.m());
        require_size(u, system.m(), "u_" + std::to_string(t));
        const double c = costs.stage(t, x, u);
        traj.total_cost += c;
        traj.stage_costs.push_back(c);
        traj.states.push_back(x);
        traj.inputs.push_back(u);
        if (t == T)
            break;
        x = system.A(t) * x + system.B(t) * u + w[t];
        detail::guard_state(x, t + 1);
    }
    return traj;
}

/// F_t = A_t - B_t K_t.
[[nodiscard]] inline Matrix closed_loop_matrix(const SystemDynamics& system, const LinearPolicy& policy,
                                               std::size_t t) {
    if (policy.n() != system.n() || policy.m() != system.m())
        throw ShapeError("policy gain dimensions do not match the system");
    return system.A(t) - system.B(t) * policy.gain(t);
}

/// F_0..F_{T-1}; constant when both system and policy are stationary.
[[nodiscard]] inline MatrixSequence closed_loop_sequence(const SystemDynamics& system, const LinearPolicy& policy,
                                                         std::size_t T) {
    if (system.A_sequence().is_constant() && system.B_sequence().is_constant() && policy.gains().is_constant())
        return MatrixSequence::constant(closed_loop_matrix(system, policy, 0));
    return MatrixSequence::generated([&](std::size_t t) { return closed_loop_matrix(system, policy, t); }, T);
}

/// Σ_t c_t(x_t, u_t) recomputed from the stored trajectory.
[[nodiscard]] inline double evaluate_cost(const Trajectory& traj, const QuadraticStageCost& costs) {
    if (traj.states.size() != traj.inputs.size())
        throw ShapeError("trajectory has mismatched state and input counts");
    if (!traj.states.empty() && !costs.covers(traj.states.size() - 1))
        throw ShapeError("cost matrices do not cover the trajectory");
    double total = 0.0;
    for (std::size_t t = 0; t < traj.states.size(); ++t)
        total += costs.stage(t, traj.states[t], traj.inputs[t]);
    return total;
}

// ============================================================================
// Tracking as regulation
// ============================================================================

/// ν_t = w_t - r_{t+1} + A_t r_t: the disturbance seen by the tracking error
/// x_t - r_t. Needs r_0..r_T where T = w.size().
[[nodiscard]] inline DisturbanceSignal tracking_transform(const SystemDynamics& system,
                                                          const std::vector<Vector>& reference,
                                                          const DisturbanceSignal& w) {
    const std::size_t T = w.size();
    if (reference.size() < T + 1)
        throw ShapeError("reference needs " + std::to_string(T + 1) + " samples, got " +
                         std::to_string(reference.size()));
    std::vector<Vector> nu;
    nu.reserve(T);
    for (std::size_t t = 0; t < T; ++t)
        nu.push_back(w[t] - reference[t + 1] + system.A(t) * reference[t]);
    return DisturbanceSignal(std::move(nu));
}

/// The original-coordinates policy that applies `policy` to the tracking error:
/// u_t = -K_t (x_t - r_t) + d_t.
[[nodiscard]] inline LinearPolicy tracking_policy(const LinearPolicy& policy, const std::vector<Vector>& reference) {
    std::vector<Vector> d;
    d.reserve(reference.size());
    for (std::size_t t = 0; t < reference.size(); ++t) {
        Vector offset = policy.gain(t) * reference[t];
        if (policy.offsets())
            offset += policy.offsets()->at(t);
        d.push_back(std::move(offset));
    }
    return policy.with_offsets(VectorSequence::table(std::move(d)));
}

} // namespace regstab
