#pragma once

// Acceptance criteria as functions returning a verdict plus a one-line detail.
// The acceptance binary runs them at full size; the property tests reuse the
// structural suites with fewer cases.

#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <numeric>
#include <random>

namespace regstab::acceptance {

struct Verdict {
    bool        pass = false;
    std::string detail;
    double      seconds = 0.0;
};

namespace detail {

inline std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, a, b, c, d);
    return buf;
}

class Stopwatch {
public:
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline Matrix gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    std::normal_distribution<double> N(0.0, scale);
    return Matrix::NullaryExpr(r, c, [&] { return N(rng); });
}

inline Vector gaussian_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
    std::normal_distribution<double> N(0.0, scale);
    return Vector::NullaryExpr(n, [&] { return N(rng); });
}

inline Matrix with_radius(std::mt19937_64& rng, Eigen::Index n, double rho) {
    Matrix F;
    double r = 0.0;
    do {
        F = gaussian(rng, n, n);
        r = spectral_radius(F);
    } while (r < 1e-3);
    return (rho / r) * F;
}

inline Matrix spd(std::mt19937_64& rng, Eigen::Index n, double lo = 0.5, double spread = 2.0) {
    Eigen::HouseholderQR<Matrix> qr(gaussian(rng, n, n));
    const Matrix U = qr.householderQ();
    std::uniform_real_distribution<double> u(lo, lo + spread);
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i)
        d(i) = u(rng);
    return symmetrize(U * d.asDiagonal() * U.transpose());
}

inline double relative(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Centered moving average, windows truncated at the ends.
inline std::vector<double> smooth5(const std::vector<double>& y) {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const std::size_t lo = i >= 2 ? i - 2 : 0;
        const std::size_t hi = std::min(y.size() - 1, i + 2);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j)
            s += y[j];
        out[i] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

inline std::vector<std::size_t> log_horizons(std::size_t lo, std::size_t hi, std::size_t count) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) {
        const double e = std::log(static_cast<double>(lo)) +
                         (std::log(static_cast<double>(hi)) - std::log(static_cast<double>(lo))) *
                             static_cast<double>(i) / static_cast<double>(count - 1);
        const auto T = static_cast<std::size_t>(std::llround(std::exp(e)));
        if (out.empty() || T > out.back())
            out.push_back(T);
    }
    return out;
}

} // namespace detail

// ============================================================================
// 1. Figure reproduction
// ============================================================================

inline Verdict figure1_reproduction() {
    detail::Stopwatch clock;
    const auto curves = cli::figure1_curves(cli::parse_config(cli::figure1_document()));
    const auto& k1 = curves.at(0).second.time_averaged;
    const auto& k2 = curves.at(1).second.time_averaged;
    const auto& k3 = curves.at(2).second.time_averaged;

    const auto   peak = std::max_element(k1.begin(), k1.end());
    const auto   peak_T = static_cast<std::size_t>(peak - k1.begin()) + 1;
    const double final_ratio = k1.back() / *peak;
    const bool   a = peak_T < 100 && final_ratio >= 0.95;

    bool b = true;
    for (const auto* y : {&k2, &k3}) {
        const auto s = detail::smooth5(*y);
        for (std::size_t T = 21; T <= 100; ++T)
            b = b && s[T - 1] > s[T - 2];
    }
    const bool c = k1.back() < k2.back() && k2.back() < k3.back();

    Verdict v;
    v.seconds = clock.seconds();
    v.pass = a && b && c && v.seconds < 10.0;
    v.detail = detail::fmt("(a) K1 peak at T=%.0f, final/peak=%.4f; ", static_cast<double>(peak_T), final_ratio) +
               (b ? "(b) K2,K3 increasing; " : "(b) K2/K3 not increasing; ") +
               detail::fmt("(c) R/T at 100: %.4g < %.4g < %.4g", k1.back(), k2.back(), k3.back());
    return v;
}

// ============================================================================
// 2. Stability <=> bounded average regret
// ============================================================================

struct EquivalenceCase {
    std::string        id;
    SystemDynamics     system;
    LinearPolicy       policy;
    QuadraticStageCost costs;
};

inline std::vector<EquivalenceCase> equivalence_cases(std::size_t random_loops, std::uint64_t seed) {
    const auto doc = cli::parse_config(cli::figure1_document());
    std::vector<EquivalenceCase> cases;
    for (const auto& p : doc.policies)
        cases.push_back({p.id, *doc.system, p.policy, *doc.costs});

    std::mt19937_64                        rng(seed);
    std::uniform_real_distribution<double> stable(0.3, 0.98), unstable(1.02, 1.5);
    std::bernoulli_distribution            coin(0.5);
    for (std::size_t i = 0; i < random_loops; ++i) {
        const double rho = coin(rng) ? stable(rng) : unstable(rng);
        const Matrix F = detail::with_radius(rng, 2, rho);
        const Matrix B = detail::gaussian(rng, 2, 1);
        const Matrix K = detail::gaussian(rng, 1, 2, 0.5);
        cases.push_back({"random" + std::to_string(i), SystemDynamics::lti(F + B * K, B), LinearPolicy::stationary(K),
                         QuadraticStageCost::stationary(Matrix::Identity(2, 2), Matrix::Identity(1, 1))});
    }
    return cases;
}

inline Verdict stability_regret_equivalence(std::size_t random_loops = 20, std::uint64_t seed = 2024) {
    detail::Stopwatch clock;
    const auto horizons = detail::log_horizons(10, 10000, 25);
    std::size_t mismatches = 0, stable = 0;
    std::string first_mismatch;
    for (const auto& c : equivalence_cases(random_loops, seed)) {
        const Matrix F = closed_loop_matrix(c.system, c.policy, 0);
        const bool   is_stable = classify_lti(F).classification == Stability::AsymptoticallyStable;
        const auto   curve = regret_curve(c.system, c.costs, c.policy, Vector::Zero(2), constant_eigvec(F, 1.0), horizons);
        const bool   bounded = growth_classify(curve) == GrowthClass::BoundedAverage;
        stable += is_stable ? 1 : 0;
        if (bounded != is_stable) {
            ++mismatches;
            if (first_mismatch.empty())
                first_mismatch = " first: " + c.id + detail::fmt(" rho=%.4f", spectral_radius(F));
        }
    }
    Verdict v;
    v.seconds = clock.seconds();
    v.pass = mismatches == 0 && v.seconds < 60.0;
    v.detail = detail::fmt("%.0f loops (%.0f stable), %.0f mismatches", static_cast<double>(random_loops + 3),
                           static_cast<double>(stable), static_cast<double>(mismatches)) +
               first_mismatch;
    return v;
}

// ============================================================================
// 3. Linear-regret certificate on stable loops
// ============================================================================

inline Verdict certificate_on_stable_loops(std::size_t loops = 50, std::uint64_t seed = 7) {
    detail::Stopwatch                   clock;
    std::mt19937_64                     rng(seed);
    std::uniform_int_distribution<int>  dn(1, 3), dm(1, 2);
    std::uniform_real_distribution<double> radius(0.05, 0.9);
    std::size_t violations = 0, not_applicable = 0, samples = 0;
    double      worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < loops; ++i) {
        const Eigen::Index n = dn(rng), m = dm(rng);
        const Matrix F = detail::with_radius(rng, n, radius(rng));
        const Matrix B = detail::gaussian(rng, n, m);
        const Matrix K = detail::gaussian(rng, m, n, 0.5);
        const auto   system = SystemDynamics::lti(F + B * K, B);
        const auto   costs = QuadraticStageCost::stationary(detail::spd(rng, n), detail::spd(rng, m));
        CertificateOptions opt;
        opt.seed = seed * 1000 + i;
        const auto cert = theorem1_certificate(system, costs, LinearPolicy::stationary(K), 1.0, 1.0, opt);
        if (!cert.applicable) {
            ++not_applicable;
            continue;
        }
        samples += cert.samples;
        worst = std::max(worst, cert.max_violation);
        violations += cert.holds ? 0 : 1;
    }
    Verdict v;
    v.seconds = clock.seconds();
    v.pass = violations == 0 && not_applicable == 0;
    v.detail = detail::fmt("%.0f loops, %.0f (T, draw) checks, %.0f violating loops, worst relative margin %.3g",
                           static_cast<double>(loops), static_cast<double>(samples), static_cast<double>(violations),
                           worst) +
               (not_applicable ? detail::fmt(", %.0f not applicable", static_cast<double>(not_applicable)) : "");
    return v;
}

// ============================================================================
// 4. Quadratic lower bound for non-contractive scalar loops
// ============================================================================

inline Verdict quadratic_lower_bound() {
    detail::Stopwatch clock;
    const auto        costs = QuadraticStageCost::stationary(Matrix::Identity(1, 1), Matrix::Identity(1, 1));
    std::size_t       failures = 0;
    double            tightest = std::numeric_limits<double>::infinity();
    for (const double f : {1.0, 1.05, 1.1}) {
        for (std::size_t T = 1; T <= 100; ++T) {
            const auto chk = theorem3_lower_bound_check(Matrix::Constant(1, 1, f), costs, 1.0, T);
            failures += chk.applicable && chk.satisfied ? 0 : 1;
            tightest = std::min(tightest, chk.cost / chk.bound);
        }
    }
    Verdict v;
    v.seconds = clock.seconds();
    v.pass = failures == 0;
    v.detail = detail::fmt("300 (F, T) pairs, %.0f failures, min J_T/bound = %.4f", static_cast<double>(failures),
                           tightest);
    return v;
}

// ============================================================================
// 5. Recursion vs batch hindsight solutions
// ============================================================================

struct HindsightInstance {
    SystemDynamics     system;
    QuadraticStageCost costs;
    Vector             x0;
    DisturbanceSignal  w;
    std::size_t        T;
};

inline HindsightInstance random_hindsight_instance(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> dn(1, 4), dm(1, 2), dT(1, 50);
    std::bernoulli_distribution        tv(0.5);
    const Eigen::Index n = dn(rng), m = dm(rng);
    const auto         T = static_cast<std::size_t>(dT(rng));
    const bool         varying = tv(rng);
    std::vector<Matrix> A, B, Q, R;
    std::vector<Vector> w;
    for (std::size_t t = 0; t <= (varying ? T : 0); ++t) {
        A.push_back(detail::with_radius(rng, n, 1.05));
        B.push_back(detail::gaussian(rng, n, m));
        Q.push_back(detail::spd(rng, n));
        R.push_back(detail::spd(rng, m));
    }
    for (std::size_t t = 0; t < T; ++t)
        w.push_back(detail::gaussian_vector(rng, n));
    const Vector x0 = detail::gaussian_vector(rng, n);
    if (!varying)
        return {SystemDynamics::lti(A[0], B[0]), QuadraticStageCost::stationary(Q[0], R[0]), x0,
                DisturbanceSignal(std::move(w)), T};
    A.pop_back();
    B.pop_back();
    return {SystemDynamics::ltv(std::move(A), std::move(B)),
            QuadraticStageCost(MatrixSequence::table(std::move(Q)), MatrixSequence::table(std::move(R))), x0,
            DisturbanceSignal(std::move(w)), T};
}

inline Verdict hindsight_equivalence(std::size_t instances = 100, std::uint64_t seed = 11) {
    detail::Stopwatch clock;
    std::mt19937_64   rng(seed);
    double            worst_gap = 0.0, worst_slope = 0.0;
    std::size_t       failures = 0;
    for (std::size_t i = 0; i < instances; ++i) {
        const auto in = random_hindsight_instance(rng);
        const auto rec = solve_hindsight(in.system, in.costs, in.x0, in.w, in.T);
        const auto bat = batch_oracle(in.system, in.costs, in.x0, in.w, in.T);
        const double scale = std::max(1.0, rec.optimal_cost);
        const double gap = std::abs(rec.optimal_cost - bat.optimal_cost) / scale;
        worst_gap = std::max(worst_gap, gap);
        bool ok = gap <= 1e-8;

        // Stationarity: no perturbation lowers the cost, and the symmetric
        // difference quotient (the directional derivative) vanishes.
        auto cost_of = [&](const std::vector<Vector>& u) {
            return simulate_open_loop(in.system, u, in.x0, in.w, in.costs, in.T).total_cost;
        };
        const double J = cost_of(rec.inputs);
        for (int k = 0; k < 4; ++k) {
            std::vector<Vector> dir;
            double              norm2 = 0.0;
            for (const auto& u : rec.inputs) {
                dir.push_back(detail::gaussian_vector(rng, u.size()));
                norm2 += dir.back().squaredNorm();
            }
            const double eps = 1e-3 / std::sqrt(norm2);
            auto plus = rec.inputs, minus = rec.inputs;
            for (std::size_t t = 0; t < dir.size(); ++t) {
                plus[t] += eps * dir[t];
                minus[t] -= eps * dir[t];
            }
            const double Jp = cost_of(plus), Jm = cost_of(minus);
            const double slope = std::abs(Jp - Jm) / (2e-3 * scale);
            worst_slope = std::max(worst_slope, slope);
            ok = ok && Jp >= J - 1e-12 * scale && Jm >= J - 1e-12 * scale && slope <= 1e-6;
        }
        failures += ok ? 0 : 1;
    }
    Verdict v;
    v.seconds = clock.seconds();
    v.pass = failures == 0;
    v.detail = detail::fmt("%.0f instances, worst relative gap %.2e, worst relative directional derivative %.2e",
                           static_cast<double>(instances), worst_gap, worst_slope) +
               (failures ? detail::fmt(", %.0f failures", static_cast<double>(failures)) : "");
    return v;
}

// ============================================================================
// 6. Discounted LQR example
// ============================================================================

inline Verdict discounted_example(std::uint64_t seed = 3) {
    detail::Stopwatch clock;
    const auto model = DiscountedLqrModel::build(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 1.0),
                                                 Matrix::Identity(1, 1), Matrix::Identity(1, 1), 0.1);
    const bool residual_ok = model.dare_residual <= 1e-10;
    const bool gamma_ok = model.rho > 1.0 && model.alpha_norm < 1.0;

    std::mt19937_64                        rng(seed);
    std::uniform_int_distribution<int>     dT(1, 100);
    std::uniform_real_distribution<double> dx(-1.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const auto   T = static_cast<std::size_t>(dT(rng));
        const Vector x0 = Vector::Constant(1, dx(rng));
        const auto   w = random_ball(1, 1.0, T, seed * 1000 + static_cast<std::uint64_t>(i));
        const double closed = discounted_cost_closed_form(model, x0, w, T);
        const double sim = discounted_cost_simulated(model, x0, w, T);
        worst = std::max(worst, std::abs(closed - sim) / std::max(std::abs(sim), 1e-300));
    }
    const bool closed_ok = worst <= 1e-8;

    std::vector<std::size_t> Ts(500);
    std::iota(Ts.begin(), Ts.end(), 1);
    const auto rep = linear_regret_despite_instability(model, 1.0, 1.0, Ts);
    const bool bound_ok = rep.applicable && rep.holds;
    const bool diverges = rep.undiscounted_growth > 100.0;

    Verdict v;
    v.seconds = clock.seconds();
    v.pass = residual_ok && gamma_ok && closed_ok && bound_ok && diverges;
    v.detail = detail::fmt("residual %.2e, rho %.4f, alpha*|F| %.4f, ", model.dare_residual, model.rho,
                           model.alpha_norm) +
               detail::fmt("closed-form vs simulated worst rel %.2e, ", worst) +
               (bound_ok ? "bound holds T<=500, " : "bound violated, ") +
               detail::fmt("undiscounted (J200/200)/(J20/20) = %.3g", rep.undiscounted_growth);
    return v;
}

// ============================================================================
// 7. Structural property suites
// ============================================================================

struct SuiteResult {
    std::size_t cases = 0;
    std::size_t failures = 0;
    double      worst = 0.0;
};

inline SuiteResult semigroup_suite(std::size_t cases, std::uint64_t seed) {
    std::mt19937_64                    rng(seed);
    std::uniform_int_distribution<int> dn(1, 4), dT(2, 30);
    SuiteResult                        r;
    for (std::size_t i = 0; i < cases; ++i) {
        const Eigen::Index n = dn(rng);
        const auto         T = static_cast<std::size_t>(dT(rng));
        std::vector<Matrix> F;
        for (std::size_t t = 0; t < T; ++t)
            F.push_back(detail::with_radius(rng, n, 0.95));
        const auto seq = MatrixSequence::table(std::move(F));
        std::uniform_int_distribution<std::size_t> pick(0, T);
        std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
        if (a > b) std::swap(a, b);
        if (b > c) std::swap(b, c);
        if (a > b) std::swap(a, b);
        const Matrix lhs = phi(seq, c, a);
        const double err = (lhs - phi(seq, c, b) * phi(seq, b, a)).norm() / std::max(1.0, lhs.norm());
        r.worst = std::max(r.worst, err);
        r.failures += err <= 1e-10 ? 0 : 1;
        ++r.cases;
    }
    return r;
}

struct LoopInstance {
    SystemDynamics     system;
    LinearPolicy       policy;
    QuadraticStageCost costs;
    Vector             x0;
    DisturbanceSignal  w;
    std::size_t        T;
};

inline LoopInstance random_loop(std::mt19937_64& rng, std::size_t max_T = 40) {
    std::uniform_int_distribution<int>         dn(1, 3), dm(1, 2);
    std::uniform_int_distribution<std::size_t> dT(1, max_T);
    std::uniform_real_distribution<double>     radius(0.2, 1.2);
    const Eigen::Index n = dn(rng), m = dm(rng);
    const std::size_t  T = dT(rng);
    const Matrix       F = detail::with_radius(rng, n, radius(rng));
    const Matrix       B = detail::gaussian(rng, n, m);
    const Matrix       K = detail::gaussian(rng, m, n, 0.5);
    return {SystemDynamics::lti(F + B * K, B), LinearPolicy::stationary(K),
            QuadraticStageCost::stationary(detail::spd(rng, n), detail::spd(rng, m)), detail::gaussian_vector(rng, n),
            random_ball(n, 1.0, T, rng()), T};
}

inline SuiteResult nonnegativity_suite(std::size_t cases, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SuiteResult     r;
    for (std::size_t i = 0; i < cases; ++i) {
        const auto   in = random_loop(rng);
        const auto   ev = evaluate_regret(in.system, in.costs, in.policy, in.x0, in.w, in.T);
        const double scaled = ev.regret / std::max(1.0, ev.benchmark_cost);
        r.worst = std::min(r.worst, scaled);
        r.failures += scaled >= -1e-9 ? 0 : 1;
        ++r.cases;
    }
    return r;
}

inline SuiteResult scaling_suite(std::size_t cases, std::uint64_t seed) {
    std::mt19937_64                        rng(seed);
    std::uniform_real_distribution<double> dg(0.1, 10.0);
    SuiteResult                            r;
    for (std::size_t i = 0; i < cases; ++i) {
        const auto   in = random_loop(rng);
        const double gamma = dg(rng);
        const double base = regret(in.system, in.costs, in.policy, in.x0, in.w, in.T);
        const double scaled = regret(in.system, in.costs.scaled(gamma), in.policy, in.x0, in.w, in.T);
        const double err = std::abs(scaled - gamma * base) / std::max(1.0, std::abs(gamma * base));
        r.worst = std::max(r.worst, err);
        r.failures += err <= 1e-10 ? 0 : 1;
        ++r.cases;
    }
    return r;
}

inline SuiteResult phi_aligned_suite(std::size_t cases, std::uint64_t seed) {
    std::mt19937_64                        rng(seed);
    std::uniform_int_distribution<int>     dn(1, 4), dT(1, 40);
    std::uniform_real_distribution<double> radius(0.5, 1.3), dW(0.1, 3.0);
    SuiteResult                            r;
    for (std::size_t i = 0; i < cases; ++i) {
        const Eigen::Index n = dn(rng);
        const auto         T = static_cast<std::size_t>(dT(rng));
        const bool         varying = i % 2 == 1;
        std::vector<Matrix> F;
        for (std::size_t t = 0; t < (varying ? T : 1); ++t)
            F.push_back(detail::with_radius(rng, n, radius(rng)));
        const auto seq = varying ? MatrixSequence::table(F) : MatrixSequence::constant(F[0]);
        const auto adv = phi_aligned(seq, dW(rng), T, detail::gaussian_vector(rng, n));

        // free loop x_{t+1} = F_t x_t + w_t from x_0 = 0
        Vector x = Vector::Zero(n);
        double worst = 0.0;
        for (std::size_t t = 1; t <= T; ++t) {
            x = seq.at(t - 1) * x + adv.signal[t - 1];
            const Vector expected = static_cast<double>(t) * adv.C * (phi(seq, t, 0) * adv.w0);
            worst = std::max(worst, (x - expected).norm() / std::max(1.0, expected.norm()));
        }
        r.worst = std::max(r.worst, worst);
        r.failures += worst <= 1e-8 ? 0 : 1;
        ++r.cases;
    }
    return r;
}

inline SuiteResult tracking_suite(std::size_t cases, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SuiteResult     r;
    for (std::size_t i = 0; i < cases; ++i) {
        const auto          in = random_loop(rng, 30);
        const Eigen::Index  n = in.system.n();
        std::vector<Vector> ref;
        for (std::size_t t = 0; t <= in.T; ++t)
            ref.push_back(detail::gaussian_vector(rng, n));
        const auto original = simulate(in.system, tracking_policy(in.policy, ref), in.x0, in.w, in.costs, in.T);
        const auto nu = tracking_transform(in.system, ref, in.w);
        const auto error = simulate(in.system, in.policy, in.x0 - ref[0], nu, in.costs, in.T);
        double worst = 0.0;
        for (std::size_t t = 0; t <= in.T; ++t) {
            const Vector e = original.states[t] - ref[t];
            worst = std::max(worst, (e - error.states[t]).norm() / std::max(1.0, e.norm()));
            worst = std::max(worst, (original.inputs[t] - error.inputs[t]).norm() /
                                        std::max(1.0, original.inputs[t].norm()));
        }
        r.worst = std::max(r.worst, worst);
        r.failures += worst <= 1e-12 ? 0 : 1;
        ++r.cases;
    }
    return r;
}

inline Verdict structural_suites(std::size_t cases = 200, std::uint64_t seed = 99) {
    detail::Stopwatch clock;
    const SuiteResult s[] = {semigroup_suite(cases, seed), nonnegativity_suite(cases, seed + 1),
                             scaling_suite(cases, seed + 2), phi_aligned_suite(cases, seed + 3),
                             tracking_suite(cases, seed + 4)};
    std::size_t failures = 0;
    for (const auto& x : s)
        failures += x.failures;
    Verdict v;
    v.seconds = clock.seconds();
    v.pass = failures == 0 && v.seconds < 120.0;
    v.detail = detail::fmt("%.0f cases per suite; worst: semigroup %.1e, regret floor %.1e, ", static_cast<double>(cases),
                           s[0].worst, s[1].worst) +
               detail::fmt("scaling %.1e, phi-aligned %.1e, tracking %.1e", s[2].worst, s[3].worst, s[4].worst) +
               (failures ? detail::fmt(", %.0f failures", static_cast<double>(failures)) : "");
    return v;
}

} // namespace regstab::acceptance
