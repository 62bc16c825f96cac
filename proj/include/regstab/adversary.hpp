#pragma once

// Disturbance constructions: the constant dominant-eigenvector signal, the
// transition-aligned signal w_{k-1} = C·Φ(k,0)·w̄₀, and seeded samples from the
// radius-W ball.

#include "model.hpp"
#include "transition.hpp"

#include <cstdint>
#include <random>

namespace regstab {

enum class RecipeKind { ConstantEigvec, PhiAligned, RandomBall };

[[nodiscard]] inline const char* to_string(RecipeKind k) {
    switch (k) {
    case RecipeKind::ConstantEigvec: return "eigvec";
    case RecipeKind::PhiAligned: return "phi";
    case RecipeKind::RandomBall: return "random";
    }
    return "eigvec";
}

struct DisturbanceRecipe {
    RecipeKind            kind = RecipeKind::ConstantEigvec;
    double                W = 1.0;
    std::uint64_t         seed = 0;
    std::optional<Vector> w0; // PhiAligned direction; first basis vector when unset
    std::string           provenance;
};

// ============================================================================
// Dominant eigen-direction
// ============================================================================

struct DominantDirection {
    Vector               v;                   // unit vector
    std::complex<double> eigenvalue;          // of largest modulus
    bool                 real_eigenvector = true;
    bool                 defective = false;   // fell back to the top right singular vector
    std::string          tag;
};

/// Unit vector associated with the eigenvalue of largest modulus.
///
/// Complex eigenvectors are rotated so their largest-modulus component is real
/// and positive before the real part is taken. The sign is fixed so the first
/// nonzero component is positive. A defective dominant eigenvalue (repeated,
/// with collapsed eigenvectors) falls back to the dominant right singular vector.
[[nodiscard]] inline DominantDirection dominant_direction(const Matrix& F) {
    if (F.rows() != F.cols())
        throw ShapeError("dominant_direction needs a square matrix");
    const Eigen::Index n = F.rows();
    DominantDirection out;

    if (n == 1) {
        out.v = Vector::Ones(1);
        out.eigenvalue = F(0, 0);
        out.tag = "eigvec";
        return out;
    }

    Eigen::EigenSolver<Matrix> solver(F, true);
    if (solver.info() != Eigen::Success)
        throw Error("eigen decomposition failed");
    const Eigen::VectorXcd lambda = solver.eigenvalues();
    const Eigen::MatrixXcd V = solver.eigenvectors();

    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i)
        if (std::abs(lambda(i)) > std::abs(lambda(best)) * (1.0 + 1e-12))
            best = i;
    out.eigenvalue = lambda(best);

    Eigen::VectorXcd vc = V.col(best).normalized();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == best)
            continue;
        const bool same_value = std::abs(lambda(j) - lambda(best)) <= 1e-8 * std::max(1.0, std::abs(lambda(best)));
        if (same_value && std::abs(vc.dot(V.col(j).normalized())) >= 1.0 - 1e-6)
            out.defective = true;
    }

    Vector v;
    if (out.defective) {
        Eigen::JacobiSVD<Matrix> svd(F, Eigen::ComputeFullV);
        v = svd.matrixV().col(0);
        out.tag = "defective-dominant-eigenvalue:singular-vector-fallback";
    } else {
        Eigen::Index pivot = 0;
        vc.cwiseAbs().maxCoeff(&pivot);
        const std::complex<double> phase = std::conj(vc(pivot)) / std::abs(vc(pivot));
        vc *= phase;
        v = vc.real();
        out.real_eigenvector = std::abs(out.eigenvalue.imag()) <= 1e-12 * std::max(1.0, std::abs(out.eigenvalue));
        out.tag = out.real_eigenvector ? "eigvec" : "eigvec:real-part-of-complex";
    }
    v.normalize();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (std::abs(v(j)) > 1e-12) {
            if (v(j) < 0.0)
                v = -v;
            break;
        }
    }
    out.v = std::move(v);
    return out;
}

// ============================================================================
// Generators
// ============================================================================

/// w_t = W·v for every t, v the dominant direction of F.
[[nodiscard]] inline DisturbanceGenerator constant_eigvec(const Matrix& F, double W) {
    const Vector w = W * dominant_direction(F).v;
    return [w, W](std::size_t T) { return DisturbanceSignal(std::vector<Vector>(T, w), W); };
}

struct PhiAlignedSignal {
    DisturbanceSignal signal;
    double            C = 0.0;
    Vector            w0;
};

/// w_{k-1} = C·Φ(k,0)·w̄₀ for k = 1..T with C = min_{0<=k<=T} W / ‖Φ(k,0)w̄₀‖.
/// Steps where Φ(k,0)w̄₀ vanishes are left out of the minimum.
[[nodiscard]] inline PhiAlignedSignal phi_aligned(const MatrixSequence& F, double W, std::size_t T,
                                                  std::optional<Vector> w0 = std::nullopt) {
    const Eigen::Index n = F.at(0).rows();
    Vector base = w0.value_or(Vector::Unit(n, 0));
    require_size(base, n, "w0");
    if (base.norm() == 0.0)
        throw Error("phi_aligned needs a nonzero w0");

    std::vector<Vector> aligned; // Φ(k,0)w̄₀, k = 0..T
    aligned.reserve(T + 1);
    aligned.push_back(base);
    for (std::size_t k = 1; k <= T; ++k)
        aligned.push_back(F.at(k - 1) * aligned.back());

    double C = std::numeric_limits<double>::infinity();
    for (const auto& a : aligned) {
        const double norm = a.norm();
        if (norm > 0.0)
            C = std::min(C, W / norm);
    }
    if (!std::isfinite(C))
        throw Error("w0 lies in the kernel of every transition matrix");

    std::vector<Vector> w;
    w.reserve(T);
    for (std::size_t k = 1; k <= T; ++k)
        w.push_back(C * aligned[k]);
    return {DisturbanceSignal(std::move(w), W), C, std::move(base)};
}

/// I.i.d. samples uniform in the radius-W ball; the first T' samples do not
/// depend on T.
[[nodiscard]] inline DisturbanceSignal random_ball(Eigen::Index n, double W, std::size_t T, std::uint64_t seed) {
    std::mt19937_64                        rng(seed);
    std::normal_distribution<double>       normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Vector>                    w;
    w.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        Vector dir(n);
        double len = 0.0;
        do {
            for (Eigen::Index i = 0; i < n; ++i)
                dir(i) = normal(rng);
            len = dir.norm();
        } while (len == 0.0);
        const double radius = W * std::pow(unit(rng), 1.0 / static_cast<double>(n));
        Vector sample = (radius / len) * dir;
        // Guard the last ulp so the bound holds exactly.
        if (sample.norm() > W)
            sample *= W / sample.norm();
        w.push_back(std::move(sample));
    }
    return DisturbanceSignal(std::move(w), W);
}

/// Generator for a recipe. `F` is the closed-loop sequence (constant for LTI).
[[nodiscard]] inline DisturbanceGenerator make_generator(const DisturbanceRecipe& recipe, const MatrixSequence& F) {
    switch (recipe.kind) {
    case RecipeKind::ConstantEigvec:
        return constant_eigvec(F.at(0), recipe.W);
    case RecipeKind::PhiAligned:
        return [F, recipe](std::size_t T) { return phi_aligned(F, recipe.W, T, recipe.w0).signal; };
    case RecipeKind::RandomBall: {
        const Eigen::Index n = F.at(0).rows();
        return [n, recipe](std::size_t T) { return random_ball(n, recipe.W, T, recipe.seed); };
    }
    }
    throw Error("unknown disturbance recipe");
}

} // namespace regstab
