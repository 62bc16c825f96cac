#pragma once

// Shared vocabulary: dense matrix aliases, error types, time-indexed
// sequences and the handful of linear-algebra readouts used everywhere
// (spectral norm, spectral radius, symmetric eigenvalue extrema).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace regstab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ============================================================================
// Errors
// ============================================================================

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Matrix or vector dimensions do not line up, or a sequence is too short.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A rollout left the representable range. `step` is the first offending t.
class OverflowError : public Error {
public:
    OverflowError(std::size_t step, double norm)
        : Error("state overflow at t=" + std::to_string(step) + " (|x_t|=" + std::to_string(norm) + ")"),
          step_(step),
          norm_(norm) {}

    [[nodiscard]] std::size_t step() const noexcept { return step_; }
    [[nodiscard]] double norm() const noexcept { return norm_; }

private:
    std::size_t step_;
    double      norm_;
};

/// A modelling assumption (e.g. positive definite stage costs) does not hold.
class AssumptionViolation : public Error {
public:
    using Error::Error;
};

/// An iterative solver stopped without meeting its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual) : Error(what), residual_(residual) {}
    [[nodiscard]] double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// A linear solve was too ill-conditioned to trust.
class ConditioningError : public Error {
public:
    ConditioningError(const std::string& what, double rcond) : Error(what), rcond_(rcond) {}
    [[nodiscard]] double rcond() const noexcept { return rcond_; }

private:
    double rcond_;
};

// States whose norm exceeds this abort a rollout.
inline constexpr double kOverflowNorm = 1e150;

// ============================================================================
// Time-indexed sequences
// ============================================================================

/// Either a single value valid for every t, or an explicit table indexed by t.
/// Generated sequences are evaluated once at construction so that repeated
/// reads are deterministic and cheap.
template<typename T>
class Sequence {
public:
    Sequence() = default;

    static Sequence constant(T value) {
        Sequence s;
        s.items_.push_back(std::move(value));
        s.constant_ = true;
        return s;
    }

    static Sequence table(std::vector<T> items) {
        if (items.empty())
            throw ShapeError("time-indexed table must contain at least one entry");
        Sequence s;
        s.items_ = std::move(items);
        s.constant_ = false;
        return s;
    }

    static Sequence generated(const std::function<T(std::size_t)>& generator, std::size_t count) {
        std::vector<T> items;
        items.reserve(count);
        for (std::size_t t = 0; t < count; ++t)
            items.push_back(generator(t));
        return table(std::move(items));
    }

    [[nodiscard]] const T& at(std::size_t t) const {
        if (constant_)
            return items_.front();
        if (t >= items_.size())
            throw ShapeError("time index " + std::to_string(t) + " beyond sequence length " +
                             std::to_string(items_.size()));
        return items_[t];
    }

    [[nodiscard]] const T& operator[](std::size_t t) const { return at(t); }

    [[nodiscard]] bool is_constant() const noexcept { return constant_; }

    /// Number of defined entries; unbounded for constant sequences.
    [[nodiscard]] std::size_t length() const noexcept {
        return constant_ ? std::numeric_limits<std::size_t>::max() : items_.size();
    }

    [[nodiscard]] bool defined_through(std::size_t t) const noexcept { return constant_ || t < items_.size(); }

    [[nodiscard]] const std::vector<T>& items() const noexcept { return items_; }

    /// Elementwise transform preserving constant-ness.
    template<typename F>
    [[nodiscard]] auto map(F&& f) const -> Sequence<std::decay_t<decltype(f(std::declval<const T&>()))>> {
        using U = std::decay_t<decltype(f(std::declval<const T&>()))>;
        std::vector<U> out;
        out.reserve(items_.size());
        for (const auto& item : items_)
            out.push_back(f(item));
        if (constant_)
            return Sequence<U>::constant(std::move(out.front()));
        return Sequence<U>::table(std::move(out));
    }

private:
    std::vector<T> items_;
    bool           constant_ = true;
};

using MatrixSequence = Sequence<Matrix>;
using VectorSequence = Sequence<Vector>;

// ============================================================================
// Linear algebra readouts
// ============================================================================

/// Largest singular value.
[[nodiscard]] inline double spectral_norm(const Matrix& m) {
    if (m.size() == 0)
        return 0.0;
    if (m.rows() == 1 || m.cols() == 1)
        return m.norm();
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

[[nodiscard]] inline Eigen::VectorXcd eigenvalues(const Matrix& m) {
    if (m.rows() != m.cols())
        throw ShapeError("eigenvalues of a non-square matrix");
    Eigen::EigenSolver<Matrix> solver(m, false);
    if (solver.info() != Eigen::Success)
        throw Error("eigenvalue solver failed");
    return solver.eigenvalues();
}

[[nodiscard]] inline double spectral_radius(const Matrix& m) {
    if (m.rows() == 1)
        return std::abs(m(0, 0));
    return eigenvalues(m).cwiseAbs().maxCoeff();
}

[[nodiscard]] inline bool is_symmetric(const Matrix& m, double tol = 1e-12) {
    if (m.rows() != m.cols())
        return false;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

/// (λ_min, λ_max) of a symmetric matrix.
[[nodiscard]] inline std::pair<double, double> symmetric_eigen_range(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw Error("symmetric eigenvalue solver failed");
    return {solver.eigenvalues().minCoeff(), solver.eigenvalues().maxCoeff()};
}

[[nodiscard]] inline bool all_finite(const Matrix& m) { return m.allFinite(); }

[[nodiscard]] inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Relative difference |a-b| / max(1, |b|).
[[nodiscard]] inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    if (m.rows() != rows || m.cols() != cols)
        throw ShapeError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

inline void require_size(const Vector& v, Eigen::Index size, const std::string& what) {
    if (v.size() != size)
        throw ShapeError(what + ": expected length " + std::to_string(size) + ", got " + std::to_string(v.size()));
}

} // namespace regstab
