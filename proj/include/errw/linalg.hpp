#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "errw/dense_matrix.hpp"
#include "errw/error.hpp"

namespace errw {

namespace tolerance {
inline constexpr double solve_residual = 1e-8;
inline constexpr double pivot = 1e-12;
inline constexpr double sign_step = 1e-12;
inline constexpr double symmetry = 1e-9;
inline constexpr double lyapunov_residual = 1e-8;
} // namespace tolerance

namespace detail {

/// Gaussian elimination with partial pivoting on a copy of `a`; solves for all
/// columns of `b` at once.
inline DenseMatrix gepp_solve(DenseMatrix a, DenseMatrix b) {
    const std::size_t n = a.rows();
    const std::size_t k = b.cols();
    const double threshold = tolerance::pivot * a.max_abs();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::abs(a(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::abs(a(r, col));
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (!(best > threshold))
            throw NumericalError("singular matrix: pivot " + std::to_string(best) + " at column " +
                                 std::to_string(col));
        if (piv != col) {
            std::swap_ranges(a.row(col).begin(), a.row(col).end(), a.row(piv).begin());
            std::swap_ranges(b.row(col).begin(), b.row(col).end(), b.row(piv).begin());
        }
        const double inv = 1.0 / a(col, col);
        const double* acol = a.row(col).data();
        const double* bcol = b.row(col).data();
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a(r, col) * inv;
            if (f == 0.0) continue;
            double* ar = a.row(r).data();
            for (std::size_t c = col; c < n; ++c) ar[c] -= f * acol[c];
            double* br = b.row(r).data();
            for (std::size_t c = 0; c < k; ++c) br[c] -= f * bcol[c];
        }
    }
    for (std::size_t col = n; col-- > 0;) {
        double* bc = b.row(col).data();
        for (std::size_t r = col + 1; r < n; ++r) {
            const double arc = a(col, r);
            if (arc == 0.0) continue;
            const double* br = b.row(r).data();
            for (std::size_t c = 0; c < k; ++c) bc[c] -= arc * br[c];
        }
        const double inv = 1.0 / a(col, col);
        for (std::size_t c = 0; c < k; ++c) bc[c] *= inv;
    }
    return b;
}

} // namespace detail

/// Solves a·x = b by Gaussian elimination with partial pivoting. The residual
/// ‖a·x − b‖_max ≤ 1e-8·(1 + ‖b‖_max) is verified before returning.
inline DenseMatrix solve_linear_system(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.square()) throw InvalidArgument("solve_linear_system: matrix not square");
    if (b.rows() != a.rows()) throw InvalidArgument("solve_linear_system: right-hand side row mismatch");
    if (a.rows() == 0) return b;
    DenseMatrix x = detail::gepp_solve(a, b);
    if (!x.all_finite()) throw NumericalError("solve_linear_system: non-finite solution");
    const double residual = max_abs_diff(matmul(a, x), b);
    if (residual > tolerance::solve_residual * (1.0 + b.max_abs()))
        throw NumericalError("solve_linear_system: residual " + std::to_string(residual) +
                             " exceeds tolerance");
    return x;
}

/// General inverse via GEPP (no residual verification; callers check what
/// they need).
inline DenseMatrix inverse(const DenseMatrix& a) {
    if (!a.square()) throw InvalidArgument("inverse: matrix not square");
    DenseMatrix inv = detail::gepp_solve(a, DenseMatrix::identity(a.rows()));
    if (!inv.all_finite()) throw NumericalError("inverse: non-finite result");
    return inv;
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
/// Throws NumericalError when a pivot drops below 1e-12 of the largest diagonal.
inline DenseMatrix spd_inverse(const DenseMatrix& a) {
    if (!a.square()) throw InvalidArgument("spd_inverse: matrix not square");
    const std::size_t n = a.rows();
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a(i, i));
    const double threshold = tolerance::pivot * max_diag;

    // Lower Cholesky factor, row-major, dot products over contiguous rows.
    DenseMatrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const double* lj = l.row(j).data();
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= lj[k] * lj[k];
        if (!(d > threshold))
            throw NumericalError("spd_inverse: matrix not positive definite (pivot " +
                                 std::to_string(d) + " at " + std::to_string(j) + ")");
        const double djj = std::sqrt(d);
        l(j, j) = djj;
        for (std::size_t i = j + 1; i < n; ++i) {
            const double* li = l.row(i).data();
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
            l(i, j) = s / djj;
        }
    }

    // w = l⁻¹, built row by row: w_i = (e_i − Σ_{k<i} l_ik w_k) / l_ii.
    DenseMatrix w(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double* wi = w.row(i).data();
        wi[i] = 1.0;
        for (std::size_t k = 0; k < i; ++k) {
            const double lik = l(i, k);
            if (lik == 0.0) continue;
            const double* wk = w.row(k).data();
            for (std::size_t c = 0; c <= k; ++c) wi[c] -= lik * wk[c];
        }
        const double inv = 1.0 / l(i, i);
        for (std::size_t c = 0; c <= i; ++c) wi[c] *= inv;
    }

    // a⁻¹ = wᵀ w; accumulate the lower triangle then mirror.
    DenseMatrix out(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const double* wk = w.row(k).data();
        for (std::size_t r = 0; r <= k; ++r) {
            const double wkr = wk[r];
            if (wkr == 0.0) continue;
            double* orow = out.row(r).data();
            for (std::size_t c = 0; c <= r; ++c) orow[c] += wkr * wk[c];
        }
    }
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < r; ++c) out(c, r) = out(r, c);
    if (!out.all_finite()) throw NumericalError("spd_inverse: non-finite result");
    return out;
}

/// Moore-Penrose pseudoinverse of a connected graph's Laplacian through the
/// rank-one shift L† = (L + J/n)⁻¹ − J/n. A disconnected Laplacian makes the
/// shifted matrix singular and is reported as a NumericalError.
inline DenseMatrix laplacian_pseudoinverse(const DenseMatrix& lap) {
    if (!lap.square() || lap.rows() == 0) throw InvalidArgument("laplacian_pseudoinverse: need a square matrix");
    const std::size_t n = lap.rows();
    const double scale = std::max(1.0, lap.max_abs());
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row_sum += lap(i, j);
            if (std::abs(lap(i, j) - lap(j, i)) > 1e-12 * scale)
                throw InvalidArgument("laplacian_pseudoinverse: matrix not symmetric");
        }
        if (std::abs(row_sum) > 1e-9 * scale)
            throw InvalidArgument("laplacian_pseudoinverse: rows must sum to zero");
    }
    const double shift = 1.0 / static_cast<double>(n);
    DenseMatrix shifted = lap;
    for (double& x : shifted.data()) x += shift;
    DenseMatrix pinv;
    try {
        pinv = spd_inverse(shifted);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("laplacian_pseudoinverse: graph appears disconnected (") +
                             e.what() + ")");
    }
    for (double& x : pinv.data()) x -= shift;
    return pinv;
}

/// Helmert basis of 1⊥: row k (1-based) is (1,…,1,−k,0,…,0)/√(k(k+1)) with k
/// leading ones. Q Qᵀ = I and QᵀQ = I − J/n.
inline DenseMatrix orthonormal_complement_basis(std::size_t n) {
    if (n < 2) throw InvalidArgument("orthonormal_complement_basis: n must be at least 2");
    DenseMatrix q(n - 1, n);
    for (std::size_t k = 1; k < n; ++k) {
        const double kd = static_cast<double>(k);
        const double norm = 1.0 / std::sqrt(kd * (kd + 1.0));
        for (std::size_t c = 0; c < k; ++c) q(k - 1, c) = norm;
        q(k - 1, k) = -kd * norm;
    }
    return q;
}

struct LyapunovSolution {
    DenseMatrix sigma;
    double residual = 0.0;   ///< ‖aΣ + Σaᵀ − I‖_max
    int iterations = 0;
};

/// Solves a·Σ + Σ·aᵀ = I for positive-stable a (every eigenvalue has a strictly
/// positive real part).
///
/// Newton iteration for the matrix sign function on
///     Z = [[a, −I], [0, −aᵀ]],
/// whose sign is [[I, −2Σ], [0, −I]]. Frobenius-norm scaling is applied until
/// the iterates settle. The solution is symmetrized and its residual verified.
inline LyapunovSolution lyapunov_solve(const DenseMatrix& a, int max_iterations = 100) {
    if (!a.square() || a.rows() == 0) throw InvalidArgument("lyapunov_solve: need a square matrix");
    const std::size_t m = a.rows();
    const std::size_t m2 = 2 * m;
    DenseMatrix z(m2, m2);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            z(i, j) = a(i, j);
            z(m + i, m + j) = -a(j, i);
        }
        z(i, m + i) = -1.0;
    }

    LyapunovSolution out;
    bool converged = false;
    bool scaling = true;
    double previous_step = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= max_iterations; ++it) {
        DenseMatrix zinv;
        try {
            zinv = inverse(z);
        } catch (const NumericalError&) {
            throw NumericalError("lyapunov_solve: singular iterate at step " + std::to_string(it) +
                                 " (spectrum touches the imaginary axis; matrix not stable)");
        }
        double mu = 1.0;
        if (scaling) mu = std::sqrt(zinv.frobenius_norm() / z.frobenius_norm());
        DenseMatrix next(m2, m2);
        for (std::size_t k = 0; k < next.size(); ++k)
            next.data()[k] = 0.5 * (mu * z.data()[k] + zinv.data()[k] / mu);
        const double step = max_abs_diff(next, z);
        const double size = std::max(1.0, next.max_abs());
        z = std::move(next);
        out.iterations = it;
        if (step <= tolerance::sign_step * size) {
            converged = true;
            break;
        }
        if (step <= 1e-2 * size) scaling = false;
        // Rounding floor reached: the step stopped shrinking while already tiny.
        if (!scaling && step <= 1e-9 * size && step >= previous_step) {
            converged = true;
            break;
        }
        previous_step = step;
    }
    if (!converged)
        throw NumericalError("lyapunov_solve: sign iteration did not converge in " +
                             std::to_string(max_iterations) + " steps");

    double sign_defect = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            sign_defect = std::max(sign_defect, std::abs(z(i, j) - (i == j ? 1.0 : 0.0)));
    if (sign_defect > 1e-6)
        throw NumericalError("lyapunov_solve: matrix is not positive stable");

    out.sigma = DenseMatrix(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            out.sigma(i, j) = -0.25 * (z(i, m + j) + z(j, m + i));

    DenseMatrix r = matmul(a, out.sigma) + matmul_nt(out.sigma, a);
    for (std::size_t i = 0; i < m; ++i) r(i, i) -= 1.0;
    out.residual = r.max_abs();
    if (!(out.residual <= tolerance::lyapunov_residual))
        throw NumericalError("lyapunov_solve: residual " + std::to_string(out.residual) +
                             " exceeds tolerance");
    return out;
}

} // namespace errw
