#pragma once

#include "deq/deq_model.hpp"
#include "deq/implicit_grad.hpp"

namespace deq {

// Verification harness for implicit gradients. Everything here recomputes the
// gradient by routes that share nothing with the adjoint solver: central
// finite differences of the loss, and the dense Kronecker-product formulas
// with J = I - D (I_n kron W) inverted explicitly.

struct FiniteDifferenceOptions {
    double step = 1e-5;
    double rel_tol = 1e-4;
    double kink_tol = 1e-7;  // probes whose equilibria come this close to a kink are skipped
    // Relative errors are taken against max(|g|, |fd|, floor_scale * max|g|)
    // within each parameter block, so entries at rounding level are not
    // judged by a relative criterion.
    double floor_scale = 1e-6;
    SolverConfig solver{1e-12, 100000};
};

struct FiniteDifferenceReport {
    long probes = 0;
    long skipped = 0;
    long failures = 0;
    double max_rel_error = 0.0;
    bool passed() const noexcept { return failures == 0 && probes > skipped; }
};

// Compares every entry of g against central differences of
// 0.5 ||a^T Z*(W, U) - y||^2, re-solving the equilibrium per probe.
FiniteDifferenceReport finite_difference_check(const DeqParams& p, const Matrix& x, const Vector& y,
                                               const GradientTriple& g,
                                               const FiniteDifferenceOptions& opts = {});

// Row-vectorization matching of the prediction map: with column-major vec,
// yhat = (I_n kron a^T) vec(Z). The alternative reading (a kron I_n)^T has the
// same shape and is kept for comparison only.
enum class KroneckerOrientation { identity_kron_aT, a_kron_identity_T };

Matrix kron(const Matrix& a, const Matrix& b);

// Dense construction of J, D, R and the W/U gradients; requires m n <= 2500.
GradientTriple dense_kronecker_gradients(const DeqParams& p, const Matrix& z, const Matrix& x,
                                         const Vector& y,
                                         KroneckerOrientation orientation =
                                             KroneckerOrientation::identity_kron_aT);

// max over blocks of ||g1 - g2||_F / max(||g2||_F, tiny)
double relative_gradient_gap(const GradientTriple& g1, const GradientTriple& g2);

}  // namespace deq
