#pragma once

#include "deq/deq_model.hpp"

namespace deq {

// 0/1 matrix (m x n) of ReLU sub-gradients at the equilibrium
// pre-activations; an exactly-zero pre-activation maps to 1.
struct ActivationMask {
    Matrix D;
};

struct GradientTriple {
    Matrix gW;  // m x m
    Matrix gU;  // m x d
    Vector ga;  // m
};

ActivationMask activation_mask(const DeqParams& p, const Matrix& z, const Matrix& x);

struct AdjointSolution {
    Matrix M;  // m x n
    double residual = 0.0;
    int iterations = 0;
    std::vector<double> residual_history;
};

// Fixed point N = D .* (a 1^T + W^T N). Because the adjoint equation is linear
// and column-separable, M = N diag(e) solves M = D .* (a e^T + W^T M) for any
// residual vector e; N does not depend on e, which makes it a good warm start
// across gradient-descent steps.
AdjointSolution solve_adjoint_basis(const DeqParams& p, const ActivationMask& mask,
                                    const SolverConfig& cfg = {}, const SolveHints& hints = {});

// Fixed point M = D .* (a e^T + W^T M).
Matrix solve_adjoint(const DeqParams& p, const ActivationMask& mask, const Vector& e,
                     const SolverConfig& cfg = {}, const SolveHints& hints = {});

// Assembles (M Z^T, M X^T, Z e) for M = N diag(e).
GradientTriple gradients_from_basis(const Matrix& basis, const Matrix& z, const Matrix& x,
                                    const Vector& e);

// Gradient of 0.5 ||a^T Z - y||^2 through the equilibrium Z of (p, X).
GradientTriple gradients(const DeqParams& p, const Matrix& z, const Matrix& x, const Vector& y,
                         const SolverConfig& cfg = {}, const SolveHints& hints = {});

double grad_norm_sq(const GradientTriple& g);

}  // namespace deq
