#include "deq/implicit_grad.hpp"

#include "deq/errors.hpp"

#include <cmath>
#include <string>

namespace deq {

ActivationMask activation_mask(const DeqParams& p, const Matrix& z, const Matrix& x) {
    const Matrix pre = pre_activation(p, z, x);
    return {(pre.array() >= 0.0).cast<double>().matrix()};
}

AdjointSolution solve_adjoint_basis(const DeqParams& p, const ActivationMask& mask,
                                    const SolverConfig& cfg, const SolveHints& hints) {
    if (!(cfg.tol > 0.0) || cfg.max_iter < 1) throw InputError("solve_adjoint: bad SolverConfig");
    if (mask.D.rows() != p.m()) throw InputError("solve_adjoint: mask must have m rows");

    const double w_norm = hints.w_norm ? *hints.w_norm : spectral_norm(p.W);
    if (!(w_norm < 1.0)) {
        throw WellPosednessError("solve_adjoint: ||W||_2 = " + std::to_string(w_norm) + " >= 1",
                                 w_norm);
    }

    const Eigen::Index n = mask.D.cols();
    // D .* (a 1^T)
    const Matrix source = mask.D.array().colwise() * p.a.array();
    const Matrix wt = p.W.transpose();

    AdjointSolution sol;
    Matrix nb = Matrix::Zero(p.m(), n);
    if (hints.warm_start != nullptr) {
        if (hints.warm_start->rows() != nb.rows() || hints.warm_start->cols() != n) {
            throw InputError("solve_adjoint: warm start has wrong shape");
        }
        nb = *hints.warm_start;
    }
    Matrix next(nb.rows(), n);
    double residual = 0.0;
    for (int it = 1; it <= cfg.max_iter; ++it) {
        next.noalias() = wt * nb;
        next = source + (mask.D.array() * next.array()).matrix();
        residual = (next - nb).norm() / std::max(1.0, nb.norm());
        if (hints.record_history) sol.residual_history.push_back(residual);
        if (residual <= cfg.tol) {
            sol.M = std::move(nb);
            sol.residual = residual;
            sol.iterations = it;
            return sol;
        }
        nb.swap(next);
    }
    throw ConvergenceError("solve_adjoint: no convergence after " + std::to_string(cfg.max_iter) +
                               " iterations",
                           residual, cfg.max_iter);
}

Matrix solve_adjoint(const DeqParams& p, const ActivationMask& mask, const Vector& e,
                     const SolverConfig& cfg, const SolveHints& hints) {
    if (e.size() != mask.D.cols()) throw InputError("solve_adjoint: e must have length n");
    const AdjointSolution basis = solve_adjoint_basis(p, mask, cfg, hints);
    return basis.M * e.asDiagonal();
}

GradientTriple gradients_from_basis(const Matrix& basis, const Matrix& z, const Matrix& x,
                                    const Vector& e) {
    const Matrix m = basis * e.asDiagonal();
    GradientTriple g;
    g.gW.noalias() = m * z.transpose();
    g.gU.noalias() = m * x.transpose();
    g.ga.noalias() = z * e;
    return g;
}

GradientTriple gradients(const DeqParams& p, const Matrix& z, const Matrix& x, const Vector& y,
                         const SolverConfig& cfg, const SolveHints& hints) {
    if (y.size() != z.cols()) throw InputError("gradients: y must have length n");
    const Vector e = predict(p, z) - y;
    const ActivationMask mask = activation_mask(p, z, x);
    SolveHints adj = hints;
    adj.warm_start = nullptr;
    const AdjointSolution basis = solve_adjoint_basis(p, mask, cfg, adj);
    return gradients_from_basis(basis.M, z, x, e);
}

double grad_norm_sq(const GradientTriple& g) {
    return g.gW.squaredNorm() + g.gU.squaredNorm() + g.ga.squaredNorm();
}

}  // namespace deq
