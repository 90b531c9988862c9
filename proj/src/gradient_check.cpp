#include "deq/gradient_check.hpp"

#include "deq/errors.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace deq {

namespace {

double objective(const DeqParams& p, const Matrix& x, const Vector& y, const SolverConfig& cfg,
                 double w_norm, Matrix* pre_out) {
    SolveHints hints;
    hints.w_norm = w_norm;
    const EquilibriumSolution eq = solve_equilibrium(p, x, cfg, hints);
    if (pre_out != nullptr) *pre_out = pre_activation(p, eq.Z, x);
    return loss(predict(p, eq.Z), y);
}

bool near_kink(const Matrix& base_pre, const Matrix& pre, double kink_tol) {
    if (pre.cwiseAbs().minCoeff() < kink_tol) return true;
    return ((base_pre.array() >= 0.0) != (pre.array() >= 0.0)).any();
}

}  // namespace

FiniteDifferenceReport finite_difference_check(const DeqParams& p0, const Matrix& x, const Vector& y,
                                               const GradientTriple& g,
                                               const FiniteDifferenceOptions& opts) {
    FiniteDifferenceReport rep;
    Matrix base_pre;
    const double w_norm0 = spectral_norm(p0.W);
    objective(p0, x, y, opts.solver, w_norm0, &base_pre);
    const bool base_kink = base_pre.cwiseAbs().minCoeff() < opts.kink_tol;

    DeqParams p = p0;
    // Perturbations of size `step` move ||W||_2 by at most `step`.
    const double w_norm_probe = w_norm0 + opts.step;

    auto probe = [&](double& slot, double analytic, double block_floor) {
        ++rep.probes;
        const double saved = slot;
        Matrix pre_plus;
        Matrix pre_minus;
        slot = saved + opts.step;
        const double f_plus = objective(p, x, y, opts.solver, w_norm_probe, &pre_plus);
        slot = saved - opts.step;
        const double f_minus = objective(p, x, y, opts.solver, w_norm_probe, &pre_minus);
        slot = saved;
        if (base_kink || near_kink(base_pre, pre_plus, opts.kink_tol) ||
            near_kink(base_pre, pre_minus, opts.kink_tol)) {
            ++rep.skipped;
            return;
        }
        const double fd = (f_plus - f_minus) / (2.0 * opts.step);
        const double denom = std::max({std::abs(analytic), std::abs(fd), block_floor, 1e-300});
        const double rel = std::abs(fd - analytic) / denom;
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
        if (rel > opts.rel_tol) ++rep.failures;
    };

    const double floor_w = opts.floor_scale * g.gW.cwiseAbs().maxCoeff();
    const double floor_u = opts.floor_scale * g.gU.cwiseAbs().maxCoeff();
    const double floor_a = opts.floor_scale * g.ga.cwiseAbs().maxCoeff();
    for (Eigen::Index k = 0; k < p.W.size(); ++k) probe(p.W.data()[k], g.gW.data()[k], floor_w);
    for (Eigen::Index k = 0; k < p.U.size(); ++k) probe(p.U.data()[k], g.gU.data()[k], floor_u);
    for (Eigen::Index k = 0; k < p.a.size(); ++k) probe(p.a.data()[k], g.ga.data()[k], floor_a);
    return rep;
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

GradientTriple dense_kronecker_gradients(const DeqParams& p, const Matrix& z, const Matrix& x,
                                         const Vector& y, KroneckerOrientation orientation) {
    const Eigen::Index m = p.m();
    const Eigen::Index n = z.cols();
    const Eigen::Index mn = m * n;
    if (mn > 2500) throw InputError("dense_kronecker_gradients: m n too large for dense oracle");

    const Matrix pre = pre_activation(p, z, x);
    Vector dvec(mn);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) dvec(j * m + i) = pre(i, j) >= 0.0 ? 1.0 : 0.0;
    }
    const Matrix in = Matrix::Identity(n, n);
    const Matrix im = Matrix::Identity(m, m);
    const Matrix d = dvec.asDiagonal();
    const Matrix j_mat = Matrix::Identity(mn, mn) - d * kron(in, p.W);

    Matrix a_map;  // n x mn
    if (orientation == KroneckerOrientation::identity_kron_aT) {
        a_map = kron(in, p.a.transpose());
    } else {
        a_map = kron(p.a, in).transpose();
    }
    const Matrix r = a_map * j_mat.partialPivLu().inverse() * d;  // n x mn
    const Vector e = z.transpose() * p.a - y;
    const Vector rt_e = r.transpose() * e;

    GradientTriple g;
    const Vector vec_gw = kron(z, im) * rt_e;
    const Vector vec_gu = kron(x, im) * rt_e;
    g.gW = Eigen::Map<const Matrix>(vec_gw.data(), m, m);
    g.gU = Eigen::Map<const Matrix>(vec_gu.data(), m, x.rows());
    g.ga = z * e;
    return g;
}

double relative_gradient_gap(const GradientTriple& g1, const GradientTriple& g2) {
    auto gap = [](const Matrix& a, const Matrix& b) {
        return (a - b).norm() / std::max(b.norm(), 1e-300);
    };
    return std::max({gap(g1.gW, g2.gW), gap(g1.gU, g2.gU), gap(g1.ga, g2.ga)});
}

}  // namespace deq
