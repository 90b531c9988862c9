#include "deq/tensor_core.hpp"

#include "deq/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace deq {

void require_finite(const Matrix& a, const char* what) {
    if (!a.allFinite()) {
        throw InputError(std::string(what) + ": non-finite entry");
    }
}

double frobenius_norm(const Matrix& a) { return a.norm(); }

SpectralNormResult spectral_norm_iter(const Matrix& a, const PowerIterationOptions& opts,
                                      const Vector* start) {
    if (a.size() == 0) throw InputError("spectral_norm: empty matrix");
    if (!(opts.tol > 0.0)) throw InputError("spectral_norm: tol must be positive");
    require_finite(a, "spectral_norm");

    SpectralNormResult out;
    const Eigen::Index n = a.cols();
    Vector v;
    if (start != nullptr && start->size() == n && start->norm() > 0.0) {
        v = *start / start->norm();
    } else {
        v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
    }

    Vector av = a * v;
    double sigma2 = av.squaredNorm();  // Rayleigh quotient of A^T A
    double prev_delta = -1.0;
    for (int it = 1; it <= opts.max_iter; ++it) {
        Vector w = a.transpose() * av;
        const double wn = w.norm();
        if (wn == 0.0) {
            // v lies in the null space; A^T A v = 0 forces sigma = 0 only when
            // A itself is zero, otherwise restart from a basis vector.
            if (a.norm() == 0.0) {
                out.value = 0.0;
                out.right_vector = v;
                out.iterations = it;
                return out;
            }
            v = Vector::Unit(n, (it - 1) % n);
            av = a * v;
            sigma2 = av.squaredNorm();
            prev_delta = -1.0;
            continue;
        }
        v = w / wn;
        av = a * v;
        const double next = av.squaredNorm();
        const double delta = std::abs(next - sigma2);
        sigma2 = next;

        // Estimate the remaining error from the geometric decay of successive
        // changes: err ~ delta * r / (1 - r).
        double err = delta;
        if (prev_delta > 0.0) {
            const double r = delta / prev_delta;
            if (r < 1.0) {
                err = delta * r / (1.0 - r);
            } else {
                err = std::max(delta, prev_delta);
            }
        }
        prev_delta = delta;
        if (it > 1 && err <= 2.0 * opts.tol * sigma2) {
            out.value = std::sqrt(sigma2);
            out.right_vector = v;
            out.iterations = it;
            return out;
        }
        if (sigma2 == 0.0) {
            out.value = 0.0;
            out.right_vector = v;
            out.iterations = it;
            return out;
        }
    }
    throw ConvergenceError("spectral_norm: power iteration did not converge", prev_delta,
                           opts.max_iter);
}

double spectral_norm(const Matrix& a, double tol) {
    PowerIterationOptions opts;
    opts.tol = tol;
    return spectral_norm_iter(a, opts).value;
}

SymEig sym_eig(const Matrix& s, double tol, bool vectors) {
    if (s.rows() != s.cols()) throw InputError("sym_eig: matrix is not square");
    if (s.size() == 0) throw InputError("sym_eig: empty matrix");
    require_finite(s, "sym_eig");
    const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
    if (asym > 0.0) {
        // ||S||_2 <= ||S||_F keeps this check cheap without a power iteration.
        const double scale = s.norm();
        if (asym > tol * scale) throw InputError("sym_eig: matrix is not symmetric");
    }
    const Matrix sym = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(
        sym, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw ConvergenceError("sym_eig: eigensolver failed", 0.0, 0);
    }
    SymEig out;
    out.eigenvalues = solver.eigenvalues();
    if (vectors) out.eigenvectors = solver.eigenvectors();
    return out;
}

double min_eig_sym(const Matrix& s, double tol) { return sym_eig(s, tol, false).eigenvalues(0); }

Matrix gram(const Matrix& z) {
    if (z.size() == 0) throw InputError("gram: empty matrix");
    require_finite(z, "gram");
    Matrix g = z.transpose() * z;
    return 0.5 * (g + g.transpose());
}

Matrix gram_schmidt(std::span<const Vector> vectors, double drop_tol) {
    if (vectors.empty()) return Matrix(0, 0);
    const Eigen::Index m = vectors.front().size();
    Matrix q(m, static_cast<Eigen::Index>(vectors.size()));
    for (std::size_t k = 0; k < vectors.size(); ++k) {
        if (vectors[k].size() != m) throw InputError("gram_schmidt: vector length mismatch");
        Vector v = vectors[k];
        const auto kk = static_cast<Eigen::Index>(k);
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index j = 0; j < kk; ++j) {
                v -= q.col(j).dot(v) * q.col(j);
            }
        }
        const double norm = v.norm();
        if (norm < drop_tol) {
            throw DegenerateError("gram_schmidt: vector " + std::to_string(k) +
                                  " is linearly dependent on its predecessors");
        }
        q.col(kk) = v / norm;
    }
    return q;
}

}  // namespace deq
