#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace deq {

// Column-major dense storage. Columns of data/feature matrices are samples.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SymEig {
    Vector eigenvalues;   // ascending
    Matrix eigenvectors;  // empty unless requested
};

struct PowerIterationOptions {
    double tol = 1e-10;
    int max_iter = 10000;
};

struct SpectralNormResult {
    double value = 0.0;
    Vector right_vector;  // unit top right-singular vector estimate
    int iterations = 0;
};

// Throws InputError if any entry is NaN or Inf.
void require_finite(const Matrix& a, const char* what);

double frobenius_norm(const Matrix& a);

// Largest singular value by power iteration on A^T A. The default start is
// the normalized all-ones vector; a previous right_vector can be passed to
// warm start when A changes slowly.
SpectralNormResult spectral_norm_iter(const Matrix& a, const PowerIterationOptions& opts = {},
                                      const Vector* start = nullptr);

double spectral_norm(const Matrix& a, double tol = 1e-10);

// Full symmetric eigendecomposition. Rejects inputs whose asymmetry exceeds
// tol * ||S||_2 (max-abs entry of S - S^T is compared).
SymEig sym_eig(const Matrix& s, double tol = 1e-10, bool vectors = false);

double min_eig_sym(const Matrix& s, double tol = 1e-10);

// Z^T Z, symmetrized.
Matrix gram(const Matrix& z);

// Modified Gram-Schmidt with one re-orthogonalization pass. Throws
// DegenerateError when a vector's residual after projection is < drop_tol.
Matrix gram_schmidt(std::span<const Vector> vectors, double drop_tol = 1e-12);

}  // namespace deq
