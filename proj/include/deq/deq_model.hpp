#pragma once

#include "deq/tensor_core.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace deq {

// Trainable state (W, U, a) of a vanilla ReLU DEQ together with the variance
// scale sigma_w^2 used at initialization.
struct DeqParams {
    Matrix W;  // m x m
    Matrix U;  // m x d
    Vector a;  // m
    double sigma_w2 = 0.08;

    DeqParams() = default;
    // Validates shapes, finiteness and sigma_w2 in (0, 1/8).
    DeqParams(Matrix w, Matrix u, Vector a, double sigma_w2);

    Eigen::Index m() const noexcept { return W.rows(); }
    Eigen::Index d() const noexcept { return U.cols(); }
};

struct SolverConfig {
    double tol = 1e-10;  // relative Frobenius residual
    int max_iter = 10000;
};

struct EquilibriumSolution {
    Matrix Z;  // m x n, entries >= 0
    double residual = 0.0;
    int iterations = 0;
    std::vector<double> residual_history;
};

// Optional inputs that let callers skip work they have already done.
struct SolveHints {
    const Matrix* warm_start = nullptr;
    // ||W||_2 computed by the caller; skips the well-posedness power iteration.
    std::optional<double> w_norm;
    bool record_history = false;
};

void validate_sigma_w2(double sigma_w2);

// W_ij ~ N(0, 2 sigma_w2 / m), U_ij ~ N(0, 2/d), a_i ~ N(0, 1/m); W, U, a
// are drawn in that order, column-major, from one mt19937_64 stream.
DeqParams init_params(Eigen::Index m, Eigen::Index d, double sigma_w2, std::uint64_t seed);

// W Z + U X
Matrix pre_activation(const DeqParams& p, const Matrix& z, const Matrix& x);

// relu(W Z + U X)
Matrix forward_layer(const DeqParams& p, const Matrix& z, const Matrix& x);

// Picard iteration Z <- relu(W Z + U X) from Z = 0 (or the warm start).
// Returns the first iterate whose residual ||Z - relu(WZ+UX)||_F / max(1,
// ||Z||_F) is <= tol. Throws WellPosednessError if ||W||_2 >= 1 and
// ConvergenceError after max_iter iterations.
EquilibriumSolution solve_equilibrium(const DeqParams& p, const Matrix& x,
                                      const SolverConfig& cfg = {}, const SolveHints& hints = {});

// yhat_i = a^T z_i
Vector predict(const DeqParams& p, const Matrix& z);

// 0.5 ||yhat - y||^2
double loss(const Vector& yhat, const Vector& y);

struct WellPosedness {
    double spec_norm = 0.0;
    bool ok = false;
};

WellPosedness well_posedness(const DeqParams& p, double margin = 0.0);

// Binary checkpoint, little-endian:
//   "DEQCKPT\0" | u32 version (1) | u32 reserved | u64 m | u64 d | u64 step |
//   f64 sigma_w2 | W (m*m f64, column-major) | U (m*d f64, column-major) | a (m f64)
struct Checkpoint {
    DeqParams params;
    std::uint64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const DeqParams& p, std::uint64_t step = 0);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace deq
