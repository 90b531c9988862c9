#pragma once

#include "deq/tensor_core.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace deq {

// Infinite-width Gram matrix of the weight-untied ReLU network, either at a
// finite depth or at the depth limit (depth == nullopt).
struct PopulationKernel {
    Matrix K;          // n x n, symmetric
    Matrix cos_theta;  // n x n, entries in [-1, 1]
    double lambda_star = 0.0;
    bool positive_definite = false;
    double sigma_w2 = 0.0;
    std::optional<int> depth;
};

// Normalized ReLU arc-cosine kernel: (sqrt(1 - x^2) + (pi - arccos x) x) / pi.
// Arguments outside [-1, 1] by at most 1e-12 are clamped.
double q_func(double x);

// rho^(l) = (1 - sigma_w2^l) / (1 - sigma_w2), the diagonal of K^(l).
double rho(double sigma_w2, int l);

// K^(1), ..., K^(L). Entry l-1 of the result holds depth l. lambda_star is
// only filled for the last layer.
std::vector<PopulationKernel> kernel_layers(const Matrix& x, double sigma_w2, int depth);

PopulationKernel kernel_recursion(const Matrix& x, double sigma_w2, int depth);

// Depth limit: per pair, the scalar fixed point c = s Q(c) + (1 - s) x_i.x_j / d
// solved by Picard iteration, K_ij = Q(c) / (1 - s).
PopulationKernel kernel_fixed_point(const Matrix& x, double sigma_w2, double tol = 1e-14);

// ceil(C n^2 / lambda*^2 log(n / (lambda* t))). Advisory only.
std::uint64_t suggested_width(std::uint64_t n, double lambda_star, double t, double c = 1.0);

// ceil(C log(n / lambda*) / log(sqrt(2) / (4 sigma_w))).
std::uint64_t suggested_depth(std::uint64_t n, double lambda_star, double sigma_w2, double c = 1.0);

}  // namespace deq
