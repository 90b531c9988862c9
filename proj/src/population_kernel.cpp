#include "deq/population_kernel.hpp"

#include "deq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace deq {

namespace {

void validate_kernel_inputs(const Matrix& x, double sigma_w2) {
    if (!(sigma_w2 >= 0.0 && sigma_w2 < 0.125)) {
        throw InputError("population kernel: sigma_w2 must lie in [0, 1/8)");
    }
    if (x.size() == 0) throw InputError("population kernel: empty X");
    require_finite(x, "population kernel X");
    const double target = std::sqrt(static_cast<double>(x.rows()));
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        if (std::abs(x.col(i).norm() - target) > 1e-8 * target) {
            throw AssumptionError("population kernel: column " + std::to_string(i) +
                             " is not normalized to sqrt(d)");
        }
    }
}

// x_i^T x_j / d, clamped into [-1, 1] against rounding.
Matrix input_cosines(const Matrix& x) {
    Matrix c = (x.transpose() * x) / static_cast<double>(x.rows());
    c = (0.5 * (c + c.transpose())).eval();
    c = c.cwiseMin(1.0).cwiseMax(-1.0);
    c.diagonal().setOnes();
    return c;
}

void fill_lambda(PopulationKernel& k) {
    k.lambda_star = min_eig_sym(k.K);
    k.positive_definite = k.lambda_star > 0.0;
}

}  // namespace

double q_func(double x) {
    if (!std::isfinite(x) || std::abs(x) > 1.0 + 1e-12) {
        throw InputError("q_func: argument outside [-1, 1]");
    }
    x = std::clamp(x, -1.0, 1.0);
    return (std::sqrt(1.0 - x * x) + (std::numbers::pi - std::acos(x)) * x) / std::numbers::pi;
}

double rho(double sigma_w2, int l) {
    if (l <= 0) return 0.0;
    return (1.0 - std::pow(sigma_w2, l)) / (1.0 - sigma_w2);
}

std::vector<PopulationKernel> kernel_layers(const Matrix& x, double sigma_w2, int depth) {
    validate_kernel_inputs(x, sigma_w2);
    if (depth < 1) throw InputError("kernel_layers: depth must be >= 1");
    const Eigen::Index n = x.cols();
    const Matrix c0 = input_cosines(x);

    std::vector<PopulationKernel> layers;
    layers.reserve(static_cast<std::size_t>(depth));

    // Depth 1 is the plain single-layer kernel: K^(0) = 0 gives Lambda^(1)
    // with unit diagonal and x_i^T x_j / d off the diagonal.
    PopulationKernel first;
    first.sigma_w2 = sigma_w2;
    first.depth = 1;
    first.cos_theta = c0;
    first.K = c0.unaryExpr([](double v) { return q_func(v); });
    first.K.diagonal().setOnes();
    layers.push_back(std::move(first));

    double rho_prev = 1.0;
    for (int l = 2; l <= depth; ++l) {
        const PopulationKernel& prev = layers.back();
        const double rho_l = sigma_w2 * rho_prev + 1.0;
        PopulationKernel cur;
        cur.sigma_w2 = sigma_w2;
        cur.depth = l;
        cur.cos_theta.resize(n, n);
        cur.K.resize(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i <= j; ++i) {
                double c = 1.0;
                double k = rho_l;
                if (i != j) {
                    c = (sigma_w2 * prev.K(i, j) + c0(i, j)) / rho_l;
                    c = std::clamp(c, -1.0, 1.0);
                    k = rho_l * q_func(c);
                }
                cur.cos_theta(i, j) = cur.cos_theta(j, i) = c;
                cur.K(i, j) = cur.K(j, i) = k;
            }
        }
        layers.push_back(std::move(cur));
        rho_prev = rho_l;
    }
    fill_lambda(layers.back());
    return layers;
}

PopulationKernel kernel_recursion(const Matrix& x, double sigma_w2, int depth) {
    auto layers = kernel_layers(x, sigma_w2, depth);
    return std::move(layers.back());
}

PopulationKernel kernel_fixed_point(const Matrix& x, double sigma_w2, double tol) {
    validate_kernel_inputs(x, sigma_w2);
    if (!(tol > 0.0)) throw InputError("kernel_fixed_point: tol must be positive");
    const Eigen::Index n = x.cols();
    const Matrix c0 = input_cosines(x);
    const double scale = 1.0 / (1.0 - sigma_w2);
    constexpr int kMaxIter = 10000;

    PopulationKernel out;
    out.sigma_w2 = sigma_w2;
    out.cos_theta.resize(n, n);
    out.K.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        out.cos_theta(j, j) = 1.0;
        out.K(j, j) = scale;
        for (Eigen::Index i = 0; i < j; ++i) {
            const double input = (1.0 - sigma_w2) * c0(i, j);
            double c = c0(i, j);
            bool converged = false;
            for (int it = 0; it < kMaxIter; ++it) {
                const double next = std::clamp(sigma_w2 * q_func(c) + input, -1.0, 1.0);
                const double step = std::abs(next - c);
                c = next;
                if (step <= tol) {
                    converged = true;
                    break;
                }
            }
            if (!converged) {
                throw ConvergenceError("kernel_fixed_point: pair iteration did not converge", 0.0,
                                       kMaxIter);
            }
            out.cos_theta(i, j) = out.cos_theta(j, i) = c;
            out.K(i, j) = out.K(j, i) = scale * q_func(c);
        }
    }
    fill_lambda(out);
    return out;
}

std::uint64_t suggested_width(std::uint64_t n, double lambda_star, double t, double c) {
    if (!(lambda_star > 0.0)) throw InputError("suggested_width: lambda_star must be positive");
    if (!(t > 0.0 && t < 1.0)) throw InputError("suggested_width: t must lie in (0, 1)");
    if (!(c > 0.0)) throw InputError("suggested_width: C must be positive");
    const double nn = static_cast<double>(n);
    const double value = c * (nn * nn) / (lambda_star * lambda_star) * std::log(nn / (lambda_star * t));
    return value <= 1.0 ? 1 : static_cast<std::uint64_t>(std::ceil(value));
}

std::uint64_t suggested_depth(std::uint64_t n, double lambda_star, double sigma_w2, double c) {
    if (!(lambda_star > 0.0)) throw InputError("suggested_depth: lambda_star must be positive");
    if (!(sigma_w2 > 0.0 && sigma_w2 < 0.125)) {
        throw InputError("suggested_depth: sigma_w2 must lie in (0, 1/8)");
    }
    if (!(c > 0.0)) throw InputError("suggested_depth: C must be positive");
    const double denom = std::log(std::numbers::sqrt2 / (4.0 * std::sqrt(sigma_w2)));
    const double value = c * std::log(static_cast<double>(n) / lambda_star) / denom;
    return value <= 1.0 ? 1 : static_cast<std::uint64_t>(std::ceil(value));
}

}  // namespace deq
