#include "deq/data_pipeline.hpp"
#include "deq/errors.hpp"
#include "deq/population_kernel.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>

#include <cmath>
#include <numbers>
#include <random>

using namespace deq;

namespace {

double q_oracle(double x) {
    return (std::sqrt(1.0 - x * x) + (std::numbers::pi - std::acos(x)) * x) / std::numbers::pi;
}

struct McEstimate {
    double mean;
    double se;
};

// 2 E[relu(u) relu(v)] for (u, v) ~ N(0, lambda), by sampling.
McEstimate mc_relu_product(const Eigen::Matrix2d& lambda, long samples, std::mt19937_64& rng) {
    const Eigen::Matrix2d l = lambda.llt().matrixL();
    std::normal_distribution<double> nd(0.0, 1.0);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (long s = 0; s < samples; ++s) {
        const double g1 = nd(rng);
        const double g2 = nd(rng);
        const double u = l(0, 0) * g1;
        const double v = l(1, 0) * g1 + l(1, 1) * g2;
        const double f = 2.0 * std::max(u, 0.0) * std::max(v, 0.0);
        sum += f;
        sum_sq += f * f;
    }
    const double n = static_cast<double>(samples);
    const double mean = sum / n;
    const double var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

Matrix orthogonal_pair(Eigen::Index d) {
    Matrix x = Matrix::Zero(d, 2);
    const double r = std::sqrt(static_cast<double>(d));
    x(0, 0) = r;
    x(1, 1) = r;
    return x;
}

}  // namespace

TEST_SUITE("population_kernel") {

TEST_CASE("Q function") {
    CHECK(q_func(1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(q_func(-1.0) == doctest::Approx(0.0));
    CHECK(q_func(0.0) == doctest::Approx(0.3183098862).epsilon(1e-10));
    CHECK(q_func(1.0 + 5e-13) == doctest::Approx(1.0));
    CHECK_THROWS_AS(q_func(1.0 + 1e-9), InputError);
    CHECK_THROWS_AS(q_func(-1.5), InputError);
    for (double x = -0.99; x < 1.0; x += 0.07) CHECK(std::abs(q_func(x) - q_oracle(x)) <= 1e-15);
}

TEST_CASE("rho closed form") {
    CHECK(rho(0.08, 1) == 1.0);
    CHECK(rho(0.08, 2) == doctest::Approx(1.08).epsilon(1e-15));
    double partial = 0.0;
    for (int l = 1; l <= 30; ++l) {
        partial += std::pow(0.08, l - 1);
        CHECK(std::abs(rho(0.08, l) - partial) <= 1e-14);
        if (l > 1 && l <= 12) CHECK(rho(0.08, l) > rho(0.08, l - 1));
        if (l > 1) CHECK(rho(0.08, l) >= rho(0.08, l - 1));
    }
    CHECK(std::abs(rho(0.08, 200) - 1.0 / 0.92) <= 1e-15);
}

TEST_CASE("depth-1 orthogonal pair and depth-2 diagonal") {
    const Matrix x = orthogonal_pair(4);
    const PopulationKernel k1 = kernel_recursion(x, 0.08, 1);
    CHECK(k1.K(0, 1) == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-14));
    CHECK(k1.K(0, 0) == 1.0);
    const PopulationKernel k2 = kernel_recursion(x, 0.08, 2);
    CHECK(std::abs(k2.K(1, 1) - 1.08) <= 1e-12);
    CHECK(k2.depth == 2);
}

TEST_CASE("recursion matches a Monte Carlo evaluation of the Gaussian expectations") {
    const Dataset ds = gen_sphere_data(3, 6, 17);
    const Matrix& x = ds.X();
    const double s = 0.08;
    const double d = static_cast<double>(x.rows());
    const auto layers = kernel_layers(x, s, 5);
    std::mt19937_64 rng(2024);
    for (int l = 1; l <= 5; ++l) {
        const Matrix prev = l == 1 ? Matrix::Zero(3, 3) : layers[static_cast<std::size_t>(l - 2)].K;
        const Matrix& k = layers[static_cast<std::size_t>(l - 1)].K;
        for (Eigen::Index i = 0; i < 3; ++i) {
            for (Eigen::Index j = i; j < 3; ++j) {
                Eigen::Matrix2d lam;
                lam(0, 0) = s * prev(i, i) + 1.0;
                lam(1, 1) = s * prev(j, j) + 1.0;
                lam(0, 1) = lam(1, 0) = s * prev(i, j) + x.col(i).dot(x.col(j)) / d;
                if (i == j) lam(1, 1) += 1e-12;  // rank-one covariance
                const McEstimate est = mc_relu_product(lam, 1000000, rng);
                CHECK_MESSAGE(std::abs(k(i, j) - est.mean) <= 3.0 * est.se,
                              "l=" << l << " (" << i << "," << j << ") K=" << k(i, j) << " mc=" << est.mean
                                   << " se=" << est.se);
            }
        }
    }
}

TEST_CASE("depth limit: diagonal and orthogonal pair against a bisection oracle") {
    const Matrix x = orthogonal_pair(3);
    const PopulationKernel k = kernel_fixed_point(x, 0.08);
    CHECK(k.K(0, 0) == 1.0 / 0.92);
    CHECK(std::abs(k.K(0, 0) - 1.0869565217391304) <= 1e-15);

    double lo = 0.0;
    double hi = 0.08;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mid - 0.08 * q_oracle(mid) < 0.0 ? lo : hi) = mid;
    }
    const double c_star = 0.5 * (lo + hi);
    CHECK(std::abs(c_star - 0.0265) <= 5e-4);
    const double k_star = q_oracle(c_star) / 0.92;
    CHECK(std::abs(k_star - 0.3605) <= 5e-4);
    CHECK(std::abs(k.cos_theta(0, 1) - c_star) <= 1e-13);
    CHECK(std::abs(k.K(0, 1) - k_star) <= 1e-13);
    CHECK_FALSE(k.depth.has_value());
}

TEST_CASE("finite depth converges to the depth limit") {
    const Dataset ds = gen_sphere_data(16, 16, 7);
    const PopulationKernel deep = kernel_recursion(ds.X(), 0.08, 60);
    const PopulationKernel lim = kernel_fixed_point(ds.X(), 0.08);
    CHECK((deep.K - lim.K).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(lim.positive_definite);
    CHECK(lim.lambda_star > 0.0);
    CHECK(std::abs(lim.lambda_star - min_eig_sym(lim.K)) <= 1e-12);
}

TEST_CASE("layer invariants: depth contraction, PSD, diagonal, cosine range") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const Dataset ds = gen_sphere_data(10, 12, seed + 50);
        const double s = 0.02 + 0.03 * static_cast<double>(seed);
        const auto layers = kernel_layers(ds.X(), s, 25);
        for (int l = 1; l <= 25; ++l) {
            const PopulationKernel& kl = layers[static_cast<std::size_t>(l - 1)];
            CHECK((kl.K - kl.K.transpose()).norm() == 0.0);
            CHECK((kl.K.diagonal().array() - rho(s, l)).abs().maxCoeff() <= 1e-12);
            CHECK(kl.cos_theta.cwiseAbs().maxCoeff() <= 1.0);
            CHECK(min_eig_sym(kl.K) >= -1e-10 * kl.K.norm());
            if (l >= 2 && l < 25) {
                const Matrix& prev = layers[static_cast<std::size_t>(l - 2)].K;
                const Matrix& next = layers[static_cast<std::size_t>(l)].K;
                const Matrix lhs = (next - kl.K).cwiseAbs();
                const Matrix rhs = (s * (kl.K - prev).cwiseAbs()).array() + 2.0 * std::pow(s, l);
                CHECK((lhs - rhs).maxCoeff() <= 1e-12);
            }
        }
        const PopulationKernel lim = kernel_fixed_point(ds.X(), s);
        double max_off = 0.0;
        for (Eigen::Index i = 0; i < 10; ++i) {
            for (Eigen::Index j = 0; j < 10; ++j) {
                if (i != j) max_off = std::max(max_off, std::abs(lim.cos_theta(i, j)));
            }
        }
        CHECK(max_off < 1.0);
    }
}

TEST_CASE("tiny sigma_w2 reduces to the single-layer kernel") {
    const Dataset ds = gen_sphere_data(6, 8, 3);
    const PopulationKernel k1 = kernel_recursion(ds.X(), 1e-12, 1);
    const PopulationKernel lim = kernel_fixed_point(ds.X(), 1e-12);
    CHECK((k1.K - lim.K).cwiseAbs().maxCoeff() <= 1e-11);
}

TEST_CASE("un-normalized input is rejected") {
    Matrix x = gen_sphere_data(3, 4, 0).X();
    x(0, 0) += 0.5;
    CHECK_THROWS_AS(kernel_recursion(x, 0.08, 3), AssumptionError);
    CHECK_THROWS_AS(kernel_fixed_point(x, 0.08), AssumptionError);
}

TEST_CASE("suggested width") {
    const double n = 100.0;
    const double lam = 0.36;
    const double t = 0.01;
    const double oracle = std::ceil(n * n / (lam * lam) * std::log(n / (lam * t)));
    const auto w = suggested_width(100, lam, t, 1.0);
    CHECK(static_cast<double>(w) == oracle);
    CHECK(std::abs(static_cast<double>(w) / 789372.0 - 1.0) <= 1e-3);
    CHECK_THROWS_AS(suggested_width(100, lam, t, 0.0), InputError);
    CHECK_THROWS_AS(suggested_width(100, 0.0, t, 1.0), InputError);
    CHECK_THROWS_AS(suggested_width(100, lam, 1.5, 1.0), InputError);
    const double ratio = static_cast<double>(suggested_width(200, lam, t, 1.0)) / static_cast<double>(w);
    const double log_ratio = std::log(200.0 / (lam * t)) / std::log(100.0 / (lam * t));
    CHECK(std::abs(ratio / (4.0 * log_ratio) - 1.0) <= 1e-5);
}

TEST_CASE("suggested depth") {
    CHECK(suggested_depth(100, 0.36, 0.08, 1.0) == 26);
    const auto one = suggested_depth(100, 0.36, 0.08, 1.0);
    const auto two = suggested_depth(100, 0.36, 0.08, 2.0);
    CHECK((two == 2 * one || two == 2 * one - 1));
    CHECK(suggested_depth(100, 0.36, 0.1249, 1.0) > 1000);
    CHECK_THROWS_AS(suggested_depth(100, -0.1, 0.08, 1.0), InputError);
}

}
