#include "deq/condition_checker.hpp"
#include "deq/data_pipeline.hpp"
#include "deq/errors.hpp"
#include "deq/gradient_check.hpp"
#include "deq/implicit_grad.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/LU>

#include <cmath>

using namespace deq;

namespace {

struct Instance {
    DeqParams p;
    Dataset data;
    Matrix Z;
    Vector e;
};

Instance make_instance(Eigen::Index m, Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    Dataset ds = gen_sphere_data(n, d, seed);
    DeqParams p = init_params(m, d, 0.08, seed + 1000);
    const Matrix z = solve_equilibrium(p, ds.X(), SolverConfig{1e-13, 100000}).Z;
    Vector e = predict(p, z) - ds.y();
    return Instance{std::move(p), std::move(ds), z, std::move(e)};
}

// vec(M) from the dense system (I - diag(vec D)(I_n kron W^T)) vec(M) = vec(D .* a e^T).
Matrix dense_adjoint(const DeqParams& p, const Matrix& d, const Vector& e) {
    const Eigen::Index m = p.m();
    const Eigen::Index n = d.cols();
    Matrix sys = Matrix::Identity(m * n, m * n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index r = 0; r < m; ++r) {
            for (Eigen::Index c = 0; c < m; ++c) sys(j * m + r, j * m + c) -= d(r, j) * p.W(c, r);
        }
    }
    const Matrix rhs_m = d.cwiseProduct(p.a * e.transpose());
    const Vector rhs = Eigen::Map<const Vector>(rhs_m.data(), m * n);
    const Vector sol = sys.partialPivLu().solve(rhs);
    return Eigen::Map<const Matrix>(sol.data(), m, n);
}

}  // namespace

TEST_SUITE("implicit_grad") {

TEST_CASE("activation mask follows the sign of the pre-activation, with 1 at zero") {
    DeqParams p(Matrix::Zero(2, 2), Matrix::Identity(2, 2), Vector::Ones(2), 0.08);
    Matrix x(2, 2);
    x << -1.0, 0.0, 2.0, -3.0;
    const ActivationMask mask = activation_mask(p, Matrix::Zero(2, 2), x);
    Matrix expected(2, 2);
    expected << 0.0, 1.0, 1.0, 0.0;
    CHECK(mask.D == expected);
    CHECK(activation_mask(p, Matrix::Zero(2, 2), -Matrix::Ones(2, 2)).D.norm() == 0.0);

    const Instance inst = make_instance(25, 6, 7, 3);
    const Matrix pre = inst.p.W * inst.Z + inst.p.U * inst.data.X();
    const Matrix d = activation_mask(inst.p, inst.Z, inst.data.X()).D;
    for (Eigen::Index k = 0; k < d.size(); ++k) CHECK(d.data()[k] == (pre.data()[k] >= 0.0 ? 1.0 : 0.0));
}

TEST_CASE("adjoint matches a dense linear solve") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Instance inst = make_instance(6, 3, 4, seed);
        const ActivationMask mask = activation_mask(inst.p, inst.Z, inst.data.X());
        const Matrix m = solve_adjoint(inst.p, mask, inst.e, SolverConfig{1e-13, 100000});
        const Matrix oracle = dense_adjoint(inst.p, mask.D, inst.e);
        CHECK((m - oracle).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, oracle.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("adjoint trivial cases") {
    const Instance inst = make_instance(12, 4, 5, 7);
    const ActivationMask mask = activation_mask(inst.p, inst.Z, inst.data.X());
    CHECK(solve_adjoint(inst.p, mask, Vector::Zero(4)).norm() == 0.0);
    DeqParams p0 = inst.p;
    p0.W.setZero();
    const Matrix m0 = solve_adjoint(p0, mask, inst.e);
    CHECK((m0 - mask.D.cwiseProduct(p0.a * inst.e.transpose())).norm() == 0.0);
    DeqParams bad = inst.p;
    bad.W = 1.1 * Matrix::Identity(12, 12);
    CHECK_THROWS_AS(solve_adjoint(bad, mask, inst.e), WellPosednessError);
}

TEST_CASE("basis form: N diag(e) equals the adjoint for e") {
    const Instance inst = make_instance(20, 5, 6, 11);
    const ActivationMask mask = activation_mask(inst.p, inst.Z, inst.data.X());
    const SolverConfig tight{1e-13, 100000};
    const AdjointSolution basis = solve_adjoint_basis(inst.p, mask, tight);
    const Matrix direct = solve_adjoint(inst.p, mask, inst.e, tight);
    CHECK((basis.M * inst.e.asDiagonal() - direct).norm() <= 1e-11 * std::max(1.0, direct.norm()));
    CHECK(basis.residual <= tight.tol);
}

TEST_CASE("gradients vanish at interpolation and ga equals Z e") {
    const Instance inst = make_instance(20, 5, 6, 13);
    const Vector yhat = predict(inst.p, inst.Z);
    const GradientTriple zero = gradients(inst.p, inst.Z, inst.data.X(), yhat);
    CHECK(grad_norm_sq(zero) == 0.0);

    const GradientTriple g = gradients(inst.p, inst.Z, inst.data.X(), inst.data.y());
    CHECK((g.ga - inst.Z * inst.e).norm() <= 1e-13 * std::max(1.0, g.ga.norm()));
}

TEST_CASE("gradients match central finite differences") {
    const Instance inst = make_instance(30, 5, 8, 1);
    const SolverConfig tight{1e-12, 100000};
    const GradientTriple g = gradients(inst.p, inst.Z, inst.data.X(), inst.data.y(), tight);
    const FiniteDifferenceReport rep = finite_difference_check(inst.p, inst.data.X(), inst.data.y(), g);
    CHECK(rep.passed());
    CHECK(rep.probes == 30 * 30 + 30 * 8 + 30);
    CHECK(rep.skipped < rep.probes);
    CHECK(rep.max_rel_error <= 1e-4);

    GradientTriple bad = g;
    bad.gU *= 1.01;
    CHECK_FALSE(finite_difference_check(inst.p, inst.data.X(), inst.data.y(), bad).passed());
}

TEST_CASE("gradients equal the dense Kronecker construction") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const Instance inst = make_instance(20 + 5 * static_cast<Eigen::Index>(seed), 4, 6, seed + 20);
        const GradientTriple g =
            gradients(inst.p, inst.Z, inst.data.X(), inst.data.y(), SolverConfig{1e-13, 100000});
        const GradientTriple dense = dense_kronecker_gradients(inst.p, inst.Z, inst.data.X(), inst.data.y());
        CHECK(relative_gradient_gap(g, dense) <= 1e-8);
    }
}

TEST_CASE("the (a kron I_n)^T reading does not reproduce the gradient") {
    const Instance inst = make_instance(12, 4, 5, 5);
    const GradientTriple g = gradients(inst.p, inst.Z, inst.data.X(), inst.data.y());
    const GradientTriple other = dense_kronecker_gradients(inst.p, inst.Z, inst.data.X(), inst.data.y(),
                                                           KroneckerOrientation::a_kron_identity_T);
    CHECK(relative_gradient_gap(g, other) > 1e-3);
}

TEST_CASE("kron helper") {
    Matrix a(2, 1);
    a << 1, 2;
    Matrix b(1, 2);
    b << 3, 4;
    Matrix expected(2, 2);
    expected << 3, 4, 6, 8;
    CHECK(kron(a, b) == expected);
}

TEST_CASE("output-layer PL bound and gradient norm bounds") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Instance inst = make_instance(40, 6, 8, seed + 40);
        const GradientTriple g = gradients(inst.p, inst.Z, inst.data.X(), inst.data.y());
        const double phi = 0.5 * inst.e.squaredNorm();
        const double lam = min_eig_sym(gram(inst.Z));
        CHECK(g.ga.squaredNorm() >= 2.0 * lam * phi - 1e-8 * (1.0 + phi));

        const InitBounds b = init_bounds(inst.p);
        for (const auto& row : gradient_bounds_check(inst.p, g, inst.data.X(), inst.e, b)) {
            CHECK_MESSAGE(row.ok, row.name);
        }
    }
}

TEST_CASE("squared gradient norm") {
    GradientTriple g{Matrix::Zero(2, 2), Matrix::Zero(2, 3), Vector::Zero(2)};
    CHECK(grad_norm_sq(g) == 0.0);
    g.ga << 3, 4;
    CHECK(grad_norm_sq(g) == 25.0);
    g.gW = test_support::gaussian(2, 2, 1);
    g.gU = test_support::gaussian(2, 3, 2);
    CHECK(std::abs(grad_norm_sq(g) - (g.gW.squaredNorm() + g.gU.squaredNorm() + 25.0)) <= 1e-13);
}

}
