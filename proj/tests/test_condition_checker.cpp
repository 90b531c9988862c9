#include "deq/condition_checker.hpp"
#include "deq/data_pipeline.hpp"
#include "deq/errors.hpp"
#include "deq/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace deq;

TEST_SUITE("condition_checker") {

TEST_CASE("bounds from norms") {
    const InitBounds auto_b = init_bounds_from_norms(0.8, 1.0, 1.0);
    CHECK(auto_b.delta == doctest::Approx(0.1));
    CHECK(auto_b.rho_w == doctest::Approx(0.9));

    const InitBounds b = init_bounds_from_norms(0.8, 1.9, 0.9, 0.1);
    CHECK(b.rho_u == doctest::Approx(2.0));
    CHECK(b.rho_a == doctest::Approx(1.0));
    CHECK(b.c_w == doctest::Approx(200.0).epsilon(1e-12));
    CHECK(b.c_u == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(b.c_a == doctest::Approx(20.0).epsilon(1e-12));

    CHECK_THROWS_AS(init_bounds_from_norms(0.8, 1.0, 1.0, 0.5), InputError);
    CHECK_THROWS_AS(init_bounds_from_norms(1.0, 1.0, 1.0), InputError);
    CHECK_THROWS_AS(init_bounds_from_norms(0.5, 1.0, 1.0, -0.1), InputError);
}

TEST_CASE("bounds from parameters use spectral norms") {
    const DeqParams p = init_params(80, 10, 0.08, 3);
    const InitBounds b = init_bounds(p);
    const double wn = spectral_norm(p.W);
    CHECK(std::abs(b.rho_w - (wn + (1.0 - wn) / 2.0)) <= 1e-9);
    CHECK(std::abs(b.rho_u - (spectral_norm(p.U) + b.delta)) <= 1e-9);
    CHECK(std::abs(b.rho_a - (p.a.norm() + b.delta)) <= 1e-12);
}

TEST_CASE("zero residual satisfies the first two inequalities") {
    const InitBounds b = init_bounds_from_norms(0.5, 2.0, 1.0);
    const Matrix x = gen_sphere_data(5, 4, 0).X();
    const ConditionReport r = check_condition(b, 3.0, x, 0.0);
    CHECK(r.satisfied[0]);
    CHECK(r.satisfied[1]);
    const double cwu = b.c_w * b.c_w + b.c_u * b.c_u;
    CHECK(r.margins[2] == doctest::Approx(3.0 - 4.0 * cwu * x.squaredNorm()));
    CHECK(r.phi_0 == 0.0);
}

TEST_CASE("literal constants and eta_max") {
    const InitBounds b = init_bounds_from_norms(0.6, 1.5, 0.7, 0.1);
    const Matrix x = gen_sphere_data(6, 5, 1).X();
    const double lam = 2.5;
    const double res = 0.3;
    const ConditionReport r = check_condition(b, lam, x, res);
    const double xf = x.norm();
    const double cmax = std::max({b.c_w, b.c_u, b.c_a});
    const double cwu = b.c_w * b.c_w + b.c_u * b.c_u;
    CHECK(r.rhs[0] == doctest::Approx(4.0 / 0.1 * cmax * xf * res).epsilon(1e-13));
    CHECK(r.lhs[1] == doctest::Approx(std::pow(lam, 1.5)).epsilon(1e-14));
    CHECK(r.rhs[1] == doctest::Approx(4.0 * (2.0 + std::sqrt(2.0)) / b.rho_a * cwu * xf * xf * res).epsilon(1e-13));
    CHECK(r.rhs[2] == doctest::Approx(4.0 * cwu * xf * xf).epsilon(1e-13));
    for (int k = 0; k < 3; ++k) CHECK(r.satisfied[k] == (r.margins[k] >= 0.0));
    const double cs = cwu + b.c_a * b.c_a;
    CHECK(r.eta_max == doctest::Approx(std::min(2.0 / lam, 2.0 * cwu / (cs * cs * xf * xf))).epsilon(1e-14));
}

TEST_CASE("lambda_0 = 0 fails every inequality with positive right-hand side") {
    const InitBounds b = init_bounds_from_norms(0.5, 1.0, 1.0);
    const Matrix x = gen_sphere_data(4, 4, 2).X();
    const ConditionReport r = check_condition(b, 0.0, x, 1.0);
    CHECK_FALSE(r.satisfied[0]);
    CHECK_FALSE(r.satisfied[1]);
    CHECK_FALSE(r.satisfied[2]);
    CHECK_THROWS_AS(check_condition(b, -1.0, x, 1.0), InputError);
}

TEST_CASE("scaling X by alpha scales the third right-hand side by alpha^2") {
    const InitBounds b = init_bounds_from_norms(0.7, 1.2, 0.8);
    const Matrix x = gen_sphere_data(5, 6, 3).X();
    const ConditionReport r1 = check_condition(b, 1.0, x, 0.5);
    const ConditionReport r3 = check_condition(b, 1.0, 3.0 * x, 0.5);
    CHECK(r3.rhs[2] == doctest::Approx(9.0 * r1.rhs[2]).epsilon(1e-13));
}

TEST_CASE("eta_max decreases when a constant grows") {
    const InitBounds b = init_bounds_from_norms(0.7, 1.2, 0.8);
    // lambda_0 small enough that the constant-dependent term binds
    const double base = eta_max(b, 1e-3, 10.0);
    for (int which = 0; which < 3; ++which) {
        InitBounds bigger = b;
        (which == 0 ? bigger.c_w : which == 1 ? bigger.c_u : bigger.c_a) *= 1.5;
        CHECK(eta_max(bigger, 1e-3, 10.0) < base);
    }
}

TEST_CASE("desk-scale report is produced") {
    const Dataset ds = gen_sphere_data(50, 50, 1);
    const DeqParams p = init_params(2000, 50, 0.08, 2);
    const EquilibriumSolution eq = solve_equilibrium(p, ds.X());
    const double lam = min_eig_sym(gram(eq.Z));
    const ConditionReport r =
        check_condition(init_bounds(p), std::max(0.0, lam), ds.X(), (predict(p, eq.Z) - ds.y()).norm());
    CHECK(r.lambda_0 > 0.0);
    CHECK(std::isfinite(r.eta_max));
    CHECK(r.eta_max > 0.0);
    for (int k = 0; k < 3; ++k) CHECK(std::isfinite(r.margins[k]));
}

TEST_CASE("appendix bounds") {
    const Dataset ds = gen_sphere_data(8, 10, 4);
    const DeqParams p = init_params(60, 10, 0.08, 5);
    const InitBounds b = init_bounds(p);
    const Matrix z = solve_equilibrium(p, ds.X()).Z;

    for (const auto& row : appendix_bounds_check(p, p, z, z, ds.X(), b)) {
        CHECK_MESSAGE(row.ok, row.name);
        CHECK(row.precondition_ok);
    }

    DeqParams p0 = p;
    p0.W.setZero();
    const InitBounds b0 = init_bounds(p0);
    const Matrix z0 = solve_equilibrium(p0, ds.X()).Z;
    CHECK(z0.norm() <= b0.rho_u * ds.X().norm() / (1.0 - b0.rho_w));

    TrainConfig cfg;
    cfg.steps = 3;
    const TrainResult tr = train(p, ds, cfg);
    const Matrix z1 = solve_equilibrium(tr.params, ds.X()).Z;
    for (const auto& row : appendix_bounds_check(p, tr.params, z, z1, ds.X(), b)) {
        CHECK(row.precondition_ok);
        CHECK_MESSAGE(row.ok, row.name);
    }

    DeqParams far = p;
    far.U *= 10.0;
    const Matrix zf = solve_equilibrium(far, ds.X()).Z;
    bool flagged = false;
    for (const auto& row : appendix_bounds_check(p, far, z, zf, ds.X(), b)) flagged |= !row.precondition_ok;
    CHECK(flagged);
}

}
