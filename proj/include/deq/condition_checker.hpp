#pragma once

#include "deq/deq_model.hpp"
#include "deq/implicit_grad.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace deq {

// Radii around the initialization and the constants derived from them.
struct InitBounds {
    double delta = 0.0;
    double rho_w = 0.0;  // ||W(0)||_2 + delta, < 1
    double rho_u = 0.0;  // ||U(0)||_2 + delta
    double rho_a = 0.0;  // ||a(0)||_2 + delta
    double c_w = 0.0;    // rho_u rho_a / (1 - rho_w)^2
    double c_u = 0.0;    // rho_a / (1 - rho_w)
    double c_a = 0.0;    // rho_u / (1 - rho_w)
};

// Builds bounds from explicit norms. Throws InputError when w_norm >= 1 or
// the chosen delta pushes rho_w to 1 or beyond. Without delta, half the gap
// to 1 is used.
InitBounds init_bounds_from_norms(double w_norm, double u_norm, double a_norm,
                                  std::optional<double> delta = std::nullopt);

InitBounds init_bounds(const DeqParams& p, std::optional<double> delta = std::nullopt);

// The three initial-condition inequalities on lambda_0 and the learning-rate
// bound that goes with them. Nothing here is enforced; margins are LHS - RHS.
struct ConditionReport {
    double lambda_0 = 0.0;
    std::array<double, 3> lhs{};
    std::array<double, 3> rhs{};
    std::array<double, 3> margins{};
    std::array<bool, 3> satisfied{};
    double eta_max = 0.0;
    double phi_0 = 0.0;
    double x_fro = 0.0;
    double residual_norm_0 = 0.0;

    bool all_satisfied() const noexcept { return satisfied[0] && satisfied[1] && satisfied[2]; }
};

ConditionReport check_condition(const InitBounds& b, double lambda_0, const Matrix& x,
                                double residual_norm_0);

// min(2 / lambda_0, 2 (c_w^2 + c_u^2) / ((c_w^2 + c_u^2 + c_a^2)^2 ||X||_F^2))
double eta_max(const InitBounds& b, double lambda_0, double x_fro);

struct BoundRow {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    bool ok = false;
    bool precondition_ok = true;
};

// Norm bounds relating two parameter states k and s that both stay inside
// the radii of b: ||Z(s)||_F <= c_a ||X||_F, the equilibrium perturbation bound
// and the prediction perturbation bound. 1e-8 slack on every row.
std::vector<BoundRow> appendix_bounds_check(const DeqParams& pk, const DeqParams& ps,
                                            const Matrix& zk, const Matrix& zs, const Matrix& x,
                                            const InitBounds& b);

// ||gW||_F <= c_w ||X||_F ||e||, ||gU||_F <= c_u ||X||_F ||e||,
// ||ga|| <= c_a ||X||_F ||e||, for a state inside the radii of b.
std::vector<BoundRow> gradient_bounds_check(const DeqParams& p, const GradientTriple& g,
                                            const Matrix& x, const Vector& e,
                                            const InitBounds& b);

}  // namespace deq
