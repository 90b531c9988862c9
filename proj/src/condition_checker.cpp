#include "deq/condition_checker.hpp"

#include "deq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace deq {

namespace {

constexpr double kSlack = 1e-8;

bool leq(double lhs, double rhs) { return lhs <= rhs + kSlack * (1.0 + std::abs(rhs)); }

struct StateNorms {
    double w = 0.0;
    double u = 0.0;
    double a = 0.0;
};

StateNorms norms_of(const DeqParams& p) {
    return {spectral_norm(p.W), spectral_norm(p.U), p.a.norm()};
}

bool inside(const StateNorms& s, const InitBounds& b) {
    return s.w <= b.rho_w && s.u <= b.rho_u && s.a <= b.rho_a;
}

}  // namespace

InitBounds init_bounds_from_norms(double w_norm, double u_norm, double a_norm,
                                  std::optional<double> delta) {
    if (!(w_norm < 1.0)) throw InputError("init_bounds: ||W(0)||_2 must be < 1");
    InitBounds b;
    b.delta = delta ? *delta : 0.5 * (1.0 - w_norm);
    if (!(b.delta > 0.0)) throw InputError("init_bounds: delta must be positive");
    b.rho_w = w_norm + b.delta;
    if (!(b.rho_w < 1.0)) throw InputError("init_bounds: ||W(0)||_2 + delta must be < 1");
    b.rho_u = u_norm + b.delta;
    b.rho_a = a_norm + b.delta;
    const double gap = 1.0 - b.rho_w;
    b.c_w = b.rho_u * b.rho_a / (gap * gap);
    b.c_u = b.rho_a / gap;
    b.c_a = b.rho_u / gap;
    return b;
}

InitBounds init_bounds(const DeqParams& p, std::optional<double> delta) {
    const StateNorms s = norms_of(p);
    return init_bounds_from_norms(s.w, s.u, s.a, delta);
}

double eta_max(const InitBounds& b, double lambda_0, double x_fro) {
    const double cwu = b.c_w * b.c_w + b.c_u * b.c_u;
    const double all = cwu + b.c_a * b.c_a;
    const double smooth = 2.0 * cwu / (all * all * x_fro * x_fro);
    if (!(lambda_0 > 0.0)) return smooth;
    return std::min(2.0 / lambda_0, smooth);
}

ConditionReport check_condition(const InitBounds& b, double lambda_0, const Matrix& x,
                                double residual_norm_0) {
    if (!(lambda_0 >= 0.0)) throw InputError("check_condition: lambda_0 must be >= 0");
    ConditionReport r;
    r.lambda_0 = lambda_0;
    r.x_fro = x.norm();
    r.residual_norm_0 = residual_norm_0;
    r.phi_0 = 0.5 * residual_norm_0 * residual_norm_0;

    const double x2 = r.x_fro * r.x_fro;
    const double cwu = b.c_w * b.c_w + b.c_u * b.c_u;
    const double cmax = std::max({b.c_w, b.c_u, b.c_a});

    r.lhs[0] = lambda_0;
    r.rhs[0] = 4.0 / b.delta * cmax * r.x_fro * residual_norm_0;
    r.lhs[1] = std::pow(lambda_0, 1.5);
    r.rhs[1] = 4.0 * (2.0 + std::numbers::sqrt2) / b.rho_a * cwu * x2 * residual_norm_0;
    r.lhs[2] = lambda_0;
    r.rhs[2] = 4.0 * cwu * x2;
    for (std::size_t k = 0; k < 3; ++k) {
        r.margins[k] = r.lhs[k] - r.rhs[k];
        r.satisfied[k] = r.margins[k] >= 0.0;
    }
    r.eta_max = eta_max(b, lambda_0, r.x_fro);
    return r;
}

std::vector<BoundRow> appendix_bounds_check(const DeqParams& pk, const DeqParams& ps,
                                            const Matrix& zk, const Matrix& zs, const Matrix& x,
                                            const InitBounds& b) {
    const bool pre = inside(norms_of(pk), b) && inside(norms_of(ps), b);
    const double xf = x.norm();
    const double dw = spectral_norm(pk.W - ps.W);
    const double du = spectral_norm(pk.U - ps.U);
    const double da = (pk.a - ps.a).norm();

    std::vector<BoundRow> rows;
    auto add = [&](std::string name, double lhs, double rhs) {
        BoundRow row{std::move(name), lhs, rhs, false, pre};
        row.ok = pre && leq(lhs, rhs);
        rows.push_back(std::move(row));
    };
    add("Z_norm_k", zk.norm(), b.c_a * xf);
    add("Z_norm_s", zs.norm(), b.c_a * xf);
    add("delta_Z", (zk - zs).norm(), (b.c_w * dw + b.c_u * du) * xf / b.rho_a);
    add("delta_yhat", (predict(pk, zk) - predict(ps, zs)).norm(),
        (b.c_w * dw + b.c_u * du + b.c_a * da) * xf);
    return rows;
}

std::vector<BoundRow> gradient_bounds_check(const DeqParams& p, const GradientTriple& g,
                                            const Matrix& x, const Vector& e,
                                            const InitBounds& b) {
    const bool pre = inside(norms_of(p), b);
    const double scale = x.norm() * e.norm();
    std::vector<BoundRow> rows;
    auto add = [&](std::string name, double lhs, double rhs) {
        BoundRow row{std::move(name), lhs, rhs, false, pre};
        row.ok = pre && leq(lhs, rhs);
        rows.push_back(std::move(row));
    };
    add("grad_W", g.gW.norm(), b.c_w * scale);
    add("grad_U", g.gU.norm(), b.c_u * scale);
    add("grad_a", g.ga.norm(), b.c_a * scale);
    return rows;
}

}  // namespace deq
