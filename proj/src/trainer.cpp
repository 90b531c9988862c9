#include "deq/trainer.hpp"

#include "deq/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace deq {

const char* const kTraceHeader =
    "step,loss,w_spec_norm,lambda_tau,grad_norm_sq,pl_ratio,rate_envelope,solver_iters,residual";

TrainRecord monitors(const DeqParams& p, const Matrix& z, const Dataset& data, double lambda_0,
                     double eta, long tau, double phi_0, const MonitorExtras& extras) {
    TrainRecord r;
    r.step = tau;
    const Vector yhat = predict(p, z);
    r.loss = loss(yhat, data.y());
    r.w_spec_norm = extras.w_norm ? *extras.w_norm : spectral_norm(p.W);
    r.lambda_tau = tau == 0 ? lambda_0 : min_eig_sym(gram(z));

    if (extras.gradient != nullptr) {
        r.grad_norm_sq = grad_norm_sq(*extras.gradient);
    } else {
        SolveHints hints;
        hints.w_norm = r.w_spec_norm;
        r.grad_norm_sq = grad_norm_sq(gradients(p, z, data.X(), data.y(), extras.solver, hints));
    }
    r.pl_ratio = r.loss > 0.0 ? r.grad_norm_sq / (2.0 * r.loss) : 0.0;
    r.rate_envelope = std::pow(1.0 - eta * lambda_0 / 2.0, static_cast<double>(tau)) * phi_0;
    r.solver_iters = extras.solver_iters;
    r.residual = extras.residual;
    r.lambda_below_half = r.lambda_tau <= lambda_0 / 2.0;
    r.pl_below_lambda0 = r.loss > 0.0 && r.pl_ratio < lambda_0;
    return r;
}

namespace {

void require_well_posed(double w_norm, long step, AssertMode mode) {
    if (w_norm < 1.0) return;
    const std::string msg = "train: ||W||_2 = " + std::to_string(w_norm) + " >= 1 at step " +
                            std::to_string(step) + (mode == AssertMode::fail_fast ? " (fail-fast)" : "");
    throw WellPosednessError(msg, w_norm);
}

}  // namespace

TrainResult train(const DeqParams& p0, const Dataset& data, const TrainConfig& cfg,
                  const RecordSink& sink) {
    if (cfg.steps < 0) throw InputError("train: steps must be >= 0");
    if (cfg.eta && !(*cfg.eta > 0.0)) throw InputError("train: eta must be positive");
    if (data.d() != p0.d()) throw InputError("train: data dimension does not match U");

    const Matrix& x = data.X();
    const Vector& y = data.y();
    const long monitor_every = cfg.monitor_every > 0 ? cfg.monitor_every : (data.n() <= 500 ? 1 : 10);
    const long start = cfg.resume ? cfg.resume->start_step : 0;

    TrainResult res;
    res.params = p0;
    DeqParams& p = res.params;

    PowerIterationOptions pow_opts;
    SpectralNormResult wn = spectral_norm_iter(p.W, pow_opts);
    require_well_posed(wn.value, start, cfg.assert_mode);

    SolveHints hints;
    hints.w_norm = wn.value;
    EquilibriumSolution eq = solve_equilibrium(p, x, cfg.solver, hints);
    Vector e = predict(p, eq.Z) - y;
    double phi = 0.5 * e.squaredNorm();

    // The bounds are defined relative to the parameters the run starts from.
    res.bounds = init_bounds_from_norms(wn.value, spectral_norm(p.U), p.a.norm(), cfg.delta);
    const double lambda_now = min_eig_sym(gram(eq.Z));
    if (cfg.resume) {
        res.lambda_0 = cfg.resume->lambda_0;
        res.phi_0 = cfg.resume->phi_0;
    } else {
        res.lambda_0 = lambda_now;
        res.phi_0 = phi;
    }
    res.condition = check_condition(res.bounds, std::max(0.0, res.lambda_0), x,
                                    std::sqrt(2.0 * res.phi_0));
    if (cfg.eta) {
        res.eta = *cfg.eta;
    } else if (cfg.resume) {
        res.eta = cfg.resume->eta;
    } else {
        res.eta = cfg.eta_safety * res.condition.eta_max;
    }
    res.sanctioned = res.eta <= res.condition.eta_max;
    res.max_w_spec_norm = wn.value;

    Matrix adjoint_basis;
    double prev_phi = phi;
    for (long step = start;; ++step) {
        if (step > start) {
            const double rel = (phi - prev_phi) / std::max(prev_phi, 1e-300);
            res.max_rel_loss_increase = std::max(res.max_rel_loss_increase, rel);
            if (cfg.assert_mode == AssertMode::fail_fast && res.sanctioned && rel > 1e-8) {
                throw GuaranteeViolation("train: loss increased by relative " + std::to_string(rel) +
                                             " at step " + std::to_string(step) +
                                             " under a sanctioned step size",
                                         step);
            }
        }

        const ActivationMask mask = activation_mask(p, eq.Z, x);
        SolveHints adj_hints;
        adj_hints.w_norm = wn.value;
        if (cfg.warm_start && adjoint_basis.size() > 0) adj_hints.warm_start = &adjoint_basis;
        AdjointSolution adj = solve_adjoint_basis(p, mask, cfg.solver, adj_hints);
        adjoint_basis = std::move(adj.M);
        const GradientTriple g = gradients_from_basis(adjoint_basis, eq.Z, x, e);

        const bool last = step >= start + cfg.steps;
        if ((step - start) % monitor_every == 0 || last) {
            MonitorExtras extras;
            extras.gradient = &g;
            extras.w_norm = wn.value;
            extras.solver_iters = eq.iterations;
            extras.residual = eq.residual;
            TrainRecord rec = monitors(p, eq.Z, data, res.lambda_0, res.eta, step, res.phi_0, extras);
            res.lambda_warnings += rec.lambda_below_half ? 1 : 0;
            res.pl_warnings += rec.pl_below_lambda0 ? 1 : 0;
            if (sink) sink(rec, res);
            res.trace.push_back(rec);
        }
        if (last) {
            res.final_step = step;
            break;
        }

        p.W -= res.eta * g.gW;
        p.U -= res.eta * g.gU;
        p.a -= res.eta * g.ga;
        require_finite(p.W, "train W");

        wn = spectral_norm_iter(p.W, pow_opts, &wn.right_vector);
        res.max_w_spec_norm = std::max(res.max_w_spec_norm, wn.value);
        require_well_posed(wn.value, step + 1, cfg.assert_mode);

        SolveHints fwd;
        fwd.w_norm = wn.value;
        if (cfg.warm_start) fwd.warm_start = &eq.Z;
        EquilibriumSolution next = solve_equilibrium(p, x, cfg.solver, fwd);
        eq = std::move(next);
        prev_phi = phi;
        e = predict(p, eq.Z) - y;
        phi = 0.5 * e.squaredNorm();
    }
    return res;
}

std::string format_record(const TrainRecord& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g", r.step, r.loss,
                  r.w_spec_norm, r.lambda_tau, r.grad_norm_sq, r.pl_ratio, r.rate_envelope,
                  r.solver_iters, r.residual);
    return buf;
}

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace,
                     const std::string& comment, bool append) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    if (!append) {
        if (!comment.empty()) {
            std::istringstream lines(comment);
            std::string line;
            while (std::getline(lines, line)) out << "# " << line << '\n';
        }
        out << kTraceHeader << '\n';
    }
    for (const auto& r : trace) out << format_record(r) << '\n';
}

}  // namespace deq
