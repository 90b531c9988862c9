#include "deq/cli/commands.hpp"

#include "deq/cli/output.hpp"
#include "deq/concentration_lab.hpp"
#include "deq/condition_checker.hpp"
#include "deq/deq_model.hpp"
#include "deq/errors.hpp"
#include "deq/gradient_check.hpp"
#include "deq/implicit_grad.hpp"
#include "deq/population_kernel.hpp"
#include "deq/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace deq::cli {

namespace {

fs::path output_dir(const Json& cfg) {
    fs::path dir = get<std::string>(cfg, "output.directory");
    fs::create_directories(dir);
    return dir;
}

SolverConfig solver_config(const Json& cfg) {
    return SolverConfig{get<double>(cfg, "solver.tol"), get<int>(cfg, "solver.max_iter")};
}

std::uint64_t useed(const Json& cfg, const std::string& key) { return get<std::uint64_t>(cfg, key); }

std::optional<double> optional_number(const Json& cfg, const std::string& key) {
    const Json& v = at_path(cfg, key);
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
}

void write_series_csv(const fs::path& path, const std::string& header, const std::vector<double>& ys,
                      const std::string& stamp) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "# " << stamp << '\n' << header << '\n';
    char buf[64];
    for (std::size_t k = 0; k < ys.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g", k + 1, ys[k]);
        out << buf << '\n';
    }
}

std::vector<double> index_axis(std::size_t count) {
    std::vector<double> xs(count);
    for (std::size_t k = 0; k < count; ++k) xs[k] = static_cast<double>(k + 1);
    return xs;
}

Json bounds_json(const InitBounds& b) {
    Json j;
    j["delta"] = b.delta;
    j["rho_w"] = b.rho_w;
    j["rho_u"] = b.rho_u;
    j["rho_a"] = b.rho_a;
    j["c_w"] = b.c_w;
    j["c_u"] = b.c_u;
    j["c_a"] = b.c_a;
    return j;
}

const char* const kConditionNames[3] = {"radius", "cross_term", "gram_floor"};

Json condition_json(const ConditionReport& r) {
    Json j;
    j["lambda_0"] = r.lambda_0;
    j["phi_0"] = r.phi_0;
    j["x_fro"] = r.x_fro;
    j["residual_norm_0"] = r.residual_norm_0;
    j["eta_max"] = r.eta_max;
    j["all_satisfied"] = r.all_satisfied();
    Json rows = Json::array();
    for (std::size_t k = 0; k < 3; ++k) {
        Json row;
        row["name"] = kConditionNames[k];
        row["lhs"] = r.lhs[k];
        row["rhs"] = r.rhs[k];
        row["margin"] = r.margins[k];
        row["satisfied"] = r.satisfied[k];
        rows.push_back(row);
    }
    j["inequalities"] = rows;
    return j;
}

void write_state_sidecar(const fs::path& ckpt, const TrainResult& r, long step, const RunStamp& stamp) {
    Json body;
    body["step"] = step;
    body["lambda_0"] = r.lambda_0;
    body["phi_0"] = r.phi_0;
    body["eta"] = r.eta;
    write_report(fs::path(ckpt.string() + ".json"), stamp, body);
}

TrainResume read_state_sidecar(const fs::path& ckpt, std::uint64_t ckpt_step) {
    const fs::path side = ckpt.string() + ".json";
    std::ifstream in(side);
    if (!in) throw ConfigError("config: cannot open train state " + side.string());
    const Json doc = Json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ParseError("train state " + side.string() + " is not valid JSON");
    TrainResume r;
    try {
        r.start_step = doc.at("step").get<long>();
        r.lambda_0 = doc.at("lambda_0").get<double>();
        r.phi_0 = doc.at("phi_0").get<double>();
        r.eta = doc.at("eta").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("train state " + side.string() + ": " + e.what());
    }
    if (static_cast<std::uint64_t>(r.start_step) != ckpt_step) {
        throw ParseError("train state step does not match checkpoint " + ckpt.string());
    }
    return r;
}

Json data_json(const Json& cfg, const Dataset& ds) {
    const auto kind = get<std::string>(cfg, "data.kind");
    Json j;
    j["kind"] = kind;
    j["provenance"] = to_string(ds.provenance());
    j["n"] = ds.n();
    j["d"] = ds.d();
    j["seed"] = useed(cfg, "data.seed");
    if (kind == "synthetic") {
        j["label_encoding"] = "standard normal, clipped to [-y_cap, y_cap]";
    } else if (kind == "file") {
        j["label_encoding"] = "as read from y_path";
    } else {
        const Json& classes = at_path(cfg, "data.classes");
        j["label_encoding"] = "class " + std::to_string(classes[0].get<int>()) + " -> -1, class " +
                              std::to_string(classes[1].get<int>()) + " -> +1";
    }
    return j;
}

RawImages concat(RawImages a, const RawImages& b) {
    if (a.pixels.size() == 0) return b;
    if (a.pixels.rows() != b.pixels.rows()) throw ParseError("cifar batches disagree on image size");
    Matrix joined(a.pixels.rows(), a.pixels.cols() + b.pixels.cols());
    joined << a.pixels, b.pixels;
    a.pixels = std::move(joined);
    a.labels.insert(a.labels.end(), b.labels.begin(), b.labels.end());
    return a;
}

}  // namespace

Dataset load_dataset(const Json& cfg, std::ostream& err) {
    const auto kind = get<std::string>(cfg, "data.kind");
    if (kind == "synthetic") {
        const auto n = get<Eigen::Index>(cfg, "data.n");
        const auto d = get<Eigen::Index>(cfg, "data.d");
        const auto seed = useed(cfg, "data.seed");
        const double cap = get<double>(cfg, "data.y_cap");
        if (n == 1) {
            err << "warning: n = 1, the pairwise data condition is vacuous\n";
            const Dataset two = gen_sphere_data(2, d, seed, cap);
            return Dataset(two.X().leftCols(1), two.y().head(1), Provenance::synthetic);
        }
        return gen_sphere_data(n, d, seed, cap);
    }
    if (kind == "file") {
        Matrix x = read_matrix_csv(get<std::string>(cfg, "data.x_path"));
        Vector y = read_labels_csv(get<std::string>(cfg, "data.y_path"));
        if (y.size() != x.cols()) throw ParseError("label count does not match the number of columns of X");
        return Dataset(std::move(x), std::move(y), Provenance::file);
    }
    RawImages raw;
    if (kind == "mnist") {
        raw = load_idx(get<std::string>(cfg, "data.images_path"), get<std::string>(cfg, "data.labels_path"));
    } else {
        for (const auto& p : at_path(cfg, "data.cifar_paths")) {
            raw = concat(std::move(raw), load_cifar_bin(p.get<std::string>()));
        }
    }
    const Json& classes = at_path(cfg, "data.classes");
    Dataset ds = subset_binary(raw, classes[0].get<int>(), classes[1].get<int>(),
                               get<std::size_t>(cfg, "data.per_class"), useed(cfg, "data.seed"));
    if (kind == "cifar10") return Dataset(ds.X(), ds.y(), Provenance::cifar10);
    return ds;
}

int cmd_gen_data(const Json& cfg, std::ostream& out, std::ostream& err) {
    const Dataset ds = load_dataset(cfg, err);
    const fs::path dir = output_dir(cfg);
    const RunStamp stamp = make_stamp("gen-data", cfg, useed(cfg, "data.seed"));
    write_matrix_csv(dir / "X.csv", ds.X(), stamp.line());
    write_labels_csv(dir / "y.csv", ds.y(), stamp.line());
    Json body;
    body["data"] = data_json(cfg, ds);
    body["y_cap"] = get<double>(cfg, "data.y_cap");
    body["x_file"] = "X.csv";
    body["y_file"] = "y.csv";
    write_report(dir / "data.json", stamp, body);
    out << "wrote " << ds.d() << " x " << ds.n() << " dataset to " << dir.string() << '\n';
    return 0;
}

int cmd_kernel(const Json& cfg, std::ostream& out, std::ostream& err) {
    const Dataset ds = load_dataset(cfg, err);
    const double s = get<double>(cfg, "model.sigma_w2");
    const fs::path dir = output_dir(cfg);
    const RunStamp stamp = make_stamp("kernel", cfg, useed(cfg, "data.seed"));

    const PopulationKernel pk = kernel_fixed_point(ds.X(), s, get<double>(cfg, "kernel.tol"));
    write_matrix_csv(dir / "kernel_K.csv", pk.K, stamp.line());
    write_matrix_csv(dir / "kernel_cos.csv", pk.cos_theta, stamp.line());
    const std::vector<double> decay = kernel_depth_decay(ds.X(), s, get<int>(cfg, "kernel.l_max"));
    write_series_csv(dir / "kernel_depth_decay.csv", "l,frobenius_error", decay, stamp.line());
    write_svg(dir / "kernel_depth_decay.svg",
              PlotSpec{"population kernel depth decay", "depth l", "||K - K^(l)||_F", false, true, {}},
              {Series{"error", index_axis(decay.size()), decay}}, stamp.line());

    const auto n = static_cast<std::uint64_t>(ds.n());
    Json body;
    body["data"] = data_json(cfg, ds);
    body["n"] = ds.n();
    body["d"] = ds.d();
    body["sigma_w2"] = s;
    body["lambda_star"] = pk.lambda_star;
    body["positive_definite"] = pk.positive_definite;
    body["width_constant"] = get<double>(cfg, "kernel.width_constant");
    body["width_t"] = get<double>(cfg, "kernel.width_t");
    body["depth_constant"] = get<double>(cfg, "kernel.depth_constant");
    int code = 0;
    if (pk.positive_definite) {
        body["suggested_width"] = suggested_width(n, pk.lambda_star, get<double>(cfg, "kernel.width_t"),
                                                  get<double>(cfg, "kernel.width_constant"));
        body["suggested_depth"] = suggested_depth(n, pk.lambda_star, s, get<double>(cfg, "kernel.depth_constant"));
    } else {
        body["suggested_width"] = nullptr;
        body["suggested_depth"] = nullptr;
        err << "error: population kernel is not positive definite (lambda* = " << pk.lambda_star
            << "); the data violate the separation assumption\n";
        code = static_cast<int>(ExitCode::assumption);
    }
    write_report(dir / "kernel.json", stamp, body);
    out << "lambda* = " << pk.lambda_star << '\n';
    if (pk.positive_definite) {
        out << "suggested width = " << body["suggested_width"].get<std::uint64_t>()
            << ", suggested depth = " << body["suggested_depth"].get<std::uint64_t>() << '\n';
    }
    return code;
}

int cmd_check(const Json& cfg, std::ostream& out, std::ostream& err) {
    Dataset ds = load_dataset(cfg, err);
    const DeqParams p = init_params(get<Eigen::Index>(cfg, "model.m"), ds.d(),
                                    get<double>(cfg, "model.sigma_w2"), useed(cfg, "model.seed"));
    const fs::path dir = output_dir(cfg);
    const RunStamp stamp = make_stamp("check", cfg, useed(cfg, "model.seed"));

    const WellPosedness wp = well_posedness(p);
    if (!wp.ok) throw WellPosednessError("check: ||W(0)||_2 = " + std::to_string(wp.spec_norm) + " >= 1",
                                         wp.spec_norm);
    SolveHints hints;
    hints.w_norm = wp.spec_norm;
    const EquilibriumSolution eq = solve_equilibrium(p, ds.X(), solver_config(cfg), hints);
    if (get<bool>(cfg, "check.zero_residual")) ds = ds.with_labels(predict(p, eq.Z));
    const double residual_norm = (predict(p, eq.Z) - ds.y()).norm();
    const double lambda_0 = min_eig_sym(gram(eq.Z));
    const InitBounds b = init_bounds(p, optional_number(cfg, "check.delta"));
    const ConditionReport r = check_condition(b, std::max(0.0, lambda_0), ds.X(), residual_norm);

    Json body;
    body["data"] = data_json(cfg, ds);
    if (get<bool>(cfg, "check.zero_residual")) body["data"]["label_encoding"] = "initial predictions (zero residual)";
    body["m"] = p.m();
    body["n"] = ds.n();
    body["d"] = ds.d();
    body["sigma_w2"] = p.sigma_w2;
    body["w_spec_norm"] = wp.spec_norm;
    body["lambda_0_raw"] = lambda_0;
    body["solver_iterations"] = eq.iterations;
    body["solver_residual"] = eq.residual;
    body["bounds"] = bounds_json(b);
    body["condition"] = condition_json(r);
    write_report(dir / "condition.json", stamp, body);

    std::ofstream csv(dir / "condition.csv");
    if (!csv) throw InputError("cannot write condition.csv");
    csv << "# " << stamp.line() << "\nname,lhs,rhs,margin,satisfied\n";
    char buf[256];
    for (std::size_t k = 0; k < 3; ++k) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%d", kConditionNames[k], r.lhs[k], r.rhs[k],
                      r.margins[k], r.satisfied[k] ? 1 : 0);
        csv << buf << '\n';
    }

    out << "lambda_0 = " << lambda_0 << ", eta_max = " << r.eta_max << '\n';
    for (std::size_t k = 0; k < 3; ++k) {
        out << kConditionNames[k] << ": margin " << r.margins[k] << (r.satisfied[k] ? " ok" : " violated")
            << '\n';
    }
    return 0;
}

int cmd_train(const Json& cfg, std::ostream& out, std::ostream& err) {
    const Dataset ds = load_dataset(cfg, err);
    const fs::path dir = output_dir(cfg);
    const RunStamp stamp = make_stamp("train", cfg, useed(cfg, "model.seed"));

    TrainConfig tc;
    const Json& eta = at_path(cfg, "train.eta");
    if (eta.is_number()) tc.eta = eta.get<double>();
    tc.eta_safety = get<double>(cfg, "train.eta_safety");
    tc.steps = get<long>(cfg, "train.steps");
    tc.monitor_every = get<long>(cfg, "train.monitor_every");
    tc.solver = solver_config(cfg);
    tc.assert_mode = get<std::string>(cfg, "train.assert_mode") == "fail_fast" ? AssertMode::fail_fast
                                                                               : AssertMode::record;
    tc.warm_start = get<bool>(cfg, "train.warm_start");
    tc.delta = optional_number(cfg, "train.delta");

    DeqParams p0;
    const Json& resume = at_path(cfg, "train.resume");
    if (resume.is_null()) {
        p0 = init_params(get<Eigen::Index>(cfg, "model.m"), ds.d(), get<double>(cfg, "model.sigma_w2"),
                         useed(cfg, "model.seed"));
    } else {
        const fs::path ckpt = resume.get<std::string>();
        Checkpoint c = load_checkpoint(ckpt);
        tc.resume = read_state_sidecar(ckpt, c.step);
        p0 = std::move(c.params);
        out << "resuming from step " << c.step << '\n';
    }

    // Appending to an existing trace keeps one contiguous file; the resumed
    // start step is already its last row.
    const fs::path metrics = dir / "metrics.csv";
    const bool append = tc.resume && fs::exists(metrics);
    std::ofstream csv(metrics, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw InputError("cannot write " + metrics.string());
    if (!append) csv << "# " << stamp.line() << '\n' << kTraceHeader << '\n';

    const long every = get<long>(cfg, "train.checkpoint_every");
    const long start = tc.resume ? tc.resume->start_step : 0;
    long envelope_violations = 0;
    long pl_floor_violations = 0;
    auto sink = [&](const TrainRecord& rec, const TrainResult& partial) {
        if (!(append && rec.step == start)) csv << format_record(rec) << '\n' << std::flush;
        if (rec.loss > rec.rate_envelope + 1e-10 * (1.0 + rec.rate_envelope)) ++envelope_violations;
        if (rec.grad_norm_sq < 2.0 * rec.lambda_tau * rec.loss - 1e-8 * (1.0 + rec.loss)) ++pl_floor_violations;
        const bool final_step = rec.step == start + tc.steps;
        if ((every > 0 && rec.step > start && rec.step % every == 0) || final_step) {
            const fs::path ckpt = dir / ("checkpoint_" + std::to_string(rec.step) + ".bin");
            save_checkpoint(ckpt, partial.params, static_cast<std::uint64_t>(rec.step));
            write_state_sidecar(ckpt, partial, rec.step, stamp);
        }
    };
    const TrainResult res = train(p0, ds, tc, sink);
    csv.close();

    std::vector<double> steps;
    std::vector<double> loss;
    std::vector<double> envelope;
    std::vector<double> wnorm;
    std::vector<double> lambda;
    for (const auto& r : res.trace) {
        steps.push_back(static_cast<double>(r.step));
        loss.push_back(r.loss);
        envelope.push_back(r.rate_envelope);
        wnorm.push_back(r.w_spec_norm);
        lambda.push_back(r.lambda_tau);
    }
    const std::string m_tag = "m=" + std::to_string(res.params.m());
    write_svg(dir / "loss.svg", PlotSpec{"training loss", "step", "loss", false, true, {}},
              {Series{m_tag, steps, loss}, Series{"rate envelope", steps, envelope}}, stamp.line());
    write_svg(dir / "w_spec_norm.svg", PlotSpec{"spectral norm of W", "step", "||W||_2", false, false, 1.0},
              {Series{m_tag, steps, wnorm}}, stamp.line());
    write_svg(dir / "lambda_tau.svg", PlotSpec{"least Gram eigenvalue", "step", "lambda_tau", false, false, {}},
              {Series{m_tag, steps, lambda}}, stamp.line());

    const bool envelope_asserted = res.condition.all_satisfied();
    Json body;
    body["data"] = data_json(cfg, ds);
    body["m"] = res.params.m();
    body["n"] = ds.n();
    body["d"] = ds.d();
    body["start_step"] = start;
    body["final_step"] = res.final_step;
    body["eta"] = res.eta;
    body["eta_auto"] = !tc.eta.has_value() && !tc.resume.has_value();
    body["sanctioned"] = res.sanctioned;
    body["lambda_0"] = res.lambda_0;
    body["phi_0"] = res.phi_0;
    body["final_loss"] = res.trace.empty() ? res.phi_0 : res.trace.back().loss;
    body["max_w_spec_norm"] = res.max_w_spec_norm;
    body["max_rel_loss_increase"] = res.max_rel_loss_increase;
    body["lambda_warnings"] = res.lambda_warnings;
    body["pl_warnings"] = res.pl_warnings;
    body["pl_floor_violations"] = pl_floor_violations;
    body["envelope_asserted"] = envelope_asserted;
    body["envelope_violations"] = envelope_violations;
    body["bounds"] = bounds_json(res.bounds);
    body["condition"] = condition_json(res.condition);
    write_report(dir / "train.json", stamp, body);

    out << "eta = " << res.eta << (res.sanctioned ? " (within eta_max)" : " (above eta_max)") << '\n';
    out << "loss " << res.phi_0 << " -> " << body["final_loss"].get<double>() << " after "
        << res.final_step - start << " steps; max ||W||_2 = " << res.max_w_spec_norm << '\n';
    if (res.lambda_warnings > 0) {
        err << "warning: lambda_tau fell to lambda_0/2 or below at " << res.lambda_warnings
            << " monitored steps\n";
    }
    if (pl_floor_violations > 0) {
        err << "warning: PL floor violated at " << pl_floor_violations << " monitored steps\n";
    }
    if (envelope_asserted && envelope_violations > 0) {
        err << "linear-rate envelope exceeded at " << envelope_violations
            << " steps although the initial condition holds\n";
        if (tc.assert_mode == AssertMode::fail_fast) return static_cast<int>(ExitCode::assertion);
    }
    return 0;
}

int cmd_concentration(const Json& cfg, std::ostream& out, std::ostream& err) {
    const Dataset ds = load_dataset(cfg, err);
    const double s = get<double>(cfg, "model.sigma_w2");
    const fs::path dir = output_dir(cfg);
    const auto base_seed = useed(cfg, "concentration.base_seed");
    const RunStamp stamp = make_stamp("concentration", cfg, base_seed);
    const auto m_list = get<std::vector<long>>(cfg, "concentration.m_list");
    const long trials = get<long>(cfg, "concentration.trials");
    const int l = get<int>(cfg, "concentration.l");
    const int l_max = get<int>(cfg, "concentration.l_max");

    Json body;
    body["data"] = data_json(cfg, ds);
    for (const auto& ex : at_path(cfg, "concentration.experiments")) {
        const auto name = ex.get<std::string>();
        if (name == "tied_vs_population" || name == "lambda0_vs_width") {
            const ConcentrationReport r =
                name == "tied_vs_population"
                    ? tied_vs_population(ds.X(), s, m_list, l, trials, base_seed)
                    : lambda0_vs_width(ds.X(), s, m_list, trials, base_seed, solver_config(cfg));
            write_trials_csv((dir / (name + "_trials.csv")).string(), r, stamp.line());
            write_summary_csv((dir / (name + "_summary.csv")).string(), r, stamp.line());
            Series med{"median", {}, {}};
            Series lo{"q1", {}, {}};
            Series hi{"q3", {}, {}};
            Json cells = Json::array();
            for (const auto& c : r.cells) {
                med.x.push_back(static_cast<double>(c.m));
                med.y.push_back(c.median);
                lo.x.push_back(static_cast<double>(c.m));
                lo.y.push_back(c.q1);
                hi.x.push_back(static_cast<double>(c.m));
                hi.y.push_back(c.q3);
                Json cell{{"m", c.m}, {"median", c.median}, {"q1", c.q1}, {"q3", c.q3}};
                if (c.fraction_at_least_half >= 0.0) cell["fraction_at_least_half"] = c.fraction_at_least_half;
                cells.push_back(cell);
                out << name << " m=" << c.m << " median=" << c.median;
                if (c.fraction_at_least_half >= 0.0) out << " fraction>=1/2=" << c.fraction_at_least_half;
                out << '\n';
            }
            const bool tied = name == "tied_vs_population";
            write_svg(dir / (name + ".svg"),
                      PlotSpec{tied ? "tied Gram vs population kernel" : "lambda_0 / (m lambda*)", "width m",
                               tied ? "||G^(l)/m - K^(l)||_F" : "lambda_0 / (m lambda*)", true, tied,
                               tied ? std::nullopt : std::optional<double>(0.5)},
                      {med, lo, hi}, stamp.line());
            body[name] = cells;
        } else if (name == "kernel_depth" || name == "equilibrium_depth") {
            std::vector<double> series;
            if (name == "kernel_depth") {
                series = kernel_depth_decay(ds.X(), s, l_max);
            } else {
                const DeqParams p = init_params(get<Eigen::Index>(cfg, "model.m"), ds.d(), s,
                                                useed(cfg, "model.seed"));
                series = equilibrium_depth_decay(p, ds.X(), l_max);
            }
            write_series_csv(dir / (name + ".csv"), "l,frobenius_error", series, stamp.line());
            write_svg(dir / (name + ".svg"),
                      PlotSpec{name == "kernel_depth" ? "||K - K^(l)||_F" : "(1/m)||G - G^(l)||_F", "depth l",
                               "error", false, true, {}},
                      {Series{"error", index_axis(series.size()), series}}, stamp.line());
            body[name] = series;
            out << name << " l=1.." << l_max << " last=" << (series.empty() ? 0.0 : series.back()) << '\n';
        } else if (name == "reconstruct") {
            const DeqParams p = init_params(get<Eigen::Index>(cfg, "model.m"), ds.d(), s,
                                            useed(cfg, "model.seed"));
            const auto i = get<Eigen::Index>(cfg, "concentration.reconstruct.i");
            const auto j = get<Eigen::Index>(cfg, "concentration.reconstruct.j");
            const int rl = get<int>(cfg, "concentration.reconstruct.l");
            const ReconstructResult r = fresh_randomness_reconstruct(p, ds.X(), i, j, rl);
            std::ofstream csv(dir / "reconstruct.csv");
            if (!csv) throw InputError("cannot write reconstruct.csv");
            char buf[256];
            std::snprintf(buf, sizeof buf, "%ld,%ld,%d,%ld,%.17g,%.17g,%.17g,%ld", static_cast<long>(i),
                          static_cast<long>(j), rl, static_cast<long>(p.m()), r.identity_error,
                          r.inner_product_error, r.g_next, static_cast<long>(r.rank));
            csv << "# " << stamp.line() << "\ni,j,l,m,identity_error,inner_product_error,g_next,rank\n"
                << buf << '\n';
            body[name] = Json{{"i", i},
                              {"j", j},
                              {"l", rl},
                              {"m", p.m()},
                              {"identity_error", r.identity_error},
                              {"inner_product_error", r.inner_product_error},
                              {"g_next", r.g_next},
                              {"rank", r.rank}};
            out << "reconstruct (i=" << i << ", j=" << j << ", l=" << rl << "): identity error "
                << r.identity_error << ", inner-product error " << r.inner_product_error << '\n';
        }
    }
    body["trials"] = trials;
    body["base_seed"] = base_seed;
    write_report(dir / "concentration.json", stamp, body);
    return 0;
}

int cmd_grad_check(const Json& cfg, std::ostream& out, std::ostream& err) {
    (void)err;
    const auto m = get<Eigen::Index>(cfg, "grad_check.m");
    const auto n = get<Eigen::Index>(cfg, "grad_check.n");
    const auto d = get<Eigen::Index>(cfg, "grad_check.d");
    const auto seed = useed(cfg, "grad_check.seed");
    const fs::path dir = output_dir(cfg);
    const RunStamp stamp = make_stamp("grad-check", cfg, seed);

    const Dataset ds = gen_sphere_data(n, d, seed);
    DeqParams p = init_params(m, d, get<double>(cfg, "grad_check.sigma_w2"), splitmix64(seed));
    p.W *= get<double>(cfg, "grad_check.w_scale");

    const SolverConfig solver{get<double>(cfg, "grad_check.solver_tol"), 100000};
    EquilibriumSolution eq;
    try {
        eq = solve_equilibrium(p, ds.X(), solver);
    } catch (const WellPosednessError& e) {
        throw WellPosednessError(std::string("grad-check: deq_model forward solve at step 0: ") + e.what(),
                                 e.spectral_norm());
    }
    GradientTriple g = gradients(p, eq.Z, ds.X(), ds.y(), solver);
    const double corrupt = get<double>(cfg, "grad_check.corrupt_scale");
    if (corrupt != 0.0) g.gW *= 1.0 + corrupt;

    FiniteDifferenceOptions fo;
    fo.step = get<double>(cfg, "grad_check.step");
    fo.rel_tol = get<double>(cfg, "grad_check.rel_tol");
    fo.kink_tol = get<double>(cfg, "grad_check.kink_tol");
    fo.solver = solver;
    const FiniteDifferenceReport fd = finite_difference_check(p, ds.X(), ds.y(), g, fo);

    Json body;
    body["m"] = m;
    body["n"] = n;
    body["d"] = d;
    body["finite_difference"] = Json{{"probes", fd.probes},
                                     {"skipped_near_kink", fd.skipped},
                                     {"failures", fd.failures},
                                     {"max_rel_error", fd.max_rel_error},
                                     {"passed", fd.passed()}};
    bool ok = fd.passed();
    out << "finite differences: " << fd.probes - fd.skipped << " probes, " << fd.failures
        << " failures, max relative error " << fd.max_rel_error << (fd.passed() ? " PASS" : " FAIL") << '\n';

    if (m * n <= 400) {
        const GradientTriple dense = dense_kronecker_gradients(p, eq.Z, ds.X(), ds.y());
        const double gap = relative_gradient_gap(g, dense);
        const bool kron_ok = gap <= get<double>(cfg, "grad_check.kronecker_tol");
        ok = ok && kron_ok;
        body["kronecker"] = Json{{"relative_gap", gap}, {"passed", kron_ok}};
        out << "kronecker form: relative gap " << gap << (kron_ok ? " PASS" : " FAIL") << '\n';
    } else {
        body["kronecker"] = nullptr;
        out << "kronecker form: skipped (m n > 400)\n";
    }
    body["passed"] = ok;
    write_report(dir / "grad_check.json", stamp, body);
    return ok ? 0 : static_cast<int>(ExitCode::assertion);
}

int run_command(const std::string& command, const Json& cfg, std::ostream& out, std::ostream& err) {
    try {
        validate_config(cfg, command);
        if (command == "gen-data") return cmd_gen_data(cfg, out, err);
        if (command == "kernel") return cmd_kernel(cfg, out, err);
        if (command == "check") return cmd_check(cfg, out, err);
        if (command == "train") return cmd_train(cfg, out, err);
        if (command == "concentration") return cmd_concentration(cfg, out, err);
        if (command == "grad-check") return cmd_grad_check(cfg, out, err);
        throw ConfigError("unknown command " + command);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config);
    } catch (const InputError& e) {
        err << "invalid input: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config);
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config);
    } catch (const ConvergenceError& e) {
        err << "no convergence: " << e.what() << " (residual " << e.last_residual() << " after "
            << e.iterations() << " iterations)\n";
        return static_cast<int>(ExitCode::convergence);
    } catch (const WellPosednessError& e) {
        err << "well-posedness violated: " << e.what() << '\n';
        return static_cast<int>(ExitCode::assumption);
    } catch (const AssumptionError& e) {
        err << "assumption violated: " << e.what() << '\n';
        return static_cast<int>(ExitCode::assumption);
    } catch (const DegenerateError& e) {
        err << "degenerate construction: " << e.what() << '\n';
        return static_cast<int>(ExitCode::assumption);
    } catch (const GuaranteeViolation& e) {
        err << "guarantee violated at step " << e.step() << ": " << e.what() << '\n';
        return static_cast<int>(ExitCode::assertion);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::failure);
    }
}

}  // namespace deq::cli
