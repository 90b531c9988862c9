#include "deq/concentration_lab.hpp"

#include "deq/errors.hpp"
#include "deq/population_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace deq {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t cell_seed(std::uint64_t base_seed, std::uint64_t m, std::uint64_t trial) {
    std::uint64_t h = splitmix64(base_seed);
    h = splitmix64(h ^ m);
    return splitmix64(h ^ trial);
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw InputError("quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<double> kernel_depth_decay(const Matrix& x, double sigma_w2, int l_max) {
    const PopulationKernel limit = kernel_fixed_point(x, sigma_w2);
    const auto layers = kernel_layers(x, sigma_w2, l_max);
    std::vector<double> out;
    out.reserve(layers.size());
    for (const auto& k : layers) out.push_back((limit.K - k.K).norm());
    return out;
}

std::vector<Matrix> layer_iterates(const DeqParams& p, const Matrix& x, int depth) {
    if (depth < 1) throw InputError("layer_iterates: depth must be >= 1");
    std::vector<Matrix> zs;
    zs.reserve(static_cast<std::size_t>(depth));
    const Matrix ux = p.U * x;
    Matrix z = ux.cwiseMax(0.0);
    zs.push_back(z);
    for (int l = 2; l <= depth; ++l) {
        Matrix next = ux;
        next.noalias() += p.W * z;
        z = next.cwiseMax(0.0);
        zs.push_back(z);
    }
    return zs;
}

std::vector<double> equilibrium_depth_decay(const DeqParams& p, const Matrix& x, int l_max,
                                            const SolverConfig& cfg) {
    const EquilibriumSolution eq = solve_equilibrium(p, x, cfg);
    const Matrix g = gram(eq.Z);
    const double m = static_cast<double>(p.m());
    std::vector<double> out;
    for (const Matrix& z : layer_iterates(p, x, l_max)) out.push_back((g - gram(z)).norm() / m);
    return out;
}

namespace {

void summarize(ConcentrationReport& r, bool with_fraction) {
    std::size_t k = 0;
    while (k < r.trials.size()) {
        const long m = r.trials[k].m;
        std::vector<double> vals;
        CellStats cell;
        cell.m = m;
        cell.l = r.trials[k].l;
        while (k < r.trials.size() && r.trials[k].m == m) vals.push_back(r.trials[k++].error);
        cell.count = static_cast<long>(vals.size());
        cell.median = quantile(vals, 0.5);
        cell.q1 = quantile(vals, 0.25);
        cell.q3 = quantile(vals, 0.75);
        if (with_fraction) {
            const auto hits = std::count_if(vals.begin(), vals.end(), [](double v) { return v >= 0.5; });
            cell.fraction_at_least_half = static_cast<double>(hits) / static_cast<double>(vals.size());
        }
        r.cells.push_back(cell);
    }
}

void validate_grid(const std::vector<long>& m_list, long trials) {
    if (m_list.empty()) throw InputError("concentration: empty m_list");
    for (std::size_t k = 0; k < m_list.size(); ++k) {
        if (m_list[k] < 1) throw InputError("concentration: widths must be positive");
        if (k > 0 && m_list[k] <= m_list[k - 1]) {
            throw InputError("concentration: m_list must be strictly ascending");
        }
    }
    if (trials < 1) throw InputError("concentration: trials must be >= 1");
}

}  // namespace

ConcentrationReport tied_vs_population(const Matrix& x, double sigma_w2,
                                       const std::vector<long>& m_list, int l, long trials,
                                       std::uint64_t base_seed) {
    validate_grid(m_list, trials);
    if (l < 1) throw InputError("tied_vs_population: l must be >= 1");
    const PopulationKernel kl = kernel_recursion(x, sigma_w2, l);

    ConcentrationReport r;
    r.experiment = "tied_vs_population";
    r.trials_per_cell = trials;
    r.base_seed = base_seed;
    for (const long m : m_list) {
        for (long t = 0; t < trials; ++t) {
            const std::uint64_t seed = cell_seed(base_seed, static_cast<std::uint64_t>(m),
                                                 static_cast<std::uint64_t>(t));
            const DeqParams p = init_params(m, x.rows(), sigma_w2, seed);
            const Matrix zl = layer_iterates(p, x, l).back();
            const double err = (gram(zl) / static_cast<double>(m) - kl.K).norm();
            r.trials.push_back({m, l, t, seed, err});
        }
    }
    summarize(r, false);
    return r;
}

ConcentrationReport lambda0_vs_width(const Matrix& x, double sigma_w2,
                                     const std::vector<long>& m_list, long trials,
                                     std::uint64_t base_seed, const SolverConfig& cfg) {
    validate_grid(m_list, trials);
    const PopulationKernel k = kernel_fixed_point(x, sigma_w2);
    if (!(k.lambda_star > 0.0)) {
        throw AssumptionError("lambda0_vs_width: population kernel is not positive definite "
                              "(lambda* = " + std::to_string(k.lambda_star) + ")");
    }

    ConcentrationReport r;
    r.experiment = "lambda0_vs_width";
    r.trials_per_cell = trials;
    r.base_seed = base_seed;
    for (const long m : m_list) {
        for (long t = 0; t < trials; ++t) {
            const std::uint64_t seed = cell_seed(base_seed, static_cast<std::uint64_t>(m),
                                                 static_cast<std::uint64_t>(t));
            const DeqParams p = init_params(m, x.rows(), sigma_w2, seed);
            const EquilibriumSolution eq = solve_equilibrium(p, x, cfg);
            const double lambda0 = min_eig_sym(gram(eq.Z));
            r.trials.push_back({m, 0, t, seed, lambda0 / (static_cast<double>(m) * k.lambda_star)});
        }
    }
    summarize(r, true);
    return r;
}

ReconstructResult fresh_randomness_reconstruct(const DeqParams& p, const Matrix& x, Eigen::Index i,
                                               Eigen::Index j, int l) {
    if (l < 1) throw InputError("reconstruct: l must be >= 1");
    if (i < 0 || j < 0 || i >= x.cols() || j >= x.cols()) {
        throw InputError("reconstruct: sample index out of range");
    }
    const auto zs = layer_iterates(p, x, l + 1);
    const auto m = static_cast<double>(p.m());
    const auto d = static_cast<double>(p.d());
    const double sw = std::sqrt(p.sigma_w2);
    const double up = sw / std::sqrt(m);    // h scaling
    const double down = std::sqrt(m) / sw;  // M scaling

    // Basis of z_i^(1..l-1) and z_j^(1..l-1); for i == j only one sequence.
    std::vector<Vector> earlier;
    double scale = 0.0;
    for (int k = 0; k + 1 < l; ++k) earlier.push_back(zs[static_cast<std::size_t>(k)].col(i));
    if (i != j) {
        for (int k = 0; k + 1 < l; ++k) earlier.push_back(zs[static_cast<std::size_t>(k)].col(j));
    }
    for (const auto& v : earlier) scale = std::max(scale, v.norm());
    const Matrix v = earlier.empty() ? Matrix(p.m(), 0) : gram_schmidt(earlier, 1e-10 * scale);

    const Vector zi = zs[static_cast<std::size_t>(l - 1)].col(i);
    const Vector zj = zs[static_cast<std::size_t>(l - 1)].col(j);
    const Vector pv = zi - v * (v.transpose() * zi);
    const Vector qv = zj - v * (v.transpose() * zj);
    const double pn = pv.norm();
    if (pn < 1e-12) throw DegenerateError("reconstruct: projected vector p vanishes");
    const double pq = pv.dot(qv);
    const Vector q_perp = qv - (pq / (pn * pn)) * pv;
    const double q_perp_n = q_perp.norm();

    const Eigen::Index r = v.cols();
    const Eigen::Index cols = r + 2 + p.d();
    Matrix big(p.m(), cols);
    if (r > 0) big.leftCols(r) = down * (p.W * v);
    big.col(r) = down * (p.W * (pv / pn));
    // When q has no component orthogonal to p (for instance i == j) the
    // matching coefficient of h' is zero and the direction is irrelevant.
    if (q_perp_n > 1e-12 * std::max(1.0, qv.norm())) {
        big.col(r + 1) = down * (p.W * (q_perp / q_perp_n));
    } else {
        big.col(r + 1).setZero();
    }
    big.rightCols(p.d()) = std::sqrt(d) * p.U;

    Vector h(cols);
    Vector hp(cols);
    if (r > 0) {
        h.head(r) = up * (v.transpose() * zi);
        hp.head(r) = up * (v.transpose() * zj);
    }
    h(r) = up * pn;
    hp(r) = up * pq / pn;
    h(r + 1) = 0.0;
    hp(r + 1) = q_perp_n > 1e-12 * std::max(1.0, qv.norm()) ? up * q_perp_n : 0.0;
    h.tail(p.d()) = x.col(i) / std::sqrt(d);
    hp.tail(p.d()) = x.col(j) / std::sqrt(d);

    const Vector a = (big * h).cwiseMax(0.0);
    const Vector b = (big * hp).cwiseMax(0.0);
    ReconstructResult out;
    out.g_next = zs[static_cast<std::size_t>(l)].col(i).dot(zs[static_cast<std::size_t>(l)].col(j));
    out.identity_error = std::abs(a.dot(b) - out.g_next);
    const double g_l = zi.dot(zj);
    out.inner_product_error =
        std::abs(h.dot(hp) - (p.sigma_w2 / m * g_l + x.col(i).dot(x.col(j)) / d));
    out.rank = r;
    return out;
}

namespace {

void comment_lines(std::ofstream& out, const std::string& comment) {
    if (comment.empty()) return;
    std::istringstream lines(comment);
    std::string line;
    while (std::getline(lines, line)) out << "# " << line << '\n';
}

}  // namespace

void write_trials_csv(const std::string& path, const ConcentrationReport& r,
                      const std::string& comment) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    comment_lines(out, comment);
    out << "experiment,m,l,trial,seed,error\n";
    char buf[256];
    for (const auto& t : r.trials) {
        std::snprintf(buf, sizeof buf, "%s,%ld,%ld,%ld,%llu,%.17g\n", r.experiment.c_str(), t.m, t.l,
                      t.trial, static_cast<unsigned long long>(t.seed), t.error);
        out << buf;
    }
}

void write_summary_csv(const std::string& path, const ConcentrationReport& r,
                       const std::string& comment) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    comment_lines(out, comment);
    out << "experiment,m,l,trials,median,q1,q3,fraction_at_least_half\n";
    char buf[256];
    for (const auto& c : r.cells) {
        std::snprintf(buf, sizeof buf, "%s,%ld,%ld,%ld,%.17g,%.17g,%.17g,", r.experiment.c_str(), c.m,
                      c.l, c.count, c.median, c.q1, c.q3);
        out << buf;
        if (c.fraction_at_least_half >= 0.0) {
            std::snprintf(buf, sizeof buf, "%.17g", c.fraction_at_least_half);
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace deq
