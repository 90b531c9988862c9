#include "deq/deq_model.hpp"

#include "deq/errors.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

namespace deq {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void validate_sigma_w2(double sigma_w2) {
    if (!(sigma_w2 > 0.0 && sigma_w2 < 0.125)) {
        throw InputError("sigma_w2 must lie in (0, 1/8), got " + std::to_string(sigma_w2));
    }
}

DeqParams::DeqParams(Matrix w, Matrix u, Vector a_, double sigma_w2_)
    : W(std::move(w)), U(std::move(u)), a(std::move(a_)), sigma_w2(sigma_w2_) {
    validate_sigma_w2(sigma_w2);
    if (W.rows() != W.cols()) throw InputError("DeqParams: W must be square");
    if (U.rows() != W.rows()) throw InputError("DeqParams: U must have m rows");
    if (a.size() != W.rows()) throw InputError("DeqParams: a must have length m");
    if (W.rows() == 0 || U.cols() == 0) throw InputError("DeqParams: empty dimensions");
    require_finite(W, "DeqParams W");
    require_finite(U, "DeqParams U");
    if (!a.allFinite()) throw InputError("DeqParams a: non-finite entry");
}

DeqParams init_params(Eigen::Index m, Eigen::Index d, double sigma_w2, std::uint64_t seed) {
    validate_sigma_w2(sigma_w2);
    if (m < 1 || d < 1) throw InputError("init_params: m and d must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double sw = std::sqrt(2.0 * sigma_w2 / static_cast<double>(m));
    const double su = std::sqrt(2.0 / static_cast<double>(d));
    const double sa = std::sqrt(1.0 / static_cast<double>(m));

    Matrix w(m, m);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = sw * normal(rng);
    Matrix u(m, d);
    for (Eigen::Index k = 0; k < u.size(); ++k) u.data()[k] = su * normal(rng);
    Vector a(m);
    for (Eigen::Index k = 0; k < m; ++k) a(k) = sa * normal(rng);
    return DeqParams(std::move(w), std::move(u), std::move(a), sigma_w2);
}

Matrix pre_activation(const DeqParams& p, const Matrix& z, const Matrix& x) {
    if (z.rows() != p.m()) throw InputError("pre_activation: Z must have m rows");
    if (x.rows() != p.d()) throw InputError("pre_activation: X must have d rows");
    if (z.cols() != x.cols()) throw InputError("pre_activation: Z and X column counts differ");
    Matrix out = p.U * x;
    out.noalias() += p.W * z;
    return out;
}

Matrix forward_layer(const DeqParams& p, const Matrix& z, const Matrix& x) {
    return pre_activation(p, z, x).cwiseMax(0.0);
}

EquilibriumSolution solve_equilibrium(const DeqParams& p, const Matrix& x, const SolverConfig& cfg,
                                      const SolveHints& hints) {
    if (!(cfg.tol > 0.0) || cfg.max_iter < 1) throw InputError("solve_equilibrium: bad SolverConfig");
    if (x.rows() != p.d()) throw InputError("solve_equilibrium: X must have d rows");
    require_finite(x, "solve_equilibrium X");

    const double w_norm = hints.w_norm ? *hints.w_norm : spectral_norm(p.W);
    if (!(w_norm < 1.0)) {
        throw WellPosednessError("solve_equilibrium: ||W||_2 = " + std::to_string(w_norm) +
                                     " >= 1, equilibrium not guaranteed",
                                 w_norm);
    }

    const Matrix ux = p.U * x;
    EquilibriumSolution sol;
    Matrix z = Matrix::Zero(p.m(), x.cols());
    if (hints.warm_start != nullptr) {
        if (hints.warm_start->rows() != z.rows() || hints.warm_start->cols() != z.cols()) {
            throw InputError("solve_equilibrium: warm start has wrong shape");
        }
        z = *hints.warm_start;
    }
    Matrix next(z.rows(), z.cols());
    double residual = 0.0;
    for (int it = 1; it <= cfg.max_iter; ++it) {
        next = ux;
        next.noalias() += p.W * z;
        next = next.cwiseMax(0.0);
        residual = (next - z).norm() / std::max(1.0, z.norm());
        if (hints.record_history) sol.residual_history.push_back(residual);
        if (residual <= cfg.tol) {
            sol.Z = std::move(z);
            sol.residual = residual;
            sol.iterations = it;
            return sol;
        }
        z.swap(next);
    }
    throw ConvergenceError("solve_equilibrium: no convergence after " +
                               std::to_string(cfg.max_iter) + " iterations (residual " +
                               std::to_string(residual) + ")",
                           residual, cfg.max_iter);
}

Vector predict(const DeqParams& p, const Matrix& z) {
    if (z.rows() != p.m()) throw InputError("predict: Z must have m rows");
    return z.transpose() * p.a;
}

double loss(const Vector& yhat, const Vector& y) {
    if (yhat.size() != y.size()) throw InputError("loss: length mismatch");
    return 0.5 * (yhat - y).squaredNorm();
}

WellPosedness well_posedness(const DeqParams& p, double margin) {
    WellPosedness out;
    out.spec_norm = spectral_norm(p.W);
    out.ok = out.spec_norm < 1.0 - margin;
    return out;
}

namespace {

constexpr char kMagic[8] = {'D', 'E', 'Q', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw ParseError(path.string() + ": truncated checkpoint");
    }
    return v;
}

void get_block(std::ifstream& in, double* dst, std::size_t count, const std::filesystem::path& path) {
    if (!in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * sizeof(double)))) {
        throw ParseError(path.string() + ": truncated checkpoint payload");
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DeqParams& p, std::uint64_t step) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    put(out, kVersion);
    put(out, std::uint32_t{0});
    put(out, static_cast<std::uint64_t>(p.m()));
    put(out, static_cast<std::uint64_t>(p.d()));
    put(out, step);
    put(out, p.sigma_w2);
    out.write(reinterpret_cast<const char*>(p.W.data()),
              static_cast<std::streamsize>(p.W.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(p.U.data()),
              static_cast<std::streamsize>(p.U.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(p.a.data()),
              static_cast<std::streamsize>(p.a.size() * sizeof(double)));
    if (!out) throw InputError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw ParseError(path.string() + ": bad checkpoint magic");
    }
    const auto version = get<std::uint32_t>(in, path);
    if (version != kVersion) throw ParseError(path.string() + ": unsupported checkpoint version");
    (void)get<std::uint32_t>(in, path);
    const auto m = static_cast<Eigen::Index>(get<std::uint64_t>(in, path));
    const auto d = static_cast<Eigen::Index>(get<std::uint64_t>(in, path));
    Checkpoint ck;
    ck.step = get<std::uint64_t>(in, path);
    const double sigma_w2 = get<double>(in, path);
    if (m < 1 || d < 1 || m > (1 << 20) || d > (1 << 24)) {
        throw ParseError(path.string() + ": implausible checkpoint dimensions");
    }
    Matrix w(m, m);
    Matrix u(m, d);
    Vector a(m);
    get_block(in, w.data(), static_cast<std::size_t>(w.size()), path);
    get_block(in, u.data(), static_cast<std::size_t>(u.size()), path);
    get_block(in, a.data(), static_cast<std::size_t>(a.size()), path);
    ck.params = DeqParams(std::move(w), std::move(u), std::move(a), sigma_w2);
    return ck;
}

}  // namespace deq
