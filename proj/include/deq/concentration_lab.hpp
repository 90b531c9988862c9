#pragma once

#include "deq/deq_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace deq {

// 64-bit mix of (base_seed, m, trial) through three splitmix64 rounds:
//   h = sm(base_seed); h = sm(h ^ m); h = sm(h ^ trial).
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t cell_seed(std::uint64_t base_seed, std::uint64_t m, std::uint64_t trial);

struct TrialRecord {
    long m = 0;
    long l = 0;
    long trial = 0;
    std::uint64_t seed = 0;
    double error = 0.0;
};

struct CellStats {
    long m = 0;
    long l = 0;
    long count = 0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    // Share of trials whose value is >= 1/2; only meaningful for lambda0 runs.
    double fraction_at_least_half = -1.0;
};

struct ConcentrationReport {
    std::string experiment;
    std::vector<TrialRecord> trials;  // ordered by (m, trial)
    std::vector<CellStats> cells;     // ordered by m
    long trials_per_cell = 0;
    std::uint64_t base_seed = 0;
};

// Linear-interpolated quantile (q in [0, 1]) of an unsorted sample.
double quantile(std::vector<double> values, double q);

// ||K - K^(l)||_F for l = 1..l_max.
std::vector<double> kernel_depth_decay(const Matrix& x, double sigma_w2, int l_max);

// (1/m) ||G - G^(l)||_F for l = 1..l_max, with G^(l) from the layer iteration
// started at Z^(0) = 0 and G from the equilibrium.
std::vector<double> equilibrium_depth_decay(const DeqParams& p, const Matrix& x, int l_max,
                                            const SolverConfig& cfg = {1e-13, 10000});

// Z^(1), ..., Z^(depth) of the weight-tied layer iteration from zero.
std::vector<Matrix> layer_iterates(const DeqParams& p, const Matrix& x, int depth);

// ||G^(l)/m - K^(l)||_F over fresh initializations per (m, trial).
ConcentrationReport tied_vs_population(const Matrix& x, double sigma_w2,
                                       const std::vector<long>& m_list, int l, long trials,
                                       std::uint64_t base_seed);

// lambda_0 / (m lambda*) over fresh initializations per (m, trial), with the
// share of trials reaching 1/2. Throws AssumptionError if lambda* <= 0.
ConcentrationReport lambda0_vs_width(const Matrix& x, double sigma_w2,
                                     const std::vector<long>& m_list, long trials,
                                     std::uint64_t base_seed, const SolverConfig& cfg = {});

struct ReconstructResult {
    double identity_error = 0.0;       // |relu(Mh)^T relu(Mh') - G^(l+1)_ij|
    double inner_product_error = 0.0;  // |h^T h' - (s/m G^(l)_ij + x_i^T x_j / d)|
    double g_next = 0.0;               // G^(l+1)_ij
    Eigen::Index rank = 0;             // columns of the orthonormal basis
};

// Rebuilds G^(l+1)_ij as relu(M h)^T relu(M h') from the orthonormal basis of
// the earlier hidden vectors of samples i and j.
ReconstructResult fresh_randomness_reconstruct(const DeqParams& p, const Matrix& x, Eigen::Index i,
                                               Eigen::Index j, int l);

void write_trials_csv(const std::string& path, const ConcentrationReport& r,
                      const std::string& comment = {});
void write_summary_csv(const std::string& path, const ConcentrationReport& r,
                       const std::string& comment = {});

}  // namespace deq
