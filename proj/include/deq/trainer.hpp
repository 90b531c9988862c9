#pragma once

#include "deq/condition_checker.hpp"
#include "deq/data_pipeline.hpp"
#include "deq/deq_model.hpp"
#include "deq/implicit_grad.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace deq {

enum class AssertMode { record, fail_fast };

// Values carried over when a run continues from a checkpoint, so the trace
// and the rate envelope stay contiguous.
struct TrainResume {
    long start_step = 0;
    double lambda_0 = 0.0;
    double phi_0 = 0.0;
    double eta = 0.0;
};

struct TrainConfig {
    std::optional<double> eta;  // nullopt: auto = eta_safety * eta_max
    double eta_safety = 0.5;
    long steps = 100;
    long monitor_every = 0;  // 0: every step for n <= 500, every 10 above
    SolverConfig solver;
    AssertMode assert_mode = AssertMode::record;
    bool warm_start = true;
    std::optional<double> delta;  // radius for the initial bounds; nullopt = auto
    std::optional<TrainResume> resume;
};

struct TrainRecord {
    long step = 0;
    double loss = 0.0;
    double w_spec_norm = 0.0;
    double lambda_tau = 0.0;
    double grad_norm_sq = 0.0;
    double pl_ratio = 0.0;
    double rate_envelope = 0.0;
    int solver_iters = 0;
    double residual = 0.0;
    bool lambda_below_half = false;  // lambda_tau <= lambda_0 / 2
    bool pl_below_lambda0 = false;   // pl_ratio < lambda_0
};

using TrainTrace = std::vector<TrainRecord>;

struct TrainResult {
    DeqParams params;
    TrainTrace trace;
    double eta = 0.0;
    double lambda_0 = 0.0;
    double phi_0 = 0.0;
    InitBounds bounds;
    ConditionReport condition;
    bool sanctioned = false;  // eta <= eta_max
    double max_rel_loss_increase = 0.0;
    double max_w_spec_norm = 0.0;
    long lambda_warnings = 0;
    long pl_warnings = 0;
    long final_step = 0;
};

// Quantities the training loop already has; anything left empty is computed.
struct MonitorExtras {
    const GradientTriple* gradient = nullptr;
    std::optional<double> w_norm;
    int solver_iters = 0;
    double residual = 0.0;
    SolverConfig solver;
};

TrainRecord monitors(const DeqParams& p, const Matrix& z, const Dataset& data, double lambda_0,
                     double eta, long tau, double phi_0, const MonitorExtras& extras = {});

// Called on every monitored record. The partial result holds the current
// parameters, eta, lambda_0 and phi_0; its trace holds the earlier records.
using RecordSink = std::function<void(const TrainRecord&, const TrainResult&)>;

// Full-batch gradient descent on (W, U, a) with implicit gradients.
TrainResult train(const DeqParams& p0, const Dataset& data, const TrainConfig& cfg,
                  const RecordSink& sink = {});

extern const char* const kTraceHeader;

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace,
                     const std::string& comment = {}, bool append = false);

std::string format_record(const TrainRecord& r);

}  // namespace deq
