#pragma once

#include "deq/cli/config.hpp"
#include "deq/data_pipeline.hpp"

#include <iosfwd>
#include <string>

namespace deq::cli {

enum class ExitCode : int {
    ok = 0,
    failure = 1,
    config = 2,
    convergence = 3,
    assumption = 4,
    assertion = 5,
};

// Validates cfg for the command, runs it, and maps library errors onto exit
// codes. Progress goes to out, diagnostics to err.
int run_command(const std::string& command, const Json& cfg, std::ostream& out, std::ostream& err);

// Builds the dataset described by the data section.
Dataset load_dataset(const Json& cfg, std::ostream& err);

int cmd_gen_data(const Json& cfg, std::ostream& out, std::ostream& err);
int cmd_kernel(const Json& cfg, std::ostream& out, std::ostream& err);
int cmd_check(const Json& cfg, std::ostream& out, std::ostream& err);
int cmd_train(const Json& cfg, std::ostream& out, std::ostream& err);
int cmd_concentration(const Json& cfg, std::ostream& out, std::ostream& err);
int cmd_grad_check(const Json& cfg, std::ostream& out, std::ostream& err);

}  // namespace deq::cli
