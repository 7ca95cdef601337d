#pragma once

#include <cstdint>
#include <iostream>
#include <string>

#include "radnet/config.hpp"

// Command implementations behind the radnet executable.  Each cmd_* takes a
// fully resolved configuration plus its own arguments, writes human-readable
// progress to `out`, and returns a process exit code.  run_cli owns argument
// parsing and the mapping from exceptions to the exit-code contract.

namespace radnet::cli {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 64;       // bad command line
constexpr int kExitValidation = 65;  // rejected configuration or input
constexpr int kExitNumeric = 66;     // non-finite loss or failed gradient check
constexpr int kExitIo = 67;          // missing or corrupt files

struct SynthArgs {
    std::string out;
    bool force = false;
};

struct TrainArgs {
    std::string data_dir;
    std::string out;
    std::string resume;
};

struct InferArgs {
    std::string checkpoint;
    std::string input;
    std::string out;
    bool dump_maps = false;
};

struct EvalArgs {
    std::string detections;
    std::string annotations;
    std::string out;  // optional report directory
};

struct GradcheckArgs {
    std::string corrupt;  // suite name to sabotage (negative control)
};

struct BenchArgs {
    std::int64_t runs = 12;
};

int cmd_synth(const Config& cfg, const SynthArgs& args, std::ostream& out);
int cmd_train(const Config& cfg, const TrainArgs& args, std::ostream& out);
int cmd_infer(const Config& cfg, const InferArgs& args, std::ostream& out);
int cmd_eval(const Config& cfg, const EvalArgs& args, std::ostream& out);
int cmd_gradcheck(const Config& cfg, const GradcheckArgs& args, std::ostream& out);
int cmd_bench(const Config& cfg, const BenchArgs& args, std::ostream& out);

int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace radnet::cli
