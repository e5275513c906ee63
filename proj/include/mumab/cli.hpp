#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace mumab::cli {

enum ExitCode : int {
    kOk = 0,
    kValidation = 2,
    kDegenerate = 3,
    kIo = 4,
};

struct Options {
    std::string config_path;
    std::string input_path;  // matrix file (oracle) or curve CSV (plot)
    std::optional<std::uint64_t> seed;
    std::optional<int> seeds_count;
    std::optional<std::string> seed_list;  // comma-separated
    std::string out_dir;
    bool overlay_bound = false;
    bool allow_zero_atom = false;
    int threads = 0;
};

int cmd_oracle(const Options& opt, std::ostream& out, std::ostream& err);
int cmd_run(const Options& opt, std::ostream& out, std::ostream& err);
int cmd_sweep(const Options& opt, std::ostream& out, std::ostream& err);
int cmd_plot(const Options& opt, std::ostream& out, std::ostream& err);
int cmd_validate_config(const Options& opt, std::ostream& out, std::ostream& err);

int run_cli(int argc, const char* const* argv);

} // namespace mumab::cli
