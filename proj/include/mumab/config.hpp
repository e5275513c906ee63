#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mumab/env.hpp"
#include "mumab/sim.hpp"

namespace mumab {

struct GeneratorSpec {
    double low = 0.1;
    double high = 0.9;
    std::uint64_t seed = 1;

    friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

struct OutputPaths {
    std::string trace = "trace.csv";
    std::string summary = "summary.json";
    std::string curve = "curve.csv";
    std::string plot = "plot.svg";

    friend bool operator==(const OutputPaths&, const OutputPaths&) = default;
};

// A fully-resolved run configuration; the JSON schema is documented in the
// README. Unknown keys anywhere in the file are rejected.
struct RunConfig {
    int k = 0;
    int m = 0;
    std::vector<double> matrix;  // resolved row-major true means
    std::optional<GeneratorSpec> generator;   // provenance when generated
    std::optional<std::string> matrix_file;   // provenance when loaded
    RewardDistSpec dist;                      // global distribution
    std::optional<std::vector<RewardDistSpec>> dist_per_entry;
    std::uint64_t seed = 1;
    bool delta_oracle = true;
    double delta_explicit = 0.0;
    TiebreakMode tiebreak = TiebreakMode::Protocol;
    std::optional<int> t_fix_override;
    std::optional<int> gamma_override;
    std::optional<int> rounds_override;
    HorizonSpec horizon = HorizonSpec::by_epochs(10);
    std::vector<std::uint64_t> sweep_seeds;  // resolved explicit list
    OutputPaths out;
    bool allow_zero_atom = false;
};

// Parse/serialize. `base_dir` resolves a relative rewards.matrix_file.
RunConfig parse_config_json(const std::string& text, bool allow_zero_atom,
                            const std::string& base_dir = ".");
RunConfig load_config(const std::string& path, bool allow_zero_atom);
// Every effective parameter materialized; parses back to the same run.
std::string effective_config_json(const RunConfig& cfg);

// Matrix file format: {"k": K, "m": M, "values": [K*M reals, row-major]}.
MeanMatrix load_matrix_file(const std::string& path);

struct BuildOutcome {
    SimContext ctx;
    bool delta_above_oracle = false;  // explicit delta exceeded the oracle gap
};

// Resolves the oracle, the protocol delta, and all protocol parameters.
BuildOutcome make_context(const RunConfig& cfg);

// K = M = 10 point-mass defaults: mu_j(c) = 0.95 on the diagonal, 0.85 off it,
// 10 epochs, 20 sweep seeds.
RunConfig reference_config_k10_m10();

} // namespace mumab
