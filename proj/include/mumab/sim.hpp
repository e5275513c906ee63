#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "mumab/agent.hpp"
#include "mumab/env.hpp"
#include "mumab/matching.hpp"

namespace mumab {

struct HorizonSpec {
    enum class Kind { Steps, Epochs };
    Kind kind = Kind::Epochs;
    std::int64_t steps = 0;
    int epochs = 0;

    static HorizonSpec by_steps(std::int64_t t) { return {Kind::Steps, t, 0}; }
    static HorizonSpec by_epochs(int l) { return {Kind::Epochs, 0, l}; }

    friend bool operator==(const HorizonSpec&, const HorizonSpec&) = default;
};

// Everything shared by every episode of a run/sweep: the true channel model
// parameters, the protocol constants, and the oracle of the true matrix.
struct SimContext {
    MeanMatrix matrix;
    std::vector<RewardDistSpec> dists;  // per entry, row-major k*m
    bool allow_zero_atom = false;
    ProtocolParams params;
    GapResult oracle;
    HorizonSpec horizon;
};

struct StepRecord {
    double instant;           // pseudo-regret of this step, >= 0 and <= J1
    std::int32_t epoch;
    std::uint8_t phase;       // AgentPhase
    std::uint8_t stage;       // 1 exploration, 2 matching, 3 exploitation
    std::uint8_t collisions;  // number of collided users
};

struct RegretTrace {
    double j1 = 0.0;
    std::vector<StepRecord> steps;
    double r1 = 0.0;  // exploration (fixing + verify + explore + degraded prefix)
    double r2 = 0.0;  // matching (comm + tie-break)
    double r3 = 0.0;  // exploitation (exploit + degraded remainder)
    double total() const { return r1 + r2 + r3; }
};

struct EpochDiag {
    int epoch = 0;
    std::int64_t start_step = 0;  // [start, end), 0-based
    std::int64_t end_step = 0;
    bool fixing_attempted = false;
    bool verify_ok = false;
    bool verdict_consistent = true;
    bool has_matrix = false;
    bool matrix_consistent = false;
    std::optional<double> max_quant_err;  // max |decoded - true mean| over entries
    bool has_final = false;
    bool agreement = false;       // all agents hold the identical final matching
    bool truly_optimal = false;   // realized exploit profile is in the true optimal set
    std::optional<Matching> exploited;  // user-indexed exploit profile
    double exploit_regret = 0.0;  // regret increment over the Exploit segment
    std::int64_t faults = 0;
    double cum_regret_at_end = 0.0;
};

struct DiagnosticStats {
    std::vector<EpochDiag> epochs;
    int l_f = 0;  // epoch of global fix, 0 if never
    std::int64_t fix_attempts = 0;
    std::int64_t fix_successes = 0;
    std::int64_t total_faults = 0;
    std::int64_t desync_steps = 0;  // steps where some agent's epoch differs from agent 0's
    bool k_equals_m = false;
};

struct EpisodeResult {
    RegretTrace trace;
    DiagnosticStats stats;
};

// Steps all K agents and the environment in lockstep until the horizon.
// Deterministic given (context, seed).
EpisodeResult run_episode(const SimContext& ctx, std::uint64_t seed);

struct SweepResult {
    std::vector<std::uint64_t> seeds;
    std::int64_t min_horizon = 0;          // common step grid length
    std::vector<double> mean_cum;          // index t-1
    std::vector<double> stderr_cum;
    std::vector<double> bound_curve;       // theoretical_bound at t

    struct EpochAgg {
        int epoch = 0;
        double mean_end_t = 0.0;       // mean boundary step (1-based)
        double mean_cum_regret = 0.0;  // mean cumulative regret at the boundary
        double bound = 0.0;            // theoretical_bound at mean_end_t
        double fixing_attempted_rate = 0.0;  // fraction of seeds still running fixing
        double verify_ok_rate = 0.0;
        double truly_optimal_rate = 0.0;
        double agreement_rate = 0.0;
        double mean_exploit_regret = 0.0;
    };
    std::vector<EpochAgg> epochs;  // up to the min epoch count across seeds

    double fixing_success_rate = 0.0;
    std::int64_t total_faults = 0;

    struct Fit {
        bool valid = false;
        int from_epoch = 0;
        double slope = 0.0;
        double intercept = 0.0;
        double max_rel_dev = 0.0;  // max relative deviation of boundary regret from the fit
    };
    Fit fit;                          // affine fit of boundary regret vs epoch index
    bool bound_dominates = true;      // empirical <= bound at every epoch boundary
    bool ratio_nonincreasing = true;  // regret(T)/T at epoch boundaries

    std::vector<DiagnosticStats> per_seed_stats;
};

// Episodes run independently (optionally in parallel); results are merged in
// seed order so the outcome is bit-identical regardless of thread count.
SweepResult run_sweep(const SimContext& ctx, const std::vector<std::uint64_t>& seeds, int threads = 0);

// Closed-form O(log T) upper bound:
// (M/(2 delta^2) + K M^3 ln(1/delta)/ln M + 4 M^3) ln T + C.
double theoretical_bound(const ProtocolParams& params, double t);
// C = e/(2e-3) + 8e/((e-1)(e-2))
double bound_constant();

// t,epoch,phase,instant_regret,cum_regret,collisions
void write_trace_csv(std::ostream& os, const RegretTrace& trace);

std::uint64_t splitmix64(std::uint64_t& state);

} // namespace mumab
