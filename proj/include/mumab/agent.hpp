#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mumab/matching.hpp"

namespace mumab {

enum class TiebreakMode { Protocol, Deterministic };

std::string to_string(TiebreakMode mode);
TiebreakMode tiebreak_mode_from_string(const std::string& s);

// Common-knowledge constants; every agent in a run holds an identical copy.
struct ProtocolParams {
    int k = 0;        // number of users
    int m = 0;        // number of channels
    double delta = 0.0;  // known lower bound on the matching gap
    int t_fix = 0;    // fixing-phase length
    int gamma = 0;    // samples per channel per exploration pass
    int rounds = 0;   // digits per transmitted estimate
    TiebreakMode tiebreak_mode = TiebreakMode::Protocol;
    int solver_max_users = 8;  // enumeration cap handed to the matching solver

    // t_fix = ceil(m*ln(20k)), gamma = ceil(1/(2*delta^2)),
    // rounds = required_rounds(delta, m)
    static ProtocolParams standard(int k, int m, double delta,
                                   TiebreakMode mode = TiebreakMode::Protocol);
    void validate() const;
};

enum class AgentPhase : std::uint8_t {
    Fixing,
    Verify,
    Explore,
    MatchComm,
    TieBreak,
    Exploit,
    DegradedRandom,
};

// Step offsets of the phase boundaries within one epoch, relative to the
// epoch start. Every agent derives the same boundaries from shared
// observations: the presence mask fixes the match-comm length and the shared
// candidate set fixes the number of tie-break windows.
struct EpochSchedule {
    std::int64_t fixing_end = 0;   // t_fix, or 0 once globally fixed
    std::int64_t verify_end = 0;   // +m while fixing still runs
    std::int64_t explore_end = 0;  // +gamma*m
    std::int64_t match_end = 0;    // +m*m probes +present*m*rounds*m windows
    std::int64_t tiebreak_end = 0; // +windows*m
    std::int64_t exploit_end = 0;  // +2^epoch, truncated only by the horizon

    friend bool operator==(const EpochSchedule&, const EpochSchedule&) = default;
};

EpochSchedule epoch_schedule(const ProtocolParams& params, int epoch, bool globally_fixed,
                             int present_slots, int tiebreak_windows);

std::string to_string(AgentPhase phase);

enum class FaultKind : std::uint8_t {
    NoCollisionDetected,   // a transmission window produced no zero reward
    AmbiguousCollision,    // more than one zero reward in one scan window
    UnexpectedZero,        // zero reward off the probed channel
    EmptyAfterFilter,      // pin filter would empty the candidate set
    PresenceMismatch,      // number of present IDs differs from k
};

enum class AgentEventKind : std::uint8_t {
    Fixed,          // arg0 = tentative ID channel
    VerifyVerdict,  // arg0 = 1 all-fixed / 0 not
    AllFixed,       // arg0 = epoch l_f
    MatrixReady,    // shared quantized matrix complete for this epoch
    FinalMatching,  // epoch's matching selected
    Fault,          // arg0 = FaultKind
};

struct AgentEvent {
    std::int64_t step;
    int epoch;
    AgentEventKind kind;
    int arg0;
};

// One user's protocol state machine, driven one step at a time:
// next_action() yields the channel to pull, observe() feeds back the reward.
// An agent sees nothing but its own actions and rewards.
class Agent {
public:
    Agent(const ProtocolParams& params, std::uint64_t seed);

    // Diagnostic/test entry points that fabricate a mid-protocol state.
    // resume_verify: fixing just ended; `id` empty means the agent is unfixed.
    static Agent resume_verify(const ProtocolParams& params, std::uint64_t seed,
                               std::optional<int> id, int epoch = 1);
    // resume_explore: globally fixed with this ID, entering Explore of `epoch`.
    static Agent resume_explore(const ProtocolParams& params, std::uint64_t seed,
                                int id, int epoch = 1);
    // Preload per-channel estimate accumulators (sums and pull counts).
    void seed_estimates(std::vector<double> sums, std::vector<std::int64_t> counts);

    int next_action();
    void observe(double reward);

    AgentPhase phase() const { return phase_; }
    int epoch() const { return epoch_; }
    int id() const { return id_; }                      // 0 while unfixed
    int row() const { return my_row_; }                 // rank among present IDs, -1 before MatchComm
    int all_fixed_epoch() const { return all_fixed_epoch_; }  // 0 until the run is fixed
    // regret stage of the action just taken: 1 exploration, 2 matching, 3 exploitation
    int stage() const;

    double estimate(int channel) const;
    std::int64_t sample_count(int channel) const { return count_[static_cast<size_t>(channel - 1)]; }
    const std::optional<QuantizedMatrix>& quantized() const { return qmat_; }
    const std::vector<Matching>& candidate_set() const { return candidates_; }
    const std::optional<Matching>& final_matching() const { return final_; }
    std::int64_t fault_count() const { return faults_; }
    std::vector<AgentEvent> drain_events();

private:
    enum class CommMode : std::uint8_t { Probe, Transmit };

    explicit Agent(const ProtocolParams& params);

    int offset_channel(int id, int s) const { return (id - 1 + s) % params_.m + 1; }
    int uniform_channel();
    void emit(AgentEventKind kind, int arg0 = 0);
    void fault(FaultKind kind);

    void enter_explore();
    void enter_matchcomm();
    void enter_exploit();
    void enter_degraded();
    void advance_epoch();

    void observe_fixing(double reward);
    void observe_verify(double reward);
    void observe_explore(double reward);
    void observe_matchcomm(double reward);
    void observe_tiebreak(double reward);

    void prepare_transmit_digits();
    void finish_probe_window();
    void finish_transmit_window();
    void begin_next_slot();
    void finish_matchcomm();
    void begin_tiebreak_window();
    void finish_tiebreak_window();

    ProtocolParams params_;
    std::mt19937_64 rng_;

    AgentPhase phase_ = AgentPhase::Fixing;
    int epoch_ = 1;
    std::int64_t step_ = 0;        // global step counter (events only)
    std::int64_t phase_step_ = 0;  // steps completed within the phase
    int last_action_ = 0;

    bool fixed_ = false;
    int id_ = 0;
    int all_fixed_epoch_ = 0;
    bool verify_zero_at_one_ = false;
    std::int64_t degraded_len_ = 0;

    std::vector<double> sum_;
    std::vector<std::int64_t> count_;

    // MatchComm schedule position
    int mc_slot_ = 0;       // ID slot being probed / transmitting, 1..m
    CommMode mc_mode_ = CommMode::Probe;
    int mc_value_ = 0;      // channel whose estimate is in flight, 1..m
    int mc_round_ = 0;      // 0-based digit round
    int mc_sub_ = 0;        // sub-step within the current m-step window
    std::vector<std::uint8_t> presence_;   // per slot 1..m
    int next_row_ = 0;
    int my_row_ = -1;
    std::vector<int> window_zeros_;        // channels observed at reward 0 this window
    std::vector<int> my_digits_;           // digits of the estimate being transmitted
    std::optional<QuantizedMatrix> qmat_;
    std::vector<std::uint8_t> qdigits_;    // staging, row-major (row, channel, round)

    // TieBreak
    std::vector<Matching> candidates_;
    int tb_leader_row_ = 0;
    int tb_sub_ = 0;
    Matching tb_choice_;

    std::optional<Matching> final_;

    std::int64_t faults_ = 0;
    std::vector<AgentEvent> events_;
};

} // namespace mumab
