#include "mumab/agent.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace mumab {

std::string to_string(TiebreakMode mode) {
    return mode == TiebreakMode::Protocol ? "protocol" : "deterministic";
}

TiebreakMode tiebreak_mode_from_string(const std::string& s) {
    if (s == "protocol") return TiebreakMode::Protocol;
    if (s == "deterministic") return TiebreakMode::Deterministic;
    throw ValidationError("unknown tiebreak mode: " + s);
}

std::string to_string(AgentPhase phase) {
    switch (phase) {
        case AgentPhase::Fixing: return "fixing";
        case AgentPhase::Verify: return "verify";
        case AgentPhase::Explore: return "explore";
        case AgentPhase::MatchComm: return "match_comm";
        case AgentPhase::TieBreak: return "tie_break";
        case AgentPhase::Exploit: return "exploit";
        case AgentPhase::DegradedRandom: return "degraded_random";
    }
    return "?";
}

ProtocolParams ProtocolParams::standard(int k, int m, double delta, TiebreakMode mode) {
    ProtocolParams p;
    p.k = k;
    p.m = m;
    p.delta = delta;
    p.tiebreak_mode = mode;
    if (k >= 1 && m >= 2) {
        p.t_fix = static_cast<int>(std::ceil(m * std::log(20.0 * k)));
        double g = std::ceil(1.0 / (2.0 * delta * delta));
        if (!(g >= 1.0) || g > 1e9)
            throw ValidationError("protocol: gamma = ceil(1/(2 delta^2)) out of range; delta too small");
        p.gamma = static_cast<int>(g);
        p.rounds = required_rounds(delta, m);
    }
    p.solver_max_users = std::max(k, 8);
    p.validate();
    return p;
}

void ProtocolParams::validate() const {
    if (k < 1) throw ValidationError("protocol: k must be >= 1");
    if (m < 2) throw ValidationError("protocol: m must be >= 2");
    if (k > m) throw ValidationError("protocol: requires k <= m");
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("protocol: delta must lie in (0,1)");
    if (t_fix < 1) throw ValidationError("protocol: t_fix must be >= 1");
    if (gamma < 1) throw ValidationError("protocol: gamma must be >= 1");
    if (rounds < 1) throw ValidationError("protocol: rounds must be >= 1");
    if (solver_max_users < k) throw ValidationError("protocol: solver cap below k");
    pow_checked(m, rounds);
}

EpochSchedule epoch_schedule(const ProtocolParams& params, int epoch, bool globally_fixed,
                             int present_slots, int tiebreak_windows) {
    params.validate();
    if (present_slots < 0 || present_slots > params.m)
        throw std::invalid_argument("epoch_schedule: present_slots outside 0..m");
    const auto m = static_cast<std::int64_t>(params.m);
    EpochSchedule s;
    s.fixing_end = globally_fixed ? 0 : params.t_fix;
    s.verify_end = s.fixing_end + (globally_fixed ? 0 : m);
    s.explore_end = s.verify_end + static_cast<std::int64_t>(params.gamma) * m;
    s.match_end = s.explore_end + m * m + present_slots * m * params.rounds * m;
    s.tiebreak_end = s.match_end + static_cast<std::int64_t>(tiebreak_windows) * m;
    s.exploit_end = s.tiebreak_end + (std::int64_t{1} << std::min(epoch, 61));
    return s;
}

Agent::Agent(const ProtocolParams& params) : params_(params) {
    params_.validate();
    sum_.assign(static_cast<size_t>(params_.m), 0.0);
    count_.assign(static_cast<size_t>(params_.m), 0);
    presence_.assign(static_cast<size_t>(params_.m) + 1, 0);
}

Agent::Agent(const ProtocolParams& params, std::uint64_t seed) : Agent(params) {
    rng_.seed(seed);
}

Agent Agent::resume_verify(const ProtocolParams& params, std::uint64_t seed,
                           std::optional<int> id, int epoch) {
    Agent a(params, seed);
    a.epoch_ = epoch;
    a.phase_ = AgentPhase::Verify;
    if (id) {
        if (*id < 1 || *id > params.m) throw std::invalid_argument("resume_verify: id outside 1..m");
        a.fixed_ = true;
        a.id_ = *id;
    }
    return a;
}

Agent Agent::resume_explore(const ProtocolParams& params, std::uint64_t seed, int id, int epoch) {
    if (id < 1 || id > params.m) throw std::invalid_argument("resume_explore: id outside 1..m");
    Agent a(params, seed);
    a.epoch_ = epoch;
    a.phase_ = AgentPhase::Explore;
    a.fixed_ = true;
    a.id_ = id;
    a.all_fixed_epoch_ = epoch;
    return a;
}

void Agent::seed_estimates(std::vector<double> sums, std::vector<std::int64_t> counts) {
    if (sums.size() != static_cast<size_t>(params_.m) || counts.size() != sums.size())
        throw std::invalid_argument("seed_estimates: expected one accumulator per channel");
    for (std::int64_t n : counts)
        if (n < 0) throw std::invalid_argument("seed_estimates: negative pull count");
    sum_ = std::move(sums);
    count_ = std::move(counts);
}

int Agent::uniform_channel() {
    return std::uniform_int_distribution<int>(1, params_.m)(rng_);
}

void Agent::emit(AgentEventKind kind, int arg0) {
    events_.push_back({step_, epoch_, kind, arg0});
}

void Agent::fault(FaultKind kind) {
    ++faults_;
    emit(AgentEventKind::Fault, static_cast<int>(kind));
}

double Agent::estimate(int channel) const {
    if (channel < 1 || channel > params_.m) throw std::invalid_argument("estimate: channel outside 1..m");
    std::int64_t n = count_[static_cast<size_t>(channel - 1)];
    if (n == 0) return 0.0;
    return std::clamp(sum_[static_cast<size_t>(channel - 1)] / static_cast<double>(n), 0.0, 1.0);
}

int Agent::stage() const {
    switch (phase_) {
        case AgentPhase::Fixing:
        case AgentPhase::Verify:
        case AgentPhase::Explore:
            return 1;
        case AgentPhase::MatchComm:
        case AgentPhase::TieBreak:
            return 2;
        case AgentPhase::Exploit:
            return 3;
        case AgentPhase::DegradedRandom:
            // budget split: the explore-equivalent prefix counts as stage 1,
            // the 2^l exploitation replacement as stage 3
            return phase_step_ < static_cast<std::int64_t>(params_.gamma) * params_.m ? 1 : 3;
    }
    return 1;
}

std::vector<AgentEvent> Agent::drain_events() {
    std::vector<AgentEvent> out;
    out.swap(events_);
    return out;
}

int Agent::next_action() {
    int a = 0;
    switch (phase_) {
        case AgentPhase::Fixing:
            a = fixed_ ? id_ : uniform_channel();
            break;
        case AgentPhase::Verify:
            a = fixed_ ? offset_channel(id_, static_cast<int>(phase_step_)) : 1;
            break;
        case AgentPhase::Explore:
            a = offset_channel(id_, static_cast<int>(phase_step_ / params_.gamma));
            break;
        case AgentPhase::MatchComm:
            if (id_ == mc_slot_)
                a = mc_mode_ == CommMode::Probe ? mc_slot_ : my_digits_[static_cast<size_t>(mc_round_)];
            else
                a = offset_channel(id_, mc_sub_);
            break;
        case AgentPhase::TieBreak:
            a = my_row_ == tb_leader_row_ ? tb_choice_.assignment[static_cast<size_t>(my_row_)]
                                          : offset_channel(id_, tb_sub_);
            break;
        case AgentPhase::Exploit:
            assert(final_ && my_row_ >= 0);
            a = final_->assignment[static_cast<size_t>(my_row_)];
            break;
        case AgentPhase::DegradedRandom:
            a = uniform_channel();
            break;
    }
    last_action_ = a;
    return a;
}

void Agent::observe(double reward) {
    ++step_;
    switch (phase_) {
        case AgentPhase::Fixing: observe_fixing(reward); break;
        case AgentPhase::Verify: observe_verify(reward); break;
        case AgentPhase::Explore: observe_explore(reward); break;
        case AgentPhase::MatchComm: observe_matchcomm(reward); break;
        case AgentPhase::TieBreak: observe_tiebreak(reward); break;
        case AgentPhase::Exploit:
            if (++phase_step_ >= (std::int64_t{1} << std::min(epoch_, 61))) advance_epoch();
            break;
        case AgentPhase::DegradedRandom:
            if (++phase_step_ >= degraded_len_) advance_epoch();
            break;
    }
}

void Agent::observe_fixing(double reward) {
    if (!fixed_ && reward > 0.0) {
        fixed_ = true;
        id_ = last_action_;
        emit(AgentEventKind::Fixed, id_);
    }
    if (++phase_step_ >= params_.t_fix) {
        phase_ = AgentPhase::Verify;
        phase_step_ = 0;
        verify_zero_at_one_ = false;
    }
}

void Agent::observe_verify(double reward) {
    if (fixed_) {
        int visited = offset_channel(id_, static_cast<int>(phase_step_));
        if (visited == 1 && reward == 0.0) verify_zero_at_one_ = true;
    }
    if (++phase_step_ >= params_.m) {
        bool all_fixed = fixed_ && !verify_zero_at_one_;
        emit(AgentEventKind::VerifyVerdict, all_fixed ? 1 : 0);
        if (all_fixed) {
            all_fixed_epoch_ = epoch_;
            emit(AgentEventKind::AllFixed, epoch_);
            enter_explore();
        } else {
            enter_degraded();
        }
    }
}

void Agent::observe_explore(double reward) {
    int channel = offset_channel(id_, static_cast<int>(phase_step_ / params_.gamma));
    sum_[static_cast<size_t>(channel - 1)] += reward;
    ++count_[static_cast<size_t>(channel - 1)];
    if (++phase_step_ >= static_cast<std::int64_t>(params_.gamma) * params_.m) enter_matchcomm();
}

void Agent::observe_matchcomm(double reward) {
    if (id_ != mc_slot_) {
        int visited = offset_channel(id_, mc_sub_);
        if (reward == 0.0) window_zeros_.push_back(visited);
    }
    ++phase_step_;
    if (++mc_sub_ >= params_.m) {
        mc_sub_ = 0;
        if (mc_mode_ == CommMode::Probe)
            finish_probe_window();
        else
            finish_transmit_window();
    }
}

void Agent::observe_tiebreak(double reward) {
    if (my_row_ != tb_leader_row_) {
        int visited = offset_channel(id_, tb_sub_);
        if (reward == 0.0) window_zeros_.push_back(visited);
    }
    ++phase_step_;
    if (++tb_sub_ >= params_.m) {
        tb_sub_ = 0;
        finish_tiebreak_window();
    }
}

void Agent::prepare_transmit_digits() {
    my_digits_ = encode_value(estimate(mc_value_), params_.m, params_.rounds);
}

void Agent::finish_probe_window() {
    bool present;
    if (id_ == mc_slot_) {
        present = true;
    } else {
        present = false;
        int off_target = 0;
        for (int z : window_zeros_) {
            if (z == mc_slot_)
                present = true;
            else
                ++off_target;
        }
        if (off_target > 0) fault(FaultKind::UnexpectedZero);
    }
    window_zeros_.clear();

    if (present) {
        presence_[static_cast<size_t>(mc_slot_)] = 1;
        if (id_ == mc_slot_) my_row_ = next_row_;
        ++next_row_;
        qdigits_.resize(static_cast<size_t>(next_row_) * params_.m * params_.rounds, 1);
        mc_mode_ = CommMode::Transmit;
        mc_value_ = 1;
        mc_round_ = 0;
        if (id_ == mc_slot_) prepare_transmit_digits();
    } else {
        begin_next_slot();
    }
}

void Agent::finish_transmit_window() {
    int digit;
    if (id_ == mc_slot_) {
        digit = my_digits_[static_cast<size_t>(mc_round_)];
    } else if (window_zeros_.size() == 1) {
        digit = window_zeros_.front();
    } else if (window_zeros_.empty()) {
        digit = 1;
        fault(FaultKind::NoCollisionDetected);
    } else {
        digit = window_zeros_.front();
        fault(FaultKind::AmbiguousCollision);
    }
    window_zeros_.clear();

    int row = next_row_ - 1;
    qdigits_[(static_cast<size_t>(row) * params_.m + mc_value_ - 1) * params_.rounds + mc_round_] =
        static_cast<std::uint8_t>(digit);

    if (++mc_round_ >= params_.rounds) {
        mc_round_ = 0;
        if (++mc_value_ > params_.m)
            begin_next_slot();
        else if (id_ == mc_slot_)
            prepare_transmit_digits();
    }
}

void Agent::begin_next_slot() {
    mc_mode_ = CommMode::Probe;
    if (++mc_slot_ > params_.m) finish_matchcomm();
}

void Agent::finish_matchcomm() {
    if (next_row_ != params_.k) fault(FaultKind::PresenceMismatch);

    QuantizedMatrix q(next_row_, params_.m, params_.rounds);
    for (int row = 0; row < next_row_; ++row)
        for (int c = 1; c <= params_.m; ++c)
            for (int r = 0; r < params_.rounds; ++r)
                q.set_digit(row, c, r,
                            qdigits_[(static_cast<size_t>(row) * params_.m + c - 1) * params_.rounds + r]);
    qmat_ = std::move(q);
    emit(AgentEventKind::MatrixReady);

    EnumerationLimits limits;
    limits.max_users = params_.solver_max_users;
    candidates_ = optimal_set_from_quantized(*qmat_, limits);

    if (candidates_.size() == 1 || params_.tiebreak_mode == TiebreakMode::Deterministic) {
        final_ = canonical_choice(candidates_);
        emit(AgentEventKind::FinalMatching);
        enter_exploit();
    } else {
        phase_ = AgentPhase::TieBreak;
        tb_leader_row_ = 0;
        tb_sub_ = 0;
        begin_tiebreak_window();
    }
}

void Agent::begin_tiebreak_window() {
    tb_choice_ = canonical_choice(candidates_);
}

void Agent::finish_tiebreak_window() {
    int pinned;
    if (my_row_ == tb_leader_row_) {
        pinned = tb_choice_.assignment[static_cast<size_t>(my_row_)];
    } else if (window_zeros_.size() == 1) {
        pinned = window_zeros_.front();
    } else if (window_zeros_.empty()) {
        pinned = 0;
        fault(FaultKind::NoCollisionDetected);
    } else {
        pinned = window_zeros_.front();
        fault(FaultKind::AmbiguousCollision);
    }
    window_zeros_.clear();

    if (pinned != 0) {
        bool survives = false;
        for (const Matching& mm : candidates_)
            if (mm.assignment[static_cast<size_t>(tb_leader_row_)] == pinned) {
                survives = true;
                break;
            }
        if (survives)
            candidates_ = filter_by_pin(candidates_, tb_leader_row_, pinned);
        else
            fault(FaultKind::EmptyAfterFilter);  // keep the set rather than desynchronize further
    }

    ++tb_leader_row_;
    if (candidates_.size() == 1 || tb_leader_row_ >= next_row_) {
        final_ = canonical_choice(candidates_);
        emit(AgentEventKind::FinalMatching);
        enter_exploit();
    } else {
        begin_tiebreak_window();
    }
}

void Agent::enter_explore() {
    phase_ = AgentPhase::Explore;
    phase_step_ = 0;
}

void Agent::enter_matchcomm() {
    phase_ = AgentPhase::MatchComm;
    phase_step_ = 0;
    mc_slot_ = 1;
    mc_mode_ = CommMode::Probe;
    mc_value_ = 0;
    mc_round_ = 0;
    mc_sub_ = 0;
    presence_.assign(static_cast<size_t>(params_.m) + 1, 0);
    next_row_ = 0;
    my_row_ = -1;
    window_zeros_.clear();
    qdigits_.clear();
    qmat_.reset();
    candidates_.clear();
    final_.reset();
}

void Agent::enter_exploit() {
    phase_ = AgentPhase::Exploit;
    phase_step_ = 0;
}

void Agent::enter_degraded() {
    fixed_ = false;
    id_ = 0;
    degraded_len_ = static_cast<std::int64_t>(params_.gamma) * params_.m +
                    (std::int64_t{1} << std::min(epoch_, 61));
    phase_ = AgentPhase::DegradedRandom;
    phase_step_ = 0;
}

void Agent::advance_epoch() {
    ++epoch_;
    phase_step_ = 0;
    if (all_fixed_epoch_ > 0) {
        enter_explore();
    } else {
        phase_ = AgentPhase::Fixing;
        fixed_ = false;
        id_ = 0;
    }
}

} // namespace mumab
