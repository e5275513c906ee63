#include "mumab/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <future>
#include <ostream>
#include <thread>

namespace mumab {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double bound_constant() {
    const double e = std::exp(1.0);
    return e / (2.0 * e - 3.0) + 8.0 * e / ((e - 1.0) * (e - 2.0));
}

double theoretical_bound(const ProtocolParams& p, double t) {
    const double m = p.m;
    const double coef = m / (2.0 * p.delta * p.delta) +
                        p.k * m * m * m * std::log(1.0 / p.delta) / std::log(m) +
                        4.0 * m * m * m;
    return coef * std::log(std::max(t, 1.0)) + bound_constant();
}

namespace {

constexpr std::int64_t kMaxEpisodeSteps = std::int64_t{1} << 33;

// Per-epoch event collector; cross-agent checks fire once all k agents have
// reported the corresponding event (they do so on the same step when in sync).
struct EpochEventState {
    int verdicts = 0;
    int verdict_true = 0;
    int matrices = 0;
    int finals = 0;
};

struct EpisodeRunner {
    const SimContext& ctx;
    ChannelModel env;
    std::vector<Agent> agents;
    EpisodeResult out;

    std::int64_t t = 0;
    double cum = 0.0;
    std::optional<EpochDiag> cur;
    EpochEventState ev;

    EpisodeRunner(const SimContext& c, std::uint64_t seed)
        : ctx(c),
          env(c.matrix, c.dists, derive(seed, 0), c.allow_zero_atom) {
        const int k = c.matrix.users();
        agents.reserve(static_cast<size_t>(k));
        for (int j = 0; j < k; ++j) agents.emplace_back(c.params, derive(seed, static_cast<std::uint64_t>(j) + 1));
        out.trace.j1 = c.oracle.j1;
        out.stats.k_equals_m = c.matrix.users() == c.matrix.channels();
    }

    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t s = seed;
        std::uint64_t v = 0;
        for (std::uint64_t i = 0; i <= index; ++i) v = splitmix64(s);
        return v;
    }

    void open_epoch(int epoch) {
        cur = EpochDiag{};
        cur->epoch = epoch;
        cur->start_step = t;
        ev = EpochEventState{};
    }

    void close_epoch() {
        if (!cur) return;
        cur->end_step = t;
        cur->cum_regret_at_end = cum;
        out.stats.epochs.push_back(*cur);
        cur.reset();
    }

    void handle_event(int agent_idx, const AgentEvent& e) {
        switch (e.kind) {
            case AgentEventKind::Fixed:
                break;
            case AgentEventKind::VerifyVerdict:
                ++ev.verdicts;
                ev.verdict_true += e.arg0;
                if (ev.verdicts == ctx.matrix.users()) {
                    cur->fixing_attempted = true;
                    cur->verdict_consistent = ev.verdict_true == 0 || ev.verdict_true == ctx.matrix.users();
                    cur->verify_ok = ev.verdict_true == ctx.matrix.users();
                    ++out.stats.fix_attempts;
                    if (cur->verify_ok) ++out.stats.fix_successes;
                }
                break;
            case AgentEventKind::AllFixed:
                if (agent_idx == 0 && out.stats.l_f == 0) out.stats.l_f = e.arg0;
                break;
            case AgentEventKind::MatrixReady:
                if (++ev.matrices == ctx.matrix.users()) check_matrices();
                break;
            case AgentEventKind::FinalMatching:
                if (++ev.finals == ctx.matrix.users()) check_finals();
                break;
            case AgentEventKind::Fault:
                ++cur->faults;
                ++out.stats.total_faults;
                break;
        }
    }

    void check_matrices() {
        cur->has_matrix = true;
        const auto& q0 = agents.front().quantized();
        if (!q0) return;
        bool consistent = true;
        for (const Agent& a : agents)
            if (!a.quantized() || !(*a.quantized() == *q0)) consistent = false;
        cur->matrix_consistent = consistent;

        // decoded entries vs the true means, rows resolved through each
        // agent's rank among the present IDs
        double worst = 0.0;
        for (int j = 0; j < ctx.matrix.users(); ++j) {
            const Agent& a = agents[static_cast<size_t>(j)];
            if (!a.quantized() || a.row() < 0 || a.row() >= a.quantized()->users()) continue;
            for (int c = 1; c <= ctx.matrix.channels(); ++c)
                worst = std::max(worst, std::abs(a.quantized()->value(a.row(), c) - ctx.matrix.mean(j, c)));
        }
        cur->max_quant_err = worst;
    }

    void check_finals() {
        cur->has_final = true;
        const auto& f0 = agents.front().final_matching();
        bool agree = f0.has_value();
        for (const Agent& a : agents)
            if (!a.final_matching() || !(*a.final_matching() == *f0)) agree = false;
        cur->agreement = agree;

        // channel each user will exploit, as a user-indexed profile
        Matching profile;
        profile.assignment.resize(static_cast<size_t>(ctx.matrix.users()));
        bool complete = true;
        for (int j = 0; j < ctx.matrix.users(); ++j) {
            const Agent& a = agents[static_cast<size_t>(j)];
            if (!a.final_matching() || a.row() < 0 ||
                a.row() >= static_cast<int>(a.final_matching()->assignment.size())) {
                complete = false;
                break;
            }
            profile.assignment[static_cast<size_t>(j)] =
                a.final_matching()->assignment[static_cast<size_t>(a.row())];
        }
        if (complete) {
            cur->truly_optimal =
                std::find(ctx.oracle.optimal_set.begin(), ctx.oracle.optimal_set.end(), profile) !=
                ctx.oracle.optimal_set.end();
            cur->exploited = std::move(profile);
        }
    }

    void run() {
        const int k = ctx.matrix.users();
        std::vector<int> actions(static_cast<size_t>(k));
        for (;;) {
            const int epoch_now = agents.front().epoch();
            if (ctx.horizon.kind == HorizonSpec::Kind::Steps) {
                if (t >= ctx.horizon.steps) break;
            } else {
                if (epoch_now > ctx.horizon.epochs) break;
            }
            if (t >= kMaxEpisodeSteps) throw SizeLimitError("run_episode: step budget exceeded");

            if (!cur || cur->epoch != epoch_now) {
                close_epoch();
                open_epoch(epoch_now);
            }

            for (int j = 0; j < k; ++j) actions[static_cast<size_t>(j)] = agents[static_cast<size_t>(j)].next_action();
            const AgentPhase phase = agents.front().phase();
            const int stage = agents.front().stage();

            StepOutcome outcome = env.step(actions);

            double alone_sum = 0.0;
            int collisions = 0;
            for (int j = 0; j < k; ++j) {
                if (outcome.collided[static_cast<size_t>(j)])
                    ++collisions;
                else
                    alone_sum += ctx.matrix.mean(j, actions[static_cast<size_t>(j)]);
            }
            double instant = ctx.oracle.j1 - alone_sum;
            if (instant < 0.0) instant = 0.0;  // guards FP slack; an injective sub-profile never beats J1

            out.trace.steps.push_back({instant, epoch_now, static_cast<std::uint8_t>(phase),
                                       static_cast<std::uint8_t>(stage), static_cast<std::uint8_t>(collisions)});
            cum += instant;
            switch (stage) {
                case 1: out.trace.r1 += instant; break;
                case 2: out.trace.r2 += instant; break;
                default: out.trace.r3 += instant; break;
            }
            if (phase == AgentPhase::Exploit) cur->exploit_regret += instant;

            for (int j = 0; j < k; ++j) agents[static_cast<size_t>(j)].observe(outcome.rewards[static_cast<size_t>(j)]);
            ++t;

            for (int j = 0; j < k; ++j)
                for (const AgentEvent& e : agents[static_cast<size_t>(j)].drain_events()) handle_event(j, e);
            for (int j = 1; j < k; ++j)
                if (agents[static_cast<size_t>(j)].epoch() != agents.front().epoch()) {
                    ++out.stats.desync_steps;
                    break;
                }
        }
        close_epoch();
    }
};

} // namespace

EpisodeResult run_episode(const SimContext& ctx, std::uint64_t seed) {
    EpisodeRunner runner(ctx, seed);
    runner.run();
    return runner.out;
}

namespace {

struct ReducedEpisode {
    std::vector<double> cum;  // cumulative regret per step
    DiagnosticStats stats;
};

ReducedEpisode reduce_episode(const SimContext& ctx, std::uint64_t seed) {
    EpisodeResult ep = run_episode(ctx, seed);
    ReducedEpisode red;
    red.cum.reserve(ep.trace.steps.size());
    double c = 0.0;
    for (const StepRecord& s : ep.trace.steps) {
        c += s.instant;
        red.cum.push_back(c);
    }
    red.stats = std::move(ep.stats);
    return red;
}

} // namespace

SweepResult run_sweep(const SimContext& ctx, const std::vector<std::uint64_t>& seeds, int threads) {
    if (seeds.empty()) throw ValidationError("run_sweep: at least one seed required");

    int hw = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;

    std::vector<ReducedEpisode> episodes(seeds.size());
    for (size_t base = 0; base < seeds.size(); base += static_cast<size_t>(hw)) {
        size_t stop = std::min(seeds.size(), base + static_cast<size_t>(hw));
        std::vector<std::future<ReducedEpisode>> batch;
        for (size_t i = base; i < stop; ++i)
            batch.push_back(std::async(std::launch::async,
                                       [&ctx, seed = seeds[i]] { return reduce_episode(ctx, seed); }));
        for (size_t i = base; i < stop; ++i) episodes[i] = batch[i - base].get();
    }

    SweepResult out;
    out.seeds = seeds;
    const auto n = static_cast<double>(seeds.size());

    out.min_horizon = episodes.front().cum.size();
    size_t min_epochs = episodes.front().stats.epochs.size();
    for (const ReducedEpisode& e : episodes) {
        out.min_horizon = std::min<std::int64_t>(out.min_horizon, static_cast<std::int64_t>(e.cum.size()));
        min_epochs = std::min(min_epochs, e.stats.epochs.size());
    }

    out.mean_cum.assign(static_cast<size_t>(out.min_horizon), 0.0);
    out.stderr_cum.assign(static_cast<size_t>(out.min_horizon), 0.0);
    std::vector<double> sumsq(static_cast<size_t>(out.min_horizon), 0.0);
    for (const ReducedEpisode& e : episodes) {
        for (std::int64_t i = 0; i < out.min_horizon; ++i) {
            double v = e.cum[static_cast<size_t>(i)];
            out.mean_cum[static_cast<size_t>(i)] += v;
            sumsq[static_cast<size_t>(i)] += v * v;
        }
    }
    for (std::int64_t i = 0; i < out.min_horizon; ++i) {
        double mean = out.mean_cum[static_cast<size_t>(i)] / n;
        out.mean_cum[static_cast<size_t>(i)] = mean;
        double var = n > 1 ? std::max(0.0, (sumsq[static_cast<size_t>(i)] - n * mean * mean) / (n - 1.0)) : 0.0;
        out.stderr_cum[static_cast<size_t>(i)] = std::sqrt(var / n);
    }
    out.bound_curve.resize(static_cast<size_t>(out.min_horizon));
    for (std::int64_t i = 0; i < out.min_horizon; ++i)
        out.bound_curve[static_cast<size_t>(i)] = theoretical_bound(ctx.params, static_cast<double>(i + 1));

    std::int64_t attempts = 0;
    std::int64_t successes = 0;
    for (const ReducedEpisode& e : episodes) {
        attempts += e.stats.fix_attempts;
        successes += e.stats.fix_successes;
        out.total_faults += e.stats.total_faults;
    }
    out.fixing_success_rate = attempts > 0 ? static_cast<double>(successes) / static_cast<double>(attempts) : 1.0;

    for (size_t l = 0; l < min_epochs; ++l) {
        SweepResult::EpochAgg agg;
        agg.epoch = static_cast<int>(l) + 1;
        for (const ReducedEpisode& e : episodes) {
            const EpochDiag& d = e.stats.epochs[l];
            agg.mean_end_t += static_cast<double>(d.end_step);
            agg.mean_cum_regret += d.cum_regret_at_end;
            agg.fixing_attempted_rate += d.fixing_attempted ? 1.0 : 0.0;
            agg.verify_ok_rate += d.verify_ok ? 1.0 : 0.0;
            agg.truly_optimal_rate += d.truly_optimal ? 1.0 : 0.0;
            agg.agreement_rate += d.agreement ? 1.0 : 0.0;
            agg.mean_exploit_regret += d.exploit_regret;
        }
        agg.mean_end_t /= n;
        agg.mean_cum_regret /= n;
        agg.fixing_attempted_rate /= n;
        agg.verify_ok_rate /= n;
        agg.truly_optimal_rate /= n;
        agg.agreement_rate /= n;
        agg.mean_exploit_regret /= n;
        agg.bound = theoretical_bound(ctx.params, agg.mean_end_t);
        out.epochs.push_back(agg);
    }

    for (const auto& agg : out.epochs)
        if (agg.mean_cum_regret > agg.bound) out.bound_dominates = false;
    for (size_t l = 1; l < out.epochs.size(); ++l) {
        double prev = out.epochs[l - 1].mean_cum_regret / out.epochs[l - 1].mean_end_t;
        double now = out.epochs[l].mean_cum_regret / out.epochs[l].mean_end_t;
        if (now > prev * (1.0 + 1e-9)) out.ratio_nonincreasing = false;
    }

    // affine fit of boundary regret in the epoch index, from epoch 4 on
    const int from = 4;
    if (static_cast<int>(out.epochs.size()) >= from + 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int cnt = 0;
        for (const auto& agg : out.epochs) {
            if (agg.epoch < from) continue;
            double x = agg.epoch;
            double y = agg.mean_cum_regret;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++cnt;
        }
        double det = cnt * sxx - sx * sx;
        if (det != 0.0) {
            out.fit.valid = true;
            out.fit.from_epoch = from;
            out.fit.slope = (cnt * sxy - sx * sy) / det;
            out.fit.intercept = (sy - out.fit.slope * sx) / cnt;
            for (const auto& agg : out.epochs) {
                if (agg.epoch < from) continue;
                double predicted = out.fit.intercept + out.fit.slope * agg.epoch;
                double denom = std::max(std::abs(agg.mean_cum_regret), 1e-12);
                out.fit.max_rel_dev = std::max(out.fit.max_rel_dev,
                                               std::abs(agg.mean_cum_regret - predicted) / denom);
            }
        }
    }

    out.per_seed_stats.reserve(episodes.size());
    for (ReducedEpisode& e : episodes) out.per_seed_stats.push_back(std::move(e.stats));
    return out;
}

namespace {

void append_double(std::string& s, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    s.append(buf, res.ptr);
}

} // namespace

void write_trace_csv(std::ostream& os, const RegretTrace& trace) {
    std::string line = "t,epoch,phase,instant_regret,cum_regret,collisions\n";
    os << line;
    double cum = 0.0;
    std::int64_t t = 0;
    for (const StepRecord& s : trace.steps) {
        ++t;
        cum += s.instant;
        line.clear();
        line += std::to_string(t);
        line += ',';
        line += std::to_string(s.epoch);
        line += ',';
        line += to_string(static_cast<AgentPhase>(s.phase));
        line += ',';
        append_double(line, s.instant);
        line += ',';
        append_double(line, cum);
        line += ',';
        line += std::to_string(static_cast<int>(s.collisions));
        line += '\n';
        os << line;
    }
}

} // namespace mumab
