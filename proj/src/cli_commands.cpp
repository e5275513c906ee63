#include "mumab/cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mumab/config.hpp"
#include "mumab/svg_plot.hpp"

namespace mumab::cli {

using nlohmann::json;

namespace {

int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const DegenerateMatrixError& e) {
        err << "error: " << e.what() << "\n";
        return kDegenerate;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const SizeLimitError& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 1;
    }
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << content;
    if (!out.good()) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string resolve_out(const Options& opt, const std::string& name) {
    if (opt.out_dir.empty()) return name;
    std::error_code ec;
    std::filesystem::create_directories(opt.out_dir, ec);
    return (std::filesystem::path(opt.out_dir) / name).string();
}

std::vector<std::uint64_t> resolve_sweep_seeds(const RunConfig& cfg, const Options& opt) {
    if (opt.seed_list) {
        std::vector<std::uint64_t> seeds;
        std::stringstream ss(*opt.seed_list);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            std::uint64_t v = 0;
            auto res = std::from_chars(item.data(), item.data() + item.size(), v);
            if (res.ec != std::errc{} || res.ptr != item.data() + item.size())
                throw ValidationError("bad --seed-list entry: " + item);
            seeds.push_back(v);
        }
        if (seeds.empty()) throw ValidationError("--seed-list is empty");
        return seeds;
    }
    if (opt.seeds_count) {
        if (*opt.seeds_count < 1) throw ValidationError("--seeds must be >= 1");
        std::vector<std::uint64_t> seeds;
        for (int i = 0; i < *opt.seeds_count; ++i) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
        return seeds;
    }
    return cfg.sweep_seeds;
}

json matching_json(const Matching& m) {
    json arr = json::array();
    for (int c : m.assignment) arr.push_back(c);
    return arr;
}

json oracle_json(const GapResult& oracle) {
    json o;
    o["j1"] = oracle.j1;
    o["j2"] = oracle.j2;
    o["delta"] = oracle.delta;
    o["optimal_count"] = oracle.optimal_set.size();
    json set = json::array();
    size_t shown = std::min<size_t>(oracle.optimal_set.size(), 64);
    for (size_t i = 0; i < shown; ++i) set.push_back(matching_json(oracle.optimal_set[i]));
    o["optimal_set"] = set;
    return o;
}

json protocol_json(const ProtocolParams& p) {
    json o;
    o["delta_used"] = p.delta;
    o["t_fix"] = p.t_fix;
    o["gamma"] = p.gamma;
    o["rounds"] = p.rounds;
    o["tiebreak_mode"] = to_string(p.tiebreak_mode);
    o["solver_max_users"] = p.solver_max_users;
    return o;
}

json epoch_json(const EpochDiag& d) {
    json o;
    o["epoch"] = d.epoch;
    o["start_t"] = d.start_step + 1;
    o["end_t"] = d.end_step;
    o["fixing_attempted"] = d.fixing_attempted;
    o["verify_ok"] = d.verify_ok;
    o["verdict_consistent"] = d.verdict_consistent;
    o["matrix_consistent"] = d.has_matrix ? json(d.matrix_consistent) : json(nullptr);
    o["max_quant_err"] = d.max_quant_err ? json(*d.max_quant_err) : json(nullptr);
    o["matching_agreement"] = d.has_final ? json(d.agreement) : json(nullptr);
    o["matching_truly_optimal"] = d.has_final ? json(d.truly_optimal) : json(nullptr);
    o["exploit_regret"] = d.exploit_regret;
    o["faults"] = d.faults;
    o["cum_regret"] = d.cum_regret_at_end;
    return o;
}

json flags_json(const RunConfig& cfg, const BuildOutcome& built) {
    json f;
    f["k_equals_m"] = cfg.k == cfg.m;
    f["zero_atom_allowed"] = cfg.allow_zero_atom;
    f["delta_above_oracle"] = built.delta_above_oracle;
    return f;
}

void warn_flags(const RunConfig& cfg, const BuildOutcome& built, std::ostream& err) {
    ChannelModel probe(built.ctx.matrix, built.ctx.dists, 0, cfg.allow_zero_atom);
    if (probe.zero_atom_possible())
        err << "warning: reward distribution has an atom at 0; collision signalling is ambiguous and "
               "protocol guarantees are void\n";
    if (built.delta_above_oracle)
        err << "warning: explicit delta " << cfg.delta_explicit << " exceeds the oracle gap "
            << built.ctx.oracle.delta << "; it is not a valid lower bound\n";
    if (cfg.k == cfg.m)
        err << "note: k == m (the protocol analysis assumes k < m; runs remain well-defined)\n";
}

void append_double(std::string& s, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    s.append(buf, res.ptr);
}

std::string curve_csv(const SweepResult& sweep) {
    std::string out = "t,mean_cum_regret,stderr_cum_regret,theoretical_bound\n";
    for (std::int64_t i = 0; i < sweep.min_horizon; ++i) {
        out += std::to_string(i + 1);
        out += ',';
        append_double(out, sweep.mean_cum[static_cast<size_t>(i)]);
        out += ',';
        append_double(out, sweep.stderr_cum[static_cast<size_t>(i)]);
        out += ',';
        append_double(out, sweep.bound_curve[static_cast<size_t>(i)]);
        out += '\n';
    }
    return out;
}

} // namespace

int cmd_oracle(const Options& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        MeanMatrix matrix = load_matrix_file(opt.input_path);
        EnumerationLimits limits;
        limits.max_users = 10;
        GapResult oracle = gap_oracle(matrix, limits);
        json o = oracle_json(oracle);
        o["k"] = matrix.users();
        o["m"] = matrix.channels();
        out << o.dump(2) << "\n";
        return kOk;
    });
}

int cmd_run(const Options& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        RunConfig cfg = load_config(opt.config_path, opt.allow_zero_atom);
        if (opt.seed) cfg.seed = *opt.seed;
        BuildOutcome built = make_context(cfg);
        warn_flags(cfg, built, err);

        EpisodeResult ep = run_episode(built.ctx, cfg.seed);

        std::ostringstream trace;
        write_trace_csv(trace, ep.trace);
        write_file(resolve_out(opt, cfg.out.trace), trace.str());

        json summary;
        summary["command"] = "run";
        summary["config"] = json::parse(effective_config_json(cfg));
        summary["oracle"] = oracle_json(built.ctx.oracle);
        summary["protocol"] = protocol_json(built.ctx.params);
        summary["flags"] = flags_json(cfg, built);
        json result;
        result["seed"] = cfg.seed;
        result["steps"] = ep.trace.steps.size();
        result["total_regret"] = ep.trace.total();
        result["r1"] = ep.trace.r1;
        result["r2"] = ep.trace.r2;
        result["r3"] = ep.trace.r3;
        result["l_f"] = ep.stats.l_f;
        result["fixing_attempts"] = ep.stats.fix_attempts;
        result["fixing_successes"] = ep.stats.fix_successes;
        result["protocol_faults"] = ep.stats.total_faults;
        result["desync_steps"] = ep.stats.desync_steps;
        json epochs = json::array();
        for (const EpochDiag& d : ep.stats.epochs) epochs.push_back(epoch_json(d));
        result["epochs"] = epochs;
        summary["result"] = result;
        write_file(resolve_out(opt, cfg.out.summary), summary.dump(2) + "\n");

        out << "run complete: " << ep.trace.steps.size() << " steps, total regret " << ep.trace.total()
            << ", trace " << resolve_out(opt, cfg.out.trace) << ", summary "
            << resolve_out(opt, cfg.out.summary) << "\n";
        return kOk;
    });
}

int cmd_sweep(const Options& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        RunConfig cfg = load_config(opt.config_path, opt.allow_zero_atom);
        if (opt.seed) cfg.seed = *opt.seed;
        cfg.sweep_seeds = resolve_sweep_seeds(cfg, opt);
        BuildOutcome built = make_context(cfg);
        warn_flags(cfg, built, err);

        SweepResult sweep = run_sweep(built.ctx, cfg.sweep_seeds, opt.threads);

        write_file(resolve_out(opt, cfg.out.curve), curve_csv(sweep));

        json summary;
        summary["command"] = "sweep";
        summary["config"] = json::parse(effective_config_json(cfg));
        summary["oracle"] = oracle_json(built.ctx.oracle);
        summary["protocol"] = protocol_json(built.ctx.params);
        summary["flags"] = flags_json(cfg, built);

        json s;
        s["seeds"] = sweep.seeds;
        s["min_horizon"] = sweep.min_horizon;
        s["fixing_success_rate"] = sweep.fixing_success_rate;
        s["total_faults"] = sweep.total_faults;
        s["bound_dominates"] = sweep.bound_dominates;
        s["ratio_nonincreasing"] = sweep.ratio_nonincreasing;
        json fit;
        fit["valid"] = sweep.fit.valid;
        fit["from_epoch"] = sweep.fit.from_epoch;
        fit["slope"] = sweep.fit.slope;
        fit["intercept"] = sweep.fit.intercept;
        fit["max_rel_dev"] = sweep.fit.max_rel_dev;
        s["fit"] = fit;
        json epochs = json::array();
        for (const SweepResult::EpochAgg& a : sweep.epochs) {
            json e;
            e["epoch"] = a.epoch;
            e["mean_end_t"] = a.mean_end_t;
            e["mean_cum_regret"] = a.mean_cum_regret;
            e["theoretical_bound"] = a.bound;
            e["fixing_attempted_rate"] = a.fixing_attempted_rate;
            e["verify_ok_rate"] = a.verify_ok_rate;
            e["truly_optimal_rate"] = a.truly_optimal_rate;
            e["agreement_rate"] = a.agreement_rate;
            e["mean_exploit_regret"] = a.mean_exploit_regret;
            epochs.push_back(e);
        }
        s["epochs"] = epochs;
        summary["sweep"] = s;
        write_file(resolve_out(opt, cfg.out.summary), summary.dump(2) + "\n");

        out << "sweep complete: " << sweep.seeds.size() << " seeds, min horizon " << sweep.min_horizon
            << ", curve " << resolve_out(opt, cfg.out.curve) << ", summary "
            << resolve_out(opt, cfg.out.summary) << "\n";
        return kOk;
    });
}

namespace {

struct CurveData {
    std::vector<std::pair<double, double>> value;  // (t, cum regret)
    std::vector<std::pair<double, double>> bound;  // (t, theoretical bound), may be empty
};

CurveData parse_curve_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("plot: empty CSV");

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) header.push_back(col);
    }
    auto col_index = [&](const std::string& name) -> int {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    int t_col = col_index("t");
    int y_col = col_index("mean_cum_regret");
    if (y_col < 0) y_col = col_index("cum_regret");
    int b_col = col_index("theoretical_bound");
    if (t_col < 0 || y_col < 0)
        throw ValidationError("plot: CSV must have a 't' column and a 'cum_regret'/'mean_cum_regret' column");

    CurveData data;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (static_cast<int>(cells.size()) <= std::max(t_col, y_col)) continue;
        try {
            double t = std::stod(cells[static_cast<size_t>(t_col)]);
            double y = std::stod(cells[static_cast<size_t>(y_col)]);
            data.value.emplace_back(t, y);
            if (b_col >= 0 && b_col < static_cast<int>(cells.size()))
                data.bound.emplace_back(t, std::stod(cells[static_cast<size_t>(b_col)]));
        } catch (const std::exception&) {
            throw ValidationError("plot: malformed CSV row: " + line);
        }
    }
    if (data.value.empty()) throw ValidationError("plot: CSV has no data rows");
    return data;
}

std::vector<std::pair<double, double>> decimate(const std::vector<std::pair<double, double>>& pts,
                                                size_t max_points = 1200) {
    if (pts.size() <= max_points) return pts;
    std::vector<std::pair<double, double>> out;
    size_t stride = (pts.size() + max_points - 1) / max_points;
    for (size_t i = 0; i < pts.size(); i += stride) out.push_back(pts[i]);
    if (out.back() != pts.back()) out.push_back(pts.back());
    return out;
}

} // namespace

int cmd_plot(const Options& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        CurveData data = parse_curve_csv(read_text_file(opt.input_path));
        if (opt.overlay_bound && data.bound.empty())
            throw ValidationError("plot: --overlay-bound needs a 'theoretical_bound' column "
                                  "(produced by the sweep command)");

        std::vector<PlotSeries> series;
        series.push_back({"cumulative regret", "#1f6fb2", decimate(data.value)});
        if (opt.overlay_bound) series.push_back({"theoretical bound", "#c2402a", decimate(data.bound)});

        std::string svg = render_plot_svg("Cumulative regret", "t", "regret", series, opt.overlay_bound);
        std::string path = resolve_out(opt, "plot.svg");
        write_file(path, svg);
        out << "plot written: " << path << "\n";
        return kOk;
    });
}

int cmd_validate_config(const Options& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        RunConfig cfg = load_config(opt.config_path, opt.allow_zero_atom);
        if (opt.seed) cfg.seed = *opt.seed;
        BuildOutcome built = make_context(cfg);
        warn_flags(cfg, built, err);
        out << effective_config_json(cfg) << "\n";
        return kOk;
    });
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"mumab: decentralized multi-user multi-armed bandit simulator"};
    app.require_subcommand(1);

    Options opt;

    CLI::App* oracle = app.add_subcommand("oracle", "print J1, J2, delta and the optimal matchings of a matrix file");
    oracle->add_option("matrix", opt.input_path, "matrix JSON file")->required();

    CLI::App* run = app.add_subcommand("run", "run one episode; write trace CSV and summary JSON");
    CLI::App* sweep = app.add_subcommand("sweep", "run a seeded Monte Carlo sweep; write averaged curve and summary");
    CLI::App* plot = app.add_subcommand("plot", "render a curve/trace CSV as a self-contained SVG");
    CLI::App* validate = app.add_subcommand("validate-config", "validate a config and print its effective form");

    for (CLI::App* c : {run, sweep, validate}) {
        c->add_option("--config", opt.config_path, "config JSON file")->required();
        c->add_flag("--allow-zero-atom", opt.allow_zero_atom,
                    "accept reward distributions with an atom at 0 (guarantees void)");
    }
    for (CLI::App* c : {run, sweep, validate})
        c->add_option("--seed", opt.seed, "override rewards.seed");
    sweep->add_option("--seeds", opt.seeds_count, "number of sweep seeds (base = rewards.seed)");
    sweep->add_option("--seed-list", opt.seed_list, "comma-separated explicit sweep seeds");
    sweep->add_option("--threads", opt.threads, "worker threads (default: hardware concurrency)");
    for (CLI::App* c : {run, sweep, plot})
        c->add_option("--out-dir", opt.out_dir, "directory for output files");
    plot->add_option("curve", opt.input_path, "curve or trace CSV")->required();
    plot->add_flag("--overlay-bound", opt.overlay_bound, "overlay the theoretical bound and add a log-x panel");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kValidation;
    }

    if (oracle->parsed()) return cmd_oracle(opt, std::cout, std::cerr);
    if (run->parsed()) return cmd_run(opt, std::cout, std::cerr);
    if (sweep->parsed()) return cmd_sweep(opt, std::cout, std::cerr);
    if (plot->parsed()) return cmd_plot(opt, std::cout, std::cerr);
    if (validate->parsed()) return cmd_validate_config(opt, std::cout, std::cerr);
    return kValidation;
}

} // namespace mumab::cli
