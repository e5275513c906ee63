#include "mumab/config.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace mumab {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) throw IoError("cannot read " + path);
    return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(what + ": JSON parse error: " + e.what());
    }
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ValidationError("config: " + where + " must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed)
            if (it.key() == key) known = true;
        if (!known) throw ValidationError("config: unknown key '" + it.key() + "' in " + where);
    }
}

const json& require(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError("config: missing key '" + std::string(key) + "' in " + where);
    return *it;
}

int as_int(const json& v, const std::string& what) {
    if (!v.is_number_integer()) throw ValidationError("config: " + what + " must be an integer");
    return v.get<int>();
}

double as_number(const json& v, const std::string& what) {
    if (!v.is_number()) throw ValidationError("config: " + what + " must be a number");
    return v.get<double>();
}

std::uint64_t as_seed(const json& v, const std::string& what) {
    if (!v.is_number_unsigned() && !v.is_number_integer())
        throw ValidationError("config: " + what + " must be a non-negative integer");
    if (v.is_number_integer() && v.get<std::int64_t>() < 0)
        throw ValidationError("config: " + what + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

RewardDistSpec parse_dist(const json& d, const std::string& where) {
    check_keys(d, where, {"kind", "width", "sigma"});
    RewardDistSpec spec;
    spec.kind = reward_dist_kind_from_string(require(d, "kind", where).get<std::string>());
    if (d.contains("width")) spec.width = as_number(d["width"], where + ".width");
    if (d.contains("sigma")) spec.sigma = as_number(d["sigma"], where + ".sigma");
    return spec;
}

json dist_json(const RewardDistSpec& spec) {
    json d;
    d["kind"] = to_string(spec.kind);
    if (spec.kind == RewardDistKind::Uniform || spec.kind == RewardDistKind::TruncatedNormal)
        d["width"] = spec.width;
    if (spec.kind == RewardDistKind::TruncatedNormal) d["sigma"] = spec.sigma;
    return d;
}

std::vector<double> generate_matrix(int k, int m, const GeneratorSpec& gen) {
    if (!(gen.low >= 0.0 && gen.low < gen.high && gen.high <= 1.0))
        throw ValidationError("config: generator requires 0 <= low < high <= 1");
    std::mt19937_64 rng(gen.seed);
    std::uniform_real_distribution<double> d(gen.low, gen.high);
    std::vector<double> values(static_cast<size_t>(k) * m);
    for (double& v : values) v = d(rng);
    return values;
}

} // namespace

MeanMatrix load_matrix_file(const std::string& path) {
    json j = parse_json(read_file(path), path);
    check_keys(j, "matrix file", {"k", "m", "values"});
    int k = as_int(require(j, "k", "matrix file"), "k");
    int m = as_int(require(j, "m", "matrix file"), "m");
    const json& vals = require(j, "values", "matrix file");
    if (!vals.is_array()) throw ValidationError("matrix file: values must be an array");
    std::vector<double> values;
    values.reserve(vals.size());
    for (const json& v : vals) values.push_back(as_number(v, "values entry"));
    return MeanMatrix(k, m, std::move(values));
}

RunConfig parse_config_json(const std::string& text, bool allow_zero_atom, const std::string& base_dir) {
    json j = parse_json(text, "config");
    check_keys(j, "config", {"system", "rewards", "protocol", "horizon", "sweep", "output"});

    RunConfig cfg;
    cfg.allow_zero_atom = allow_zero_atom;

    const json& system = require(j, "system", "config");
    check_keys(system, "system", {"k", "m"});
    cfg.k = as_int(require(system, "k", "system"), "system.k");
    cfg.m = as_int(require(system, "m", "system"), "system.m");

    const json& rewards = require(j, "rewards", "config");
    check_keys(rewards, "rewards",
               {"matrix", "matrix_file", "generator", "distribution", "per_entry_distributions", "seed", "source"});
    int sources = rewards.contains("matrix") + rewards.contains("matrix_file") + rewards.contains("generator");
    if (sources != 1)
        throw ValidationError("config: rewards needs exactly one of matrix / matrix_file / generator");
    if (rewards.contains("matrix")) {
        const json& rows = rewards["matrix"];
        if (!rows.is_array() || static_cast<int>(rows.size()) != cfg.k)
            throw ValidationError("config: rewards.matrix must have k rows");
        for (const json& row : rows) {
            if (!row.is_array() || static_cast<int>(row.size()) != cfg.m)
                throw ValidationError("config: rewards.matrix rows must have m entries");
            for (const json& v : row) cfg.matrix.push_back(as_number(v, "matrix entry"));
        }
    } else if (rewards.contains("matrix_file")) {
        std::string file = rewards["matrix_file"].get<std::string>();
        std::filesystem::path p(file);
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        MeanMatrix matrix = load_matrix_file(p.string());
        if (matrix.users() != cfg.k || matrix.channels() != cfg.m)
            throw ValidationError("config: matrix file dimensions disagree with system.k/m");
        cfg.matrix = matrix.values();
        cfg.matrix_file = file;
    } else {
        const json& g = rewards["generator"];
        check_keys(g, "rewards.generator", {"low", "high", "seed"});
        GeneratorSpec gen;
        if (g.contains("low")) gen.low = as_number(g["low"], "generator.low");
        if (g.contains("high")) gen.high = as_number(g["high"], "generator.high");
        if (g.contains("seed")) gen.seed = as_seed(g["seed"], "generator.seed");
        cfg.matrix = generate_matrix(cfg.k, cfg.m, gen);
        cfg.generator = gen;
    }
    if (rewards.contains("distribution"))
        cfg.dist = parse_dist(rewards["distribution"], "rewards.distribution");
    if (rewards.contains("per_entry_distributions")) {
        const json& arr = rewards["per_entry_distributions"];
        if (!arr.is_array() || arr.size() != static_cast<size_t>(cfg.k) * cfg.m)
            throw ValidationError("config: per_entry_distributions must have k*m entries");
        std::vector<RewardDistSpec> specs;
        for (const json& d : arr) specs.push_back(parse_dist(d, "per_entry_distributions entry"));
        cfg.dist_per_entry = std::move(specs);
    }
    if (rewards.contains("seed")) cfg.seed = as_seed(rewards["seed"], "rewards.seed");

    if (j.contains("protocol")) {
        const json& protocol = j["protocol"];
        check_keys(protocol, "protocol", {"delta", "tiebreak_mode", "t_fix", "gamma", "rounds"});
        if (protocol.contains("delta")) {
            const json& d = protocol["delta"];
            if (d.is_string()) {
                if (d.get<std::string>() != "oracle")
                    throw ValidationError("config: protocol.delta must be \"oracle\" or a number");
                cfg.delta_oracle = true;
            } else {
                cfg.delta_oracle = false;
                cfg.delta_explicit = as_number(d, "protocol.delta");
                if (!(cfg.delta_explicit > 0.0 && cfg.delta_explicit < 1.0))
                    throw ValidationError("config: explicit protocol.delta must lie in (0,1)");
            }
        }
        if (protocol.contains("tiebreak_mode"))
            cfg.tiebreak = tiebreak_mode_from_string(protocol["tiebreak_mode"].get<std::string>());
        if (protocol.contains("t_fix")) cfg.t_fix_override = as_int(protocol["t_fix"], "protocol.t_fix");
        if (protocol.contains("gamma")) cfg.gamma_override = as_int(protocol["gamma"], "protocol.gamma");
        if (protocol.contains("rounds")) cfg.rounds_override = as_int(protocol["rounds"], "protocol.rounds");
    }

    if (j.contains("horizon")) {
        const json& horizon = j["horizon"];
        check_keys(horizon, "horizon", {"epochs", "steps"});
        if (horizon.contains("epochs") == horizon.contains("steps"))
            throw ValidationError("config: horizon needs exactly one of epochs / steps");
        if (horizon.contains("epochs")) {
            int epochs = as_int(horizon["epochs"], "horizon.epochs");
            if (epochs < 1) throw ValidationError("config: horizon.epochs must be >= 1");
            cfg.horizon = HorizonSpec::by_epochs(epochs);
        } else {
            std::int64_t steps = horizon["steps"].is_number_integer()
                                     ? horizon["steps"].get<std::int64_t>()
                                     : -1;
            if (steps < 1) throw ValidationError("config: horizon.steps must be a positive integer");
            cfg.horizon = HorizonSpec::by_steps(steps);
        }
    }

    int sweep_count = 20;
    if (j.contains("sweep")) {
        const json& sweep = j["sweep"];
        check_keys(sweep, "sweep", {"seeds", "seed_list"});
        if (sweep.contains("seeds") && sweep.contains("seed_list"))
            throw ValidationError("config: sweep needs at most one of seeds / seed_list");
        if (sweep.contains("seed_list")) {
            for (const json& s : sweep["seed_list"]) cfg.sweep_seeds.push_back(as_seed(s, "sweep.seed_list entry"));
            if (cfg.sweep_seeds.empty()) throw ValidationError("config: sweep.seed_list must be nonempty");
            sweep_count = 0;
        } else if (sweep.contains("seeds")) {
            sweep_count = as_int(sweep["seeds"], "sweep.seeds");
            if (sweep_count < 1) throw ValidationError("config: sweep.seeds must be >= 1");
        }
    }
    if (cfg.sweep_seeds.empty())
        for (int i = 0; i < sweep_count; ++i) cfg.sweep_seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));

    if (j.contains("output")) {
        const json& output = j["output"];
        check_keys(output, "output", {"trace", "summary", "curve", "plot"});
        if (output.contains("trace")) cfg.out.trace = output["trace"].get<std::string>();
        if (output.contains("summary")) cfg.out.summary = output["summary"].get<std::string>();
        if (output.contains("curve")) cfg.out.curve = output["curve"].get<std::string>();
        if (output.contains("plot")) cfg.out.plot = output["plot"].get<std::string>();
    }

    // resolve early so bad matrices fail at parse time
    MeanMatrix(cfg.k, cfg.m, cfg.matrix);
    return cfg;
}

RunConfig load_config(const std::string& path, bool allow_zero_atom) {
    std::string dir = std::filesystem::path(path).parent_path().string();
    if (dir.empty()) dir = ".";
    return parse_config_json(read_file(path), allow_zero_atom, dir);
}

std::string effective_config_json(const RunConfig& cfg) {
    json j;
    j["system"]["k"] = cfg.k;
    j["system"]["m"] = cfg.m;

    json rows = json::array();
    for (int r = 0; r < cfg.k; ++r) {
        json row = json::array();
        for (int c = 0; c < cfg.m; ++c) row.push_back(cfg.matrix[static_cast<size_t>(r) * cfg.m + c]);
        rows.push_back(row);
    }
    j["rewards"]["matrix"] = rows;
    std::string source = "inline";
    if (cfg.matrix_file) source = "file:" + *cfg.matrix_file;
    if (cfg.generator)
        source = "generator:uniform(low=" + std::to_string(cfg.generator->low) +
                 ",high=" + std::to_string(cfg.generator->high) +
                 ",seed=" + std::to_string(cfg.generator->seed) + ")";
    j["rewards"]["source"] = source;
    j["rewards"]["distribution"] = dist_json(cfg.dist);
    if (cfg.dist_per_entry) {
        json arr = json::array();
        for (const RewardDistSpec& d : *cfg.dist_per_entry) arr.push_back(dist_json(d));
        j["rewards"]["per_entry_distributions"] = arr;
    }
    j["rewards"]["seed"] = cfg.seed;

    if (cfg.delta_oracle)
        j["protocol"]["delta"] = "oracle";
    else
        j["protocol"]["delta"] = cfg.delta_explicit;
    j["protocol"]["tiebreak_mode"] = to_string(cfg.tiebreak);
    if (cfg.t_fix_override) j["protocol"]["t_fix"] = *cfg.t_fix_override;
    if (cfg.gamma_override) j["protocol"]["gamma"] = *cfg.gamma_override;
    if (cfg.rounds_override) j["protocol"]["rounds"] = *cfg.rounds_override;

    if (cfg.horizon.kind == HorizonSpec::Kind::Epochs)
        j["horizon"]["epochs"] = cfg.horizon.epochs;
    else
        j["horizon"]["steps"] = cfg.horizon.steps;

    j["sweep"]["seed_list"] = cfg.sweep_seeds;

    j["output"]["trace"] = cfg.out.trace;
    j["output"]["summary"] = cfg.out.summary;
    j["output"]["curve"] = cfg.out.curve;
    j["output"]["plot"] = cfg.out.plot;
    return j.dump(2);
}

BuildOutcome make_context(const RunConfig& cfg) {
    MeanMatrix matrix(cfg.k, cfg.m, cfg.matrix);

    EnumerationLimits limits;
    limits.max_users = 10;  // reference-scale cap; K above this needs no-oracle support we don't provide
    GapResult oracle = gap_oracle(matrix, limits);

    BuildOutcome out{
        SimContext{matrix, {}, cfg.allow_zero_atom, ProtocolParams{}, oracle, cfg.horizon}, false};

    double delta = oracle.delta;
    if (!cfg.delta_oracle) {
        delta = cfg.delta_explicit;
        if (delta > oracle.delta) out.delta_above_oracle = true;
    }
    ProtocolParams params = ProtocolParams::standard(cfg.k, cfg.m, delta, cfg.tiebreak);
    if (cfg.t_fix_override) params.t_fix = *cfg.t_fix_override;
    if (cfg.gamma_override) params.gamma = *cfg.gamma_override;
    if (cfg.rounds_override) params.rounds = *cfg.rounds_override;
    params.validate();
    out.ctx.params = params;

    if (cfg.dist_per_entry)
        out.ctx.dists = *cfg.dist_per_entry;
    else
        out.ctx.dists.assign(static_cast<size_t>(cfg.k) * cfg.m, cfg.dist);

    // constructing the model validates the distribution constraints
    ChannelModel(matrix, out.ctx.dists, 0, cfg.allow_zero_atom);
    return out;
}

RunConfig reference_config_k10_m10() {
    RunConfig cfg;
    cfg.k = 10;
    cfg.m = 10;
    cfg.matrix.resize(100);
    for (int j = 0; j < 10; ++j)
        for (int c = 1; c <= 10; ++c) cfg.matrix[static_cast<size_t>(j) * 10 + c - 1] = (c == j + 1) ? 0.95 : 0.85;
    cfg.dist.kind = RewardDistKind::PointMass;
    cfg.seed = 1;
    cfg.horizon = HorizonSpec::by_epochs(10);
    for (int i = 0; i < 20; ++i) cfg.sweep_seeds.push_back(static_cast<std::uint64_t>(1 + i));
    return cfg;
}

} // namespace mumab
