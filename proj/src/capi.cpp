#include "solvent.h"

#include <fstream>
#include <optional>
#include <string>

#include "solvent/config.hpp"
#include "solvent/harness.hpp"

using namespace solvent;

struct solvent_config {
    harness::RunConfig run;
    harness::PretrainRequest pre;
    std::vector<std::vector<game::Move>> cmp_openings;
    std::vector<harness::Mode> cmp_modes{harness::Mode::Baseline, harness::Mode::OnlineCp};
    std::vector<uint64_t> cmp_seeds{1};
    bool cmp_ablation = false;
    std::optional<std::vector<game::Move>> cmp_pretrain_from;
};

struct solvent_result {
    int outcome = SOLVENT_UNKNOWN;
    std::string stats_row;
};

namespace {

thread_local std::string g_error;

int fail(int code, const std::string& msg)
{
    g_error = msg;
    return code;
}

template <typename Fn> int guarded(Fn&& fn)
{
    try {
        return fn();
    } catch (const UsageError& e) {
        return fail(SOLVENT_E_USAGE, e.what());
    } catch (const IoError& e) {
        return fail(SOLVENT_E_IO, e.what());
    } catch (const ProtocolError& e) {
        return fail(SOLVENT_E_PROTOCOL, e.what());
    } catch (const ContractViolation& e) {
        return fail(SOLVENT_E_INTERNAL, e.what());
    } catch (const std::exception& e) {
        return fail(SOLVENT_E_RUNTIME, e.what());
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v)
{
    try {
        size_t used = 0;
        uint64_t n = std::stoull(v, &used);
        if (used == v.size()) return n;
    } catch (const std::exception&) {
    }
    throw UsageError(key + ": expected an unsigned integer, got '" + v + "'");
}

std::vector<int> parse_hidden(const std::string& v)
{
    std::vector<int> out;
    for (const auto& tok : config::split(v, ','))
        out.push_back(static_cast<int>(parse_u64("pretrain.hidden", tok)));
    if (out.empty()) throw UsageError("pretrain.hidden: expected layer sizes");
    return out;
}

void apply_pretrain_key(solvent_config& c, const std::string& key, const std::string& value)
{
    auto& p = c.pre;
    if (key == "pretrain.opening") p.opening = harness::parse_opening(value);
    else if (key == "pretrain.out") p.out_file = value;
    else if (key == "pretrain.metrics") p.metrics_file = value;
    else if (key == "pretrain.games")
        p.pretrain.games_per_round = static_cast<uint32_t>(parse_u64(key, value));
    else if (key == "pretrain.steps")
        p.pretrain.steps_per_round = static_cast<uint32_t>(parse_u64(key, value));
    else if (key == "pretrain.rounds")
        p.pretrain.rounds = static_cast<uint32_t>(parse_u64(key, value));
    else if (key == "pretrain.batch")
        p.pretrain.batch_size = static_cast<uint32_t>(parse_u64(key, value));
    else if (key == "pretrain.lr")
        p.pretrain.learning_rate = std::stod(value);
    else if (key == "pretrain.hidden")
        p.hidden = parse_hidden(value);
    else if (key == "pretrain.init_seed")
        p.init_seed = parse_u64(key, value);
    else if (key == "pretrain.resume")
        p.resume_from = value;
    else if (key == "pretrain.seed")
        p.pretrain.seed = parse_u64(key, value);
    else if (key == "pretrain.sims_per_move")
        p.pretrain.selfplay.sims_per_move = static_cast<uint32_t>(parse_u64(key, value));
    else
        throw UsageError("unknown config key: " + key);
}

void apply_compare_key(solvent_config& c, const std::string& key, const std::string& value)
{
    if (key == "compare.openings") {
        c.cmp_openings.clear();
        for (const auto& part : config::split(value, ';'))
            c.cmp_openings.push_back(harness::parse_opening(part));
    } else if (key == "compare.modes") {
        c.cmp_modes.clear();
        for (const auto& part : config::split(value, ','))
            c.cmp_modes.push_back(harness::parse_mode(part));
        if (c.cmp_modes.empty()) throw UsageError("compare.modes: expected at least one mode");
    } else if (key == "compare.seeds") {
        c.cmp_seeds.clear();
        for (const auto& part : config::split(value, ','))
            c.cmp_seeds.push_back(parse_u64(key, part));
        if (c.cmp_seeds.empty()) throw UsageError("compare.seeds: expected at least one seed");
    } else if (key == "compare.ablation") {
        c.cmp_ablation = value == "1" || value == "true" || value == "on";
    } else if (key == "compare.pretrain_from") {
        c.cmp_pretrain_from = harness::parse_opening(value);
    } else {
        throw UsageError("unknown config key: " + key);
    }
}

void apply_any(solvent_config& c, const std::string& key, const std::string& value)
{
    if (key.rfind("pretrain.", 0) == 0) apply_pretrain_key(c, key, value);
    else if (key.rfind("compare.", 0) == 0) apply_compare_key(c, key, value);
    else harness::apply_key(c.run, key, value);
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("short write to " + path);
}

int outcome_code(const harness::RunResult& r)
{
    if (r.outcome == game::Outcome::Win) return SOLVENT_WIN;
    if (r.outcome == game::Outcome::Loss) return SOLVENT_LOSS;
    return SOLVENT_UNKNOWN;
}

} // namespace

extern "C" {

solvent_config* solvent_config_new(void)
{
    return new (std::nothrow) solvent_config();
}

void solvent_config_free(solvent_config* cfg)
{
    delete cfg;
}

int solvent_config_set(solvent_config* cfg, const char* key, const char* value)
{
    if (!cfg || !key || !value) return fail(SOLVENT_E_USAGE, "null argument");
    return guarded([&] {
        apply_any(*cfg, key, value);
        return SOLVENT_OK;
    });
}

int solvent_config_load_file(solvent_config* cfg, const char* path)
{
    if (!cfg || !path) return fail(SOLVENT_E_USAGE, "null argument");
    return guarded([&] {
        for (const auto& [k, v] : config::parse_file(path)) apply_any(*cfg, k, v);
        return SOLVENT_OK;
    });
}

int solvent_solve(solvent_config* cfg, solvent_result** out)
{
    if (!cfg || !out) return fail(SOLVENT_E_USAGE, "null argument");
    *out = nullptr;
    return guarded([&] {
        auto r = harness::run_solve(cfg->run);
        auto* res = new solvent_result();
        res->outcome = outcome_code(r);
        res->stats_row = manager::to_csv(r.stats);
        *out = res;
        return SOLVENT_OK;
    });
}

int solvent_pretrain(solvent_config* cfg)
{
    if (!cfg) return fail(SOLVENT_E_USAGE, "null argument");
    return guarded([&] {
        harness::PretrainRequest req = cfg->pre;
        req.game = cfg->run.game;
        req.pretrain.selfplay.tree = cfg->run.manager.tree;
        if (req.out_file.empty()) throw UsageError("pretrain.out is required");
        harness::run_pretrain(req);
        return SOLVENT_OK;
    });
}

int solvent_verify_tree(const char* path, const char* game)
{
    if (!path) return fail(SOLVENT_E_USAGE, "null argument");
    return guarded([&]() -> int {
        std::optional<game::GameId> expect;
        if (game) expect = game::GameId::parse(game);
        auto vr = harness::verify_file(path, expect);
        if (vr.pass) return SOLVENT_OK;
        return fail(SOLVENT_FAIL, vr.violation);
    });
}

int solvent_sweep(solvent_config* cfg, const char* axis, const char* values,
                  const char* out_path)
{
    if (!cfg || !axis || !values || !out_path) return fail(SOLVENT_E_USAGE, "null argument");
    return guarded([&] {
        std::string csv;
        std::string ax = axis;
        if (ax == "vthr") {
            std::vector<double> vs;
            for (const auto& tok : config::split(values, ',')) vs.push_back(std::stod(tok));
            if (vs.empty()) throw UsageError("sweep: expected at least one value");
            csv = harness::sweep_vthr(cfg->run, vs);
        } else if (ax == "workers") {
            std::vector<uint32_t> ns;
            for (const auto& tok : config::split(values, ','))
                ns.push_back(static_cast<uint32_t>(parse_u64("workers", tok)));
            if (ns.empty()) throw UsageError("sweep: expected at least one value");
            csv = harness::sweep_workers(cfg->run, ns);
        } else {
            throw UsageError("unknown sweep axis: " + ax);
        }
        write_text(out_path, csv);
        return SOLVENT_OK;
    });
}

int solvent_compare(solvent_config* cfg, const char* out_prefix)
{
    if (!cfg || !out_prefix) return fail(SOLVENT_E_USAGE, "null argument");
    return guarded([&] {
        if (cfg->cmp_openings.empty())
            throw UsageError("compare.openings is required");
        harness::CompareRequest req;
        req.base = cfg->run;
        req.openings = cfg->cmp_openings;
        req.modes = cfg->cmp_modes;
        req.seeds = cfg->cmp_seeds;
        req.ablation = cfg->cmp_ablation;
        if (cfg->cmp_pretrain_from) {
            harness::PretrainRequest pr = cfg->pre;
            pr.game = cfg->run.game;
            pr.pretrain.selfplay.tree = cfg->run.manager.tree;
            pr.opening = *cfg->cmp_pretrain_from;
            pr.out_file.clear(); // in-memory hand-off to the solve runs
            req.offline_ft = std::move(pr);
        }
        auto res = harness::run_compare(req);
        std::string prefix = out_prefix;
        write_text(prefix + "_table.csv", res.table_csv);
        write_text(prefix + "_runs.csv", res.runs_csv);
        write_text(prefix + "_critical.csv", res.critical_csv);
        return SOLVENT_OK;
    });
}

int solvent_result_outcome(const solvent_result* res)
{
    return res ? res->outcome : SOLVENT_UNKNOWN;
}

const char* solvent_result_stats_row(const solvent_result* res)
{
    return res ? res->stats_row.c_str() : "";
}

const char* solvent_stats_header(void)
{
    static const std::string header = manager::stats_csv_header();
    return header.c_str();
}

void solvent_result_free(solvent_result* res)
{
    delete res;
}

const char* solvent_last_error(void)
{
    return g_error.c_str();
}

} // extern "C"
