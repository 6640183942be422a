#include <cstdio>
#include <fstream>
#include <iostream>
#include <deque>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "solvent.h"

namespace {

struct Config {
    solvent_config* c = solvent_config_new();
    ~Config() { solvent_config_free(c); }
    Config(const Config&) = delete;
    Config() = default;

    int set(const std::string& key, const std::string& value)
    {
        return solvent_config_set(c, key.c_str(), value.c_str());
    }
};

int report(int code)
{
    std::fprintf(stderr, "error: %s\n", solvent_last_error());
    return code;
}

int append_stats_row(const std::string& path, const char* row)
{
    bool need_header = true;
    {
        std::ifstream probe(path);
        need_header = !probe || probe.peek() == std::ifstream::traits_type::eof();
    }
    std::ofstream out(path, std::ios::app);
    if (!out) {
        std::fprintf(stderr, "error: cannot write %s\n", path.c_str());
        return SOLVENT_E_IO;
    }
    if (need_header) out << solvent_stats_header() << '\n';
    out << row << '\n';
    return SOLVENT_OK;
}

void print_file(const std::string& path)
{
    std::ifstream in(path);
    if (in) std::cout << in.rdbuf();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Distributed AND-OR proof search for small two-player games"};
    app.require_subcommand(1);

    // Every option is bound to (flag, config key, text storage); after
    // parsing, only options the user actually passed are applied, in order:
    // built-in defaults, then the config file, then explicit flags.
    struct Bound {
        CLI::Option* opt;
        std::string key;
        std::string value;
    };

    auto bind = [](CLI::App* cmd, std::deque<Bound>& flags, const std::string& flag,
                   const std::string& key, const std::string& help) {
        flags.push_back({nullptr, key, {}});
        flags.back().opt = cmd->add_option(flag, flags.back().value, help);
    };

    // solve ------------------------------------------------------------
    auto* solve = app.add_subcommand("solve", "Prove one opening and emit a stats row");
    std::deque<Bound> solve_flags;
    std::string solve_config, stats_out = "stats.csv", sweep_vthr, sweep_workers,
                sweep_out = "sweep.csv";
    solve->add_option("--config", solve_config, "key=value file, flags override it");
    bind(solve, solve_flags, "--game", "game", "ttt or hex-N");
    bind(solve, solve_flags, "--opening", "opening", "comma-separated cell indices");
    bind(solve, solve_flags, "--mode", "mode",
         "baseline, online-sp, online-cp, or online-sp+cp");
    bind(solve, solve_flags, "--workers", "workers", "worker count");
    bind(solve, solve_flags, "--vthr", "vthr", "dispatch threshold");
    bind(solve, solve_flags, "--k", "k", "top-k width at AND nodes");
    bind(solve, solve_flags, "--budget", "budget", "node budget per job");
    bind(solve, solve_flags, "--seed", "seed", "master RNG seed");
    bind(solve, solve_flags, "--transport", "transport", "inproc or tcp");
    bind(solve, solve_flags, "--checkpoint", "checkpoint", "initial network file");
    bind(solve, solve_flags, "--solution-out", "solution_out", "tree file written on Win");
    bind(solve, solve_flags, "--events-out", "events_out", "manager event log (JSON lines)");
    bind(solve, solve_flags, "--metrics-out", "metrics_out", "trainer metrics CSV");
    bind(solve, solve_flags, "--wall-limit-s", "wall_limit_s", "abort after this many seconds");
    solve->add_option("--stats-out", stats_out, "stats CSV to append to");
    solve->add_option("--sweep-vthr", sweep_vthr, "comma-separated thresholds to sweep");
    solve->add_option("--sweep-workers", sweep_workers, "comma-separated worker counts");
    solve->add_option("--sweep-out", sweep_out, "sweep CSV path");

    // pretrain ----------------------------------------------------------
    auto* pretrain = app.add_subcommand("pretrain", "Train an initial network by self-play");
    std::deque<Bound> pre_flags;
    std::string pre_config;
    pretrain->add_option("--config", pre_config, "key=value file, flags override it");
    bind(pretrain, pre_flags, "--game", "game", "ttt or hex-N");
    bind(pretrain, pre_flags, "--opening", "pretrain.opening", "start position");
    bind(pretrain, pre_flags, "--out", "pretrain.out", "checkpoint file to write");
    bind(pretrain, pre_flags, "--metrics-out", "pretrain.metrics", "step,loss CSV");
    bind(pretrain, pre_flags, "--games", "pretrain.games", "self-play games per round");
    bind(pretrain, pre_flags, "--steps", "pretrain.steps", "SGD steps per round");
    bind(pretrain, pre_flags, "--rounds", "pretrain.rounds", "play+train rounds");
    bind(pretrain, pre_flags, "--batch", "pretrain.batch", "batch size");
    bind(pretrain, pre_flags, "--lr", "pretrain.lr", "learning rate");
    bind(pretrain, pre_flags, "--hidden", "pretrain.hidden", "hidden sizes, e.g. 128,128");
    bind(pretrain, pre_flags, "--init-seed", "pretrain.init_seed", "parameter init seed");
    bind(pretrain, pre_flags, "--resume", "pretrain.resume", "continue from a checkpoint");
    bind(pretrain, pre_flags, "--seed", "pretrain.seed", "self-play RNG seed");
    bind(pretrain, pre_flags, "--sims-per-move", "pretrain.sims_per_move",
         "search budget per self-play move");

    // verify -------------------------------------------------------------
    auto* verify = app.add_subcommand("verify", "Check a solution-tree file");
    std::string verify_tree, verify_game;
    verify->add_option("--tree", verify_tree, "solution-tree file")->required();
    verify->add_option("--game", verify_game, "expected game id");

    // compare ------------------------------------------------------------
    auto* compare = app.add_subcommand("compare", "Opening x mode x seed comparison grid");
    std::deque<Bound> cmp_flags;
    std::string cmp_config, cmp_prefix = "compare";
    bool cmp_ablation = false;
    compare->add_option("--config", cmp_config, "key=value file, flags override it");
    bind(compare, cmp_flags, "--game", "game", "ttt or hex-N");
    bind(compare, cmp_flags, "--openings", "compare.openings",
         "semicolon-separated openings, e.g. '4;0;0,8'");
    bind(compare, cmp_flags, "--modes", "compare.modes", "comma-separated mode list");
    bind(compare, cmp_flags, "--seeds", "compare.seeds", "comma-separated seed list");
    bind(compare, cmp_flags, "--workers", "workers", "worker count per run");
    bind(compare, cmp_flags, "--vthr", "vthr", "dispatch threshold");
    bind(compare, cmp_flags, "--k", "k", "top-k width at AND nodes");
    bind(compare, cmp_flags, "--budget", "budget", "node budget per job");
    bind(compare, cmp_flags, "--transport", "transport", "inproc or tcp");
    bind(compare, cmp_flags, "--checkpoint", "checkpoint", "initial network file");
    bind(compare, cmp_flags, "--wall-limit-s", "wall_limit_s", "per-run wall limit");
    bind(compare, cmp_flags, "--pretrain-from-opening", "compare.pretrain_from",
         "add an offline fine-tuned entry trained from this opening");
    bind(compare, cmp_flags, "--ft-games", "pretrain.games", "offline fine-tune games");
    bind(compare, cmp_flags, "--ft-steps", "pretrain.steps", "offline fine-tune steps");
    compare->add_flag("--ablation", cmp_ablation,
                      "replace modes with the four selection-rule configurations");
    compare->add_option("--out-prefix", cmp_prefix, "prefix for the emitted CSVs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : SOLVENT_E_USAGE;
    }

    auto apply_flags = [](Config& cfg, const std::string& config_file,
                          const std::deque<Bound>& flags) -> int {
        if (!config_file.empty()) {
            int rc = solvent_config_load_file(cfg.c, config_file.c_str());
            if (rc != SOLVENT_OK) return rc;
        }
        for (const auto& b : flags)
            if (b.opt->count() > 0) {
                int rc = cfg.set(b.key, b.value);
                if (rc != SOLVENT_OK) return rc;
            }
        return SOLVENT_OK;
    };

    if (solve->parsed()) {
        Config cfg;
        int rc = cfg.set("solution_out", "solution.tree");
        if (rc == SOLVENT_OK) rc = apply_flags(cfg, solve_config, solve_flags);
        if (rc != SOLVENT_OK) return report(rc);
        if (!sweep_vthr.empty() && !sweep_workers.empty()) {
            std::fprintf(stderr, "error: pick one sweep axis\n");
            return SOLVENT_E_USAGE;
        }
        if (!sweep_vthr.empty() || !sweep_workers.empty()) {
            const char* axis = sweep_vthr.empty() ? "workers" : "vthr";
            const std::string& values = sweep_vthr.empty() ? sweep_workers : sweep_vthr;
            rc = solvent_sweep(cfg.c, axis, values.c_str(), sweep_out.c_str());
            if (rc != SOLVENT_OK) return report(rc);
            print_file(sweep_out);
            return 0;
        }
        solvent_result* res = nullptr;
        rc = solvent_solve(cfg.c, &res);
        if (rc != SOLVENT_OK) return report(rc);
        int outcome = solvent_result_outcome(res);
        std::printf("%s\n", outcome == SOLVENT_WIN    ? "Win"
                            : outcome == SOLVENT_LOSS ? "Loss"
                                                      : "Unknown");
        rc = append_stats_row(stats_out, solvent_result_stats_row(res));
        solvent_result_free(res);
        return rc == SOLVENT_OK ? outcome : rc;
    }

    if (pretrain->parsed()) {
        Config cfg;
        int rc = apply_flags(cfg, pre_config, pre_flags);
        if (rc != SOLVENT_OK) return report(rc);
        rc = solvent_pretrain(cfg.c);
        if (rc != SOLVENT_OK) return report(rc);
        return 0;
    }

    if (verify->parsed()) {
        int rc = solvent_verify_tree(verify_tree.c_str(),
                                     verify_game.empty() ? nullptr : verify_game.c_str());
        if (rc == SOLVENT_OK) {
            std::printf("pass\n");
            return 0;
        }
        if (rc == SOLVENT_FAIL) {
            std::printf("fail: %s\n", solvent_last_error());
            return 1;
        }
        return report(rc);
    }

    if (compare->parsed()) {
        Config cfg;
        int rc = apply_flags(cfg, cmp_config, cmp_flags);
        if (rc == SOLVENT_OK && cmp_ablation) rc = cfg.set("compare.ablation", "1");
        if (rc != SOLVENT_OK) return report(rc);
        rc = solvent_compare(cfg.c, cmp_prefix.c_str());
        if (rc != SOLVENT_OK) return report(rc);
        print_file(cmp_prefix + "_table.csv");
        return 0;
    }

    return SOLVENT_E_USAGE;
}
