#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "solvent/game.hpp"
#include "solvent/manager.hpp"
#include "solvent/trainer.hpp"

namespace solvent::harness {

// The four solver variants: a frozen heuristic, or online fine-tuning fed by
// solved positions, critical positions, or both.
enum class Mode { Baseline, OnlineSp, OnlineCp, OnlineSpCp };

enum class TransportKind { Inproc, Tcp };

Mode parse_mode(const std::string& text);
TransportKind parse_transport(const std::string& text);
const char* to_string(Mode m);
const char* to_string(TransportKind t);

// Fault injection for in-process runs: seeded message latencies reorder
// deliveries across links, and scripted kills take workers down at a given
// manager tick.
struct ChaosConfig {
    uint64_t bus_seed = 0;
    uint64_t max_latency_micros = 0;
    std::vector<std::pair<uint32_t, uint64_t>> kills; // (worker index, manager tick)
};

struct RunConfig {
    game::GameId game = game::GameId::ttt();
    std::vector<game::Move> opening;
    Mode mode = Mode::Baseline;
    TransportKind transport = TransportKind::Inproc;
    uint32_t workers = 1;
    uint64_t seed = 1;
    manager::ManagerConfig manager;
    trainer::TrainerConfig trainer;
    // Initial network, strongest source wins: in-memory checkpoint, then
    // checkpoint file, then a zero-initialized net shaped for the game.
    std::optional<pcn::Checkpoint> checkpoint;
    std::string checkpoint_file;
    std::string solution_file; // written on Win when set
    std::string events_file;   // manager event log (JSON lines) when set
    std::string metrics_file;  // trainer iteration metrics when set
    // Snapshot proven statuses by position hash into the result (costs a
    // full-tree walk, meant for the order-independence checks).
    bool collect_proven = false;
    ChaosConfig chaos;
};

// Applies one key=value setting; shared by config files, the C API, and the
// CLI. Unknown keys and unparseable values raise UsageError.
void apply_key(RunConfig& cfg, const std::string& key, const std::string& value);

struct RunResult {
    manager::Manager::Phase phase = manager::Manager::Phase::Aborted;
    std::optional<game::Outcome> outcome;
    manager::StatsRow stats;
    std::optional<tree::SolutionTree> solution;
    // Proven statuses by canonical position hash, plus any VirtualWin markers
    // left at quiescence (there must be none).
    std::vector<std::pair<uint64_t, tree::NodeStatus>> proven;
    size_t virtual_leftovers = 0;
    std::vector<trainer::IterationMetrics> training;
};

RunResult run_solve(const RunConfig& cfg);

std::vector<game::Move> parse_opening(const std::string& text);
std::string opening_string(const std::vector<game::Move>& opening);
game::GameState opening_state(game::GameId id, const std::vector<game::Move>& opening);

pcn::Network initial_network(const RunConfig& cfg);

struct PretrainRequest {
    game::GameId game = game::GameId::ttt();
    std::vector<game::Move> opening; // start position; empty = initial
    trainer::PretrainConfig pretrain;
    std::vector<int> hidden{128, 128};
    uint64_t init_seed = 3;  // parameter init; pretraining needs a random start
    std::string resume_from; // continue from an existing checkpoint instead
    std::string out_file;
    std::string metrics_file;
};

pcn::Checkpoint run_pretrain(const PretrainRequest& req);

// Checks a solution-tree file; mismatched game is reported as a violation,
// unreadable or undecodable files throw.
tree::VerifyResult verify_file(const std::filesystem::path& path,
                               std::optional<game::GameId> expect_game);

// Threshold and worker-count sweeps over otherwise identical runs.
std::string sweep_vthr(const RunConfig& base, const std::vector<double>& values);
std::string sweep_workers(const RunConfig& base, const std::vector<uint32_t>& counts);

// Opening × mode × seed comparison grid. With `ablation` set, the mode list
// is replaced by the four selection-rule configurations. An offline
// fine-tuning entry re-pretrains from the named opening and solves baseline
// with the resulting net.
struct CompareRequest {
    RunConfig base;
    std::vector<std::vector<game::Move>> openings;
    std::vector<Mode> modes{Mode::Baseline, Mode::OnlineCp};
    std::vector<uint64_t> seeds{1};
    bool ablation = false;
    std::optional<PretrainRequest> offline_ft;
};

struct CompareResult {
    // opening,mode,outcome,median_nodes,median_time_s,median_checkpoints,node_ratio
    // with trailing geomean-of-ratio rows; ratios are against the first mode.
    std::string table_csv;
    std::string runs_csv;     // every individual run's stats row
    std::string critical_csv; // opening,mode,seed,iteration,mean_critical_plies
    bool all_completed = true;
};

CompareResult run_compare(const CompareRequest& req);

} // namespace solvent::harness
