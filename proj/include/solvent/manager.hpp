#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "solvent/cost_model.hpp"
#include "solvent/messages.hpp"
#include "solvent/transport.hpp"
#include "solvent/tree.hpp"

namespace solvent::manager {

struct ManagerConfig {
    double v_thr = 10.0;
    tree::TreeConfig tree;
    uint64_t job_budget = 100'000;
    bool subscribe_checkpoints = true;
    // Ablation switch. When off, OR leaves below the threshold are dispatched
    // directly instead of being expanded for a 1-ply look-ahead to an AND
    // child.
    bool and_assignment = true;
    bool emit_loss_positions = false;
    uint64_t seed = 1;
    uint64_t max_wall_micros = 600'000'000;
};

// One row of the per-run statistics CSV. The identity columns are filled by
// the harness, the measured columns by the manager.
struct StatsRow {
    std::string game;
    std::string opening;
    std::string mode;
    uint32_t workers = 0;
    uint64_t seed = 0;
    std::string outcome;
    uint64_t total_nodes = 0;
    double time_s = 0.0;
    uint64_t manager_nodes = 0;
    uint64_t jobs = 0;
    double avg_job_time_s = 0.0;
    double avg_job_nodes = 0.0;
    uint64_t pcn_count = 0;
    double solved_jobs_pct = 0.0;
    double avg_worker_loading_pct = 0.0;
};

std::string stats_csv_header();
std::string to_csv(const StatsRow& r);

class Manager {
public:
    enum class Phase { Running, Draining, Done, Aborted };

    Manager(ManagerConfig cfg, game::GameState root, pcn::Network net,
            transport::Topology topo, transport::Channel& ch, std::ostream* event_log = nullptr);

    // One cooperative turn: drain the inbox, then at most one selection step.
    Phase tick();

    // The two halves of tick, split out so tests can interleave them.
    void pump_messages();
    bool step_search();

    Phase phase() const { return phase_; }
    std::optional<game::Outcome> outcome() const { return outcome_; }
    const tree::SearchTree& tree() const { return tree_; }
    tree::SolutionTree solution() const;
    StatsRow stats() const;

    size_t live_jobs() const { return live_.size(); }
    uint32_t checkpoint_version() const { return observed_version_; }

private:
    struct LiveJob {
        tree::NodeId node;
        transport::PeerId worker;
        std::vector<uint8_t> position;
        double gate_v_l;
        uint64_t dispatched_at;
    };

    struct WorkerStat {
        uint64_t busy_micros = 0;
        uint64_t wall_micros = 0;
    };

    void integrate_result(const wire::JobResult& r, transport::PeerId from);
    void handle_worker_lost(transport::PeerId w);
    void dispatch_job(tree::NodeId node, const game::GameState& state, double gate_v_l);
    transport::PeerId pick_worker() const;
    void emit_status_changes(const std::vector<tree::StatusChange>& changes);
    void emit_critical(const game::GameState& leaf_state);
    void check_root();
    void abandon_live_jobs();
    void begin_drain();
    void abort_run(const std::string& why);
    void log_event(const std::string& line);

    ManagerConfig cfg_;
    transport::Topology topo_;
    transport::Channel& ch_;
    pcn::Network net_;
    tree::SearchTree tree_;
    std::ostream* log_;
    uint64_t rng_;
    Phase phase_ = Phase::Running;
    std::optional<game::Outcome> outcome_;

    std::vector<transport::PeerId> alive_workers_;
    std::unordered_map<transport::PeerId, int> outstanding_;
    std::unordered_map<uint64_t, LiveJob> live_;
    std::unordered_set<uint64_t> retired_;
    std::unordered_map<tree::NodeId, std::vector<uint8_t>> proofs_;
    std::unordered_map<transport::PeerId, WorkerStat> worker_stats_;
    std::unordered_set<transport::PeerId> drain_waiting_;

    uint64_t next_job_id_ = 1;
    uint64_t start_micros_ = 0;
    uint64_t solved_micros_ = 0;
    uint64_t drain_started_ = 0;
    bool started_ = false;
    uint64_t manager_nodes_ = 0;
    uint64_t jobs_dispatched_ = 0;
    uint64_t jobs_completed_ = 0;
    uint64_t jobs_solved_ = 0;
    uint64_t job_nodes_sum_ = 0;
    uint64_t job_micros_sum_ = 0;
    uint32_t observed_version_ = 0;
    uint64_t pcn_count_ = 0;
};

} // namespace solvent::manager
