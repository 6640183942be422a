#pragma once

#include <deque>
#include <functional>
#include <unordered_map>

#include "solvent/cost_model.hpp"
#include "solvent/messages.hpp"
#include "solvent/transport.hpp"
#include "solvent/tree.hpp"

namespace solvent::worker {

struct WorkerConfig {
    tree::TreeConfig tree;
    bool use_transposition_table = true;
    size_t tt_capacity = 1 << 20;
    uint32_t sims_per_slice = 64;
    uint32_t hello_every_ticks = 16;
    uint64_t seed = 1;
};

// Proven positions seen while executing one job. Entries reference the tree
// node that carries the proof, so Win hits stay extractable; the table lives
// and dies with its job for exactly that reason. Full table -> new entries
// are dropped (the games are acyclic, so this only costs re-search).
class TranspositionTable {
public:
    explicit TranspositionTable(size_t capacity) : capacity_(capacity) {}

    struct Entry {
        tree::NodeStatus status;
        tree::NodeId node;
    };

    const Entry* find(uint64_t hash) const;
    bool insert(uint64_t hash, tree::NodeStatus status, tree::NodeId node);
    size_t size() const { return map_.size(); }

private:
    size_t capacity_;
    std::unordered_map<uint64_t, Entry> map_;
};

using EvalFn =
    std::function<pcn::Evaluation(const pcn::Network&, const game::GameState&)>;

pcn::Evaluation direct_eval(const pcn::Network& net, const game::GameState& s);

// One job, advanced in bounded slices so checkpoint swaps and shutdowns can
// interleave with the search. The budget counts simulations: one selection
// descent, ending in a terminal, a transposition hit, or an expansion.
class JobExecution {
public:
    JobExecution(const wire::JobAssign& job, const WorkerConfig& cfg,
                 uint32_t checkpoint_version);

    bool finished() const { return finished_; }
    void run_slice(const pcn::Network& net, const EvalFn& eval, uint32_t sims);
    wire::JobResult result(uint64_t wall_micros) const;

    uint64_t job_id() const { return job_id_; }
    uint64_t simulations() const { return sims_; }
    const tree::SearchTree* tree() const { return tree_ ? &*tree_ : nullptr; }
    const TranspositionTable& table() const { return tt_; }

private:
    void finish(wire::JobStatus status);
    void note_changes(const std::vector<tree::StatusChange>& changes);
    std::vector<uint8_t> extract_proof() const;

    WorkerConfig cfg_;
    uint64_t job_id_;
    uint64_t budget_;
    uint32_t checkpoint_version_;
    uint64_t rng_;
    std::optional<tree::SearchTree> tree_;
    TranspositionTable tt_;
    std::unordered_map<tree::NodeId, tree::NodeId> tt_proof_ref_;
    uint64_t sims_ = 0;
    bool finished_ = false;
    wire::JobStatus status_ = wire::JobStatus::Unknown;
    std::vector<uint8_t> proof_;
};

// Synchronous convenience wrapper: run one job to completion.
wire::JobResult solve_job(const wire::JobAssign& job, const pcn::Network& net,
                          const WorkerConfig& cfg);

// The transport-facing worker loop: accepts jobs, swaps checkpoints, reports
// results and heartbeat counters. Driven by tick(); each tick is one
// cooperative turn.
class Worker {
public:
    Worker(WorkerConfig cfg, uint32_t worker_index, transport::Channel& ch,
           transport::Topology topo, pcn::Network initial_net);

    bool tick(); // false once shut down
    bool done() const { return done_; }

    uint32_t checkpoint_version() const { return checkpoint_version_; }
    uint64_t busy_micros() const { return busy_micros_; }
    uint64_t total_simulations() const { return total_sims_; }
    size_t rejected_checkpoints() const { return rejected_checkpoints_; }

    // TCP workers share a pooling evaluator; the default evaluates inline.
    void set_eval_fn(EvalFn fn) { eval_ = std::move(fn); }

private:
    void handle(transport::Delivery d);
    void send_hello();

    WorkerConfig cfg_;
    uint32_t index_;
    transport::Channel& ch_;
    transport::Topology topo_;
    pcn::Network net_;
    EvalFn eval_ = direct_eval;
    uint32_t checkpoint_version_ = 0;
    std::deque<wire::JobAssign> pending_;
    std::optional<JobExecution> active_;
    uint64_t active_started_ = 0;
    uint64_t start_micros_ = 0;
    uint64_t last_micros_ = 0;
    bool saw_first_tick_ = false;
    bool worked_last_tick_ = false;
    uint64_t busy_micros_ = 0;
    uint64_t total_sims_ = 0;
    uint64_t ticks_ = 0;
    size_t rejected_checkpoints_ = 0;
    bool done_ = false;
};

} // namespace solvent::worker
