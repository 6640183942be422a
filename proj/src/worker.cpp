#include "solvent/worker.hpp"

#include <algorithm>

#include "solvent/util.hpp"

namespace solvent::worker {

using game::GameState;
using game::Outcome;
using tree::NodeId;
using tree::NodeStatus;
using wire::JobStatus;

const TranspositionTable::Entry* TranspositionTable::find(uint64_t hash) const
{
    auto it = map_.find(hash);
    return it == map_.end() ? nullptr : &it->second;
}

bool TranspositionTable::insert(uint64_t hash, NodeStatus status, NodeId node)
{
    auto it = map_.find(hash);
    if (it != map_.end()) {
        if (it->second.status != status)
            throw ContractViolation("transposition table holds a conflicting status");
        return true; // first proof stands
    }
    if (map_.size() >= capacity_) return false;
    map_.emplace(hash, Entry{status, node});
    return true;
}

pcn::Evaluation direct_eval(const pcn::Network& net, const GameState& s)
{
    return net.evaluate(s);
}

JobExecution::JobExecution(const wire::JobAssign& job, const WorkerConfig& cfg,
                           uint32_t checkpoint_version)
    : cfg_(cfg),
      job_id_(job.job_id),
      budget_(job.node_budget),
      checkpoint_version_(checkpoint_version),
      rng_(derive_seed(cfg.seed, job.job_id)),
      tt_(cfg.tt_capacity)
{
    try {
        tree_.emplace(game::decode_position(job.position), cfg.tree);
    } catch (const ProtocolError&) {
        finished_ = true;
        status_ = JobStatus::Malformed;
    }
}

void JobExecution::finish(JobStatus status)
{
    status_ = status;
    finished_ = true;
}

void JobExecution::note_changes(const std::vector<tree::StatusChange>& changes)
{
    if (!cfg_.use_transposition_table) return;
    for (const auto& c : changes) {
        if (c.after != NodeStatus::ProvenWin && c.after != NodeStatus::ProvenLoss) continue;
        tt_.insert(tree_->state_of(c.node).canonical_hash(), c.after, c.node);
    }
}

std::vector<uint8_t> JobExecution::extract_proof() const
{
    tree::SearchTree::Resolver resolve = [&](NodeId id, const GameState&)
        -> std::optional<tree::SolutionTree> {
        auto it = tt_proof_ref_.find(id);
        if (it == tt_proof_ref_.end()) return std::nullopt;
        return tree_->extract_solution_at(it->second, resolve);
    };
    return tree::encode_solution(tree_->extract_solution(resolve));
}

void JobExecution::run_slice(const pcn::Network& net, const EvalFn& eval, uint32_t sims)
{
    auto check_done = [&] {
        if (finished_) return true;
        switch (tree_->node(0).status) {
        case NodeStatus::ProvenWin:
            proof_ = extract_proof();
            finish(JobStatus::Win);
            return true;
        case NodeStatus::ProvenLoss:
            finish(JobStatus::Loss);
            return true;
        default:
            if (sims_ >= budget_) {
                finish(JobStatus::Unknown);
                return true;
            }
            return false;
        }
    };

    for (uint32_t i = 0; i < sims; ++i) {
        if (check_done()) return;
        ++sims_;
        auto sel = tree_->select_path(rng_);
        NodeId leaf = sel.path.back();
        if (sel.leaf_state.is_terminal()) {
            auto st = sel.leaf_state.terminal_outcome() == Outcome::Win ? NodeStatus::ProvenWin
                                                                        : NodeStatus::ProvenLoss;
            note_changes(tree_->set_status_and_propagate(leaf, st));
            continue;
        }
        if (cfg_.use_transposition_table) {
            if (const auto* e = tt_.find(sel.leaf_state.canonical_hash())) {
                if (e->status == NodeStatus::ProvenWin) tt_proof_ref_[leaf] = e->node;
                note_changes(tree_->set_status_and_propagate(leaf, e->status));
                continue;
            }
        }
        auto ev = eval(net, sel.leaf_state);
        tree_->expand(leaf, sel.leaf_state, ev.policy);
        tree_->backpropagate(sel.path, std::clamp(ev.cost, 0.0, cfg_.tree.v_max));
    }
    check_done();
}

wire::JobResult JobExecution::result(uint64_t wall_micros) const
{
    if (!finished_) throw ContractViolation("result of an unfinished job");
    wire::JobResult r;
    r.job_id = job_id_;
    r.status = status_;
    r.nodes = sims_;
    r.wall_micros = wall_micros;
    r.checkpoint_version = checkpoint_version_;
    r.proof = proof_;
    return r;
}

wire::JobResult solve_job(const wire::JobAssign& job, const pcn::Network& net,
                          const WorkerConfig& cfg)
{
    JobExecution ex(job, cfg, 0);
    uint32_t slice = std::max<uint32_t>(1, cfg.sims_per_slice);
    while (!ex.finished()) ex.run_slice(net, direct_eval, slice);
    return ex.result(0);
}

Worker::Worker(WorkerConfig cfg, uint32_t worker_index, transport::Channel& ch,
               transport::Topology topo, pcn::Network initial_net)
    : cfg_(cfg), index_(worker_index), ch_(ch), topo_(std::move(topo)), net_(std::move(initial_net))
{
    cfg_.sims_per_slice = std::max<uint32_t>(1, cfg_.sims_per_slice);
}

void Worker::handle(transport::Delivery d)
{
    if (auto* job = std::get_if<wire::JobAssign>(&d.msg)) {
        pending_.push_back(std::move(*job));
        return;
    }
    if (auto* cp = std::get_if<wire::CheckpointPublish>(&d.msg)) {
        try {
            auto decoded = pcn::decode_checkpoint(cp->blob);
            if (decoded.version > checkpoint_version_) {
                net_ = decoded.to_network();
                checkpoint_version_ = decoded.version;
            }
        } catch (const ProtocolError&) {
            ++rejected_checkpoints_; // keep the previous parameters
        }
        return;
    }
    if (std::get_if<wire::Shutdown>(&d.msg)) {
        done_ = true;
        return;
    }
    // Anything else is not addressed to a worker; drop it.
}

void Worker::send_hello()
{
    wire::WorkerHello h;
    h.role = wire::PeerRole::Worker;
    h.worker_id = index_;
    h.checkpoint_version = checkpoint_version_;
    h.busy_micros = busy_micros_;
    h.wall_micros = ch_.now_micros() - start_micros_;
    h.nodes_expended = total_sims_;
    ch_.send(topo_.manager, h);
}

bool Worker::tick()
{
    if (done_) return false;
    ++ticks_;
    uint64_t now = ch_.now_micros();
    if (!saw_first_tick_) {
        start_micros_ = now;
        last_micros_ = now;
        saw_first_tick_ = true;
    }
    if (worked_last_tick_) busy_micros_ += now - last_micros_;
    last_micros_ = now;

    while (auto d = ch_.poll()) handle(std::move(*d));
    for (transport::PeerId p : ch_.take_disconnects())
        if (p == topo_.manager) done_ = true;

    bool worked = false;
    if (!done_) {
        if (!active_ && !pending_.empty()) {
            active_.emplace(pending_.front(), cfg_, checkpoint_version_);
            pending_.pop_front();
            active_started_ = now;
        }
        if (active_) {
            active_->run_slice(net_, eval_, cfg_.sims_per_slice);
            worked = true;
            if (active_->finished()) {
                total_sims_ += active_->simulations();
                ch_.send(topo_.manager, active_->result(now - active_started_));
                active_.reset();
            }
        }
    }
    worked_last_tick_ = worked;

    if (done_)
        send_hello(); // final counters for the manager's loading statistics
    else if (cfg_.hello_every_ticks && ticks_ % cfg_.hello_every_ticks == 0)
        send_hello();
    return !done_;
}

} // namespace solvent::worker
