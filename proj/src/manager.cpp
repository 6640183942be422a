#include "solvent/manager.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <ostream>

#include "json.hpp"

#include "solvent/util.hpp"

namespace solvent::manager {

using game::GameState;
using game::Outcome;
using json = nlohmann::json;
using tree::NodeId;
using tree::NodeKind;
using tree::NodeStatus;
using transport::PeerId;

std::string stats_csv_header()
{
    return "game,opening,mode,workers,seed,outcome,nodes,time_s,manager_nodes,jobs,"
           "avg_job_time_s,avg_job_nodes,pcn,solved_jobs_pct,avg_worker_loading_pct";
}

std::string to_csv(const StatsRow& r)
{
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%s,%s,%s,%u,%" PRIu64 ",%s,%" PRIu64 ",%.6f,%" PRIu64 ",%" PRIu64
                  ",%.6f,%.2f,%" PRIu64 ",%.2f,%.2f",
                  r.game.c_str(), r.opening.c_str(), r.mode.c_str(), r.workers, r.seed,
                  r.outcome.c_str(), r.total_nodes, r.time_s, r.manager_nodes, r.jobs,
                  r.avg_job_time_s, r.avg_job_nodes, r.pcn_count, r.solved_jobs_pct,
                  r.avg_worker_loading_pct);
    return buf;
}

Manager::Manager(ManagerConfig cfg, GameState root, pcn::Network net,
                 transport::Topology topo, transport::Channel& ch, std::ostream* event_log)
    : cfg_(cfg),
      topo_(std::move(topo)),
      ch_(ch),
      net_(std::move(net)),
      tree_(std::move(root), cfg.tree),
      log_(event_log),
      rng_(derive_seed(cfg.seed, 0x4d414e41)),
      alive_workers_(topo_.workers)
{
    start_micros_ = ch_.now_micros();
    for (PeerId w : alive_workers_) outstanding_[w] = 0;
}

void Manager::log_event(const std::string& line)
{
    if (log_) *log_ << line << '\n';
}

Manager::Phase Manager::tick()
{
    if (phase_ == Phase::Running) {
        if (ch_.now_micros() - start_micros_ > cfg_.max_wall_micros) {
            abort_run("wall-clock limit");
            return phase_;
        }
        pump_messages();
        check_root();
        if (phase_ == Phase::Running) {
            step_search();
            check_root();
        }
    } else if (phase_ == Phase::Draining) {
        pump_messages();
        if (drain_waiting_.empty() || ch_.now_micros() - drain_started_ > 60'000'000)
            phase_ = Phase::Done;
    }
    return phase_;
}

void Manager::pump_messages()
{
    if (phase_ == Phase::Done || phase_ == Phase::Aborted) return;
    for (PeerId w : ch_.take_disconnects()) {
        handle_worker_lost(w);
        if (phase_ == Phase::Aborted) return;
    }
    while (auto d = ch_.poll()) {
        if (auto* r = std::get_if<wire::JobResult>(&d->msg)) {
            integrate_result(*r, d->from);
        } else if (auto* h = std::get_if<wire::WorkerHello>(&d->msg)) {
            if (h->role == wire::PeerRole::Worker) {
                worker_stats_[d->from] = WorkerStat{h->busy_micros, h->wall_micros};
                drain_waiting_.erase(d->from);
            }
        } else if (auto* cp = std::get_if<wire::CheckpointPublish>(&d->msg)) {
            try {
                auto decoded = pcn::decode_checkpoint(cp->blob);
                if (decoded.version > observed_version_) {
                    observed_version_ = decoded.version;
                    ++pcn_count_;
                    if (cfg_.subscribe_checkpoints) net_ = decoded.to_network();
                    log_event(json{{"ev", "checkpoint"},
                                   {"t", ch_.now_micros()},
                                   {"version", decoded.version},
                                   {"applied", cfg_.subscribe_checkpoints}}
                                  .dump());
                }
            } catch (const ProtocolError& e) {
                log_event(json{{"ev", "bad_checkpoint"}, {"t", ch_.now_micros()},
                               {"why", e.what()}}
                              .dump());
            }
        }
        if (phase_ == Phase::Aborted) return;
    }
}

void Manager::handle_worker_lost(PeerId w)
{
    auto it = std::find(alive_workers_.begin(), alive_workers_.end(), w);
    if (it == alive_workers_.end()) return;
    alive_workers_.erase(it);
    outstanding_.erase(w);
    drain_waiting_.erase(w);

    std::vector<uint64_t> orphaned;
    for (const auto& [id, job] : live_)
        if (job.worker == w) orphaned.push_back(id);
    std::sort(orphaned.begin(), orphaned.end());
    log_event(json{{"ev", "worker_lost"},
                   {"t", ch_.now_micros()},
                   {"worker", w},
                   {"requeued", orphaned.size()}}
                  .dump());
    if (phase_ != Phase::Running) return;
    for (uint64_t id : orphaned) {
        if (alive_workers_.empty()) {
            abort_run("all workers lost");
            return;
        }
        PeerId next = pick_worker();
        LiveJob& job = live_.at(id);
        job.worker = next;
        ++outstanding_[next];
        ch_.send(next, wire::JobAssign{id, job.position, cfg_.job_budget, observed_version_});
        log_event(json{{"ev", "reassign"}, {"t", ch_.now_micros()}, {"job", id},
                       {"worker", next}}
                      .dump());
    }
}

PeerId Manager::pick_worker() const
{
    PeerId best = transport::kNoPeer;
    int best_load = INT32_MAX;
    for (PeerId w : alive_workers_) {
        auto it = outstanding_.find(w);
        int load = it == outstanding_.end() ? 0 : it->second;
        if (load < best_load || (load == best_load && w < best)) {
            best = w;
            best_load = load;
        }
    }
    return best;
}

void Manager::integrate_result(const wire::JobResult& r, PeerId from)
{
    if (auto it = outstanding_.find(from); it != outstanding_.end() && it->second > 0)
        --it->second;
    auto it = live_.find(r.job_id);
    if (it == live_.end()) {
        log_event(json{{"ev", "job_drop"},
                       {"t", ch_.now_micros()},
                       {"job", r.job_id},
                       {"why", retired_.count(r.job_id) ? "retired" : "unknown"}}
                      .dump());
        return;
    }
    LiveJob job = std::move(it->second);
    live_.erase(it);
    retired_.insert(r.job_id);
    ++jobs_completed_;
    job_nodes_sum_ += r.nodes;
    job_micros_sum_ += r.wall_micros;
    log_event(json{{"ev", "job_result"},
                   {"t", ch_.now_micros()},
                   {"job", r.job_id},
                   {"status", wire::to_string(r.status)},
                   {"nodes", r.nodes},
                   {"from", from},
                   {"version", r.checkpoint_version}}
                  .dump());

    tree_.set_dispatched_job(job.node, std::nullopt);
    switch (r.status) {
    case wire::JobStatus::Win: {
        ++jobs_solved_;
        try {
            (void)tree::decode_solution(r.proof);
        } catch (const ProtocolError& e) {
            abort_run(std::string("undecodable win proof: ") + e.what());
            return;
        }
        proofs_[job.node] = r.proof;
        emit_status_changes(tree_.set_status_and_propagate(job.node, NodeStatus::ProvenWin));
        break;
    }
    case wire::JobStatus::Loss: {
        ++jobs_solved_;
        emit_status_changes(tree_.set_status_and_propagate(job.node, NodeStatus::ProvenLoss));
        break;
    }
    case wire::JobStatus::Unknown: {
        // Revert the optimistic mark, then open the node up so the search can
        // push below it; the node itself is never dispatched again.
        tree_.set_status_and_propagate(job.node, NodeStatus::Unsolved);
        GameState st = tree_.state_of(job.node);
        auto ev = net_.evaluate(st);
        tree_.expand(job.node, st, ev.policy);
        break;
    }
    case wire::JobStatus::Malformed:
        abort_run("worker could not decode a job position");
        break;
    }
}

void Manager::emit_status_changes(const std::vector<tree::StatusChange>& changes)
{
    for (const auto& c : changes) {
        bool win = c.after == NodeStatus::ProvenWin;
        bool loss = c.after == NodeStatus::ProvenLoss;
        if (!win && !(loss && cfg_.emit_loss_positions)) continue;
        auto position = game::encode_position(tree_.state_of(c.node));
        log_event(json{{"ev", "solved_pos"},
                       {"t", ch_.now_micros()},
                       {"node", c.node},
                       {"outcome", win ? "Win" : "Loss"}}
                      .dump());
        if (topo_.has_trainer())
            ch_.send(topo_.trainer,
                     wire::SolvedPos{win ? Outcome::Win : Outcome::Loss, std::move(position)});
    }
}

void Manager::emit_critical(const GameState& leaf_state)
{
    log_event(json{{"ev", "critical_pos"},
                   {"t", ch_.now_micros()},
                   {"plies", leaf_state.history().size()}}
                  .dump());
    if (topo_.has_trainer())
        ch_.send(topo_.trainer, wire::CriticalPos{game::encode_position(leaf_state)});
}

bool Manager::step_search()
{
    if (phase_ != Phase::Running) return false;
    if (tree_.node(tree_.root()).status != NodeStatus::Unsolved) return false;

    auto sel = tree_.select_path(rng_);
    ++manager_nodes_;
    NodeId leaf = sel.path.back();
    const GameState& ls = sel.leaf_state;

    if (ls.is_terminal()) {
        auto st = ls.terminal_outcome() == Outcome::Win ? NodeStatus::ProvenWin
                                                        : NodeStatus::ProvenLoss;
        log_event(json{{"ev", "terminal"},
                       {"t", ch_.now_micros()},
                       {"node", leaf},
                       {"outcome", ls.terminal_outcome() == Outcome::Win ? "Win" : "Loss"}}
                      .dump());
        emit_status_changes(tree_.set_status_and_propagate(leaf, st));
        return true; // solved solely by the manager: no critical emission
    }

    auto ev = net_.evaluate(ls);
    double v_l = std::clamp(ev.cost, 0.0, cfg_.tree.v_max);
    NodeKind leaf_kind = tree_.node(leaf).kind;

    if (v_l >= cfg_.v_thr) {
        tree_.expand(leaf, ls, ev.policy);
        tree_.backpropagate(sel.path, v_l);
        log_event(json{{"ev", "expand"},
                       {"t", ch_.now_micros()},
                       {"node", leaf},
                       {"kind", leaf_kind == NodeKind::And ? "And" : "Or"},
                       {"v_l", v_l},
                       {"v_thr", cfg_.v_thr},
                       {"reason", "threshold"}}
                      .dump());
        emit_critical(ls);
        return true;
    }

    if (leaf_kind == NodeKind::And || !cfg_.and_assignment) {
        dispatch_job(leaf, ls, v_l);
        if (phase_ != Phase::Running) return true;
        tree_.backpropagate(sel.path, v_l);
        emit_critical(ls);
        return true;
    }

    // OR leaf under the threshold: open it and hand the most promising AND
    // child to a worker, buying a 1-ply look-ahead over dispatching blind.
    tree_.expand(leaf, ls, ev.policy);
    tree_.backpropagate(sel.path, v_l);
    log_event(json{{"ev", "expand"},
                   {"t", ch_.now_micros()},
                   {"node", leaf},
                   {"kind", "Or"},
                   {"v_l", v_l},
                   {"v_thr", cfg_.v_thr},
                   {"reason", "assignment"}}
                  .dump());

    const auto& ln = tree_.node(leaf);
    std::vector<GameState> child_states;
    child_states.reserve(ln.child_count);
    for (uint16_t i = 0; i < ln.child_count; ++i) {
        NodeId cid = ln.first_child + i;
        GameState cs = ls.apply(tree_.node(cid).move);
        if (!cs.is_terminal()) {
            auto cev = net_.evaluate(cs);
            NodeId seed_path[] = {cid};
            tree_.backpropagate(seed_path, std::clamp(cev.cost, 0.0, cfg_.tree.v_max));
        }
        child_states.push_back(std::move(cs));
    }

    NodeId best = tree_.best_unsolved_child(leaf);
    const GameState& bs = child_states[best - ln.first_child];
    if (bs.is_terminal()) {
        auto st = bs.terminal_outcome() == Outcome::Win ? NodeStatus::ProvenWin
                                                        : NodeStatus::ProvenLoss;
        log_event(json{{"ev", "terminal_resolve"},
                       {"t", ch_.now_micros()},
                       {"node", best},
                       {"outcome", bs.terminal_outcome() == Outcome::Win ? "Win" : "Loss"}}
                      .dump());
        emit_status_changes(tree_.set_status_and_propagate(best, st));
    } else {
        dispatch_job(best, bs, v_l);
        if (phase_ != Phase::Running) return true;
    }

    auto after = tree_.node(leaf).status;
    if (after != NodeStatus::ProvenWin && after != NodeStatus::ProvenLoss) emit_critical(ls);
    return true;
}

void Manager::dispatch_job(NodeId node, const GameState& st, double gate_v_l)
{
    if (alive_workers_.empty()) {
        abort_run("no workers available");
        return;
    }
    PeerId w = pick_worker();
    uint64_t id = next_job_id_++;
    tree_.set_status_and_propagate(node, NodeStatus::VirtualWin);
    tree_.set_dispatched_job(node, id);
    wire::JobAssign assign{id, game::encode_position(st), cfg_.job_budget, observed_version_};
    live_[id] = LiveJob{node, w, assign.position, gate_v_l, ch_.now_micros()};
    ++outstanding_[w];
    ++jobs_dispatched_;
    log_event(json{{"ev", "dispatch"},
                   {"t", ch_.now_micros()},
                   {"job", id},
                   {"node", node},
                   {"kind", tree_.node(node).kind == NodeKind::And ? "And" : "Or"},
                   {"v_l", gate_v_l},
                   {"v_thr", cfg_.v_thr},
                   {"worker", w},
                   {"budget", cfg_.job_budget},
                   {"version", observed_version_}}
                  .dump());
    ch_.send(w, assign);
}

void Manager::check_root()
{
    if (phase_ != Phase::Running) return;
    auto s = tree_.node(tree_.root()).status;
    if (s == NodeStatus::ProvenWin)
        outcome_ = Outcome::Win;
    else if (s == NodeStatus::ProvenLoss)
        outcome_ = Outcome::Loss;
    else
        return;
    begin_drain();
}

// Jobs still in flight when the run ends are abandoned: their optimistic
// marks are reverted so a finished tree holds no VirtualWin status. Straggler
// results are dropped by the retired-id check.
void Manager::abandon_live_jobs()
{
    for (auto& [id, job] : live_) {
        tree_.set_dispatched_job(job.node, std::nullopt);
        tree_.set_status_and_propagate(job.node, NodeStatus::Unsolved);
        retired_.insert(id);
    }
    live_.clear();
}

void Manager::begin_drain()
{
    solved_micros_ = ch_.now_micros();
    drain_started_ = solved_micros_;
    log_event(json{{"ev", "root_solved"},
                   {"t", solved_micros_},
                   {"outcome", *outcome_ == Outcome::Win ? "Win" : "Loss"},
                   {"abandoned_jobs", live_.size()}}
                  .dump());
    abandon_live_jobs();
    for (PeerId w : alive_workers_) {
        ch_.send(w, wire::Shutdown{});
        drain_waiting_.insert(w);
    }
    if (topo_.has_trainer()) ch_.send(topo_.trainer, wire::Shutdown{});
    phase_ = drain_waiting_.empty() ? Phase::Done : Phase::Draining;
}

void Manager::abort_run(const std::string& why)
{
    if (phase_ == Phase::Aborted) return;
    solved_micros_ = ch_.now_micros();
    log_event(json{{"ev", "abort"}, {"t", solved_micros_}, {"why", why}}.dump());
    abandon_live_jobs();
    for (PeerId w : alive_workers_) ch_.send(w, wire::Shutdown{});
    if (topo_.has_trainer()) ch_.send(topo_.trainer, wire::Shutdown{});
    phase_ = Phase::Aborted;
}

tree::SolutionTree Manager::solution() const
{
    if (!outcome_ || *outcome_ != Outcome::Win)
        throw ContractViolation("solution requires a Win outcome");
    tree::SearchTree::Resolver resolve = [&](NodeId id,
                                             const GameState&) -> std::optional<tree::SolutionTree> {
        auto it = proofs_.find(id);
        if (it == proofs_.end()) return std::nullopt;
        return tree::decode_solution(it->second);
    };
    return tree_.extract_solution(resolve);
}

StatsRow Manager::stats() const
{
    StatsRow r;
    r.outcome = !outcome_ ? "Unknown" : (*outcome_ == Outcome::Win ? "Win" : "Loss");
    uint64_t end = solved_micros_ ? solved_micros_ : ch_.now_micros();
    r.time_s = static_cast<double>(end - start_micros_) / 1e6;
    r.total_nodes = manager_nodes_ + job_nodes_sum_;
    r.manager_nodes = manager_nodes_;
    r.jobs = jobs_dispatched_;
    if (jobs_completed_ > 0) {
        r.avg_job_time_s = static_cast<double>(job_micros_sum_) / 1e6 /
                           static_cast<double>(jobs_completed_);
        r.avg_job_nodes = static_cast<double>(job_nodes_sum_) / static_cast<double>(jobs_completed_);
        r.solved_jobs_pct = 100.0 * static_cast<double>(jobs_solved_) /
                            static_cast<double>(jobs_completed_);
    }
    r.pcn_count = pcn_count_;
    double loading = 0.0;
    size_t counted = 0;
    for (const auto& [w, s] : worker_stats_) {
        if (s.wall_micros == 0) continue;
        loading += 100.0 * static_cast<double>(s.busy_micros) / static_cast<double>(s.wall_micros);
        ++counted;
    }
    r.avg_worker_loading_pct = counted ? loading / static_cast<double>(counted) : 0.0;
    return r;
}

} // namespace solvent::manager
