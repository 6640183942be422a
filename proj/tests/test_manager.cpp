#include "doctest.h"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>

#include "json.hpp"

#include "solvent/game.hpp"
#include "solvent/inproc.hpp"
#include "solvent/manager.hpp"
#include "solvent/oracle.hpp"
#include "solvent/util.hpp"
#include "solvent/worker.hpp"

using namespace solvent;
using game::GameId;
using game::GameState;
using game::Outcome;
using manager::Manager;
using manager::ManagerConfig;
using nlohmann::json;

namespace {

pcn::Network small_net(GameId id, uint64_t seed = 0)
{
    auto shape = pcn::NetworkShape::for_game(id);
    shape.hidden = {16, 16};
    return seed ? pcn::Network::random_init(shape, seed) : pcn::Network::zero_init(shape);
}

// A manager plus n in-process workers on one bus, ticked in lockstep with a
// millisecond of virtual time per turn.
struct SolveRig {
    inproc::InprocBus bus;
    transport::PeerId mpeer;
    std::vector<transport::PeerId> wpeers;
    std::unique_ptr<transport::Channel> mch;
    std::vector<std::unique_ptr<transport::Channel>> wchs;
    std::deque<worker::Worker> workers;
    std::optional<Manager> mgr;

    SolveRig(const GameState& root, const ManagerConfig& mcfg, size_t n_workers,
             const pcn::Network& net, std::ostream* log = nullptr, uint64_t bus_seed = 0,
             uint64_t latency = 0)
        : bus(bus_seed, latency)
    {
        mpeer = bus.add_peer();
        for (size_t i = 0; i < n_workers; ++i) wpeers.push_back(bus.add_peer());
        transport::Topology topo{mpeer, wpeers, transport::kNoPeer};
        mch = bus.channel(mpeer);
        for (size_t i = 0; i < n_workers; ++i) {
            wchs.push_back(bus.channel(wpeers[i]));
            worker::WorkerConfig wcfg;
            wcfg.seed = 100 + i;
            workers.emplace_back(wcfg, static_cast<uint32_t>(i), *wchs.back(), topo, net);
        }
        mgr.emplace(mcfg, root, net, topo, *mch, log);
    }

    Manager::Phase run(size_t max_iters = 100'000)
    {
        for (size_t i = 0; i < max_iters; ++i) {
            auto ph = mgr->tick();
            for (size_t w = 0; w < workers.size(); ++w)
                if (bus.alive(wpeers[w])) workers[w].tick();
            bus.advance(1'000);
            if (ph == Manager::Phase::Done || ph == Manager::Phase::Aborted) return ph;
        }
        return mgr->phase();
    }
};

ManagerConfig dispatching_cfg()
{
    ManagerConfig cfg;
    cfg.v_thr = 16.5; // a zero-init network estimates every cost at 12
    cfg.seed = 1;
    return cfg;
}

size_t count_virtual(const tree::SearchTree& t)
{
    size_t n = 0;
    for (tree::NodeId i = 0; i < t.node_count(); ++i)
        if (t.node(i).status == tree::NodeStatus::VirtualWin) ++n;
    return n;
}

std::vector<json> parse_log(const std::string& text)
{
    std::vector<json> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

} // namespace

TEST_CASE("a one-worker run solves hex 2x2 and leaves a clean tree")
{
    auto root = GameState::initial(GameId::hex(2));
    auto net = small_net(GameId::hex(2));
    SolveRig rig(root, dispatching_cfg(), 1, net);
    REQUIRE(rig.run() == Manager::Phase::Done);

    oracle::Oracle o(GameId::hex(2));
    CHECK(rig.mgr->outcome() == o.solve_exact(root));
    REQUIRE(rig.mgr->outcome() == Outcome::Win);

    auto sol = rig.mgr->solution();
    CHECK(tree::verify_solution(sol).pass);
    CHECK(game::decode_position(sol.root_position).canonical_hash() == root.canonical_hash());

    CHECK(rig.mgr->live_jobs() == 0);
    CHECK(count_virtual(rig.mgr->tree()) == 0);
    for (tree::NodeId i = 0; i < rig.mgr->tree().node_count(); ++i)
        CHECK_FALSE(rig.mgr->tree().node(i).dispatched_job.has_value());

    auto row = rig.mgr->stats();
    CHECK(row.outcome == "Win");
    CHECK(row.jobs >= 1);
    CHECK(row.total_nodes >= row.manager_nodes);
    CHECK(row.time_s > 0.0);
    CHECK(row.solved_jobs_pct <= 100.0);
    CHECK(row.avg_worker_loading_pct >= 0.0);
    CHECK(row.avg_worker_loading_pct <= 100.0);
}

TEST_CASE("estimates above the threshold keep the search in the manager")
{
    std::ostringstream log;
    auto root = GameState::initial(GameId::hex(2));
    auto net = small_net(GameId::hex(2));
    ManagerConfig cfg;
    cfg.v_thr = 10.0; // below the zero-init constant of 12: always expand
    SolveRig rig(root, cfg, 1, net, &log);
    REQUIRE(rig.run() == Manager::Phase::Done);
    CHECK(rig.mgr->outcome() == Outcome::Win);

    auto row = rig.mgr->stats();
    CHECK(row.jobs == 0);
    CHECK(row.manager_nodes == row.total_nodes);
    CHECK(row.manager_nodes > 0);
    CHECK(row.avg_job_nodes == 0.0);
    CHECK(row.solved_jobs_pct == 0.0);

    for (const auto& ev : parse_log(log.str())) {
        CHECK(ev["ev"] != "dispatch");
        if (ev["ev"] == "expand") {
            CHECK(ev["reason"] == "threshold");
            CHECK(ev["v_l"].get<double>() >= ev["v_thr"].get<double>());
        }
    }
}

TEST_CASE("two workers grind tic-tac-toe down to its drawn value")
{
    auto root = GameState::initial(GameId::ttt());
    auto net = small_net(GameId::ttt());
    SolveRig rig(root, dispatching_cfg(), 2, net);
    REQUIRE(rig.run(300'000) == Manager::Phase::Done);

    oracle::Oracle o(GameId::ttt());
    CHECK(o.solve_exact(root) == Outcome::Loss); // drawn games count as losses
    CHECK(rig.mgr->outcome() == Outcome::Loss);
    CHECK(rig.mgr->stats().outcome == "Loss");
    CHECK(count_virtual(rig.mgr->tree()) == 0);
    CHECK_THROWS_AS(rig.mgr->solution(), ContractViolation);
}

TEST_CASE("hex 3x3 with two workers produces a proof that verifies")
{
    auto root = GameState::initial(GameId::hex(3));
    auto net = small_net(GameId::hex(3));
    SolveRig rig(root, dispatching_cfg(), 2, net);
    REQUIRE(rig.run(300'000) == Manager::Phase::Done);
    REQUIRE(rig.mgr->outcome() == Outcome::Win);

    auto sol = rig.mgr->solution();
    auto vr = tree::verify_solution(sol);
    INFO(vr.violation);
    CHECK(vr.pass);
    CHECK(tree::solution_node_count(sol) > 20);

    auto row = rig.mgr->stats();
    CHECK(row.jobs >= 1);
    CHECK(row.avg_job_nodes > 0.0);
    CHECK(row.solved_jobs_pct > 0.0);
}

TEST_CASE("the event log shows every dispatch gated by the threshold")
{
    auto root = GameState::initial(GameId::hex(3));
    auto net = small_net(GameId::hex(3), 42);

    // Pin the threshold strictly between the cheapest and dearest estimate
    // over shallow positions so both sides of the gate occur in one run.
    double lo = 1e9, hi = -1e9;
    uint64_t rng = 7;
    for (int trial = 0; trial < 40; ++trial) {
        GameState s = root;
        int plies = 1 + static_cast<int>(splitmix64(rng) % 3);
        for (int p = 0; p < plies && !s.is_terminal(); ++p) {
            auto moves = s.legal_moves();
            s = s.apply(moves[splitmix64(rng) % moves.size()]);
        }
        if (s.is_terminal()) continue;
        double c = net.evaluate(s).cost;
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    REQUIRE(lo < hi);

    std::ostringstream log;
    ManagerConfig cfg;
    cfg.v_thr = (lo + hi) / 2.0;
    // Small jobs keep the run going long enough to exercise both regimes.
    cfg.job_budget = 200;
    SolveRig rig(root, cfg, 2, net, &log);
    REQUIRE(rig.run(300'000) == Manager::Phase::Done);

    auto events = parse_log(log.str());
    size_t dispatches = 0, threshold_expands = 0, assignment_expands = 0, criticals = 0;
    std::set<uint64_t> dispatched_ids, answered_ids;
    uint64_t last_id = 0;
    for (const auto& ev : events) {
        if (ev["ev"] == "dispatch") {
            ++dispatches;
            CHECK(ev["v_l"].get<double>() < ev["v_thr"].get<double>());
            CHECK(ev["kind"] == "And");
            CHECK(ev["job"].get<uint64_t>() > last_id);
            last_id = ev["job"].get<uint64_t>();
            dispatched_ids.insert(last_id);
        } else if (ev["ev"] == "expand") {
            if (ev["reason"] == "threshold") {
                ++threshold_expands;
                CHECK(ev["v_l"].get<double>() >= ev["v_thr"].get<double>());
            } else {
                ++assignment_expands;
                CHECK(ev["reason"] == "assignment");
                CHECK(ev["kind"] == "Or");
                CHECK(ev["v_l"].get<double>() < ev["v_thr"].get<double>());
            }
        } else if (ev["ev"] == "job_result") {
            answered_ids.insert(ev["job"].get<uint64_t>());
        } else if (ev["ev"] == "critical_pos") {
            ++criticals;
        } else if (ev["ev"] == "solved_pos") {
            CHECK(ev["outcome"] == "Win"); // loss emission is off by default
        }
    }
    CHECK(dispatches > 0);
    CHECK(threshold_expands > 0);
    CHECK(assignment_expands > 0);
    CHECK(criticals > 0);
    CHECK(dispatches == rig.mgr->stats().jobs);
    for (uint64_t id : answered_ids) CHECK(dispatched_ids.count(id) == 1);
    CHECK(events.back()["ev"] == "root_solved");
}

TEST_CASE("mid-run trees stay consistent with a from-scratch recomputation")
{
    auto root = GameState::initial(GameId::hex(3));
    auto net = small_net(GameId::hex(3));
    SolveRig rig(root, dispatching_cfg(), 2, net);

    size_t audits = 0;
    for (size_t i = 0; i < 300'000; ++i) {
        auto ph = rig.mgr->tick();
        for (auto& w : rig.workers) w.tick();
        rig.bus.advance(1'000);
        if (i % 50 == 0) {
            const auto& t = rig.mgr->tree();
            auto fresh = t.recompute_all_statuses();
            size_t marked = 0;
            for (tree::NodeId n = 0; n < t.node_count(); ++n) {
                REQUIRE(t.node(n).status == fresh[n]);
                if (t.node(n).dispatched_job) {
                    ++marked;
                    REQUIRE(t.node(n).status == tree::NodeStatus::VirtualWin);
                }
            }
            REQUIRE(marked == rig.mgr->live_jobs());
            ++audits;
        }
        if (ph == Manager::Phase::Done) break;
    }
    CHECK(audits > 1);
    CHECK(rig.mgr->phase() == Manager::Phase::Done);
    CHECK(rig.mgr->outcome() == Outcome::Win);
}

TEST_CASE("a worker crash mid-run is absorbed")
{
    std::ostringstream log;
    auto root = GameState::initial(GameId::hex(3));
    auto net = small_net(GameId::hex(3));
    SolveRig rig(root, dispatching_cfg(), 2, net, &log);

    // Jobs go to the lower-numbered idle worker first; crash it while it
    // holds one so the job is requeued onto the survivor.
    bool killed = false;
    for (size_t i = 0; i < 300'000; ++i) {
        auto ph = rig.mgr->tick();
        for (size_t w = 0; w < rig.workers.size(); ++w)
            if (rig.bus.alive(rig.wpeers[w])) rig.workers[w].tick();
        rig.bus.advance(1'000);
        if (!killed && rig.mgr->live_jobs() >= 1) {
            rig.bus.kill_peer(rig.wpeers[0]);
            killed = true;
        }
        if (ph == Manager::Phase::Done || ph == Manager::Phase::Aborted) break;
    }
    REQUIRE(killed);
    REQUIRE(rig.mgr->phase() == Manager::Phase::Done);
    CHECK(rig.mgr->outcome() == Outcome::Win);
    CHECK(tree::verify_solution(rig.mgr->solution()).pass);

    bool lost_logged = false, reassigned = false;
    for (const auto& ev : parse_log(log.str())) {
        if (ev["ev"] == "worker_lost") lost_logged = true;
        if (ev["ev"] == "reassign") reassigned = true;
    }
    CHECK(lost_logged);
    CHECK(reassigned);
}

TEST_CASE("losing every worker aborts the run")
{
    auto root = GameState::initial(GameId::hex(3));
    auto net = small_net(GameId::hex(3));
    SolveRig rig(root, dispatching_cfg(), 2, net);

    for (size_t i = 0; i < 10'000; ++i) {
        rig.mgr->tick();
        for (size_t w = 0; w < rig.workers.size(); ++w)
            if (rig.bus.alive(rig.wpeers[w])) rig.workers[w].tick();
        rig.bus.advance(1'000);
        if (rig.mgr->live_jobs() >= 1) break;
    }
    REQUIRE(rig.mgr->live_jobs() >= 1);
    rig.bus.kill_peer(rig.wpeers[0]);
    rig.bus.kill_peer(rig.wpeers[1]);
    for (size_t i = 0; i < 100 && rig.mgr->phase() == Manager::Phase::Running; ++i) {
        rig.mgr->tick();
        rig.bus.advance(1'000);
    }
    CHECK(rig.mgr->phase() == Manager::Phase::Aborted);
    CHECK_FALSE(rig.mgr->outcome().has_value());
    CHECK(rig.mgr->stats().outcome == "Unknown");
    CHECK(rig.mgr->live_jobs() == 0);
    CHECK(count_virtual(rig.mgr->tree()) == 0);
}

TEST_CASE("starved job budgets fall back to deeper expansion")
{
    std::ostringstream log;
    auto root = GameState::initial(GameId::hex(3));
    auto net = small_net(GameId::hex(3));
    ManagerConfig cfg = dispatching_cfg();
    cfg.job_budget = 8; // too small for anything but endgames
    SolveRig rig(root, cfg, 2, net, &log);
    REQUIRE(rig.run(300'000) == Manager::Phase::Done);
    CHECK(rig.mgr->outcome() == Outcome::Win);
    CHECK(tree::verify_solution(rig.mgr->solution()).pass);

    size_t unknowns = 0;
    for (const auto& ev : parse_log(log.str()))
        if (ev["ev"] == "job_result" && ev["status"] == "Unknown") ++unknowns;
    CHECK(unknowns > 0);
    CHECK(rig.mgr->stats().solved_jobs_pct < 100.0);
}

TEST_CASE("identical runs produce identical statistics rows")
{
    auto root = GameState::initial(GameId::hex(3));
    auto net = small_net(GameId::hex(3));
    SolveRig a(root, dispatching_cfg(), 2, net);
    SolveRig b(root, dispatching_cfg(), 2, net);
    REQUIRE(a.run(300'000) == Manager::Phase::Done);
    REQUIRE(b.run(300'000) == Manager::Phase::Done);
    CHECK(manager::to_csv(a.mgr->stats()) == manager::to_csv(b.mgr->stats()));
    CHECK(a.mgr->tree().node_count() == b.mgr->tree().node_count());
    CHECK(a.mgr->stats().pcn_count == 0);
    CHECK(a.mgr->checkpoint_version() == 0);
}

namespace {

// Fixture for the order-independence test: a manager over three fake worker
// ports, driven to a state with three live jobs on disjoint subtrees. The
// scripted prefix is deterministic, so every instance reaches the same state.
struct PermutationRig {
    inproc::InprocBus bus;
    transport::PeerId mpeer;
    std::vector<transport::PeerId> wpeers;
    std::unique_ptr<transport::Channel> mch;
    std::vector<std::unique_ptr<transport::Channel>> wchs;
    std::optional<Manager> mgr;
    // job id -> (worker port index, assignment bytes)
    std::map<uint64_t, std::pair<size_t, wire::JobAssign>> assigns;

    explicit PermutationRig(const pcn::Network& net)
    {
        mpeer = bus.add_peer();
        for (int i = 0; i < 3; ++i) wpeers.push_back(bus.add_peer());
        transport::Topology topo{mpeer, wpeers, transport::kNoPeer};
        mch = bus.channel(mpeer);
        for (int i = 0; i < 3; ++i) wchs.push_back(bus.channel(wpeers[i]));

        ManagerConfig cfg;
        cfg.v_thr = 16.5;
        cfg.job_budget = 1;
        cfg.seed = 5;
        auto root = GameState::initial(GameId::hex(3)).apply(game::Move{4});
        mgr.emplace(cfg, root, net, topo, *mch);
    }

    void collect()
    {
        for (size_t i = 0; i < wchs.size(); ++i)
            while (auto d = wchs[i]->poll())
                if (auto* a = std::get_if<wire::JobAssign>(&d->msg))
                    assigns.emplace(a->job_id, std::pair{i, *a});
    }

    // One dispatch on the root, answered Unknown so the root opens up, then
    // three ticks that each send one subtree to a worker.
    void run_prefix()
    {
        mgr->tick();
        bus.advance(1'000);
        collect();
        REQUIRE(assigns.count(1) == 1);
        wire::JobResult unknown{1, wire::JobStatus::Unknown, 1, 500, 0, {}};
        wchs[assigns.at(1).first]->send(mpeer, unknown);
        for (int t = 0; t < 3; ++t) {
            mgr->tick();
            bus.advance(1'000);
        }
        collect();
        REQUIRE(assigns.size() == 4);
        REQUIRE(mgr->live_jobs() == 3);
    }

    std::vector<tree::NodeStatus> statuses() const
    {
        std::vector<tree::NodeStatus> out;
        for (tree::NodeId i = 0; i < mgr->tree().node_count(); ++i)
            out.push_back(mgr->tree().node(i).status);
        return out;
    }
};

} // namespace

TEST_CASE("job results integrate identically in any arrival order")
{
    auto net = small_net(GameId::hex(3));

    PermutationRig first(net);
    first.run_prefix();

    // Definitive answers for the three in-flight jobs, computed once with a
    // real budget so no ordering-dependent expansion can occur on integration.
    worker::WorkerConfig wcfg;
    wcfg.seed = 100;
    std::vector<wire::JobResult> results;
    for (uint64_t id = 2; id <= 4; ++id) {
        wire::JobAssign a = first.assigns.at(id).second;
        a.node_budget = 300'000;
        auto r = worker::solve_job(a, net, wcfg);
        REQUIRE(r.status != wire::JobStatus::Unknown);
        results.push_back(std::move(r));
    }

    std::optional<std::vector<tree::NodeStatus>> reference;
    std::vector<size_t> order = {0, 1, 2};
    do {
        PermutationRig rig(net);
        rig.run_prefix();
        for (uint64_t id = 1; id <= 4; ++id) {
            REQUIRE(rig.assigns.at(id).first == first.assigns.at(id).first);
            REQUIRE(wire::encode_frame(wire::to_frame(wire::Message{rig.assigns.at(id).second})) ==
                    wire::encode_frame(wire::to_frame(wire::Message{first.assigns.at(id).second})));
        }
        for (size_t k : order) {
            const auto& r = results[k];
            rig.wchs[rig.assigns.at(r.job_id).first]->send(rig.mpeer, r);
            rig.bus.advance(1'000);
            rig.mgr->pump_messages();
        }
        REQUIRE(rig.mgr->live_jobs() == 0);
        auto got = rig.statuses();
        auto fresh = rig.mgr->tree().recompute_all_statuses();
        REQUIRE(got == fresh);
        if (!reference)
            reference = got;
        else
            REQUIRE(*reference == got);
    } while (std::next_permutation(order.begin(), order.end()));
}
