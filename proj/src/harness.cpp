#include "solvent/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "solvent/config.hpp"
#include "solvent/inproc.hpp"
#include "solvent/tcp.hpp"
#include "solvent/util.hpp"
#include "solvent/worker.hpp"

namespace solvent::harness {

using game::GameId;
using game::GameState;
using game::Move;
using game::Outcome;
using manager::Manager;
using manager::ManagerConfig;
using manager::StatsRow;

Mode parse_mode(const std::string& text)
{
    if (text == "baseline") return Mode::Baseline;
    if (text == "online-sp") return Mode::OnlineSp;
    if (text == "online-cp") return Mode::OnlineCp;
    if (text == "online-sp+cp") return Mode::OnlineSpCp;
    throw UsageError("unknown mode: " + text);
}

TransportKind parse_transport(const std::string& text)
{
    if (text == "inproc") return TransportKind::Inproc;
    if (text == "tcp") return TransportKind::Tcp;
    throw UsageError("unknown transport: " + text);
}

const char* to_string(Mode m)
{
    switch (m) {
    case Mode::Baseline: return "baseline";
    case Mode::OnlineSp: return "online-sp";
    case Mode::OnlineCp: return "online-cp";
    case Mode::OnlineSpCp: return "online-sp+cp";
    }
    return "?";
}

const char* to_string(TransportKind t)
{
    return t == TransportKind::Inproc ? "inproc" : "tcp";
}

std::vector<Move> parse_opening(const std::string& text)
{
    std::string norm = text;
    std::replace(norm.begin(), norm.end(), '-', ' ');
    std::replace(norm.begin(), norm.end(), ',', ' ');
    std::vector<Move> out;
    std::istringstream in(norm);
    std::string tok;
    while (in >> tok) {
        size_t used = 0;
        unsigned long cell = 0;
        try {
            cell = std::stoul(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size() || cell > 0xFFFE)
            throw UsageError("bad opening move: " + tok);
        out.push_back(Move{static_cast<game::Cell>(cell)});
    }
    return out;
}

std::string opening_string(const std::vector<Move>& opening)
{
    std::string s;
    for (const Move& m : opening) {
        if (!s.empty()) s += '-';
        s += std::to_string(m.cell);
    }
    return s;
}

GameState opening_state(GameId id, const std::vector<Move>& opening)
{
    GameState s = GameState::initial(id);
    for (const Move& m : opening) {
        if (s.is_terminal())
            throw UsageError("opening continues past the end of the game");
        if (!s.is_legal(m))
            throw UsageError("illegal opening move " + std::to_string(m.cell) + " for " +
                             id.name());
        s = s.apply(m);
    }
    return s;
}

namespace {

uint64_t to_u64(const std::string& key, const std::string& v)
{
    try {
        size_t used = 0;
        uint64_t n = std::stoull(v, &used);
        if (used == v.size()) return n;
    } catch (const std::exception&) {
    }
    throw UsageError(key + ": expected an unsigned integer, got '" + v + "'");
}

double to_f64(const std::string& key, const std::string& v)
{
    try {
        size_t used = 0;
        double x = std::stod(v, &used);
        if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw UsageError(key + ": expected a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw UsageError(key + ": expected a boolean, got '" + v + "'");
}

} // namespace

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value)
{
    if (key == "game") {
        cfg.game = GameId::parse(value);
    } else if (key == "opening") {
        cfg.opening = parse_opening(value);
    } else if (key == "mode") {
        cfg.mode = parse_mode(value);
    } else if (key == "transport") {
        cfg.transport = parse_transport(value);
    } else if (key == "workers") {
        cfg.workers = static_cast<uint32_t>(to_u64(key, value));
    } else if (key == "seed") {
        cfg.seed = to_u64(key, value);
    } else if (key == "vthr") {
        cfg.manager.v_thr = to_f64(key, value);
    } else if (key == "k") {
        cfg.manager.tree.top_k = static_cast<int>(to_u64(key, value));
    } else if (key == "c_puct") {
        cfg.manager.tree.c_puct = to_f64(key, value);
    } else if (key == "v_max") {
        cfg.manager.tree.v_max = to_f64(key, value);
    } else if (key == "budget") {
        cfg.manager.job_budget = to_u64(key, value);
    } else if (key == "and_assignment") {
        cfg.manager.and_assignment = to_bool(key, value);
    } else if (key == "loss_positions") {
        cfg.manager.emit_loss_positions = to_bool(key, value);
        cfg.trainer.accept_loss_positions = cfg.manager.emit_loss_positions;
    } else if (key == "wall_limit_s") {
        cfg.manager.max_wall_micros = static_cast<uint64_t>(to_f64(key, value) * 1e6);
    } else if (key == "checkpoint") {
        cfg.checkpoint_file = value;
    } else if (key == "solution_out") {
        cfg.solution_file = value;
    } else if (key == "events_out") {
        cfg.events_file = value;
    } else if (key == "metrics_out") {
        cfg.metrics_file = value;
    } else if (key == "chaos.bus_seed") {
        cfg.chaos.bus_seed = to_u64(key, value);
    } else if (key == "chaos.latency_micros") {
        cfg.chaos.max_latency_micros = to_u64(key, value);
    } else if (key == "chaos.kill") {
        auto parts = config::split(value, ':');
        if (parts.size() != 2) throw UsageError("chaos.kill: expected worker:tick");
        cfg.chaos.kills.emplace_back(static_cast<uint32_t>(to_u64(key, parts[0])),
                                     to_u64(key, parts[1]));
    } else if (key == "trainer.games") {
        cfg.trainer.games_per_iteration = static_cast<uint32_t>(to_u64(key, value));
    } else if (key == "trainer.steps") {
        cfg.trainer.steps_per_iteration = static_cast<uint32_t>(to_u64(key, value));
    } else if (key == "trainer.batch") {
        cfg.trainer.batch_size = static_cast<uint32_t>(to_u64(key, value));
    } else if (key == "trainer.lr") {
        cfg.trainer.learning_rate = to_f64(key, value);
    } else if (key == "trainer.iteration_ticks") {
        cfg.trainer.iteration_every_ticks = static_cast<uint32_t>(to_u64(key, value));
    } else if (key == "trainer.sims_per_move") {
        cfg.trainer.selfplay.sims_per_move = static_cast<uint32_t>(to_u64(key, value));
    } else if (key == "trainer.queue_capacity") {
        cfg.trainer.queue_capacity = to_u64(key, value);
    } else if (key == "trainer.replay_games") {
        cfg.trainer.replay_games = to_u64(key, value);
    } else if (key == "trainer.solved_fraction") {
        cfg.trainer.solved_fraction = to_f64(key, value);
    } else {
        throw UsageError("unknown config key: " + key);
    }
}

pcn::Network initial_network(const RunConfig& cfg)
{
    std::optional<pcn::Checkpoint> cp = cfg.checkpoint;
    if (!cp && !cfg.checkpoint_file.empty()) cp = pcn::load_checkpoint_file(cfg.checkpoint_file);
    auto want = pcn::NetworkShape::for_game(cfg.game, cfg.manager.tree.v_max);
    if (!cp) return pcn::Network::zero_init(want);
    if (cp->shape.input != want.input)
        throw UsageError("checkpoint does not fit " + cfg.game.name() +
                         " (input size " + std::to_string(cp->shape.input) + ")");
    if (cp->shape.v_max != want.v_max)
        throw UsageError("checkpoint v_max differs from the configured v_max");
    return cp->to_network();
}

namespace {

void validate(const RunConfig& cfg)
{
    if (cfg.workers < 1) throw UsageError("workers must be at least 1");
    if (!(cfg.manager.v_thr > 0.0 && cfg.manager.v_thr < cfg.manager.tree.v_max))
        throw UsageError("vthr must lie strictly between 0 and v_max");
    if (cfg.manager.tree.top_k < 1) throw UsageError("k must be at least 1");
    for (const auto& [w, tick] : cfg.chaos.kills)
        if (w >= cfg.workers) throw UsageError("chaos.kill names a worker that does not exist");
}

ManagerConfig derived_manager_cfg(const RunConfig& cfg)
{
    ManagerConfig m = cfg.manager;
    m.seed = derive_seed(cfg.seed, 0x11);
    return m;
}

trainer::TrainerConfig derived_trainer_cfg(const RunConfig& cfg)
{
    trainer::TrainerConfig t = cfg.trainer;
    t.selfplay.tree = cfg.manager.tree;
    t.seed = derive_seed(cfg.seed, 0x77);
    t.accept_solved = cfg.mode == Mode::OnlineSp || cfg.mode == Mode::OnlineSpCp;
    t.accept_critical = cfg.mode == Mode::OnlineCp || cfg.mode == Mode::OnlineSpCp;
    return t;
}

std::vector<trainer::IterationMetrics> parse_metrics_rows(const std::string& text)
{
    std::vector<trainer::IterationMetrics> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto f = config::split(line, ',');
        if (f.size() != 5) continue;
        trainer::IterationMetrics m;
        m.iteration = std::stoull(f[0]);
        m.idle = f[1] == "nan";
        m.loss = m.idle ? 0.0 : std::stod(f[1]);
        m.solved_queue = std::stoull(f[2]);
        m.critical_queue = std::stoull(f[3]);
        m.mean_critical_plies = std::stod(f[4]);
        rows.push_back(m);
    }
    return rows;
}

void snapshot_tree(const tree::SearchTree& t, bool collect_proven, RunResult& r)
{
    for (tree::NodeId id = 0; id < t.node_count(); ++id) {
        auto st = t.node(id).status;
        if (st == tree::NodeStatus::VirtualWin) ++r.virtual_leftovers;
        else if (collect_proven && st != tree::NodeStatus::Unsolved)
            r.proven.emplace_back(t.state_of(id).canonical_hash(), st);
    }
}

void finish_result(Manager& mgr, const RunConfig& cfg, RunResult& r)
{
    r.phase = mgr.phase();
    r.outcome = mgr.outcome();
    r.stats = mgr.stats();
    r.stats.game = cfg.game.name();
    r.stats.opening = opening_string(cfg.opening);
    r.stats.mode = to_string(cfg.mode);
    r.stats.workers = cfg.workers;
    r.stats.seed = cfg.seed;
    snapshot_tree(mgr.tree(), cfg.collect_proven, r);
    if (r.outcome == Outcome::Win) {
        r.solution = mgr.solution();
        if (!cfg.solution_file.empty()) tree::save_solution_file(*r.solution, cfg.solution_file);
    }
}

RunResult run_inproc(const RunConfig& cfg, const GameState& root, const pcn::Network& net,
                     std::ostream* events, std::ostream* metrics)
{
    inproc::InprocBus bus(cfg.chaos.bus_seed, cfg.chaos.max_latency_micros);
    transport::Topology topo;
    topo.manager = bus.add_peer();
    for (uint32_t i = 0; i < cfg.workers; ++i) topo.workers.push_back(bus.add_peer());
    bool online = cfg.mode != Mode::Baseline;
    if (online) topo.trainer = bus.add_peer();

    auto mch = bus.channel(topo.manager);
    std::vector<std::unique_ptr<transport::Channel>> wchs;
    std::deque<worker::Worker> workers;
    std::vector<bool> killed(cfg.workers, false);
    for (uint32_t i = 0; i < cfg.workers; ++i) {
        wchs.push_back(bus.channel(topo.workers[i]));
        worker::WorkerConfig wcfg;
        wcfg.seed = derive_seed(cfg.seed, 0x100 + i);
        workers.emplace_back(wcfg, i, *wchs.back(), topo, net);
    }
    std::unique_ptr<transport::Channel> tch;
    std::optional<trainer::Trainer> tr;
    if (online) {
        tch = bus.channel(topo.trainer);
        tr.emplace(derived_trainer_cfg(cfg), root, net, topo, *tch, metrics);
    }
    Manager mgr(derived_manager_cfg(cfg), root, net, topo, *mch, events);

    std::map<uint64_t, std::vector<uint32_t>> kills;
    for (const auto& [w, tick] : cfg.chaos.kills) kills[tick].push_back(w);

    uint64_t tick = 0;
    for (;;) {
        auto phase = mgr.tick();
        if (phase != Manager::Phase::Running && phase != Manager::Phase::Draining) break;
        if (auto it = kills.find(tick); it != kills.end())
            for (uint32_t w : it->second)
                if (!killed[w]) {
                    killed[w] = true;
                    bus.kill_peer(topo.workers[w]);
                }
        for (uint32_t i = 0; i < cfg.workers; ++i)
            if (!killed[i]) workers[i].tick();
        if (tr) tr->tick();
        bus.advance(1000);
        ++tick;
    }
    // Let the survivors see the shutdown so queues flush deterministically.
    for (int i = 0; i < 64; ++i) {
        bool quiet = true;
        for (uint32_t w = 0; w < cfg.workers; ++w)
            if (!killed[w] && !workers[w].done()) {
                workers[w].tick();
                quiet = false;
            }
        if (tr && !tr->done()) {
            tr->tick();
            quiet = false;
        }
        bus.advance(1000);
        if (quiet) break;
    }

    RunResult r;
    finish_result(mgr, cfg, r);
    return r;
}

RunResult run_tcp(const RunConfig& cfg, const GameState& root, const pcn::Network& net,
                  std::ostream* events, std::ostream* metrics)
{
    transport::Topology topo;
    topo.manager = 0;
    for (uint32_t i = 0; i < cfg.workers; ++i) topo.workers.push_back(1 + i);
    bool online = cfg.mode != Mode::Baseline;
    if (online) topo.trainer = 1 + cfg.workers;

    tcp::TcpConfig mc;
    mc.self = topo.manager;
    mc.topology = topo;
    mc.listen_port = 0;
    tcp::TcpChannel mch(mc);

    std::unique_ptr<tcp::TcpChannel> tch;
    if (online) {
        tcp::TcpConfig tc;
        tc.self = topo.trainer;
        tc.topology = topo;
        tc.role = wire::PeerRole::Trainer;
        tc.listen_port = 0;
        tc.dial = {{topo.manager, tcp::Endpoint{"127.0.0.1", mch.port()}}};
        tch = std::make_unique<tcp::TcpChannel>(std::move(tc));
    }

    std::vector<std::unique_ptr<std::atomic<bool>>> die;
    std::vector<std::thread> threads;
    for (uint32_t i = 0; i < cfg.workers; ++i) {
        die.push_back(std::make_unique<std::atomic<bool>>(false));
        auto* flag = die.back().get();
        uint16_t tport = tch ? tch->port() : 0;
        threads.emplace_back([&, i, flag, tport] {
            tcp::TcpConfig wc;
            wc.self = topo.workers[i];
            wc.topology = topo;
            wc.role = wire::PeerRole::Worker;
            wc.worker_id = i;
            wc.dial = {{topo.manager, tcp::Endpoint{"127.0.0.1", mch.port()}}};
            if (tport) wc.dial.push_back({topo.trainer, tcp::Endpoint{"127.0.0.1", tport}});
            tcp::TcpChannel wch(std::move(wc));
            worker::WorkerConfig wcfg;
            wcfg.seed = derive_seed(cfg.seed, 0x100 + i);
            worker::Worker w(wcfg, i, wch, topo, net);
            while (!flag->load() && w.tick())
                std::this_thread::sleep_for(std::chrono::microseconds(100));
        });
    }
    if (online)
        threads.emplace_back([&] {
            trainer::Trainer tr(derived_trainer_cfg(cfg), root, net, topo, *tch, metrics);
            while (tr.tick()) std::this_thread::sleep_for(std::chrono::microseconds(200));
        });

    std::vector<transport::PeerId> expected = topo.workers;
    if (online) expected.push_back(topo.trainer);
    if (!mch.wait_for_peers(expected, 30'000))
        throw Error("peers did not connect within 30s");
    Manager mgr(derived_manager_cfg(cfg), root, net, topo, mch, events);

    std::map<uint64_t, std::vector<uint32_t>> kills;
    for (const auto& [w, tick] : cfg.chaos.kills) kills[tick].push_back(w);

    uint64_t tick = 0;
    for (;;) {
        auto phase = mgr.tick();
        if (phase != Manager::Phase::Running && phase != Manager::Phase::Draining) break;
        if (auto it = kills.find(tick); it != kills.end())
            for (uint32_t w : it->second) die[w]->store(true);
        std::this_thread::sleep_for(std::chrono::microseconds(100));
        ++tick;
    }

    for (auto& f : die) f->store(true);
    for (auto& t : threads) t.join();

    RunResult r;
    finish_result(mgr, cfg, r);
    return r;
}

} // namespace

RunResult run_solve(const RunConfig& cfg)
{
    validate(cfg);
    GameState root = opening_state(cfg.game, cfg.opening);
    pcn::Network net = initial_network(cfg);

    std::ofstream events_out;
    std::ostream* events = nullptr;
    if (!cfg.events_file.empty()) {
        events_out.open(cfg.events_file);
        if (!events_out) throw IoError("cannot write " + cfg.events_file);
        events = &events_out;
    }
    std::ostringstream metrics;

    RunResult r = cfg.transport == TransportKind::Inproc
                      ? run_inproc(cfg, root, net, events, &metrics)
                      : run_tcp(cfg, root, net, events, &metrics);

    r.training = parse_metrics_rows(metrics.str());
    if (!cfg.metrics_file.empty()) {
        std::ofstream m(cfg.metrics_file);
        if (!m) throw IoError("cannot write " + cfg.metrics_file);
        m << trainer::metrics_csv_header() << '\n' << metrics.str();
    }
    return r;
}

pcn::Checkpoint run_pretrain(const PretrainRequest& req)
{
    GameState root = opening_state(req.game, req.opening);
    pcn::Network net = [&] {
        if (!req.resume_from.empty()) {
            auto cp = pcn::load_checkpoint_file(req.resume_from);
            auto want = pcn::NetworkShape::for_game(req.game, req.pretrain.selfplay.tree.v_max);
            if (cp.shape.input != want.input)
                throw UsageError("checkpoint does not fit " + req.game.name());
            return cp.to_network();
        }
        auto shape = pcn::NetworkShape::for_game(req.game, req.pretrain.selfplay.tree.v_max);
        shape.hidden = req.hidden;
        return req.init_seed ? pcn::Network::random_init(shape, req.init_seed)
                             : pcn::Network::zero_init(shape);
    }();

    std::ostringstream metrics;
    auto cp = trainer::pretrain(root, net, req.pretrain, &metrics);
    if (!req.metrics_file.empty()) {
        std::ofstream m(req.metrics_file);
        if (!m) throw IoError("cannot write " + req.metrics_file);
        m << "step,loss\n" << metrics.str();
    }
    if (!req.out_file.empty()) pcn::save_checkpoint_file(cp, req.out_file);
    return cp;
}

tree::VerifyResult verify_file(const std::filesystem::path& path,
                               std::optional<GameId> expect_game)
{
    auto sol = tree::load_solution_file(path);
    if (expect_game) {
        auto got = game::decode_position(sol.root_position).id();
        if (got != *expect_game)
            return {false, "solution is for " + got.name() + ", expected " +
                               expect_game->name()};
    }
    return tree::verify_solution(sol);
}

std::string sweep_vthr(const RunConfig& base, const std::vector<double>& values)
{
    std::string csv = "vthr,outcome,time_s,jobs,avg_job_time_s,avg_job_nodes,solved_jobs_pct\n";
    for (double v : values) {
        RunConfig cfg = base;
        cfg.manager.v_thr = v;
        auto r = run_solve(cfg);
        char buf[256];
        std::snprintf(buf, sizeof buf, "%g,%s,%.6f,%" PRIu64 ",%.6f,%.2f,%.2f\n", v,
                      r.stats.outcome.c_str(), r.stats.time_s, r.stats.jobs,
                      r.stats.avg_job_time_s, r.stats.avg_job_nodes, r.stats.solved_jobs_pct);
        csv += buf;
    }
    return csv;
}

std::string sweep_workers(const RunConfig& base, const std::vector<uint32_t>& counts)
{
    std::string csv = "workers,outcome,nodes,time_s,speedup,avg_worker_loading_pct\n";
    double first_time = 0.0;
    for (size_t i = 0; i < counts.size(); ++i) {
        RunConfig cfg = base;
        cfg.workers = counts[i];
        auto r = run_solve(cfg);
        if (i == 0) first_time = r.stats.time_s;
        double speedup = r.stats.time_s > 0.0 ? first_time / r.stats.time_s : 0.0;
        char buf[256];
        std::snprintf(buf, sizeof buf, "%u,%s,%" PRIu64 ",%.6f,%.3f,%.2f\n", counts[i],
                      r.stats.outcome.c_str(), r.stats.total_nodes, r.stats.time_s, speedup,
                      r.stats.avg_worker_loading_pct);
        csv += buf;
    }
    return csv;
}

namespace {

double median(std::vector<double> v)
{
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// One labeled configuration of the comparison grid.
struct Variant {
    std::string label;
    Mode mode;
    int top_k;
    bool and_assignment;
    std::optional<pcn::Checkpoint> net_override;
};

} // namespace

CompareResult run_compare(const CompareRequest& req)
{
    std::vector<Variant> variants;
    if (req.ablation) {
        int k = req.base.manager.tree.top_k;
        variants.push_back({"full", Mode::Baseline, k, true, {}});
        variants.push_back({"no-top-k", Mode::Baseline, 1, true, {}});
        variants.push_back({"no-and-assign", Mode::Baseline, k, false, {}});
        variants.push_back({"plain", Mode::Baseline, 1, false, {}});
    } else {
        for (Mode m : req.modes)
            variants.push_back({to_string(m), m, req.base.manager.tree.top_k,
                                req.base.manager.and_assignment, {}});
    }
    if (req.offline_ft) {
        PretrainRequest pr = *req.offline_ft;
        if (pr.resume_from.empty()) pr.resume_from = req.base.checkpoint_file;
        auto tuned = run_pretrain(pr);
        variants.push_back({"offline-ft", Mode::Baseline, req.base.manager.tree.top_k,
                            req.base.manager.and_assignment, std::move(tuned)});
    }

    CompareResult out;
    out.runs_csv = manager::stats_csv_header() + "\n";
    out.critical_csv = "opening,mode,seed,iteration,mean_critical_plies\n";
    out.table_csv = "opening,mode,outcome,median_nodes,median_time_s,median_checkpoints,"
                    "node_ratio\n";

    struct Agg {
        std::vector<double> nodes, time_s, pcn;
        std::set<std::string> outcomes;
    };
    std::vector<std::vector<Agg>> grid(req.openings.size(), std::vector<Agg>(variants.size()));

    for (size_t oi = 0; oi < req.openings.size(); ++oi) {
        for (size_t vi = 0; vi < variants.size(); ++vi) {
            const Variant& var = variants[vi];
            for (uint64_t seed : req.seeds) {
                RunConfig cfg = req.base;
                cfg.opening = req.openings[oi];
                cfg.mode = var.mode;
                cfg.manager.tree.top_k = var.top_k;
                cfg.manager.and_assignment = var.and_assignment;
                cfg.seed = seed;
                if (var.net_override) cfg.checkpoint = var.net_override;
                auto r = run_solve(cfg);
                r.stats.mode = var.label; // ablation labels are finer than modes
                out.runs_csv += manager::to_csv(r.stats) + "\n";
                out.all_completed = out.all_completed && r.phase == Manager::Phase::Done;
                Agg& a = grid[oi][vi];
                a.nodes.push_back(static_cast<double>(r.stats.total_nodes));
                a.time_s.push_back(r.stats.time_s);
                a.pcn.push_back(static_cast<double>(r.stats.pcn_count));
                a.outcomes.insert(r.stats.outcome);
                for (const auto& m : r.training) {
                    char buf[160];
                    std::snprintf(buf, sizeof buf, "%s,%s,%" PRIu64 ",%" PRIu64 ",%.2f\n",
                                  opening_string(req.openings[oi]).c_str(), var.label.c_str(),
                                  seed, m.iteration, m.mean_critical_plies);
                    out.critical_csv += buf;
                }
            }
        }
    }

    std::vector<std::vector<double>> ratios(variants.size());
    for (size_t oi = 0; oi < req.openings.size(); ++oi) {
        double base_nodes = median(grid[oi][0].nodes);
        for (size_t vi = 0; vi < variants.size(); ++vi) {
            const Agg& a = grid[oi][vi];
            std::string outcome = a.outcomes.size() == 1 ? *a.outcomes.begin() : "mixed";
            char buf[256];
            std::string ratio;
            if (vi > 0 && base_nodes > 0.0) {
                double rr = median(grid[oi][vi].nodes) / base_nodes;
                ratios[vi].push_back(rr);
                char rb[32];
                std::snprintf(rb, sizeof rb, "%.4f", rr);
                ratio = rb;
            }
            std::snprintf(buf, sizeof buf, "%s,%s,%s,%.1f,%.6f,%.1f,%s\n",
                          opening_string(req.openings[oi]).c_str(), variants[vi].label.c_str(),
                          outcome.c_str(), median(a.nodes), median(a.time_s), median(a.pcn),
                          ratio.c_str());
            out.table_csv += buf;
        }
    }
    for (size_t vi = 1; vi < variants.size(); ++vi) {
        if (ratios[vi].empty()) continue;
        double lg = 0.0;
        for (double rr : ratios[vi]) lg += std::log(rr);
        char buf[128];
        std::snprintf(buf, sizeof buf, "geomean,%s,,,,,%.4f\n", variants[vi].label.c_str(),
                      std::exp(lg / static_cast<double>(ratios[vi].size())));
        out.table_csv += buf;
    }
    return out;
}

} // namespace solvent::harness
