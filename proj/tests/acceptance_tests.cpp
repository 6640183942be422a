// Acceptance gate for the solver: each case below checks one release
// criterion end to end and prints a single PASS/FAIL line. Tolerances and
// instance lists are pinned here on purpose; loosening them is a release
// decision, not a test fix.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "solvent/cost_model.hpp"
#include "solvent/errors.hpp"
#include "solvent/game.hpp"
#include "solvent/harness.hpp"
#include "solvent/inproc.hpp"
#include "solvent/messages.hpp"
#include "solvent/oracle.hpp"
#include "solvent/selfplay.hpp"
#include "solvent/trainer.hpp"
#include "solvent/tree.hpp"

using namespace solvent;
using game::GameId;
using game::GameState;
using game::Outcome;
using game::Player;
using harness::Mode;
using harness::RunConfig;
using tree::NodeKind;
using tree::NodeStatus;
using tree::SolutionTree;

// Accumulates the criterion verdict while still registering every detail
// with doctest, so a failure shows the exact check that broke.
#define EXPECT(cond)                                                                     \
    do {                                                                                 \
        bool expect_ok_ = static_cast<bool>(cond);                                       \
        CHECK(expect_ok_);                                                               \
        ok = ok && expect_ok_;                                                           \
    } while (0)

namespace {

void report(int num, bool ok, const char* name, const std::string& detail)
{
    std::printf("[criterion %d] %s %s%s%s\n", num, ok ? "PASS" : "FAIL", name,
                detail.empty() ? "" : ": ", detail.c_str());
    std::fflush(stdout);
}

// The shared solve shape for the small-instance criteria: dispatch regime
// (the zero-initialized net predicts cost 12, below this threshold) with a
// budget small enough that hard instances take several jobs.
RunConfig dispatch_cfg(const std::string& game, const std::string& opening)
{
    RunConfig cfg;
    cfg.game = GameId::parse(game);
    cfg.opening = harness::parse_opening(opening);
    cfg.workers = 2;
    cfg.manager.v_thr = 16.5;
    cfg.manager.job_budget = 5000;
    cfg.trainer.games_per_iteration = 2;
    cfg.trainer.steps_per_iteration = 4;
    cfg.trainer.batch_size = 64;
    cfg.trainer.selfplay.sims_per_move = 8;
    cfg.trainer.iteration_every_ticks = 32;
    return cfg;
}

double median(std::vector<double> v)
{
    REQUIRE(!v.empty());
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::vector<double> average_ranks(const std::vector<double>& v)
{
    size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        double rank = (i + j) / 2.0 + 1.0; // ties share the average rank
        for (size_t k = i; k <= j; ++k) r[idx[k]] = rank;
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b)
{
    REQUIRE(a.size() == b.size());
    REQUIRE(a.size() >= 3);
    auto ra = average_ranks(a), rb = average_ranks(b);
    double n = static_cast<double>(a.size());
    double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

std::vector<std::string> csv_lines(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

std::vector<std::string> csv_fields(const std::string& line)
{
    std::vector<std::string> out;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

// Truncated pretraining: enough self-play for sane cost scales and move
// preferences, far from converged. Used as the weak starting net for the
// hex-4 criteria, where the 128-wide default net would also be too slow.
pcn::Checkpoint weak_hex4_net()
{
    harness::PretrainRequest req;
    req.game = GameId::hex(4);
    req.hidden = {32, 32};
    req.pretrain.rounds = 2;
    req.pretrain.games_per_round = 200;
    req.pretrain.steps_per_round = 150;
    req.pretrain.batch_size = 128;
    req.pretrain.selfplay.sims_per_move = 32;
    req.pretrain.seed = 11;
    return harness::run_pretrain(req);
}

const std::vector<std::string>& criterion1_instances()
{
    static const std::vector<std::string> instances = [] {
        std::vector<std::string> v;
        v.push_back("ttt:");
        for (int c = 0; c < 9; ++c) v.push_back("ttt:" + std::to_string(c));
        v.push_back("hex-2:");
        v.push_back("hex-3:");
        for (int c = 0; c < 9; ++c) v.push_back("hex-3:" + std::to_string(c));
        return v;
    }();
    return instances;
}

struct InstanceRef {
    std::string game;
    std::string opening;
};

InstanceRef split_instance(const std::string& spec)
{
    auto colon = spec.find(':');
    return {spec.substr(0, colon), spec.substr(colon + 1)};
}

} // namespace

TEST_CASE("criterion 1: oracle soundness")
{
    bool ok = true;
    std::map<std::string, oracle::Oracle> oracles;
    auto oracle_for = [&](const std::string& game) -> oracle::Oracle& {
        auto it = oracles.find(game);
        if (it == oracles.end())
            it = oracles.emplace(game, oracle::Oracle(GameId::parse(game))).first;
        return it->second;
    };

    int runs = 0, agreed = 0, wins_verified = 0;
    for (const auto& spec : criterion1_instances()) {
        auto [game, opening] = split_instance(spec);
        auto root = harness::opening_state(GameId::parse(game),
                                           harness::parse_opening(opening));
        Outcome expect = oracle_for(game).solve_exact(root);
        for (Mode mode : {Mode::Baseline, Mode::OnlineSp, Mode::OnlineCp, Mode::OnlineSpCp}) {
            for (uint64_t seed : {1, 2, 3}) {
                RunConfig cfg = dispatch_cfg(game, opening);
                cfg.mode = mode;
                cfg.seed = seed;
                auto r = harness::run_solve(cfg);
                ++runs;
                CAPTURE(spec);
                CAPTURE(harness::to_string(mode));
                CAPTURE(seed);
                bool done = r.phase == manager::Manager::Phase::Done;
                bool right = done && r.outcome && *r.outcome == expect;
                EXPECT(right);
                if (right) ++agreed;
                if (right && expect == Outcome::Win) {
                    bool tree_ok = r.solution && tree::verify_solution(*r.solution).pass;
                    EXPECT(tree_ok);
                    if (tree_ok) ++wins_verified;
                }
            }
        }
    }
    report(1, ok, "oracle soundness",
           std::to_string(agreed) + "/" + std::to_string(runs) +
               " outcomes match the oracle, " + std::to_string(wins_verified) +
               " win trees verified");
    CHECK(ok);
}

namespace {

// Consistent strategy subtree for a position: one (arbitrary) move at OR
// nodes, every reply at AND nodes. For a lost position some leaf of any such
// tree is a non-Win terminal, which is exactly what the verifier must find.
uint32_t graft_greedy(SolutionTree& t, const GameState& st, game::Move edge)
{
    uint32_t idx = static_cast<uint32_t>(t.nodes.size());
    t.nodes.push_back({st.to_move() == Player::Or ? NodeKind::Or : NodeKind::And,
                       edge,
                       {}});
    if (st.is_terminal()) return idx;
    std::vector<uint32_t> children;
    if (t.nodes[idx].kind == NodeKind::Or) {
        game::Move m = st.legal_moves().front();
        children.push_back(graft_greedy(t, st.apply(m), m));
    } else {
        for (game::Move m : st.legal_moves())
            children.push_back(graft_greedy(t, st.apply(m), m));
    }
    t.nodes[idx].children = std::move(children);
    return idx;
}

struct TreeWalk {
    const SolutionTree& t;
    std::vector<GameState> state_at; // indexed like t.nodes

    explicit TreeWalk(const SolutionTree& tr) : t(tr), state_at(tr.nodes.size(), game::decode_position(tr.root_position))
    {
        fill(0, game::decode_position(tr.root_position));
    }

    void fill(uint32_t idx, const GameState& st)
    {
        state_at[idx] = st;
        for (uint32_t c : t.nodes[idx].children) fill(c, st.apply(t.nodes[c].move));
    }
};

} // namespace

TEST_CASE("criterion 2: solution-tree verification")
{
    bool ok = true;
    oracle::Oracle ora(GameId::hex(3));

    // Every Win instance from the criterion-1 list must produce an accepted
    // tree (criterion 1 re-verifies them across all modes and seeds).
    int wins = 0;
    std::optional<SolutionTree> hex3_tree;
    for (const auto& spec : criterion1_instances()) {
        auto [game, opening] = split_instance(spec);
        RunConfig cfg = dispatch_cfg(game, opening);
        auto r = harness::run_solve(cfg);
        EXPECT(r.phase == manager::Manager::Phase::Done);
        if (r.outcome == Outcome::Win) {
            CAPTURE(spec);
            bool good = r.solution && tree::verify_solution(*r.solution).pass;
            EXPECT(good);
            if (good) ++wins;
            if (good && game == "hex-3" && !hex3_tree) hex3_tree = *r.solution;
        }
    }
    REQUIRE(hex3_tree.has_value());

    TreeWalk walk(*hex3_tree);
    const SolutionTree& base = *hex3_tree;

    // Mutation 1: drop one reply from an AND node.
    {
        SolutionTree mut = base;
        bool applied = false;
        for (auto& n : mut.nodes)
            if (n.kind == NodeKind::And && n.children.size() >= 2) {
                n.children.pop_back();
                applied = true;
                break;
            }
        REQUIRE(applied);
        auto v = tree::verify_solution(mut);
        EXPECT(!v.pass);
        EXPECT(v.violation.find("missing reply") != std::string::npos);
    }

    // Mutation 2: swap an OR node's kept move for one the oracle refutes,
    // with a structurally consistent subtree grafted underneath so only the
    // strategy's outcome is wrong.
    {
        SolutionTree mut = base;
        bool applied = false;
        for (uint32_t i = 0; i < mut.nodes.size() && !applied; ++i) {
            if (mut.nodes[i].kind != NodeKind::Or || mut.nodes[i].children.empty())
                continue;
            const GameState& st = walk.state_at[i];
            if (st.is_terminal()) continue;
            game::Move kept = mut.nodes[mut.nodes[i].children[0]].move;
            for (game::Move alt : st.legal_moves()) {
                if (alt.cell == kept.cell) continue;
                if (ora.solve_exact(st.apply(alt)) != Outcome::Loss) continue;
                mut.nodes[i].children[0] = graft_greedy(mut, st.apply(alt), alt);
                applied = true;
                break;
            }
        }
        REQUIRE(applied);
        auto v = tree::verify_solution(mut);
        EXPECT(!v.pass);
        EXPECT(v.violation.find("is not a Win terminal") != std::string::npos);
    }

    // Mutation 3: relabel a terminal leaf so it points at a cell where the
    // game in fact continues.
    {
        SolutionTree mut = base;
        bool applied = false;
        for (uint32_t i = 0; i < mut.nodes.size() && !applied; ++i) {
            if (mut.nodes[i].kind != NodeKind::Or || mut.nodes[i].children.size() != 1)
                continue;
            uint32_t leaf = mut.nodes[i].children[0];
            if (!mut.nodes[leaf].children.empty()) continue;
            const GameState& st = walk.state_at[i];
            for (game::Move alt : st.legal_moves()) {
                if (alt.cell == mut.nodes[leaf].move.cell) continue;
                if (st.apply(alt).is_terminal()) continue;
                mut.nodes[leaf].move = alt;
                applied = true;
                break;
            }
        }
        REQUIRE(applied);
        auto v = tree::verify_solution(mut);
        EXPECT(!v.pass);
        EXPECT(v.violation.find("is not terminal") != std::string::npos);
    }

    report(2, ok, "solution-tree verification",
           std::to_string(wins) +
               " win trees accepted, 3 mutation classes rejected with the right violation");
    CHECK(ok);
}

TEST_CASE("criterion 3: virtual-solving order-independence")
{
    bool ok = true;
    RunConfig base = dispatch_cfg("hex-3", "4");
    base.manager.job_budget = 800;
    base.seed = 40;
    base.collect_proven = true;

    RunConfig sync = base;
    sync.workers = 1;
    auto ref = harness::run_solve(sync);
    REQUIRE(ref.phase == manager::Manager::Phase::Done);
    REQUIRE(ref.outcome.has_value());
    EXPECT(ref.virtual_leftovers == 0);

    std::map<uint64_t, NodeStatus> proven_ref(ref.proven.begin(), ref.proven.end());
    uint64_t root_hash =
        harness::opening_state(base.game, base.opening).canonical_hash();
    REQUIRE(proven_ref.count(root_hash) == 1);

    int agreed_runs = 0;
    size_t compared_positions = 0;
    for (int i = 1; i <= 50; ++i) {
        RunConfig chaos = base;
        chaos.chaos.bus_seed = static_cast<uint64_t>(i);
        chaos.chaos.max_latency_micros = 500 + 137 * static_cast<uint64_t>(i);
        auto r = harness::run_solve(chaos);
        CAPTURE(i);
        bool done = r.phase == manager::Manager::Phase::Done;
        bool same_outcome = done && r.outcome == ref.outcome;
        bool quiescent = r.virtual_leftovers == 0;
        EXPECT(done);
        EXPECT(same_outcome);
        EXPECT(quiescent);

        // Statuses are compared by position: runs expand different node sets
        // under reordering, but no position may ever flip between runs, and
        // a run must never disagree with itself across transpositions.
        std::map<uint64_t, NodeStatus> seen;
        bool consistent = true;
        for (const auto& [hash, status] : r.proven) {
            auto [it, fresh] = seen.emplace(hash, status);
            if (!fresh && it->second != status) consistent = false;
            auto in_ref = proven_ref.find(hash);
            if (in_ref != proven_ref.end()) {
                ++compared_positions;
                if (in_ref->second != status) consistent = false;
            }
        }
        EXPECT(consistent);
        EXPECT(seen.count(root_hash) == 1);
        if (done && same_outcome && quiescent && consistent) ++agreed_runs;
    }
    report(3, ok, "virtual-solving order-independence",
           std::to_string(agreed_runs) + "/50 reordered runs agree with the synchronous"
                                         " reference (" +
               std::to_string(compared_positions) +
               " shared proven positions compared, 0 VirtualWin at quiescence)");
    CHECK(ok);
}

TEST_CASE("criterion 4: job-gating audit")
{
    bool ok = true;
    namespace fs = std::filesystem;

    // A varied-cost net so one run exercises both sides of the threshold.
    harness::PretrainRequest pre;
    pre.game = GameId::hex(3);
    pre.hidden = {16, 16};
    pre.pretrain.games_per_round = 120;
    pre.pretrain.steps_per_round = 80;
    pre.pretrain.batch_size = 64;
    pre.pretrain.selfplay.sims_per_move = 16;
    auto tuned = harness::run_pretrain(pre);

    struct Setup {
        double v_thr;
        bool use_tuned;
    };
    size_t dispatches = 0, threshold_expands = 0, assignment_expands = 0, violations = 0;
    for (Setup s : {Setup{16.5, false}, Setup{10.0, false}, Setup{8.0, true}}) {
        auto path = fs::temp_directory_path() /
                    ("solvent_accept_events_" + std::to_string(s.v_thr) + ".jsonl");
        RunConfig cfg = dispatch_cfg("hex-3", "");
        cfg.manager.v_thr = s.v_thr;
        cfg.manager.job_budget = 600;
        if (s.use_tuned) cfg.checkpoint = tuned;
        cfg.events_file = path.string();
        auto r = harness::run_solve(cfg);
        EXPECT(r.phase == manager::Manager::Phase::Done);

        std::ifstream in(path);
        REQUIRE(static_cast<bool>(in));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto ev = nlohmann::json::parse(line);
            std::string type = ev.at("ev").get<std::string>();
            if (type == "dispatch") {
                ++dispatches;
                if (!(ev.at("v_l").get<double>() < ev.at("v_thr").get<double>()))
                    ++violations;
                if (ev.at("kind").get<std::string>() != "And") ++violations;
            } else if (type == "expand") {
                std::string reason = ev.at("reason").get<std::string>();
                double v_l = ev.at("v_l").get<double>();
                double v_thr = ev.at("v_thr").get<double>();
                if (reason == "threshold") {
                    ++threshold_expands;
                    if (!(v_l >= v_thr)) ++violations;
                } else if (reason == "assignment") {
                    ++assignment_expands;
                    if (ev.at("kind").get<std::string>() != "Or") ++violations;
                    if (!(v_l < v_thr)) ++violations;
                } else {
                    ++violations;
                }
            }
        }
        fs::remove(path);
    }
    EXPECT(dispatches > 0);
    EXPECT(threshold_expands > 0);
    EXPECT(assignment_expands > 0);
    EXPECT(violations == 0);
    report(4, ok, "job-gating audit",
           std::to_string(dispatches) + " dispatches, " +
               std::to_string(threshold_expands) + " threshold expansions, " +
               std::to_string(assignment_expands) + " assignment expansions, " +
               std::to_string(violations) + " gating violations");
    CHECK(ok);
}

TEST_CASE("criterion 5: trainer statistics")
{
    bool ok = true;

    // Queue discipline, directly on the container.
    {
        trainer::PositionQueue q(1000);
        auto root = GameState::initial(GameId::ttt());
        auto bytes = game::encode_position(root);
        bool capped = true;
        for (int i = 0; i < 1500; ++i) {
            q.push({bytes, 0, static_cast<double>(i)});
            capped = capped && q.size() <= 1000;
        }
        EXPECT(capped);
        EXPECT(q.size() == 1000);
        EXPECT(q.arrivals() == 1500);
        EXPECT(q.at(0).cost_target == 500.0);   // 0..499 evicted oldest-first
        EXPECT(q.at(999).cost_target == 1499.0);
    }

    // Live trainer: sampling share, version discipline, capacity under load.
    inproc::InprocBus bus(3, 0);
    auto mpeer = bus.add_peer();
    auto tpeer = bus.add_peer();
    auto tch = bus.channel(tpeer);
    transport::Topology topo{mpeer, {}, tpeer};

    trainer::TrainerConfig tcfg;
    tcfg.queue_capacity = 1000;
    tcfg.replay_games = 200;
    tcfg.games_per_iteration = 2;
    tcfg.steps_per_iteration = 8;
    tcfg.batch_size = 128;
    tcfg.selfplay.sims_per_move = 8;
    tcfg.seed = 17;

    auto root = GameState::initial(GameId::ttt());
    auto shape = pcn::NetworkShape::for_game(GameId::ttt());
    shape.hidden = {16, 16};

    // Idle path: a trainer that cannot generate its own games publishes
    // nothing and keeps version 0 until data arrives.
    {
        trainer::TrainerConfig idle_cfg = tcfg;
        idle_cfg.games_per_iteration = 0;
        trainer::Trainer idle(idle_cfg, root, pcn::Network::random_init(shape, 5), topo,
                              *tch);
        EXPECT(!idle.run_iteration().has_value());
        EXPECT(idle.version() == 0);
    }

    trainer::Trainer tr(tcfg, root, pcn::Network::random_init(shape, 5), topo, *tch);
    for (game::Cell a = 0; a < 9; ++a) {
        tr.ingest_solved(game::encode_position(root.apply(game::Move{a})));
        for (game::Cell b = 0; b < 9; ++b)
            if (b != a)
                tr.ingest_critical(
                    game::encode_position(root.apply(game::Move{a}).apply(game::Move{b})));
    }

    uint32_t expected_version = 0;
    bool versions_ok = true, caps_ok = true;
    while (tr.solved_draws() + tr.replay_draws() < 10000) {
        auto cp = tr.run_iteration();
        REQUIRE(cp.has_value());
        versions_ok = versions_ok && cp->version == ++expected_version;
        caps_ok = caps_ok && tr.solved_queue().size() <= tcfg.queue_capacity &&
                  tr.critical_queue().size() <= tcfg.queue_capacity;
    }
    EXPECT(versions_ok);
    EXPECT(caps_ok);

    uint64_t solved = tr.solved_draws();
    uint64_t total = solved + tr.replay_draws();
    double share = static_cast<double>(solved) / static_cast<double>(total);
    double expect_solved = 0.10 * static_cast<double>(total);
    double expect_replay = 0.90 * static_cast<double>(total);
    double chi2 = (solved - expect_solved) * (solved - expect_solved) / expect_solved +
                  (tr.replay_draws() - expect_replay) * (tr.replay_draws() - expect_replay) /
                      expect_replay;
    EXPECT(total >= 10000);
    EXPECT(share >= 0.09);
    EXPECT(share <= 0.11);
    EXPECT(chi2 < 6.635); // chi-squared critical value, 1 dof, alpha = 0.01

    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "solved share %.4f over %llu draws (chi2 %.3f < 6.635), versions "
                  "gap-free to %u, queues capped",
                  share, static_cast<unsigned long long>(total), chi2, tr.version());
    report(5, ok, "trainer statistics", detail);
    CHECK(ok);
}

TEST_CASE("criterion 6: cost-model numerics")
{
    bool ok = true;
    auto shape = pcn::NetworkShape::for_game(GameId::hex(3));
    shape.hidden = {8, 8};

    // A mixed batch: self-play rows with policy targets, solved rows without.
    auto root = GameState::initial(GameId::hex(3));
    std::vector<pcn::TrainingSample> batch;
    uint64_t rng = 99;
    selfplay::SelfplayConfig sp;
    sp.sims_per_move = 8;
    auto net0 = pcn::Network::random_init(shape, 21);
    for (int g = 0; g < 2; ++g) {
        auto rec = selfplay::play_game(net0, root, sp, rng);
        for (auto& s : rec.samples) batch.push_back(s);
    }
    batch.push_back(trainer::Trainer::solved_sample(root.apply(game::Move{4})));
    batch.push_back(trainer::Trainer::solved_sample(root.apply(game::Move{0})));

    // Analytic gradient against central differences on strided probes.
    {
        auto net = pcn::Network::random_init(shape, 42);
        std::vector<double> grad;
        net.loss_and_gradient(batch, grad);
        size_t n = grad.size();
        REQUIRE(n > 0);
        const double eps = 1e-5;
        double worst = 0.0;
        size_t probes = 0;
        for (size_t i = 0; i < n; i += std::max<size_t>(1, n / 200)) {
            double save = net.params()[i];
            net.params()[i] = save + eps;
            double up = net.loss(batch);
            net.params()[i] = save - eps;
            double down = net.loss(batch);
            net.params()[i] = save;
            double numeric = (up - down) / (2 * eps);
            double rel = std::abs(grad[i] - numeric) /
                         std::max(1e-8, std::abs(grad[i]) + std::abs(numeric));
            worst = std::max(worst, rel);
            ++probes;
        }
        CAPTURE(worst);
        EXPECT(probes >= 100);
        EXPECT(worst <= 1e-4);
    }

    // The cost head stays inside [0, v_max] no matter how wild the weights.
    {
        bool bounded = true;
        std::mt19937_64 wild(7);
        auto states = std::vector<GameState>{root, root.apply(game::Move{4}),
                                             root.apply(game::Move{0}).apply(game::Move{8})};
        for (double scale : {1e3, -1e3, 37.5}) {
            auto net = pcn::Network::random_init(shape, 404);
            for (double& p : net.params())
                p = scale * std::uniform_real_distribution<double>(0.5, 1.0)(wild);
            for (const auto& s : states) {
                auto ev = net.evaluate(s);
                bounded = bounded && std::isfinite(ev.cost) && ev.cost >= 0.0 &&
                          ev.cost <= shape.v_max;
            }
        }
        EXPECT(bounded);
    }

    // Overfitting a fixed batch: loss falls monotonically in 10-step means.
    std::vector<double> means;
    {
        auto net = pcn::Network::random_init(shape, 9);
        std::vector<double> losses;
        for (int step = 0; step < 200; ++step) {
            auto info = net.sgd_step(batch, 0.02);
            EXPECT(info.applied);
            losses.push_back(info.loss);
        }
        for (size_t w = 0; w < 20; ++w) {
            double m = 0;
            for (size_t i = 0; i < 10; ++i) m += losses[w * 10 + i];
            means.push_back(m / 10);
        }
        bool monotone = true;
        for (size_t w = 1; w < means.size(); ++w)
            monotone = monotone && means[w] <= means[w - 1] + 1e-12;
        EXPECT(monotone);
    }

    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "gradients match to 1e-4, cost bounded, overfit loss %.4f -> %.4f "
                  "monotone in 10-step means",
                  means.front(), means.back());
    report(6, ok, "cost-model numerics", detail);
    CHECK(ok);
}

TEST_CASE("criterion 7: heuristic quality after pretraining")
{
    bool ok = true;
    harness::PretrainRequest req;
    req.game = GameId::hex(3);
    req.hidden = {64, 64};
    req.pretrain.rounds = 3;
    req.pretrain.games_per_round = 400;
    req.pretrain.steps_per_round = 300;
    req.pretrain.batch_size = 128;
    req.pretrain.selfplay.sims_per_move = 48;
    auto cp = harness::run_pretrain(req);
    auto net = cp.to_network();

    oracle::Oracle ora(GameId::hex(3));
    std::vector<double> predicted, truth;
    oracle::for_each_reachable(GameId::hex(3), [&](const GameState& s) {
        if (s.is_terminal()) return;
        if (ora.solve_exact(s) != Outcome::Win) return;
        predicted.push_back(net.evaluate(s).cost);
        truth.push_back(std::log2(static_cast<double>(ora.exact_cost(s))));
    });
    double rho = spearman(predicted, truth);
    CAPTURE(rho);
    EXPECT(predicted.size() > 100);
    EXPECT(rho >= 0.5);

    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "Spearman %.3f >= 0.5 over %zu oracle-Win positions", rho,
                  predicted.size());
    report(7, ok, "heuristic quality after pretraining", detail);
    CHECK(ok);
}

TEST_CASE("criterion 8: online-cp trend on hex-4")
{
    bool ok = true;
    harness::CompareRequest req;
    req.base.game = GameId::hex(4);
    req.base.workers = 2;
    req.base.manager.v_thr = 16.5;
    req.base.manager.job_budget = 1500;
    req.base.checkpoint = weak_hex4_net();
    req.base.trainer.games_per_iteration = 4;
    req.base.trainer.steps_per_iteration = 12;
    req.base.trainer.batch_size = 128;
    req.base.trainer.learning_rate = 0.005;
    req.base.trainer.selfplay.sims_per_move = 48;
    req.base.trainer.iteration_every_ticks = 48;
    for (const char* op : {"5,0,6", "9,15,10", "5,12,6", "10,3,6,12,9"})
        req.openings.push_back(harness::parse_opening(op));
    req.modes = {Mode::Baseline, Mode::OnlineCp};
    req.seeds = {1, 2, 3};

    auto out = harness::run_compare(req);
    EXPECT(out.all_completed);
    std::printf("%s", out.table_csv.c_str());

    int openings = 0, improved = 0;
    for (const auto& line : csv_lines(out.table_csv)) {
        auto f = csv_fields(line);
        if (f.size() < 7 || f[0] == "opening" || f[0] == "geomean") continue;
        if (f[1] != "online-cp") continue;
        ++openings;
        if (std::stod(f[6]) < 1.0) ++improved;
    }
    EXPECT(openings == 4);
    EXPECT(2 * improved >= openings);

    report(8, ok, "online-cp trend on hex-4",
           "online-cp median nodes below baseline on " + std::to_string(improved) + "/" +
               std::to_string(openings) + " openings (directional check)");
    CHECK(ok);
}

TEST_CASE("criterion 9: selection-rule ablation")
{
    bool ok = true;
    std::map<std::string, oracle::Oracle> oracles;
    int rows = 0, correct = 0;
    std::set<std::string> labels;

    for (const auto& spec : std::vector<std::string>{"hex-3:", "hex-3:4", "ttt:"}) {
        auto [game, opening] = split_instance(spec);
        harness::CompareRequest req;
        req.base = dispatch_cfg(game, opening);
        req.base.manager.job_budget = 4000;
        req.openings = {harness::parse_opening(opening)};
        req.ablation = true;
        auto out = harness::run_compare(req);
        EXPECT(out.all_completed);

        auto it = oracles.find(game);
        if (it == oracles.end())
            it = oracles.emplace(game, oracle::Oracle(GameId::parse(game))).first;
        auto root = harness::opening_state(GameId::parse(game),
                                           harness::parse_opening(opening));
        std::string expect = it->second.solve_exact(root) == Outcome::Win ? "Win" : "Loss";

        for (const auto& line : csv_lines(out.runs_csv)) {
            auto f = csv_fields(line);
            if (f.size() < 6 || f[0] == "game") continue;
            ++rows;
            labels.insert(f[2]);
            CAPTURE(spec);
            CAPTURE(line);
            bool right = f[5] == expect;
            EXPECT(right);
            if (right) ++correct;
        }
    }
    EXPECT(rows == 3 * 4); // three instances, four selection-rule variants
    EXPECT(labels == std::set<std::string>({"full", "no-top-k", "no-and-assign", "plain"}));
    report(9, ok, "selection-rule ablation",
           std::to_string(correct) + "/" + std::to_string(rows) +
               " ablation outcomes oracle-correct across full, no-top-k, "
               "no-and-assign, plain");
    CHECK(ok);
}

TEST_CASE("criterion 10: worker scaling on hex-4")
{
    bool ok = true;
    RunConfig base;
    base.game = GameId::hex(4);
    base.opening = harness::parse_opening("10,3,6,12,9");
    base.manager.v_thr = 16.5;
    base.manager.job_budget = 1500;
    base.checkpoint = weak_hex4_net();

    std::vector<double> medians;
    for (uint32_t w : {1u, 2u, 4u}) {
        std::vector<double> times;
        for (uint64_t seed : {1, 2, 3}) {
            RunConfig cfg = base;
            cfg.workers = w;
            cfg.seed = seed;
            auto r = harness::run_solve(cfg);
            EXPECT(r.phase == manager::Manager::Phase::Done);
            times.push_back(r.stats.time_s);
        }
        medians.push_back(median(times));
    }
    bool monotone = medians[0] >= medians[1] - 1e-9 && medians[1] >= medians[2] - 1e-9;
    EXPECT(monotone);

    // The emitted sweep table itself (speedup and loading columns) is
    // report-only; one seed is enough to show the shape.
    RunConfig sweep_base = base;
    sweep_base.seed = 1;
    std::printf("%s", harness::sweep_workers(sweep_base, {1, 2, 4}).c_str());

    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "median wall %.3fs (1w) -> %.3fs (2w) -> %.3fs (4w), monotone "
                  "non-increasing over 3 seeds",
                  medians[0], medians[1], medians[2]);
    report(10, ok, "worker scaling on hex-4", detail);
    CHECK(ok);
}

TEST_CASE("criterion 11: determinism")
{
    bool ok = true;
    std::vector<std::string> rows;
    for (Mode mode : {Mode::Baseline, Mode::OnlineSpCp}) {
        RunConfig cfg = dispatch_cfg("hex-3", "");
        cfg.workers = 1;
        cfg.seed = 7;
        cfg.mode = mode;
        auto a = harness::run_solve(cfg);
        auto b = harness::run_solve(cfg);
        EXPECT(a.phase == manager::Manager::Phase::Done);
        std::string ra = manager::to_csv(a.stats);
        std::string rb = manager::to_csv(b.stats);
        CAPTURE(harness::to_string(mode));
        EXPECT(ra == rb);
        rows.push_back(ra);
    }
    report(11, ok, "determinism",
           "repeated single-worker seed-7 runs byte-identical in baseline and "
           "online-sp+cp");
    CHECK(ok);
}

TEST_CASE("criterion 12: protocol robustness")
{
    bool ok = true;

    // Frame-decoder fuzz: random bytes, random chunking, oversized and
    // truncated declared lengths. Decoding may throw, never crash or hang.
    size_t fed = 0, frames = 0, rejected = 0;
    {
        std::mt19937_64 rng(0xF422);
        auto byte = [&] { return static_cast<uint8_t>(rng() & 0xFF); };
        wire::FrameReader reader;
        for (int iter = 0; iter < 100000; ++iter) {
            std::vector<uint8_t> blob;
            size_t len = rng() % 64;
            if (rng() % 5 == 0) {
                // Plausible header with an arbitrary (possibly huge) length.
                uint32_t declared = static_cast<uint32_t>(rng() % (1u << 28));
                blob.push_back(static_cast<uint8_t>(declared >> 24));
                blob.push_back(static_cast<uint8_t>(declared >> 16));
                blob.push_back(static_cast<uint8_t>(declared >> 8));
                blob.push_back(static_cast<uint8_t>(declared));
            }
            for (size_t i = 0; i < len; ++i) blob.push_back(byte());
            fed += blob.size();

            size_t off = 0;
            while (off < blob.size()) {
                size_t chunk = std::min(blob.size() - off, 1 + rng() % 23);
                try {
                    reader.feed(std::span<const uint8_t>(blob.data() + off, chunk));
                    while (auto f = reader.next()) {
                        ++frames;
                        try {
                            (void)wire::parse_message(*f);
                        } catch (const Error&) {
                            ++rejected;
                        }
                    }
                } catch (const Error&) {
                    ++rejected;
                    reader = wire::FrameReader();
                }
                off += chunk;
            }
        }
        // A clean reader still decodes a valid frame after all that.
        wire::JobAssign job{42, game::encode_position(GameState::initial(GameId::ttt())),
                            100, 7};
        wire::FrameReader fresh;
        fresh.feed(wire::encode_frame(wire::to_frame(job)));
        auto f = fresh.next();
        REQUIRE(f.has_value());
        auto msg = wire::parse_message(*f);
        EXPECT(std::get<wire::JobAssign>(msg).job_id == 42);
    }

    // Worker-kill chaos: the reordered setup from criterion 3 plus scripted
    // worker deaths mid-run must still produce the oracle outcome.
    oracle::Oracle ora(GameId::hex(3));
    auto root = harness::opening_state(GameId::hex(3), harness::parse_opening("4"));
    Outcome expect = ora.solve_exact(root);
    int chaos_runs = 0, chaos_ok = 0;
    for (int i = 0; i < 10; ++i) {
        RunConfig cfg = dispatch_cfg("hex-3", "4");
        cfg.manager.job_budget = 800;
        cfg.seed = 40;
        cfg.collect_proven = true;
        cfg.chaos.bus_seed = 900 + static_cast<uint64_t>(i);
        cfg.chaos.max_latency_micros = 2000;
        cfg.chaos.kills = {{static_cast<uint32_t>(i % 2), 3 + static_cast<uint64_t>(i) * 4}};
        auto r = harness::run_solve(cfg);
        ++chaos_runs;
        CAPTURE(i);
        bool good = r.phase == manager::Manager::Phase::Done && r.outcome == expect &&
                    r.virtual_leftovers == 0;
        EXPECT(good);
        if (good) ++chaos_ok;
    }

    char detail[200];
    std::snprintf(detail, sizeof detail,
                  "%zu fuzz bytes -> %zu frames, %zu rejected, 0 crashes; %d/%d "
                  "worker-kill runs yield the oracle outcome",
                  fed, frames, rejected, chaos_ok, chaos_runs);
    report(12, ok, "protocol robustness", detail);
    CHECK(ok);
}
