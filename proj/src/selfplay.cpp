#include "solvent/selfplay.hpp"

#include <algorithm>
#include <cmath>

#include "solvent/util.hpp"

namespace solvent::selfplay {

using game::GameState;
using game::Outcome;
using game::Player;
using tree::NodeId;
using tree::NodeStatus;

double parent_cost_target(Player mover, size_t branching, double v_child, double v_max)
{
    double scale = mover == Player::Or ? 1.0 : static_cast<double>(branching);
    return std::min(v_max, std::log2(1.0 + scale * std::exp2(v_child)));
}

namespace {

struct Ply {
    std::vector<double> features;
    std::vector<double> policy;
    Player mover;
    size_t branching;
};

game::Move choose_move(const tree::SearchTree& t, const GameState& s, bool sample,
                       uint64_t& rng, std::vector<double>& policy_out)
{
    const auto& root = t.node(0);
    policy_out.assign(s.cell_count(), 0.0);

    uint64_t total = 0;
    for (uint16_t i = 0; i < root.child_count; ++i)
        total += t.node(root.first_child + i).visits;
    if (total > 0)
        for (uint16_t i = 0; i < root.child_count; ++i) {
            const auto& c = t.node(root.first_child + i);
            policy_out[c.move.cell] =
                static_cast<double>(c.visits) / static_cast<double>(total);
        }

    // A root the search managed to prove is played perfectly; that keeps the
    // targets honest near the end of the game.
    if (root.status == NodeStatus::ProvenWin && root.proving_child != tree::kNoNode) {
        auto m = t.node(root.proving_child).move;
        if (total == 0) policy_out[m.cell] = 1.0;
        return m;
    }

    NodeId pick = root.first_child;
    if (total == 0) {
        // Nothing got a visit (proof arrived on the first simulation); fall
        // back to the first move.
    } else if (sample) {
        uint64_t ticket = splitmix64(rng) % total;
        for (uint16_t i = 0; i < root.child_count; ++i) {
            NodeId cid = root.first_child + i;
            uint64_t v = t.node(cid).visits;
            if (ticket < v) {
                pick = cid;
                break;
            }
            ticket -= v;
        }
    } else {
        uint64_t best = 0;
        for (uint16_t i = 0; i < root.child_count; ++i) {
            NodeId cid = root.first_child + i;
            if (t.node(cid).visits > best) {
                best = t.node(cid).visits;
                pick = cid;
            }
        }
    }
    auto m = t.node(pick).move;
    if (total == 0) policy_out[m.cell] = 1.0;
    return m;
}

} // namespace

GameRecord play_game(const pcn::Network& net, const GameState& start,
                     const SelfplayConfig& cfg, uint64_t& rng)
{
    const double v_max = cfg.tree.v_max;
    std::vector<Ply> line;
    GameState s = start;

    while (!s.is_terminal()) {
        tree::SearchTree t(s, cfg.tree);
        for (uint32_t i = 0; i < cfg.sims_per_move; ++i) {
            if (t.node(0).status != NodeStatus::Unsolved) break;
            auto sel = t.select_path(rng);
            NodeId leaf = sel.path.back();
            if (sel.leaf_state.is_terminal()) {
                auto st = sel.leaf_state.terminal_outcome() == Outcome::Win
                              ? NodeStatus::ProvenWin
                              : NodeStatus::ProvenLoss;
                t.set_status_and_propagate(leaf, st);
                continue;
            }
            auto ev = net.evaluate(sel.leaf_state);
            t.expand(leaf, sel.leaf_state, ev.policy);
            t.backpropagate(sel.path, std::clamp(ev.cost, 0.0, v_max));
        }

        Ply ply;
        ply.features = s.encode();
        ply.mover = s.to_move();
        ply.branching = s.legal_move_count();
        bool sample = line.size() < static_cast<size_t>(cfg.sampled_plies);
        auto m = choose_move(t, s, sample, rng, ply.policy);
        line.push_back(std::move(ply));
        s = s.apply(m);
    }

    GameRecord rec;
    rec.outcome = *s.terminal_outcome();
    rec.plies = line.size();
    rec.samples.resize(line.size());

    double v_child = 0.0; // the terminal costs nothing once reached
    for (size_t i = line.size(); i-- > 0;) {
        Ply& p = line[i];
        double target = rec.outcome == Outcome::Loss
                            ? v_max
                            : parent_cost_target(p.mover, p.branching, v_child, v_max);
        v_child = target;
        rec.samples[i] = pcn::TrainingSample{std::move(p.features), std::move(p.policy),
                                             target, pcn::SampleSource::Selfplay};
    }
    return rec;
}

} // namespace solvent::selfplay
