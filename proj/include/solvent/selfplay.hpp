#pragma once

#include "solvent/cost_model.hpp"
#include "solvent/game.hpp"
#include "solvent/tree.hpp"

namespace solvent::selfplay {

struct SelfplayConfig {
    tree::TreeConfig tree;
    uint32_t sims_per_move = 32;
    // Moves are sampled proportionally to visit counts for this many plies,
    // then played by argmax.
    int sampled_plies = 4;
};

// One finished game, already converted into training rows. Samples are in
// played order; each carries the position features, the root visit
// distribution as the policy target, and a cost target assigned backward
// from the terminal.
struct GameRecord {
    std::vector<pcn::TrainingSample> samples;
    game::Outcome outcome = game::Outcome::Loss;
    size_t plies = 0;
};

GameRecord play_game(const pcn::Network& net, const game::GameState& start,
                     const SelfplayConfig& cfg, uint64_t& rng);

// The cost-target recursion, exposed for direct checking: the target one ply
// above a child with target `v_child`. Wins compose upward; at AND positions
// every sibling is priced like the played child. Lost games bypass this and
// pin every position at v_max.
double parent_cost_target(game::Player mover, size_t branching, double v_child,
                          double v_max);

} // namespace solvent::selfplay
