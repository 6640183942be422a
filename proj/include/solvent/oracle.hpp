#pragma once
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "solvent/game.hpp"

namespace solvent::oracle {

// Proof/refutation costs saturate instead of wrapping.
inline constexpr uint64_t kCostSaturated = UINT64_MAX;

inline uint64_t saturating_add(uint64_t a, uint64_t b)
{
    return a > kCostSaturated - b ? kCostSaturated : a + b;
}

struct OracleEntry {
    game::Outcome outcome;
    // Exact proof cost for Win positions, refutation cost for Loss positions.
    uint64_t cost = 0;
};

// Exhaustive negamax with memoization plus the exact cost recursion.
// Ground truth for small instances; everything is memoized by canonical hash.
class Oracle {
public:
    explicit Oracle(game::GameId id, size_t memo_budget = 10'000'000);

    game::GameId id() const { return id_; }

    // Outcome under the first-player objective.
    game::Outcome solve_exact(const game::GameState& s);
    // Outcome with the protagonist roles swapped: Win means the second player
    // forces the Loss outcome. Computed by an independent recursion, so it
    // must come out as the exact complement of solve_exact.
    game::Outcome solve_exact_swapped(const game::GameState& s);

    // Raw proof cost C: 1 for a terminal Win; first player to move adds 1 to
    // the cheapest winning reply; second player to move adds 1 to the sum over
    // every reply. Requires solve_exact(s) == Win.
    uint64_t exact_cost(const game::GameState& s);
    // Minimal nodes to disprove a Loss position, same recursion with the
    // player roles swapped. Requires solve_exact(s) == Loss.
    uint64_t refutation_cost(const game::GameState& s);

    // v* = min(v_max, log2(C or R)).
    double normalized_cost(const game::GameState& s, double v_max);

    // Outcome plus the matching cost in one lookup.
    const OracleEntry& entry(const game::GameState& s);

    size_t memo_size() const { return outcome_.size(); }

    // Memo dump for fixture reuse: one record per entry() result.
    void dump_memo(std::ostream& out) const;
    static std::unordered_map<uint64_t, OracleEntry> load_memo(std::istream& in,
                                                               game::GameId expect_id);

private:
    game::Outcome solve_for(const game::GameState& s, game::Player protagonist);
    void charge_budget();

    game::GameId id_;
    size_t budget_;
    std::unordered_map<uint64_t, game::Outcome> outcome_;
    std::unordered_map<uint64_t, game::Outcome> outcome_swapped_;
    std::unordered_map<uint64_t, uint64_t> cost_;
    std::unordered_map<uint64_t, OracleEntry> entries_;
};

// Visits every state reachable from the initial position, stopping below
// terminals. Deduplicates transpositions. Throws when the count would exceed
// the limit.
void for_each_reachable(game::GameId id,
                        const std::function<void(const game::GameState&)>& fn,
                        size_t limit = 10'000'000);

size_t count_reachable(game::GameId id, size_t limit = 10'000'000);

} // namespace solvent::oracle
