#include "doctest.h"

#include <cmath>
#include <sstream>

#include "solvent/game.hpp"
#include "solvent/oracle.hpp"

using namespace solvent;
using namespace solvent::game;
using namespace solvent::oracle;

namespace {

GameState play(GameState s, std::initializer_list<Cell> cells)
{
    for (Cell c : cells) s = s.apply(Move{c});
    return s;
}

// Minimal plies from s to any Win terminal along any legal line. A proof tree
// must contain such a line, so 1 + this depth bounds the proof cost from below.
int shallowest_win_depth(const GameState& s)
{
    if (s.is_terminal()) return s.terminal_outcome() == Outcome::Win ? 0 : 1'000'000;
    int best = 1'000'000;
    for (Move m : s.legal_moves()) best = std::min(best, 1 + shallowest_win_depth(s.apply(m)));
    return best;
}

} // namespace

TEST_CASE("tic-tac-toe is a draw from the start and from every opening")
{
    Oracle o(GameId::ttt());
    auto root = GameState::initial(GameId::ttt());
    CHECK(o.solve_exact(root) == Outcome::Loss);
    for (Move m : root.legal_moves()) CHECK(o.solve_exact(root.apply(m)) == Outcome::Loss);
}

TEST_CASE("hex first-player wins, pinned per opening")
{
    SUBCASE("2x2")
    {
        Oracle o(GameId::hex(2));
        auto root = GameState::initial(GameId::hex(2));
        CHECK(o.solve_exact(root) == Outcome::Win);
        const Outcome expect[4] = {Outcome::Loss, Outcome::Win, Outcome::Win, Outcome::Loss};
        for (Cell c = 0; c < 4; ++c) CHECK(o.solve_exact(root.apply(Move{c})) == expect[c]);
    }
    SUBCASE("3x3")
    {
        Oracle o(GameId::hex(3));
        auto root = GameState::initial(GameId::hex(3));
        CHECK(o.solve_exact(root) == Outcome::Win);
        const Outcome expect[9] = {Outcome::Loss, Outcome::Loss, Outcome::Win,
                                   Outcome::Win,  Outcome::Win,  Outcome::Win,
                                   Outcome::Win,  Outcome::Loss, Outcome::Loss};
        for (Cell c = 0; c < 9; ++c) CHECK(o.solve_exact(root.apply(Move{c})) == expect[c]);
    }
}

TEST_CASE("terminal states match their recorded outcome")
{
    Oracle o(GameId::ttt());
    auto win = play(GameState::initial(GameId::ttt()), {0, 3, 1, 4, 2});
    CHECK(o.solve_exact(win) == Outcome::Win);
    CHECK(o.exact_cost(win) == 1);
    auto loss = play(GameState::initial(GameId::ttt()), {0, 3, 1, 4, 8, 5});
    CHECK(o.solve_exact(loss) == Outcome::Loss);
    CHECK(o.refutation_cost(loss) == 1);
}

TEST_CASE("exact costs")
{
    SUBCASE("one move from a completed row costs 2")
    {
        Oracle o(GameId::ttt());
        auto s = play(GameState::initial(GameId::ttt()), {0, 3, 1, 4});
        CHECK(o.solve_exact(s) == Outcome::Win);
        CHECK(o.exact_cost(s) == 2);
    }
    SUBCASE("empty 3x3 hex proof cost, computed once and pinned")
    {
        Oracle o(GameId::hex(3));
        CHECK(o.exact_cost(GameState::initial(GameId::hex(3))) == 114);
    }
    SUBCASE("empty 2x2 hex proof cost, computed once and pinned")
    {
        Oracle o(GameId::hex(2));
        CHECK(o.exact_cost(GameState::initial(GameId::hex(2))) == 8);
    }
    SUBCASE("empty tic-tac-toe refutation cost, computed once and pinned")
    {
        Oracle o(GameId::ttt());
        CHECK(o.refutation_cost(GameState::initial(GameId::ttt())) == 1280);
    }
    SUBCASE("cost queries enforce the matching outcome")
    {
        Oracle o(GameId::ttt());
        auto root = GameState::initial(GameId::ttt());
        CHECK_THROWS_AS(o.exact_cost(root), ContractViolation);
        auto win = play(root, {0, 3, 1, 4});
        CHECK_THROWS_AS(o.refutation_cost(win), ContractViolation);
    }
    SUBCASE("normalized cost clamps at v_max")
    {
        Oracle o(GameId::hex(3));
        auto root = GameState::initial(GameId::hex(3));
        CHECK(o.normalized_cost(root, 24.0) == doctest::Approx(std::log2(114.0)));
        CHECK(o.normalized_cost(root, 4.0) == doctest::Approx(4.0));
    }
}

TEST_CASE("cost is bounded below by the shallowest winning line")
{
    Oracle o(GameId::hex(2));
    for_each_reachable(GameId::hex(2), [&](const GameState& s) {
        if (o.solve_exact(s) != Outcome::Win) return;
        CHECK(o.exact_cost(s) >= 1 + static_cast<uint64_t>(shallowest_win_depth(s)));
    });
}

TEST_CASE("role-swapped solve is the exact complement on hex")
{
    Oracle o(GameId::hex(3));
    size_t checked = 0;
    for_each_reachable(GameId::hex(3), [&](const GameState& s) {
        ++checked;
        CHECK(o.solve_exact_swapped(s) != o.solve_exact(s));
    });
    CHECK(checked == 5514);
}

TEST_CASE("memo purity: cold and warm caches agree")
{
    Oracle cold(GameId::hex(2));
    Oracle warm(GameId::hex(2));
    auto root = GameState::initial(GameId::hex(2));
    warm.solve_exact(root);
    for_each_reachable(GameId::hex(2), [&](const GameState& s) {
        CHECK(cold.solve_exact(s) == warm.solve_exact(s));
        CHECK(cold.entry(s).cost == warm.entry(s).cost);
    });
}

TEST_CASE("reachable state counts")
{
    CHECK(count_reachable(GameId::ttt()) == 5478);
    CHECK(count_reachable(GameId::hex(2)) == 32);
    CHECK(count_reachable(GameId::hex(3)) == 5514);
    CHECK_THROWS_AS(count_reachable(GameId::hex(3), 100), Error);
}

TEST_CASE("memo budget overflow reports an error")
{
    Oracle tiny(GameId::ttt(), 50);
    CHECK_THROWS_AS(tiny.solve_exact(GameState::initial(GameId::ttt())), Error);
}

TEST_CASE("memo dump round-trips")
{
    Oracle o(GameId::hex(2));
    for_each_reachable(GameId::hex(2), [&](const GameState& s) { o.entry(s); });
    std::stringstream buf;
    o.dump_memo(buf);
    auto loaded = Oracle::load_memo(buf, GameId::hex(2));
    CHECK(loaded.size() == 32);
    for_each_reachable(GameId::hex(2), [&](const GameState& s) {
        auto it = loaded.find(s.canonical_hash());
        REQUIRE(it != loaded.end());
        CHECK(it->second.outcome == o.solve_exact(s));
        CHECK(it->second.cost == o.entry(s).cost);
    });
    std::stringstream buf2;
    o.dump_memo(buf2);
    CHECK_THROWS_AS(Oracle::load_memo(buf2, GameId::ttt()), ProtocolError);
}

TEST_CASE("saturating addition")
{
    CHECK(saturating_add(3, 4) == 7);
    CHECK(saturating_add(kCostSaturated, 1) == kCostSaturated);
    CHECK(saturating_add(kCostSaturated - 1, 5) == kCostSaturated);
}
