#include "solvent/oracle.hpp"

#include <cmath>
#include <cstring>
#include <deque>
#include <iterator>
#include <unordered_set>

#include "solvent/util.hpp"

namespace solvent::oracle {

using game::GameState;
using game::Move;
using game::Outcome;
using game::Player;

Oracle::Oracle(game::GameId id, size_t memo_budget) : id_(id), budget_(memo_budget) {}

void Oracle::charge_budget()
{
    size_t used = outcome_.size() + outcome_swapped_.size() + cost_.size();
    if (used >= budget_)
        throw Error("oracle memo budget exceeded (" + std::to_string(budget_) + " entries)");
}

game::Outcome Oracle::solve_for(const GameState& s, Player protagonist)
{
    auto& memo = protagonist == Player::Or ? outcome_ : outcome_swapped_;
    if (auto it = memo.find(s.canonical_hash()); it != memo.end()) return it->second;

    Outcome result;
    if (s.is_terminal()) {
        result = *s.terminal_outcome();
    } else {
        const Outcome want = protagonist == Player::Or ? Outcome::Win : Outcome::Loss;
        const bool protagonist_moves = s.to_move() == protagonist;
        result = protagonist_moves ? (want == Outcome::Win ? Outcome::Loss : Outcome::Win) : want;
        for (Move m : s.legal_moves()) {
            Outcome child = solve_for(s.apply(m), protagonist);
            if (protagonist_moves && child == want) {
                result = want;
                break;
            }
            if (!protagonist_moves && child != want) {
                result = child;
                break;
            }
        }
    }
    charge_budget();
    memo.emplace(s.canonical_hash(), result);
    return result;
}

game::Outcome Oracle::solve_exact(const GameState& s)
{
    if (!(s.id() == id_)) throw ContractViolation("oracle built for " + id_.name());
    return solve_for(s, Player::Or);
}

game::Outcome Oracle::solve_exact_swapped(const GameState& s)
{
    if (!(s.id() == id_)) throw ContractViolation("oracle built for " + id_.name());
    Outcome r = solve_for(s, Player::And);
    // Report from the swapped protagonist's view: Win when the second player
    // reaches their objective.
    return r == Outcome::Loss ? Outcome::Win : Outcome::Loss;
}

uint64_t Oracle::exact_cost(const GameState& s)
{
    if (solve_exact(s) != Outcome::Win)
        throw ContractViolation("exact_cost requires a Win position");
    if (auto it = cost_.find(s.canonical_hash()); it != cost_.end()) return it->second;

    uint64_t c;
    if (s.is_terminal()) {
        c = 1;
    } else if (s.to_move() == Player::Or) {
        uint64_t best = kCostSaturated;
        for (Move m : s.legal_moves()) {
            GameState child = s.apply(m);
            if (solve_exact(child) != Outcome::Win) continue;
            best = std::min(best, exact_cost(child));
        }
        c = saturating_add(1, best);
    } else {
        uint64_t sum = 1;
        for (Move m : s.legal_moves()) {
            GameState child = s.apply(m);
            // Every reply from a won second-player-to-move position is again a
            // Win; a Loss reply would contribute its refutation instead.
            uint64_t part = solve_exact(child) == Outcome::Win ? exact_cost(child)
                                                               : refutation_cost(child);
            sum = saturating_add(sum, part);
        }
        c = sum;
    }
    charge_budget();
    cost_.emplace(s.canonical_hash(), c);
    return c;
}

uint64_t Oracle::refutation_cost(const GameState& s)
{
    if (solve_exact(s) != Outcome::Loss)
        throw ContractViolation("refutation_cost requires a Loss position");
    if (auto it = cost_.find(s.canonical_hash()); it != cost_.end()) return it->second;

    uint64_t c;
    if (s.is_terminal()) {
        c = 1;
    } else if (s.to_move() == Player::And) {
        uint64_t best = kCostSaturated;
        for (Move m : s.legal_moves()) {
            GameState child = s.apply(m);
            if (solve_exact(child) != Outcome::Loss) continue;
            best = std::min(best, refutation_cost(child));
        }
        c = saturating_add(1, best);
    } else {
        uint64_t sum = 1;
        for (Move m : s.legal_moves()) {
            GameState child = s.apply(m);
            uint64_t part = solve_exact(child) == Outcome::Loss ? refutation_cost(child)
                                                                : exact_cost(child);
            sum = saturating_add(sum, part);
        }
        c = sum;
    }
    charge_budget();
    cost_.emplace(s.canonical_hash(), c);
    return c;
}

double Oracle::normalized_cost(const GameState& s, double v_max)
{
    uint64_t c = solve_exact(s) == Outcome::Win ? exact_cost(s) : refutation_cost(s);
    if (c == kCostSaturated) return v_max;
    return std::min(v_max, std::log2(static_cast<double>(c)));
}

const OracleEntry& Oracle::entry(const GameState& s)
{
    if (auto it = entries_.find(s.canonical_hash()); it != entries_.end()) return it->second;
    OracleEntry e;
    e.outcome = solve_exact(s);
    e.cost = e.outcome == Outcome::Win ? exact_cost(s) : refutation_cost(s);
    return entries_.emplace(s.canonical_hash(), e).first->second;
}

void for_each_reachable(game::GameId id,
                        const std::function<void(const game::GameState&)>& fn,
                        size_t limit)
{
    std::unordered_set<uint64_t> seen;
    std::deque<GameState> frontier;
    frontier.push_back(GameState::initial(id));
    seen.insert(frontier.back().canonical_hash());
    while (!frontier.empty()) {
        GameState s = std::move(frontier.front());
        frontier.pop_front();
        fn(s);
        if (s.is_terminal()) continue;
        for (Move m : s.legal_moves()) {
            GameState child = s.apply(m);
            if (!seen.insert(child.canonical_hash()).second) continue;
            if (seen.size() > limit)
                throw Error("reachable state enumeration exceeded " + std::to_string(limit) +
                            " states for " + id.name());
            frontier.push_back(std::move(child));
        }
    }
}

size_t count_reachable(game::GameId id, size_t limit)
{
    size_t n = 0;
    for_each_reachable(id, [&](const GameState&) { ++n; }, limit);
    return n;
}

namespace {
constexpr char kMemoMagic[4] = {'O', 'R', 'C', 'M'};
constexpr uint16_t kMemoFormat = 1;
} // namespace

void Oracle::dump_memo(std::ostream& out) const
{
    ByteWriter w;
    w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kMemoMagic), 4));
    w.u16(kMemoFormat);
    w.u8(id_.wire_byte());
    w.u32(static_cast<uint32_t>(entries_.size()));
    for (const auto& [hash, e] : entries_) {
        w.u64(hash);
        w.u8(static_cast<uint8_t>(e.outcome));
        w.u64(e.cost);
    }
    auto bytes = w.take();
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

std::unordered_map<uint64_t, OracleEntry> Oracle::load_memo(std::istream& in,
                                                            game::GameId expect_id)
{
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    ByteReader r(bytes);
    char magic[4];
    for (char& ch : magic) ch = static_cast<char>(r.u8());
    if (std::memcmp(magic, kMemoMagic, 4) != 0) throw ProtocolError("bad memo dump magic");
    if (r.u16() != kMemoFormat) throw ProtocolError("unsupported memo dump format");
    if (r.u8() != expect_id.wire_byte())
        throw ProtocolError("memo dump is for a different game");
    uint32_t n = r.u32();
    std::unordered_map<uint64_t, OracleEntry> entries;
    entries.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        uint64_t hash = r.u64();
        OracleEntry e;
        e.outcome = static_cast<Outcome>(r.u8());
        e.cost = r.u64();
        entries.emplace(hash, e);
    }
    r.expect_end();
    return entries;
}

} // namespace solvent::oracle
