#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "solvent/errors.hpp"

namespace solvent::game {

// The OR player is the side whose win the search tries to prove: the first
// mover in Hex, X in tic-tac-toe. The AND player is its opponent.
enum class Player : uint8_t { Or = 0, And = 1 };

inline Player opponent(Player p) { return p == Player::Or ? Player::And : Player::Or; }

// Always from the OR player's perspective; a drawn terminal counts as Loss.
enum class Outcome : uint8_t { Win = 0, Loss = 1 };

using Cell = uint16_t;

struct Move {
    Cell cell;
    bool operator==(const Move&) const = default;
};

// Which game a position belongs to. Wire byte: 0 = tic-tac-toe, n = Hex n*n.
class GameId {
public:
    static GameId ttt() { return GameId(0); }
    static GameId hex(int n);
    static GameId from_wire(uint8_t byte);
    static GameId parse(const std::string& name); // "ttt" | "hex-N"

    bool is_hex() const { return wire_ != 0; }
    int board_side() const { return is_hex() ? wire_ : 3; }
    int cell_count() const { return board_side() * board_side(); }
    uint8_t wire_byte() const { return wire_; }
    std::string name() const;

    bool operator==(const GameId&) const = default;

private:
    explicit GameId(uint8_t w) : wire_(w) {}
    uint8_t wire_;
};

// Immutable game position. `apply` returns a fresh state; existing states
// are never mutated and can be shared freely across threads.
class GameState {
public:
    static GameState initial(GameId id);

    GameId id() const { return id_; }
    int cell_count() const { return static_cast<int>(cells_.size()); }
    Player to_move() const { return to_move_; }
    const std::vector<Cell>& history() const { return history_; }
    uint8_t cell_owner(Cell c) const { return cells_[c]; } // 0 empty, 1 OR, 2 AND

    bool is_terminal() const { return terminal_.has_value(); }
    std::optional<Outcome> terminal_outcome() const { return terminal_; }

    // Ascending cell order; throws ContractViolation on a terminal state.
    std::vector<Move> legal_moves() const;
    bool is_legal(Move m) const;
    size_t legal_move_count() const;

    GameState apply(Move m) const;

    // Two stone planes (OR, AND) followed by a to-move flag: 1 when the OR
    // player is to move. Length 2*cells + 1.
    std::vector<double> encode() const;
    void encode_into(std::span<double> out) const;
    int encoding_size() const { return 2 * cell_count() + 1; }

    // Equal board + side to move give equal keys regardless of move order.
    uint64_t canonical_hash() const { return hash_; }

    std::string to_string() const; // ascii board, debugging and text exports

private:
    explicit GameState(GameId id);
    void place(Cell c); // mutating helper used by initial/apply only

    GameId id_;
    std::vector<uint8_t> cells_;
    Player to_move_ = Player::Or;
    std::vector<Cell> history_;
    uint64_t hash_ = 0;
    std::optional<Outcome> terminal_;

    // Hex connectivity: union-find over cells plus 4 virtual edge nodes.
    std::vector<uint8_t> uf_parent_;
    int uf_find(int x) const;
    void uf_union(int a, int b);
    void hex_connect(Cell c, Player p);
    bool ttt_line_through(Cell c, uint8_t owner) const;
};

// Position wire encoding: game byte, 16-bit move count, move cells as
// 16-bit integers, all big-endian. Replayable and compact.
void encode_position(const GameState& s, std::vector<uint8_t>& out);
std::vector<uint8_t> encode_position(const GameState& s);
GameState decode_position(std::span<const uint8_t> data, size_t* consumed = nullptr);

} // namespace solvent::game
