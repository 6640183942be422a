#include "solvent/game.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <mutex>
#include <sstream>

#include "solvent/util.hpp"

namespace solvent::game {

namespace {

struct ZobristTable {
    std::vector<std::array<uint64_t, 2>> cell_keys;
    uint64_t side_key = 0;
    uint64_t empty_base = 0;
};

const ZobristTable& zobrist_for(GameId id)
{
    static std::mutex mu;
    static std::map<uint8_t, ZobristTable> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(id.wire_byte());
    if (it != cache.end()) return it->second;

    ZobristTable t;
    uint64_t stream = 0x5eedb0a7d5eedULL ^ (static_cast<uint64_t>(id.wire_byte()) << 32);
    t.empty_base = splitmix64(stream);
    t.side_key = splitmix64(stream);
    t.cell_keys.resize(id.cell_count());
    for (auto& k : t.cell_keys) {
        k[0] = splitmix64(stream);
        k[1] = splitmix64(stream);
    }
    return cache.emplace(id.wire_byte(), std::move(t)).first->second;
}

} // namespace

GameId GameId::hex(int n)
{
    if (n < 2 || n > 13) throw UsageError("hex board side must be in [2, 13], got " + std::to_string(n));
    return GameId(static_cast<uint8_t>(n));
}

GameId GameId::from_wire(uint8_t byte)
{
    if (byte == 0) return ttt();
    if (byte < 2 || byte > 13) throw ProtocolError("bad game byte " + std::to_string(byte));
    return hex(byte);
}

GameId GameId::parse(const std::string& name)
{
    if (name == "ttt") return ttt();
    if (name.rfind("hex-", 0) == 0) {
        try {
            return hex(std::stoi(name.substr(4)));
        } catch (const std::invalid_argument&) {
        } catch (const std::out_of_range&) {
        }
    }
    throw UsageError("unknown game id '" + name + "' (expected ttt or hex-N)");
}

std::string GameId::name() const
{
    return is_hex() ? "hex-" + std::to_string(board_side()) : "ttt";
}

GameState::GameState(GameId id) : id_(id)
{
    cells_.assign(id.cell_count(), 0);
    hash_ = zobrist_for(id).empty_base;
    if (id.is_hex()) {
        uf_parent_.resize(cells_.size() + 4);
        for (size_t i = 0; i < uf_parent_.size(); ++i)
            uf_parent_[i] = static_cast<uint8_t>(i);
    }
}

GameState GameState::initial(GameId id)
{
    return GameState(id);
}

int GameState::uf_find(int x) const
{
    while (uf_parent_[x] != x) x = uf_parent_[x];
    return x;
}

void GameState::uf_union(int a, int b)
{
    int ra = uf_find(a), rb = uf_find(b);
    if (ra != rb) uf_parent_[ra] = static_cast<uint8_t>(rb);
}

void GameState::hex_connect(Cell c, Player p)
{
    const int n = id_.board_side();
    const int r = c / n, col = c % n;
    const uint8_t mine = p == Player::Or ? 1 : 2;
    // Rhombus adjacency: six neighbours.
    static constexpr int dr[6] = {-1, -1, 0, 0, 1, 1};
    static constexpr int dc[6] = {0, 1, -1, 1, -1, 0};
    for (int i = 0; i < 6; ++i) {
        int nr = r + dr[i], nc = col + dc[i];
        if (nr < 0 || nr >= n || nc < 0 || nc >= n) continue;
        Cell nb = static_cast<Cell>(nr * n + nc);
        if (cells_[nb] == mine) uf_union(c, nb);
    }
    const int top = id_.cell_count(), bottom = top + 1, left = top + 2, right = top + 3;
    if (p == Player::Or) {
        if (r == 0) uf_union(c, top);
        if (r == n - 1) uf_union(c, bottom);
    } else {
        if (col == 0) uf_union(c, left);
        if (col == n - 1) uf_union(c, right);
    }
}

bool GameState::ttt_line_through(Cell c, uint8_t owner) const
{
    static constexpr int lines[8][3] = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8},
                                        {0, 3, 6}, {1, 4, 7}, {2, 5, 8},
                                        {0, 4, 8}, {2, 4, 6}};
    for (const auto& line : lines) {
        if (c != line[0] && c != line[1] && c != line[2]) continue;
        if (cells_[line[0]] == owner && cells_[line[1]] == owner && cells_[line[2]] == owner)
            return true;
    }
    return false;
}

void GameState::place(Cell c)
{
    const Player mover = to_move_;
    const auto& z = zobrist_for(id_);
    cells_[c] = mover == Player::Or ? 1 : 2;
    hash_ ^= z.cell_keys[c][static_cast<int>(mover)];

    if (id_.is_hex()) {
        hex_connect(c, mover);
        const int top = id_.cell_count();
        if (uf_find(top) == uf_find(top + 1))
            terminal_ = Outcome::Win;
        else if (uf_find(top + 2) == uf_find(top + 3))
            terminal_ = Outcome::Loss;
    } else {
        if (ttt_line_through(c, cells_[c]))
            terminal_ = mover == Player::Or ? Outcome::Win : Outcome::Loss;
        else if (history_.size() + 1 == cells_.size())
            terminal_ = Outcome::Loss; // full board without a row is a draw, folded into Loss
    }

    history_.push_back(c);
    to_move_ = opponent(mover);
    hash_ ^= z.side_key; // keyed on AND-to-move
}

std::vector<Move> GameState::legal_moves() const
{
    if (is_terminal()) throw ContractViolation("legal_moves called on terminal state");
    std::vector<Move> moves;
    moves.reserve(cells_.size() - history_.size());
    for (Cell c = 0; c < cells_.size(); ++c)
        if (cells_[c] == 0) moves.push_back(Move{c});
    return moves;
}

bool GameState::is_legal(Move m) const
{
    return !is_terminal() && m.cell < cells_.size() && cells_[m.cell] == 0;
}

size_t GameState::legal_move_count() const
{
    if (is_terminal()) throw ContractViolation("legal_move_count called on terminal state");
    return cells_.size() - history_.size();
}

GameState GameState::apply(Move m) const
{
    if (!is_legal(m))
        throw Error("illegal move at cell " + std::to_string(m.cell));
    GameState next(*this);
    next.place(m.cell);
    return next;
}

void GameState::encode_into(std::span<double> out) const
{
    const size_t n = cells_.size();
    if (out.size() != 2 * n + 1) throw ContractViolation("encode buffer size mismatch");
    for (size_t i = 0; i < n; ++i) {
        out[i] = cells_[i] == 1 ? 1.0 : 0.0;
        out[n + i] = cells_[i] == 2 ? 1.0 : 0.0;
    }
    out[2 * n] = to_move_ == Player::Or ? 1.0 : 0.0;
}

std::vector<double> GameState::encode() const
{
    std::vector<double> v(encoding_size());
    encode_into(v);
    return v;
}

std::string GameState::to_string() const
{
    std::ostringstream os;
    const int n = id_.board_side();
    for (int r = 0; r < n; ++r) {
        if (id_.is_hex())
            for (int i = 0; i < r; ++i) os << ' ';
        for (int c = 0; c < n; ++c) {
            uint8_t v = cells_[r * n + c];
            os << (v == 0 ? '.' : v == 1 ? 'X' : 'O');
            if (c + 1 < n) os << ' ';
        }
        os << '\n';
    }
    return os.str();
}

void encode_position(const GameState& s, std::vector<uint8_t>& out)
{
    ByteWriter w;
    w.u8(s.id().wire_byte());
    w.u16(static_cast<uint16_t>(s.history().size()));
    for (Cell c : s.history()) w.u16(c);
    auto bytes = w.take();
    out.insert(out.end(), bytes.begin(), bytes.end());
}

std::vector<uint8_t> encode_position(const GameState& s)
{
    std::vector<uint8_t> out;
    encode_position(s, out);
    return out;
}

GameState decode_position(std::span<const uint8_t> data, size_t* consumed)
{
    ByteReader r(data);
    GameId id = GameId::from_wire(r.u8());
    uint16_t count = r.u16();
    GameState s = GameState::initial(id);
    for (uint16_t i = 0; i < count; ++i) {
        Cell c = r.u16();
        if (!s.is_legal(Move{c}))
            throw ProtocolError("position replay: illegal move at cell " + std::to_string(c));
        s = s.apply(Move{c});
    }
    if (consumed)
        *consumed = r.offset();
    else
        r.expect_end();
    return s;
}

} // namespace solvent::game
