#include "solvent/tree.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "solvent/util.hpp"

namespace solvent::tree {

using game::GameState;
using game::Move;
using game::Player;

const char* to_string(NodeStatus s)
{
    switch (s) {
    case NodeStatus::Unsolved: return "unsolved";
    case NodeStatus::ProvenWin: return "proven-win";
    case NodeStatus::ProvenLoss: return "proven-loss";
    case NodeStatus::VirtualWin: return "virtual-win";
    }
    return "?";
}

NodeStatus derive_status(NodeKind kind, std::span<const NodeStatus> children)
{
    if (children.empty()) throw ContractViolation("derive_status on a leaf");
    bool any_pw = false, any_vw = false, any_pl = false;
    bool all_pw = true, all_pl = true, all_pw_or_vw = true;
    for (NodeStatus s : children) {
        any_pw |= s == NodeStatus::ProvenWin;
        any_vw |= s == NodeStatus::VirtualWin;
        any_pl |= s == NodeStatus::ProvenLoss;
        all_pw &= s == NodeStatus::ProvenWin;
        all_pl &= s == NodeStatus::ProvenLoss;
        all_pw_or_vw &= s == NodeStatus::ProvenWin || s == NodeStatus::VirtualWin;
    }
    if (kind == NodeKind::Or) {
        if (any_pw) return NodeStatus::ProvenWin;
        if (any_vw) return NodeStatus::VirtualWin;
        if (all_pl) return NodeStatus::ProvenLoss;
        return NodeStatus::Unsolved;
    }
    if (any_pl) return NodeStatus::ProvenLoss;
    if (all_pw) return NodeStatus::ProvenWin;
    if (all_pw_or_vw) return NodeStatus::VirtualWin;
    return NodeStatus::Unsolved;
}

namespace {

NodeKind kind_of(const GameState& s)
{
    return s.to_move() == Player::Or ? NodeKind::Or : NodeKind::And;
}

bool is_proven(NodeStatus s)
{
    return s == NodeStatus::ProvenWin || s == NodeStatus::ProvenLoss;
}

} // namespace

SearchTree::SearchTree(GameState root_state, TreeConfig config)
    : config_(config), root_state_(std::move(root_state))
{
    if (config_.top_k < 1) throw ContractViolation("top_k must be at least 1");
    SearchNode root;
    root.kind = kind_of(root_state_);
    root.prior = 1.0;
    nodes_.push_back(root);
}

GameState SearchTree::state_of(NodeId id) const
{
    std::vector<Move> moves;
    for (NodeId at = id; at != 0; at = nodes_[at].parent) moves.push_back(nodes_[at].move);
    GameState s = root_state_;
    for (auto it = moves.rbegin(); it != moves.rend(); ++it) s = s.apply(*it);
    return s;
}

double SearchTree::puct_score(NodeId parent, NodeId child) const
{
    const SearchNode& p = nodes_[parent];
    const SearchNode& c = nodes_[child];
    double q = c.visits > 0 ? c.utility / c.visits : 0.5;
    double explore = config_.c_puct * c.prior * std::sqrt(static_cast<double>(p.visits)) /
                     (1.0 + c.visits);
    return q + explore;
}

NodeId SearchTree::select_child(NodeId parent, uint64_t* rng_state) const
{
    const SearchNode& p = nodes_[parent];
    NodeId best = kNoNode;
    double best_score = 0.0;
    std::vector<std::pair<double, NodeId>> candidates;
    const bool top_k_draw = rng_state != nullptr && p.kind == NodeKind::And &&
                            p.visits > static_cast<uint32_t>(config_.top_k);
    for (uint16_t i = 0; i < p.child_count; ++i) {
        NodeId id = p.first_child + i;
        if (nodes_[id].status != NodeStatus::Unsolved) continue;
        double score = puct_score(parent, id);
        if (top_k_draw) {
            candidates.emplace_back(score, id);
        } else if (best == kNoNode || score > best_score) {
            best = id;
            best_score = score;
        }
    }
    if (!top_k_draw) return best;
    if (candidates.empty()) return kNoNode;
    size_t k = std::min<size_t>(config_.top_k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(),
                      [&](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return nodes_[a.second].move.cell < nodes_[b.second].move.cell;
                      });
    return candidates[splitmix64(*rng_state) % k].second;
}

NodeId SearchTree::best_unsolved_child(NodeId parent) const
{
    return select_child(parent, nullptr);
}

SearchTree::Selection SearchTree::select_path(uint64_t& rng_state) const
{
    if (nodes_[0].status != NodeStatus::Unsolved)
        throw ContractViolation("select_path requires an Unsolved root");
    Selection sel{{}, root_state_};
    NodeId at = 0;
    sel.path.push_back(at);
    while (!nodes_[at].is_leaf()) {
        NodeId next = select_child(at, &rng_state);
        if (next == kNoNode)
            throw ContractViolation("interior node has no Unsolved child; propagation missed");
        sel.leaf_state = sel.leaf_state.apply(nodes_[next].move);
        sel.path.push_back(next);
        at = next;
    }
    return sel;
}

void SearchTree::expand(NodeId leaf, const GameState& leaf_state, std::span<const double> policy)
{
    SearchNode& n = nodes_[leaf];
    if (!n.is_leaf()) throw ContractViolation("expand on an interior node");
    if (n.status != NodeStatus::Unsolved) throw ContractViolation("expand on a solved node");
    if (leaf_state.is_terminal()) throw ContractViolation("expand on a terminal position");
    if (policy.size() != static_cast<size_t>(leaf_state.cell_count()))
        throw ContractViolation("policy length does not match the board");

    auto moves = leaf_state.legal_moves();
    double prior_sum = 0.0;
    for (Move m : moves) prior_sum += policy[m.cell];
    if (std::abs(prior_sum - 1.0) > 1e-6)
        throw ContractViolation("child priors do not sum to 1");

    const NodeKind child_kind = n.kind == NodeKind::Or ? NodeKind::And : NodeKind::Or;
    const NodeId first = static_cast<NodeId>(nodes_.size());
    nodes_.reserve(nodes_.size() + moves.size());
    for (Move m : moves) {
        SearchNode c;
        c.kind = child_kind;
        c.move = m;
        c.parent = leaf;
        c.prior = policy[m.cell];
        nodes_.push_back(c);
    }
    SearchNode& reacquired = nodes_[leaf];
    reacquired.first_child = first;
    reacquired.child_count = static_cast<uint16_t>(moves.size());
    ++expansions_;
}

void SearchTree::backpropagate(std::span<const NodeId> path, double v_leaf)
{
    if (path.empty()) throw ContractViolation("backpropagate over an empty path");
    if (!(v_leaf >= 0.0 && v_leaf <= config_.v_max))
        throw ContractViolation("v_leaf outside [0, v_max]");
    for (size_t i = 0; i < path.size(); ++i) {
        SearchNode& n = nodes_[path[i]];
        bool under_and = i > 0 && nodes_[path[i - 1]].kind == NodeKind::And;
        double u = under_and ? v_leaf / config_.v_max : 1.0 - v_leaf / config_.v_max;
        n.visits += 1;
        n.utility += u;
    }
    nodes_[path.back()].cost_estimate = v_leaf;
}

std::vector<StatusChange> SearchTree::set_status_and_propagate(NodeId id, NodeStatus status)
{
    std::vector<StatusChange> changes;
    SearchNode& n = nodes_[id];
    if (n.status == status) return changes;
    if (is_proven(n.status))
        throw ContractViolation(std::string("status downgrade from ") + to_string(n.status) +
                                " at node " + std::to_string(id));
    changes.push_back({id, n.status, status});
    n.status = status;

    NodeId at = n.parent;
    while (at != kNoNode) {
        SearchNode& p = nodes_[at];
        std::vector<NodeStatus> kids(p.child_count);
        for (uint16_t i = 0; i < p.child_count; ++i) kids[i] = nodes_[p.first_child + i].status;
        NodeStatus computed = derive_status(p.kind, kids);
        if (computed == p.status) break;
        if (is_proven(p.status))
            throw ContractViolation(std::string("status downgrade from ") + to_string(p.status) +
                                    " at node " + std::to_string(at));
        if (p.kind == NodeKind::Or && computed == NodeStatus::ProvenWin &&
            p.proving_child == kNoNode) {
            for (uint16_t i = 0; i < p.child_count; ++i) {
                if (nodes_[p.first_child + i].status == NodeStatus::ProvenWin) {
                    p.proving_child = p.first_child + i;
                    break;
                }
            }
        }
        changes.push_back({at, p.status, computed});
        p.status = computed;
        at = p.parent;
    }
    return changes;
}

void SearchTree::set_dispatched_job(NodeId id, std::optional<uint64_t> job)
{
    SearchNode& n = nodes_[id];
    if (job && n.status == NodeStatus::Unsolved)
        throw ContractViolation("dispatched node must be VirtualWin or final");
    n.dispatched_job = job;
}

std::vector<NodeStatus> SearchTree::recompute_all_statuses() const
{
    std::vector<NodeStatus> out(nodes_.size());
    for (size_t i = nodes_.size(); i-- > 0;) {
        const SearchNode& n = nodes_[i];
        if (n.is_leaf()) {
            out[i] = n.status;
            continue;
        }
        std::vector<NodeStatus> kids(n.child_count);
        for (uint16_t c = 0; c < n.child_count; ++c) kids[c] = out[n.first_child + c];
        out[i] = derive_status(n.kind, kids);
    }
    return out;
}

SolutionTree SearchTree::extract_solution(const Resolver& resolver) const
{
    return extract_solution_at(0, resolver);
}

SolutionTree SearchTree::extract_solution_at(NodeId start, const Resolver& resolver) const
{
    if (start >= nodes_.size()) throw ContractViolation("extraction start outside the tree");
    if (nodes_[start].status != NodeStatus::ProvenWin)
        throw ContractViolation("extract_solution requires a ProvenWin root");

    const GameState start_state = state_of(start);
    SolutionTree out;
    out.root_position = game::encode_position(start_state);

    auto splice = [&](uint32_t at, const SolutionTree& sub) {
        if (sub.nodes.empty()) throw ContractViolation("empty sub-proof");
        if (sub.nodes[0].kind != out.nodes[at].kind)
            throw ContractViolation("sub-proof root kind mismatch");
        const uint32_t base = static_cast<uint32_t>(out.nodes.size());
        auto remap = [&](const std::vector<uint32_t>& kids) {
            std::vector<uint32_t> r;
            r.reserve(kids.size());
            for (uint32_t k : kids) r.push_back(base + k - 1);
            return r;
        };
        out.nodes[at].children = remap(sub.nodes[0].children);
        for (size_t j = 1; j < sub.nodes.size(); ++j) {
            SolutionNode copy = sub.nodes[j];
            copy.children = remap(copy.children);
            out.nodes.push_back(std::move(copy));
        }
    };

    auto build = [&](auto&& self, NodeId id, const GameState& st) -> uint32_t {
        const SearchNode& n = nodes_[id];
        if (n.status != NodeStatus::ProvenWin)
            throw ContractViolation("extraction reached a node that is not ProvenWin");
        uint32_t idx = static_cast<uint32_t>(out.nodes.size());
        out.nodes.push_back(SolutionNode{n.kind, n.move, {}});
        if (st.is_terminal()) {
            if (st.terminal_outcome() != game::Outcome::Win)
                throw ContractViolation("ProvenWin node sits on a losing terminal");
            return idx;
        }
        if (n.is_leaf()) {
            std::optional<SolutionTree> sub;
            if (resolver) sub = resolver(id, st);
            if (!sub)
                throw ContractViolation("ProvenWin leaf at node " + std::to_string(id) +
                                        " has no recorded sub-proof");
            auto got = game::decode_position(sub->root_position);
            if (got.canonical_hash() != st.canonical_hash())
                throw ContractViolation("sub-proof is for a different position");
            splice(idx, *sub);
            return idx;
        }
        if (n.kind == NodeKind::Or) {
            NodeId pc = n.proving_child;
            if (pc == kNoNode || nodes_[pc].status != NodeStatus::ProvenWin) {
                pc = kNoNode;
                for (uint16_t i = 0; i < n.child_count; ++i)
                    if (nodes_[n.first_child + i].status == NodeStatus::ProvenWin) {
                        pc = n.first_child + i;
                        break;
                    }
            }
            if (pc == kNoNode)
                throw ContractViolation("ProvenWin OR node " + std::to_string(id) +
                                        " has no ProvenWin child recorded");
            uint32_t kid = self(self, pc, st.apply(nodes_[pc].move));
            out.nodes[idx].children = {kid};
            return idx;
        }
        std::vector<uint32_t> kids;
        kids.reserve(n.child_count);
        for (uint16_t i = 0; i < n.child_count; ++i) {
            NodeId cid = n.first_child + i;
            kids.push_back(self(self, cid, st.apply(nodes_[cid].move)));
        }
        out.nodes[idx].children = std::move(kids);
        return idx;
    };
    build(build, start, start_state);
    out.nodes[0].move = game::Move{0xFFFF};
    return out;
}

size_t solution_node_count(const SolutionTree& t) { return t.nodes.size(); }

namespace {

std::optional<std::string> verify_walk(const SolutionTree& t, uint32_t idx,
                                       const GameState& st, std::vector<bool>& seen)
{
    if (idx >= t.nodes.size()) return "child index out of range";
    if (seen[idx]) return "node " + std::to_string(idx) + " referenced twice";
    seen[idx] = true;
    const SolutionNode& n = t.nodes[idx];

    NodeKind expect = st.to_move() == Player::Or ? NodeKind::Or : NodeKind::And;
    if (!st.is_terminal() && n.kind != expect)
        return "node " + std::to_string(idx) + " kind does not match the side to move";

    if (n.children.empty()) {
        if (!st.is_terminal()) return "leaf node " + std::to_string(idx) + " is not terminal";
        if (st.terminal_outcome() != game::Outcome::Win)
            return "leaf node " + std::to_string(idx) + " is not a Win terminal";
        return std::nullopt;
    }
    if (st.is_terminal()) return "terminal position has children at node " + std::to_string(idx);

    if (n.kind == NodeKind::Or && n.children.size() != 1)
        return "OR node " + std::to_string(idx) + " must keep exactly one move, has " +
               std::to_string(n.children.size());

    if (n.kind == NodeKind::And) {
        auto legal = st.legal_moves();
        std::vector<bool> covered(st.cell_count(), false);
        for (uint32_t c : n.children) {
            if (c >= t.nodes.size()) return "child index out of range";
            Move m = t.nodes[c].move;
            if (!st.is_legal(m))
                return "AND node " + std::to_string(idx) + " lists illegal reply at cell " +
                       std::to_string(m.cell);
            if (covered[m.cell])
                return "AND node " + std::to_string(idx) + " repeats reply at cell " +
                       std::to_string(m.cell);
            covered[m.cell] = true;
        }
        for (Move m : legal)
            if (!covered[m.cell])
                return "AND node " + std::to_string(idx) + " missing reply at cell " +
                       std::to_string(m.cell);
    }

    for (uint32_t c : n.children) {
        if (c >= t.nodes.size()) return "child index out of range";
        Move m = t.nodes[c].move;
        if (!st.is_legal(m))
            return "illegal move at cell " + std::to_string(m.cell) + " under node " +
                   std::to_string(idx);
        if (auto v = verify_walk(t, c, st.apply(m), seen)) return v;
    }
    return std::nullopt;
}

} // namespace

VerifyResult verify_solution(const SolutionTree& t)
{
    VerifyResult r;
    if (t.nodes.empty()) {
        r.pass = false;
        r.violation = "empty tree";
        return r;
    }
    GameState root = GameState::initial(game::GameId::ttt());
    try {
        root = game::decode_position(t.root_position);
    } catch (const Error& e) {
        r.pass = false;
        r.violation = std::string("root position: ") + e.what();
        return r;
    }
    std::vector<bool> seen(t.nodes.size(), false);
    if (auto v = verify_walk(t, 0, root, seen)) {
        r.pass = false;
        r.violation = *v;
        return r;
    }
    for (size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) {
            r.pass = false;
            r.violation = "node " + std::to_string(i) + " unreachable from the root";
            return r;
        }
    }
    return r;
}

namespace {
constexpr char kSolutionMagic[4] = {'S', 'O', 'L', 'T'};
constexpr uint16_t kSolutionFormat = 1;
} // namespace

std::vector<uint8_t> encode_solution(const SolutionTree& t)
{
    if (t.nodes.empty()) throw ContractViolation("cannot encode an empty solution tree");
    ByteWriter w;
    w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kSolutionMagic), 4));
    w.u16(kSolutionFormat);
    w.bytes(t.root_position);
    w.u32(static_cast<uint32_t>(t.nodes.size()));
    auto emit = [&](auto&& self, uint32_t idx) -> void {
        const SolutionNode& n = t.nodes[idx];
        w.u8(static_cast<uint8_t>(n.kind));
        w.u16(n.move.cell);
        w.u16(static_cast<uint16_t>(n.children.size()));
        for (uint32_t c : n.children) self(self, c);
    };
    emit(emit, 0);
    return w.take();
}

SolutionTree decode_solution(std::span<const uint8_t> bytes)
{
    ByteReader r(bytes);
    char magic[4];
    for (char& ch : magic) ch = static_cast<char>(r.u8());
    if (std::memcmp(magic, kSolutionMagic, 4) != 0)
        throw ProtocolError("bad solution tree magic");
    if (r.u16() != kSolutionFormat) throw ProtocolError("unsupported solution tree format");

    SolutionTree t;
    {
        size_t consumed = 0;
        game::decode_position(bytes.subspan(r.offset()), &consumed);
        auto pos = bytes.subspan(r.offset(), consumed);
        t.root_position.assign(pos.begin(), pos.end());
        (void)r.bytes(consumed);
    }
    uint32_t count = r.u32();
    if (count == 0) throw ProtocolError("solution tree with zero nodes");
    if (count > 10'000'000) throw ProtocolError("solution tree implausibly large");
    t.nodes.reserve(count);

    auto read_node = [&]() -> uint16_t {
        SolutionNode n;
        uint8_t kind = r.u8();
        if (kind > 1) throw ProtocolError("bad node kind byte");
        n.kind = static_cast<NodeKind>(kind);
        n.move = Move{r.u16()};
        uint16_t cc = r.u16();
        t.nodes.push_back(std::move(n));
        return cc;
    };

    std::vector<std::pair<uint32_t, uint16_t>> open;
    uint16_t cc = read_node();
    if (cc) open.emplace_back(0, cc);
    uint32_t made = 1;
    while (made < count) {
        if (open.empty()) throw ProtocolError("solution node outside the tree");
        uint32_t idx = made;
        uint16_t kids = read_node();
        ++made;
        auto& top = open.back();
        t.nodes[top.first].children.push_back(idx);
        if (--top.second == 0) open.pop_back();
        if (kids) open.emplace_back(idx, kids);
    }
    if (!open.empty()) throw ProtocolError("solution tree truncated: children missing");
    r.expect_end();
    return t;
}

void save_solution_file(const SolutionTree& t, const std::filesystem::path& path)
{
    auto bytes = encode_solution(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

SolutionTree load_solution_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return decode_solution(bytes);
}

std::string solution_to_text(const SolutionTree& t)
{
    std::ostringstream os;
    GameState root = game::decode_position(t.root_position);
    os << root.id().name() << " solution, " << t.nodes.size() << " nodes\n";
    auto walk = [&](auto&& self, uint32_t idx, const GameState& st, int depth) -> void {
        const SolutionNode& n = t.nodes[idx];
        for (int i = 0; i < depth; ++i) os << "  ";
        if (n.move.cell == 0xFFFF)
            os << "root";
        else
            os << "cell " << n.move.cell;
        os << (n.kind == NodeKind::Or ? " [OR]" : " [AND]");
        if (n.children.empty()) os << " (win)";
        os << '\n';
        for (uint32_t c : n.children) self(self, c, st.apply(t.nodes[c].move), depth + 1);
    };
    walk(walk, 0, root, 0);
    return os.str();
}

} // namespace solvent::tree
