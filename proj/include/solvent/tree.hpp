#pragma once
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "solvent/game.hpp"

namespace solvent::tree {

enum class NodeKind : uint8_t { Or = 0, And = 1 };
enum class NodeStatus : uint8_t { Unsolved = 0, ProvenWin = 1, ProvenLoss = 2, VirtualWin = 3 };

const char* to_string(NodeStatus s);

using NodeId = uint32_t;
inline constexpr NodeId kNoNode = UINT32_MAX;

// Nodes carry the move that led to them instead of a full position; states are
// rebuilt by walking moves from the root, which keeps large trees cheap.
struct SearchNode {
    NodeKind kind;
    NodeStatus status = NodeStatus::Unsolved;
    game::Move move{0xFFFF}; // from the parent; 0xFFFF at the root
    uint16_t child_count = 0;
    uint32_t visits = 0;
    NodeId parent = kNoNode;
    NodeId first_child = kNoNode;
    // Utility accumulated in the parent's frame: backpropagations add
    // 1 - v/v_max under an OR parent and v/v_max under an AND parent.
    double utility = 0.0;
    double prior = 0.0;
    double cost_estimate = 0.0;
    std::optional<uint64_t> dispatched_job;
    // For solved OR nodes: the child whose proof carries the win.
    NodeId proving_child = kNoNode;

    bool is_leaf() const { return child_count == 0; }
};

struct StatusChange {
    NodeId node;
    NodeStatus before;
    NodeStatus after;
};

// One move per OR node, every reply per AND node, Win terminals at the leaves.
struct SolutionNode {
    NodeKind kind;
    game::Move move{0xFFFF};
    std::vector<uint32_t> children;
};

struct SolutionTree {
    std::vector<uint8_t> root_position; // position wire encoding
    std::vector<SolutionNode> nodes;    // nodes[0] is the root
};

struct VerifyResult {
    bool pass = true;
    std::string violation; // first failure, empty on pass
};

struct TreeConfig {
    double c_puct = 1.5;
    double v_max = 24.0;
    int top_k = 4;
};

class SearchTree {
public:
    SearchTree(game::GameState root_state, TreeConfig config);

    const TreeConfig& config() const { return config_; }
    NodeId root() const { return 0; }
    const SearchNode& node(NodeId id) const { return nodes_[id]; }
    size_t node_count() const { return nodes_.size(); }
    size_t expansion_count() const { return expansions_; }
    const game::GameState& root_state() const { return root_state_; }
    // Rebuilds the position by replaying moves from the root.
    game::GameState state_of(NodeId id) const;

    double puct_score(NodeId parent, NodeId child) const;

    struct Selection {
        std::vector<NodeId> path; // root first, leaf last
        game::GameState leaf_state;
    };
    // PUCT descent through Unsolved children: argmax at OR nodes (ties to the
    // lowest move index), uniform among the top_k best at AND nodes once the
    // AND node has more than top_k visits.
    Selection select_path(uint64_t& rng_state) const;

    // Highest-scoring Unsolved child, or kNoNode if none.
    NodeId best_unsolved_child(NodeId parent) const;

    void expand(NodeId leaf, const game::GameState& leaf_state,
                std::span<const double> policy);
    void backpropagate(std::span<const NodeId> path, double v_leaf);

    // Sets the node's own status (validating the transition), then recomputes
    // ancestors. Returns every status change, deepest node first.
    std::vector<StatusChange> set_status_and_propagate(NodeId id, NodeStatus status);

    void set_dispatched_job(NodeId id, std::optional<uint64_t> job);

    // Sub-proofs for ProvenWin leaves that were solved externally (by a job).
    using Resolver =
        std::function<std::optional<SolutionTree>(NodeId, const game::GameState&)>;
    SolutionTree extract_solution(const Resolver& resolver = {}) const;
    SolutionTree extract_solution_at(NodeId start, const Resolver& resolver = {}) const;

    // Debug aid for fuzz tests: recomputes every interior status from scratch
    // and returns them, without touching the tree.
    std::vector<NodeStatus> recompute_all_statuses() const;

private:
    NodeId select_child(NodeId parent, uint64_t* rng_state) const;

    TreeConfig config_;
    game::GameState root_state_;
    std::vector<SearchNode> nodes_;
    size_t expansions_ = 0;
};

NodeStatus derive_status(NodeKind kind, std::span<const NodeStatus> children);

// Re-derives everything from the game rules alone: move legality, one move
// per OR node, full fanout at AND nodes, Win terminals at leaves.
VerifyResult verify_solution(const SolutionTree& t);

size_t solution_node_count(const SolutionTree& t);

std::vector<uint8_t> encode_solution(const SolutionTree& t);
SolutionTree decode_solution(std::span<const uint8_t> bytes);
void save_solution_file(const SolutionTree& t, const std::filesystem::path& path);
SolutionTree load_solution_file(const std::filesystem::path& path);
std::string solution_to_text(const SolutionTree& t);

} // namespace solvent::tree
