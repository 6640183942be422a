#pragma once
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "solvent/game.hpp"

namespace solvent::pcn {

// Cost recursion on raw node counts. Saturating, see oracle::saturating_add.
uint64_t or_node_cost(std::span<const uint64_t> winning_children);
uint64_t and_node_cost(std::span<const uint64_t> children);
double normalize_cost(uint64_t c, double v_max);

struct NetworkShape {
    int input = 0;
    int cells = 0;
    std::vector<int> hidden{128, 128};
    double v_max = 24.0;

    static NetworkShape for_game(game::GameId id, double v_max = 24.0);
    size_t param_count() const;
    bool operator==(const NetworkShape&) const = default;
};

struct Evaluation {
    std::vector<double> policy; // one entry per cell, exactly 0 on illegal cells
    double cost = 0.0;          // in [0, v_max]
};

enum class SampleSource : uint8_t { Selfplay = 0, SolvedQueue = 1 };

struct TrainingSample {
    std::vector<double> features;
    // Empty means no policy term for this sample (solved-queue positions).
    std::vector<double> policy_target;
    double cost_target = 0.0;
    SampleSource source = SampleSource::Selfplay;
};

struct StepInfo {
    double loss = 0.0;
    double grad_norm = 0.0;
    bool applied = false;
};

// Two-head MLP over GameState::encode: shared ReLU trunk, per-cell policy
// logits, scalar cost squashed to [0, v_max] by v_max * sigmoid(raw).
class Network {
public:
    Network() = default;
    static Network zero_init(NetworkShape shape);
    static Network random_init(NetworkShape shape, uint64_t seed);

    const NetworkShape& shape() const { return shape_; }
    std::span<const double> params() const { return params_; }
    std::span<double> params() { return params_; }

    Evaluation evaluate(const game::GameState& s) const;
    // Legality recovered from the encoding: a cell is legal when both stone
    // planes are zero.
    Evaluation evaluate_features(std::span<const double> features) const;
    // Same numerics as a loop over evaluate_features, row by row.
    std::vector<Evaluation> evaluate_batch(std::span<const std::vector<double>> rows) const;

    double loss(std::span<const TrainingSample> batch) const;
    // Mean loss over the batch; grad (same length as params) is overwritten.
    double loss_and_gradient(std::span<const TrainingSample> batch,
                             std::vector<double>& grad) const;
    // Plain gradient descent. Skips the update and reports applied=false when
    // the loss or gradient is not finite. grad_clip <= 0 disables clipping.
    StepInfo sgd_step(std::span<const TrainingSample> batch, double learning_rate,
                      double grad_clip = 10.0);

private:
    NetworkShape shape_;
    std::vector<double> params_;
};

struct CheckpointMeta {
    uint64_t train_step = 0;
    uint64_t selfplay_samples = 0;
    uint64_t solved_samples = 0;
    bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
    uint32_t version = 0;
    NetworkShape shape;
    std::vector<double> params;
    CheckpointMeta meta;

    Network to_network() const;
    static Checkpoint of(const Network& net, uint32_t version, CheckpointMeta meta = {});
};

std::vector<uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const uint8_t> bytes);
void save_checkpoint_file(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint_file(const std::filesystem::path& path);
size_t checkpoint_header_bytes(const NetworkShape& shape);

// Keeps the latest published checkpoint; versions must strictly increase.
class CheckpointSeries {
public:
    void publish(Checkpoint c);
    const Checkpoint* latest() const { return latest_ ? &*latest_ : nullptr; }

private:
    std::optional<Checkpoint> latest_;
};

} // namespace solvent::pcn
