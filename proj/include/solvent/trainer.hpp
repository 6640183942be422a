#pragma once

#include <deque>
#include <iosfwd>
#include <optional>

#include "solvent/cost_model.hpp"
#include "solvent/selfplay.hpp"
#include "solvent/transport.hpp"

namespace solvent::trainer {

// Bounded FIFO of positions, oldest evicted first. Decoded ply counts ride
// along so queue statistics don't have to re-parse the wire bytes.
class PositionQueue {
public:
    explicit PositionQueue(size_t capacity) : capacity_(capacity) {}

    struct Item {
        std::vector<uint8_t> position;
        uint32_t plies = 0;
        double cost_target = 0.0;
    };

    void push(Item item);
    size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    size_t capacity() const { return capacity_; }
    uint64_t arrivals() const { return arrivals_; }
    const Item& at(size_t i) const { return items_.at(i); } // 0 = oldest
    double mean_plies() const;

private:
    size_t capacity_;
    std::deque<Item> items_;
    uint64_t arrivals_ = 0;
};

// Samples from the most recent self-play games, bounded by game count.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t max_games) : max_games_(max_games) {}

    void add_game(selfplay::GameRecord rec);
    size_t games() const { return games_.size(); }
    size_t samples() const { return sample_count_; }
    bool empty() const { return sample_count_ == 0; }
    const pcn::TrainingSample& draw(uint64_t& rng) const;

private:
    size_t max_games_;
    std::deque<selfplay::GameRecord> games_;
    size_t sample_count_ = 0;
};

struct TrainerConfig {
    selfplay::SelfplayConfig selfplay;
    size_t queue_capacity = 1000;
    size_t replay_games = 2000;
    uint32_t games_per_iteration = 2;
    uint32_t steps_per_iteration = 4;
    uint32_t batch_size = 256;
    double learning_rate = 0.01;
    double grad_clip = 10.0;
    double solved_fraction = 0.10;
    // Mode switches: solved-only ingestion trains from the run root,
    // critical-only ingestion trains without the zero-cost queue.
    bool accept_solved = true;
    bool accept_critical = true;
    // Off by default: lost positions entering the solved queue at cost v_max.
    bool accept_loss_positions = false;
    uint32_t iteration_every_ticks = 64;
    uint64_t seed = 1;
};

struct IterationMetrics {
    uint64_t iteration = 0;
    bool idle = false;
    double loss = 0.0;
    size_t solved_queue = 0;
    size_t critical_queue = 0;
    double mean_critical_plies = 0.0;
};

std::string metrics_csv_header();
std::string to_csv(const IterationMetrics& m);

// Online fine-tuning: consumes solved and critical positions, plays
// self-play games from critical starts, mixes a tenth of each batch from the
// solved queue at cost target zero, and publishes one checkpoint per
// non-idle iteration with strictly increasing versions.
class Trainer {
public:
    Trainer(TrainerConfig cfg, game::GameState run_root, pcn::Network net,
            transport::Topology topo, transport::Channel& ch,
            std::ostream* metrics = nullptr);

    bool tick(); // false once shut down
    bool done() const { return done_; }

    void ingest_solved(std::vector<uint8_t> position, double cost_target = 0.0);
    void ingest_critical(std::vector<uint8_t> position);
    // One iteration: self-play, optimization, publication. Returns the
    // published checkpoint, or nothing when there was no data to learn from.
    std::optional<pcn::Checkpoint> run_iteration();

    const pcn::Network& network() const { return net_; }
    uint32_t version() const { return version_; }
    uint64_t iterations() const { return iteration_; }
    uint64_t solved_draws() const { return solved_draws_; }
    uint64_t replay_draws() const { return replay_draws_; }
    size_t rejected_ingests() const { return rejected_ingests_; }
    const PositionQueue& solved_queue() const { return solved_; }
    const PositionQueue& critical_queue() const { return critical_; }
    const ReplayBuffer& replay() const { return replay_; }
    // Start positions of the most recent iteration's games.
    const std::vector<std::vector<uint8_t>>& last_starts() const { return last_starts_; }

    static pcn::TrainingSample solved_sample(const game::GameState& s);

private:
    void handle(transport::Delivery d);
    pcn::TrainingSample draw_row();

    TrainerConfig cfg_;
    game::GameState run_root_;
    pcn::Network net_;
    transport::Topology topo_;
    transport::Channel& ch_;
    std::ostream* metrics_;
    uint64_t rng_;
    PositionQueue solved_;
    PositionQueue critical_;
    ReplayBuffer replay_;
    std::vector<std::vector<uint8_t>> last_starts_;
    uint32_t version_ = 0;
    uint64_t iteration_ = 0;
    uint64_t ticks_ = 0;
    uint64_t total_steps_ = 0;
    uint64_t solved_draws_ = 0;
    uint64_t replay_draws_ = 0;
    uint64_t selfplay_samples_ = 0;
    size_t rejected_ingests_ = 0;
    bool done_ = false;
};

struct PretrainConfig {
    selfplay::SelfplayConfig selfplay;
    uint32_t rounds = 1;
    uint32_t games_per_round = 500;
    uint32_t steps_per_round = 200;
    uint32_t batch_size = 256;
    double learning_rate = 0.01;
    double grad_clip = 10.0;
    uint64_t seed = 7;
};

// AlphaZero-style pre-training from the initial position. Mutates `net` in
// place and returns it wrapped as the version-0 checkpoint. Metrics lines
// are "step,loss". Throws on a non-finite loss.
pcn::Checkpoint pretrain(const game::GameState& root, pcn::Network& net,
                         const PretrainConfig& cfg, std::ostream* metrics = nullptr);

} // namespace solvent::trainer
