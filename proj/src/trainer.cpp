#include "solvent/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "solvent/util.hpp"

namespace solvent::trainer {

using game::GameState;

void PositionQueue::push(Item item)
{
    ++arrivals_;
    if (items_.size() >= capacity_) items_.pop_front();
    items_.push_back(std::move(item));
}

double PositionQueue::mean_plies() const
{
    if (items_.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& it : items_) sum += it.plies;
    return sum / static_cast<double>(items_.size());
}

void ReplayBuffer::add_game(selfplay::GameRecord rec)
{
    sample_count_ += rec.samples.size();
    games_.push_back(std::move(rec));
    while (games_.size() > max_games_) {
        sample_count_ -= games_.front().samples.size();
        games_.pop_front();
    }
}

const pcn::TrainingSample& ReplayBuffer::draw(uint64_t& rng) const
{
    if (sample_count_ == 0) throw ContractViolation("draw from an empty replay buffer");
    uint64_t ticket = splitmix64(rng) % sample_count_;
    for (const auto& g : games_) {
        if (ticket < g.samples.size()) return g.samples[ticket];
        ticket -= g.samples.size();
    }
    return games_.back().samples.back(); // unreachable
}

std::string metrics_csv_header()
{
    return "iteration,loss,solved_queue,critical_queue,mean_critical_plies";
}

std::string to_csv(const IterationMetrics& m)
{
    char buf[160];
    if (m.idle)
        std::snprintf(buf, sizeof buf, "%llu,nan,%zu,%zu,%.3f",
                      static_cast<unsigned long long>(m.iteration), m.solved_queue,
                      m.critical_queue, m.mean_critical_plies);
    else
        std::snprintf(buf, sizeof buf, "%llu,%.6f,%zu,%zu,%.3f",
                      static_cast<unsigned long long>(m.iteration), m.loss, m.solved_queue,
                      m.critical_queue, m.mean_critical_plies);
    return buf;
}

Trainer::Trainer(TrainerConfig cfg, GameState run_root, pcn::Network net,
                 transport::Topology topo, transport::Channel& ch, std::ostream* metrics)
    : cfg_(cfg),
      run_root_(std::move(run_root)),
      net_(std::move(net)),
      topo_(std::move(topo)),
      ch_(ch),
      metrics_(metrics),
      rng_(derive_seed(cfg.seed, 0x0f7)),
      solved_(cfg.queue_capacity),
      critical_(cfg.queue_capacity),
      replay_(cfg.replay_games)
{
}

pcn::TrainingSample Trainer::solved_sample(const GameState& s)
{
    // Cost target zero and no policy term: the position is already won, the
    // network only needs to learn that it is cheap.
    return pcn::TrainingSample{s.encode(), {}, 0.0, pcn::SampleSource::SolvedQueue};
}

void Trainer::ingest_solved(std::vector<uint8_t> position, double cost_target)
{
    try {
        auto s = game::decode_position(position);
        solved_.push({std::move(position), static_cast<uint32_t>(s.history().size()),
                      cost_target});
    } catch (const ProtocolError&) {
        ++rejected_ingests_;
    }
}

void Trainer::ingest_critical(std::vector<uint8_t> position)
{
    try {
        auto s = game::decode_position(position);
        critical_.push({std::move(position), static_cast<uint32_t>(s.history().size()), 0.0});
    } catch (const ProtocolError&) {
        ++rejected_ingests_;
    }
}

void Trainer::handle(transport::Delivery d)
{
    if (auto* sp = std::get_if<wire::SolvedPos>(&d.msg)) {
        if (!cfg_.accept_solved) return;
        if (sp->outcome == game::Outcome::Win)
            ingest_solved(std::move(sp->position));
        else if (cfg_.accept_loss_positions)
            ingest_solved(std::move(sp->position), cfg_.selfplay.tree.v_max);
        return;
    }
    if (auto* cp = std::get_if<wire::CriticalPos>(&d.msg)) {
        if (cfg_.accept_critical) ingest_critical(std::move(cp->position));
        return;
    }
    if (std::get_if<wire::Shutdown>(&d.msg)) done_ = true;
}

pcn::TrainingSample Trainer::draw_row()
{
    bool want_solved = !solved_.empty() &&
                       (replay_.empty() ||
                        static_cast<double>(splitmix64(rng_) >> 11) * 0x1.0p-53 <
                            cfg_.solved_fraction);
    if (want_solved) {
        ++solved_draws_;
        const auto& item = solved_.at(splitmix64(rng_) % solved_.size());
        auto row = solved_sample(game::decode_position(item.position));
        row.cost_target = item.cost_target;
        return row;
    }
    ++replay_draws_;
    return replay_.draw(rng_);
}

std::optional<pcn::Checkpoint> Trainer::run_iteration()
{
    ++iteration_;
    last_starts_.clear();
    for (uint32_t g = 0; g < cfg_.games_per_iteration; ++g) {
        GameState start = run_root_;
        if (!critical_.empty()) {
            size_t i = splitmix64(rng_) % critical_.size();
            start = game::decode_position(critical_.at(i).position);
            last_starts_.push_back(critical_.at(i).position);
        } else {
            last_starts_.push_back(game::encode_position(start));
        }
        if (start.is_terminal()) continue;
        auto rec = selfplay::play_game(net_, start, cfg_.selfplay, rng_);
        selfplay_samples_ += rec.samples.size();
        replay_.add_game(std::move(rec));
    }

    IterationMetrics m;
    m.iteration = iteration_;
    m.solved_queue = solved_.size();
    m.critical_queue = critical_.size();
    m.mean_critical_plies = critical_.mean_plies();

    if (replay_.empty() && solved_.empty()) {
        m.idle = true;
        if (metrics_) *metrics_ << to_csv(m) << '\n';
        return std::nullopt;
    }

    double loss_sum = 0.0;
    std::vector<pcn::TrainingSample> batch(cfg_.batch_size);
    for (uint32_t step = 0; step < cfg_.steps_per_iteration; ++step) {
        for (auto& row : batch) row = draw_row();
        auto info = net_.sgd_step(batch, cfg_.learning_rate, cfg_.grad_clip);
        if (!info.applied || !std::isfinite(info.loss))
            throw Error("training diverged: non-finite loss at step " +
                        std::to_string(total_steps_));
        loss_sum += info.loss;
        ++total_steps_;
    }
    m.loss = cfg_.steps_per_iteration ? loss_sum / cfg_.steps_per_iteration : 0.0;
    if (metrics_) *metrics_ << to_csv(m) << '\n';

    ++version_;
    pcn::CheckpointMeta meta{total_steps_, selfplay_samples_, solved_.arrivals()};
    auto cp = pcn::Checkpoint::of(net_, version_, meta);
    auto blob = pcn::encode_checkpoint(cp);
    ch_.send(topo_.manager, wire::CheckpointPublish{blob});
    for (auto w : topo_.workers) ch_.send(w, wire::CheckpointPublish{blob});
    return cp;
}

bool Trainer::tick()
{
    if (done_) return false;
    ++ticks_;
    while (auto d = ch_.poll()) handle(std::move(*d));
    for (transport::PeerId p : ch_.take_disconnects())
        if (p == topo_.manager) done_ = true;
    if (!done_ && cfg_.iteration_every_ticks && ticks_ % cfg_.iteration_every_ticks == 0)
        run_iteration();
    return !done_;
}

pcn::Checkpoint pretrain(const GameState& root, pcn::Network& net, const PretrainConfig& cfg,
                         std::ostream* metrics)
{
    uint64_t rng = derive_seed(cfg.seed, 0x9047);
    ReplayBuffer pool(static_cast<size_t>(cfg.rounds) * cfg.games_per_round + 1);
    uint64_t step_no = 0;
    std::vector<pcn::TrainingSample> batch(cfg.batch_size);
    for (uint32_t round = 0; round < cfg.rounds; ++round) {
        for (uint32_t g = 0; g < cfg.games_per_round; ++g)
            pool.add_game(selfplay::play_game(net, root, cfg.selfplay, rng));
        for (uint32_t s = 0; s < cfg.steps_per_round; ++s) {
            for (auto& row : batch) row = pool.draw(rng);
            auto info = net.sgd_step(batch, cfg.learning_rate, cfg.grad_clip);
            if (!info.applied || !std::isfinite(info.loss))
                throw Error("pretraining diverged: non-finite loss at step " +
                            std::to_string(step_no));
            if (metrics) *metrics << step_no << ',' << info.loss << '\n';
            ++step_no;
        }
    }
    return pcn::Checkpoint::of(net, 0,
                               pcn::CheckpointMeta{step_no, pool.samples(), 0});
}

} // namespace solvent::trainer
