#pragma once

#include <deque>
#include <map>
#include <memory>

#include "solvent/transport.hpp"

namespace solvent::inproc {

// Deterministic single-threaded message fabric with a virtual clock.
//
// Messages honor per-link FIFO order. With max_latency_micros = 0 delivery is
// synchronous: anything sent before an advance() is visible to the receiver
// right after it. A nonzero latency bound injects seeded per-message delays,
// which reorders deliveries across links (never within one) — the chaos knob
// for the order-independence and worker-kill tests.
class InprocBus {
public:
    explicit InprocBus(uint64_t seed = 0, uint64_t max_latency_micros = 0);

    transport::PeerId add_peer();
    std::unique_ptr<transport::Channel> channel(transport::PeerId id);

    uint64_t now_micros() const { return now_; }
    void advance(uint64_t micros) { now_ += micros; }

    // Simulates a crashed process: undelivered traffic to it is dropped,
    // future sends to it vanish, and every other peer is told once that the
    // connection died. Messages it already sent stay deliverable, like bytes
    // that made it onto the network before the crash.
    void kill_peer(transport::PeerId id);
    bool alive(transport::PeerId id) const;

    size_t undelivered() const;

private:
    friend class Port;

    struct Pending {
        uint64_t deliver_at;
        uint64_t seq;
        transport::PeerId from;
        wire::Message msg;
    };

    struct PeerState {
        bool alive = true;
        std::deque<Pending> inbox;
        std::vector<transport::PeerId> disconnects;
    };

    void route(transport::PeerId from, transport::PeerId to, const wire::Message& m);
    std::optional<transport::Delivery> poll_for(transport::PeerId id);

    uint64_t seed_;
    uint64_t max_latency_;
    uint64_t rng_;
    uint64_t now_ = 0;
    uint64_t next_seq_ = 0;
    std::vector<PeerState> peers_;
    // last scheduled delivery time per (from, to), to keep links FIFO
    std::map<std::pair<transport::PeerId, transport::PeerId>, uint64_t> link_clock_;
};

} // namespace solvent::inproc
