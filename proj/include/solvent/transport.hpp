#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "solvent/messages.hpp"

namespace solvent::transport {

using PeerId = uint32_t;
inline constexpr PeerId kNoPeer = UINT32_MAX;

struct Delivery {
    PeerId from;
    wire::Message msg;
};

// One party's handle onto the message fabric. Implementations: the
// deterministic in-process bus and the TCP endpoints. All calls are
// non-blocking; parties drive themselves by polling.
class Channel {
public:
    virtual ~Channel() = default;

    virtual PeerId self() const = 0;
    virtual void send(PeerId to, const wire::Message& m) = 0;
    virtual std::optional<Delivery> poll() = 0;

    // Peers whose connection dropped since the last call; consumed on read.
    virtual std::vector<PeerId> take_disconnects() = 0;

    // Wall clock in microseconds. The in-process bus runs a virtual clock so
    // timing statistics are reproducible; TCP reports the real clock.
    virtual uint64_t now_micros() const = 0;
};

// Who sits where for a run. The manager sends jobs round-robin-by-load to
// `workers` and training events to `trainer` (if any); the trainer publishes
// checkpoints to everyone else.
struct Topology {
    PeerId manager = 0;
    std::vector<PeerId> workers;
    PeerId trainer = kNoPeer;

    bool has_trainer() const { return trainer != kNoPeer; }
};

} // namespace solvent::transport
