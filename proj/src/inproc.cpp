#include "solvent/inproc.hpp"

#include <algorithm>

#include "solvent/util.hpp"

namespace solvent::inproc {

using transport::Channel;
using transport::Delivery;
using transport::PeerId;

namespace {

// Every message crosses the real codec, so the in-process mode exercises the
// same wire surface as TCP and any non-round-trippable payload fails loudly
// in the deterministic tests first.
wire::Message through_codec(const wire::Message& m)
{
    return wire::parse_message(wire::decode_frame(wire::encode_frame(wire::to_frame(m))));
}

} // namespace

class Port : public Channel {
public:
    Port(InprocBus* bus, PeerId id) : bus_(bus), id_(id) {}

    PeerId self() const override { return id_; }
    void send(PeerId to, const wire::Message& m) override { bus_->route(id_, to, m); }
    std::optional<Delivery> poll() override { return bus_->poll_for(id_); }
    std::vector<PeerId> take_disconnects() override
    {
        auto& slot = bus_->peers_.at(id_).disconnects;
        std::vector<PeerId> out;
        out.swap(slot);
        return out;
    }
    uint64_t now_micros() const override { return bus_->now_micros(); }

private:
    InprocBus* bus_;
    PeerId id_;
};

InprocBus::InprocBus(uint64_t seed, uint64_t max_latency_micros)
    : seed_(seed), max_latency_(max_latency_micros), rng_(derive_seed(seed, 0x1a7ec9))
{
}

PeerId InprocBus::add_peer()
{
    peers_.emplace_back();
    return static_cast<PeerId>(peers_.size() - 1);
}

std::unique_ptr<Channel> InprocBus::channel(PeerId id)
{
    if (id >= peers_.size()) throw ContractViolation("channel for unknown peer");
    return std::make_unique<Port>(this, id);
}

void InprocBus::kill_peer(PeerId id)
{
    if (id >= peers_.size() || !peers_[id].alive) return;
    peers_[id].alive = false;
    peers_[id].inbox.clear();
    for (PeerId p = 0; p < peers_.size(); ++p)
        if (p != id && peers_[p].alive) peers_[p].disconnects.push_back(id);
}

bool InprocBus::alive(PeerId id) const
{
    return id < peers_.size() && peers_[id].alive;
}

size_t InprocBus::undelivered() const
{
    size_t n = 0;
    for (const auto& p : peers_)
        if (p.alive) n += p.inbox.size();
    return n;
}

void InprocBus::route(PeerId from, PeerId to, const wire::Message& m)
{
    if (to >= peers_.size()) throw ContractViolation("send to unknown peer");
    if (!peers_[from].alive || !peers_[to].alive) return;
    uint64_t at = now_;
    if (max_latency_ > 0) at += splitmix64(rng_) % (max_latency_ + 1);
    uint64_t& link = link_clock_[{from, to}];
    at = std::max(at, link);
    link = at;
    peers_[to].inbox.push_back(Pending{at, next_seq_++, from, through_codec(m)});
}

std::optional<Delivery> InprocBus::poll_for(PeerId id)
{
    auto& inbox = peers_.at(id).inbox;
    auto best = inbox.end();
    for (auto it = inbox.begin(); it != inbox.end(); ++it) {
        if (it->deliver_at > now_) continue;
        if (best == inbox.end() || it->deliver_at < best->deliver_at ||
            (it->deliver_at == best->deliver_at && it->seq < best->seq))
            best = it;
    }
    if (best == inbox.end()) return std::nullopt;
    Delivery d{best->from, std::move(best->msg)};
    inbox.erase(best);
    return d;
}

} // namespace solvent::inproc
