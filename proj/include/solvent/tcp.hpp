#pragma once

#include <condition_variable>
#include <deque>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>

#include "solvent/transport.hpp"

namespace solvent::tcp {

struct Endpoint {
    std::string host = "127.0.0.1";
    uint16_t port = 0;
};

struct TcpConfig {
    transport::PeerId self = 0;
    // Used to resolve inbound handshakes to peer ids.
    transport::Topology topology;
    // Identity claimed on outbound connections.
    wire::PeerRole role = wire::PeerRole::Worker;
    uint32_t worker_id = 0;
    // Bind and accept when set (0 picks an ephemeral port, see port()).
    std::optional<uint16_t> listen_port;
    std::vector<std::pair<transport::PeerId, Endpoint>> dial;
    size_t max_outstanding_bytes = 256ull << 20;
    int dial_attempts = 200;
    int dial_retry_ms = 25;
};

// One party's TCP endpoint: optionally listens for inbound connections,
// optionally dials a fixed set of peers, and presents everything as a flat
// Channel. Inbound connections are identified by their first frame, which
// must be a WorkerHello; outbound connections send one automatically.
//
// Each connection is owned by a reader thread and a writer thread. Sends
// enqueue onto the writer; a connection whose queue exceeds the outstanding
// byte cap blocks the sender, except checkpoint publications, which coalesce
// to the newest version instead (receivers only ever want the latest).
class TcpChannel final : public transport::Channel {
public:
    explicit TcpChannel(TcpConfig cfg);
    ~TcpChannel() override;

    uint16_t port() const { return listen_actual_; }
    // True once every given peer is connected and identified; polls until
    // the deadline. The manager waits on its workers before dispatching.
    bool wait_for_peers(const std::vector<transport::PeerId>& peers, int timeout_ms);

    transport::PeerId self() const override { return cfg_.self; }
    void send(transport::PeerId to, const wire::Message& m) override;
    std::optional<transport::Delivery> poll() override;
    std::vector<transport::PeerId> take_disconnects() override;
    uint64_t now_micros() const override;

private:
    struct Conn {
        int fd = -1;
        transport::PeerId peer = transport::kNoPeer;
        std::thread reader;
        std::thread writer;
        std::mutex mu;
        std::condition_variable can_write;
        std::condition_variable has_data;
        // (message type, encoded frame)
        std::deque<std::pair<uint8_t, std::vector<uint8_t>>> outq;
        size_t out_bytes = 0;
        bool closed = false;
    };

    Conn* start_conn(int fd, transport::PeerId peer);
    void enqueue(Conn& c, const wire::Message& m);
    void reader_loop(Conn& c);
    void writer_loop(Conn& c);
    void accept_loop();
    void drop_conn(Conn& c);
    transport::PeerId identify(const wire::WorkerHello& h) const;

    TcpConfig cfg_;
    uint16_t listen_actual_ = 0;
    int listen_fd_ = -1;
    std::thread acceptor_;

    std::mutex mu_; // guards conns_ and routes_
    std::list<std::unique_ptr<Conn>> conns_;
    std::unordered_map<transport::PeerId, Conn*> routes_;

    std::mutex inbox_mu_;
    std::deque<transport::Delivery> inbox_;
    std::vector<transport::PeerId> disconnects_;

    bool shutting_down_ = false;
};

} // namespace solvent::tcp
