#include "solvent/tcp.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace solvent::tcp {

using transport::Delivery;
using transport::PeerId;

namespace {

void tune_socket(int fd)
{
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    // A peer that stops reading for this long is treated as dead; the
    // failed send tears the connection down instead of hanging a thread.
    timeval tv{5, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

bool send_all(int fd, const uint8_t* data, size_t len)
{
    while (len > 0) {
        ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
        if (n <= 0) return false;
        data += n;
        len -= static_cast<size_t>(n);
    }
    return true;
}

int dial_once(const Endpoint& ep)
{
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(ep.host.c_str(), std::to_string(ep.port).c_str(), &hints, &res) != 0)
        throw Error("cannot resolve " + ep.host);
    int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    return fd;
}

} // namespace

TcpChannel::TcpChannel(TcpConfig cfg) : cfg_(std::move(cfg))
{
    if (cfg_.listen_port) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw Error(std::string("socket: ") + strerror(errno));
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(*cfg_.listen_port);
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
            throw Error(std::string("bind: ") + strerror(errno));
        if (::listen(listen_fd_, 64) < 0)
            throw Error(std::string("listen: ") + strerror(errno));
        sockaddr_in got{};
        socklen_t len = sizeof got;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&got), &len);
        listen_actual_ = ntohs(got.sin_port);
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    for (const auto& [peer, ep] : cfg_.dial) {
        int fd = -1;
        for (int attempt = 0; fd < 0 && attempt < cfg_.dial_attempts; ++attempt) {
            fd = dial_once(ep);
            if (fd < 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.dial_retry_ms));
        }
        if (fd < 0)
            throw Error("could not connect to " + ep.host + ":" + std::to_string(ep.port));
        tune_socket(fd);
        Conn* c = start_conn(fd, peer);
        // First frame on an outbound link states who we are.
        wire::WorkerHello hello;
        hello.role = cfg_.role;
        hello.worker_id = cfg_.worker_id;
        enqueue(*c, hello);
    }
}

TcpChannel::~TcpChannel()
{
    {
        std::lock_guard lk(mu_);
        shutting_down_ = true;
    }
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
    }
    if (acceptor_.joinable()) acceptor_.join();
    // conns_ is append-only and the acceptor is gone, so iterating unlocked
    // is safe. Read sides close first; writers drain their queues (send
    // timeouts bound the wait), then sockets go away.
    for (auto& c : conns_) {
        {
            std::lock_guard lk(c->mu);
            c->closed = true;
        }
        c->has_data.notify_all();
        c->can_write.notify_all();
        ::shutdown(c->fd, SHUT_RD);
    }
    for (auto& c : conns_) {
        if (c->reader.joinable()) c->reader.join();
        if (c->writer.joinable()) c->writer.join();
        ::close(c->fd);
    }
}

PeerId TcpChannel::identify(const wire::WorkerHello& h) const
{
    if (h.role == wire::PeerRole::Trainer) return cfg_.topology.trainer;
    if (h.worker_id < cfg_.topology.workers.size())
        return cfg_.topology.workers[h.worker_id];
    return transport::kNoPeer;
}

TcpChannel::Conn* TcpChannel::start_conn(int fd, PeerId peer)
{
    std::lock_guard lk(mu_);
    conns_.push_back(std::make_unique<Conn>());
    Conn* c = conns_.back().get();
    c->fd = fd;
    c->peer = peer;
    if (peer != transport::kNoPeer) routes_[peer] = c;
    c->reader = std::thread([this, c] { reader_loop(*c); });
    c->writer = std::thread([this, c] { writer_loop(*c); });
    return c;
}

void TcpChannel::accept_loop()
{
    for (;;) {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR) continue;
            return;
        }
        tune_socket(fd);
        start_conn(fd, transport::kNoPeer);
    }
}

void TcpChannel::enqueue(Conn& c, const wire::Message& m)
{
    auto frame = wire::encode_frame(wire::to_frame(m));
    uint8_t type = frame[4];
    std::unique_lock lk(c.mu);
    if (type == static_cast<uint8_t>(wire::MsgType::CheckpointPublish)) {
        // Last value wins: replace a still-queued publication rather than
        // queueing behind it, so slow links skip intermediate versions.
        for (auto& [qtype, qbytes] : c.outq)
            if (qtype == type) {
                c.out_bytes += frame.size();
                c.out_bytes -= qbytes.size();
                qbytes = std::move(frame);
                return;
            }
    } else {
        c.can_write.wait(lk, [&] {
            return c.closed || c.out_bytes < cfg_.max_outstanding_bytes;
        });
    }
    if (c.closed) return;
    c.out_bytes += frame.size();
    c.outq.emplace_back(type, std::move(frame));
    lk.unlock();
    c.has_data.notify_one();
}

void TcpChannel::writer_loop(Conn& c)
{
    for (;;) {
        std::vector<uint8_t> frame;
        {
            std::unique_lock lk(c.mu);
            c.has_data.wait(lk, [&] { return c.closed || !c.outq.empty(); });
            if (c.outq.empty()) return; // closed with nothing left to flush
            frame = std::move(c.outq.front().second);
            c.outq.pop_front();
            c.out_bytes -= frame.size();
        }
        c.can_write.notify_all();
        if (!send_all(c.fd, frame.data(), frame.size())) {
            drop_conn(c);
            return;
        }
    }
}

void TcpChannel::reader_loop(Conn& c)
{
    wire::FrameReader fr;
    std::vector<uint8_t> buf(64 * 1024);
    for (;;) {
        ssize_t n = ::recv(c.fd, buf.data(), buf.size(), 0);
        if (n <= 0) break;
        try {
            fr.feed({buf.data(), static_cast<size_t>(n)});
            while (auto f = fr.next()) {
                auto msg = wire::parse_message(*f);
                if (c.peer == transport::kNoPeer) {
                    auto* h = std::get_if<wire::WorkerHello>(&msg);
                    PeerId who = h ? identify(*h) : transport::kNoPeer;
                    if (who == transport::kNoPeer)
                        throw ProtocolError("first frame did not identify the peer");
                    std::lock_guard lk(mu_);
                    c.peer = who;
                    routes_[who] = &c;
                }
                std::lock_guard lk(inbox_mu_);
                inbox_.push_back(Delivery{c.peer, std::move(msg)});
            }
        } catch (const ProtocolError&) {
            break; // garbage on the stream severs the link
        }
    }
    drop_conn(c);
}

void TcpChannel::drop_conn(Conn& c)
{
    {
        std::lock_guard lk(c.mu);
        if (c.closed) return; // already torn down by the channel or a twin call
        c.closed = true;
    }
    c.has_data.notify_all();
    c.can_write.notify_all();
    ::shutdown(c.fd, SHUT_RDWR);
    PeerId who;
    bool announce;
    {
        std::lock_guard lk(mu_);
        who = c.peer;
        announce = who != transport::kNoPeer && !shutting_down_;
        auto it = routes_.find(who);
        if (it != routes_.end() && it->second == &c) routes_.erase(it);
    }
    if (announce) {
        std::lock_guard lk(inbox_mu_);
        disconnects_.push_back(who);
    }
}

bool TcpChannel::wait_for_peers(const std::vector<PeerId>& peers, int timeout_ms)
{
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
        {
            std::lock_guard lk(mu_);
            bool all = true;
            for (PeerId p : peers) all = all && routes_.count(p) > 0;
            if (all) return true;
        }
        if (std::chrono::steady_clock::now() >= deadline) return false;
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
}

void TcpChannel::send(PeerId to, const wire::Message& m)
{
    Conn* c = nullptr;
    {
        std::lock_guard lk(mu_);
        auto it = routes_.find(to);
        if (it != routes_.end()) c = it->second;
    }
    if (c) enqueue(*c, m); // no route means the peer is gone; the drop surfaced already
}

std::optional<Delivery> TcpChannel::poll()
{
    std::lock_guard lk(inbox_mu_);
    if (inbox_.empty()) return std::nullopt;
    auto d = std::move(inbox_.front());
    inbox_.pop_front();
    return d;
}

std::vector<PeerId> TcpChannel::take_disconnects()
{
    std::lock_guard lk(inbox_mu_);
    return std::exchange(disconnects_, {});
}

uint64_t TcpChannel::now_micros() const
{
    return static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                     std::chrono::steady_clock::now().time_since_epoch())
                                     .count());
}

} // namespace solvent::tcp
