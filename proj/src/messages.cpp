#include "solvent/messages.hpp"

#include <string>

namespace solvent::wire {

namespace {

bool valid_type(uint8_t t)
{
    return t >= static_cast<uint8_t>(MsgType::JobAssign) &&
           t <= static_cast<uint8_t>(MsgType::Shutdown);
}

void put_blob(ByteWriter& w, std::span<const uint8_t> b)
{
    if (b.size() > UINT32_MAX) throw ContractViolation("blob too large for the wire");
    w.u32(static_cast<uint32_t>(b.size()));
    w.bytes(b);
}

std::vector<uint8_t> get_blob(ByteReader& r)
{
    uint32_t n = r.u32();
    auto b = r.bytes(n);
    return {b.begin(), b.end()};
}

uint8_t outcome_byte(game::Outcome o)
{
    return o == game::Outcome::Win ? 1 : 2;
}

game::Outcome parse_outcome(uint8_t b, size_t offset)
{
    if (b == 1) return game::Outcome::Win;
    if (b == 2) return game::Outcome::Loss;
    throw ProtocolError("bad outcome byte at offset " + std::to_string(offset));
}

} // namespace

const char* to_string(MsgType t)
{
    switch (t) {
    case MsgType::JobAssign: return "JobAssign";
    case MsgType::JobResult: return "JobResult";
    case MsgType::CheckpointPublish: return "CheckpointPublish";
    case MsgType::SolvedPos: return "SolvedPos";
    case MsgType::CriticalPos: return "CriticalPos";
    case MsgType::WorkerHello: return "WorkerHello";
    case MsgType::Shutdown: return "Shutdown";
    }
    return "?";
}

const char* to_string(JobStatus s)
{
    switch (s) {
    case JobStatus::Win: return "Win";
    case JobStatus::Loss: return "Loss";
    case JobStatus::Unknown: return "Unknown";
    case JobStatus::Malformed: return "Malformed";
    }
    return "?";
}

std::vector<uint8_t> encode_frame(const Frame& f)
{
    if (f.payload.size() > kMaxPayloadBytes)
        throw ContractViolation("frame payload exceeds 64 MiB");
    ByteWriter w;
    w.u32(static_cast<uint32_t>(f.payload.size() + 2));
    w.u8(static_cast<uint8_t>(f.type));
    w.u8(f.version);
    w.bytes(f.payload);
    return w.take();
}

Frame decode_frame(std::span<const uint8_t> bytes)
{
    ByteReader r(bytes);
    uint32_t length = r.u32();
    if (length < 2) throw ProtocolError("frame length below minimum at offset 0");
    if (static_cast<size_t>(length) - 2 > kMaxPayloadBytes)
        throw ProtocolError("frame length exceeds 64 MiB at offset 0");
    uint8_t type = r.u8();
    if (!valid_type(type))
        throw ProtocolError("unknown message type " + std::to_string(type) + " at offset 4");
    uint8_t version = r.u8();
    if (version != kProtocolVersion)
        throw ProtocolError("unsupported protocol version " + std::to_string(version) +
                            " at offset 5");
    auto payload = r.bytes(length - 2);
    r.expect_end();
    return Frame{static_cast<MsgType>(type), version, {payload.begin(), payload.end()}};
}

void FrameReader::feed(std::span<const uint8_t> bytes)
{
    // Drop consumed prefix occasionally so the buffer does not grow without
    // bound on long-lived connections.
    if (read_ > 0 && read_ >= buf_.size() / 2) {
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<ptrdiff_t>(read_));
        read_ = 0;
    }
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<Frame> FrameReader::next()
{
    size_t avail = buf_.size() - read_;
    if (avail < 4) return std::nullopt;
    const uint8_t* p = buf_.data() + read_;
    uint32_t length = static_cast<uint32_t>(p[0]) << 24 | static_cast<uint32_t>(p[1]) << 16 |
                      static_cast<uint32_t>(p[2]) << 8 | p[3];
    if (length < 2) throw ProtocolError("frame length below minimum at offset 0");
    if (static_cast<size_t>(length) - 2 > kMaxPayloadBytes)
        throw ProtocolError("frame length exceeds 64 MiB at offset 0");
    if (avail < 4 + static_cast<size_t>(length)) return std::nullopt;
    auto frame = decode_frame({p, 4 + static_cast<size_t>(length)});
    read_ += 4 + static_cast<size_t>(length);
    return frame;
}

MsgType type_of(const Message& m)
{
    switch (m.index()) {
    case 0: return MsgType::JobAssign;
    case 1: return MsgType::JobResult;
    case 2: return MsgType::CheckpointPublish;
    case 3: return MsgType::SolvedPos;
    case 4: return MsgType::CriticalPos;
    case 5: return MsgType::WorkerHello;
    default: return MsgType::Shutdown;
    }
}

Frame to_frame(const Message& m)
{
    ByteWriter w;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, JobAssign>) {
                w.u64(v.job_id);
                put_blob(w, v.position);
                w.u64(v.node_budget);
                w.u32(v.checkpoint_version);
            } else if constexpr (std::is_same_v<T, JobResult>) {
                w.u64(v.job_id);
                w.u8(static_cast<uint8_t>(v.status));
                w.u64(v.nodes);
                w.u64(v.wall_micros);
                w.u32(v.checkpoint_version);
                put_blob(w, v.proof);
            } else if constexpr (std::is_same_v<T, CheckpointPublish>) {
                w.bytes(v.blob);
            } else if constexpr (std::is_same_v<T, SolvedPos>) {
                w.u8(outcome_byte(v.outcome));
                put_blob(w, v.position);
            } else if constexpr (std::is_same_v<T, CriticalPos>) {
                put_blob(w, v.position);
            } else if constexpr (std::is_same_v<T, WorkerHello>) {
                w.u8(static_cast<uint8_t>(v.role));
                w.u32(v.worker_id);
                w.u32(v.checkpoint_version);
                w.u64(v.busy_micros);
                w.u64(v.wall_micros);
                w.u64(v.nodes_expended);
            } else {
                static_assert(std::is_same_v<T, Shutdown>);
            }
        },
        m);
    return Frame{type_of(m), kProtocolVersion, w.take()};
}

Message parse_message(const Frame& f)
{
    ByteReader r(f.payload);
    switch (f.type) {
    case MsgType::JobAssign: {
        JobAssign m;
        m.job_id = r.u64();
        m.position = get_blob(r);
        m.node_budget = r.u64();
        m.checkpoint_version = r.u32();
        r.expect_end();
        return m;
    }
    case MsgType::JobResult: {
        JobResult m;
        m.job_id = r.u64();
        uint8_t status = r.u8();
        if (status < static_cast<uint8_t>(JobStatus::Win) ||
            status > static_cast<uint8_t>(JobStatus::Malformed))
            throw ProtocolError("bad job status byte at offset 8");
        m.status = static_cast<JobStatus>(status);
        m.nodes = r.u64();
        m.wall_micros = r.u64();
        m.checkpoint_version = r.u32();
        m.proof = get_blob(r);
        r.expect_end();
        return m;
    }
    case MsgType::CheckpointPublish: {
        return CheckpointPublish{{f.payload.begin(), f.payload.end()}};
    }
    case MsgType::SolvedPos: {
        SolvedPos m;
        size_t at = r.offset();
        m.outcome = parse_outcome(r.u8(), at);
        m.position = get_blob(r);
        r.expect_end();
        return m;
    }
    case MsgType::CriticalPos: {
        CriticalPos m;
        m.position = get_blob(r);
        r.expect_end();
        return m;
    }
    case MsgType::WorkerHello: {
        WorkerHello m;
        uint8_t role = r.u8();
        if (role != static_cast<uint8_t>(PeerRole::Worker) &&
            role != static_cast<uint8_t>(PeerRole::Trainer))
            throw ProtocolError("bad peer role byte at offset 0");
        m.role = static_cast<PeerRole>(role);
        m.worker_id = r.u32();
        m.checkpoint_version = r.u32();
        m.busy_micros = r.u64();
        m.wall_micros = r.u64();
        m.nodes_expended = r.u64();
        r.expect_end();
        return m;
    }
    case MsgType::Shutdown: {
        r.expect_end();
        return Shutdown{};
    }
    }
    throw ProtocolError("unknown message type");
}

} // namespace solvent::wire
