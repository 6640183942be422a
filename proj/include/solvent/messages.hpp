#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "solvent/game.hpp"
#include "solvent/util.hpp"

namespace solvent::wire {

inline constexpr uint8_t kProtocolVersion = 1;
inline constexpr size_t kMaxPayloadBytes = 64ull << 20;
inline constexpr size_t kFrameHeaderBytes = 6; // length + type + version

enum class MsgType : uint8_t {
    JobAssign = 1,
    JobResult = 2,
    CheckpointPublish = 3,
    SolvedPos = 4,
    CriticalPos = 5,
    WorkerHello = 6,
    Shutdown = 7,
};

const char* to_string(MsgType t);

struct Frame {
    MsgType type;
    uint8_t version = kProtocolVersion;
    std::vector<uint8_t> payload;

    bool operator==(const Frame&) const = default;
};

std::vector<uint8_t> encode_frame(const Frame& f);

// One-shot decode of a complete frame. Throws ProtocolError (with the byte
// offset of the problem) on truncation, oversize, bad type, or bad version.
Frame decode_frame(std::span<const uint8_t> bytes);

// Incremental decoder for a byte stream. feed() buffers, next() yields
// complete frames in order and throws ProtocolError as soon as a malformed
// prefix is visible; oversize frames are rejected from the length word alone,
// before their payload is buffered.
class FrameReader {
public:
    void feed(std::span<const uint8_t> bytes);
    std::optional<Frame> next();
    size_t buffered() const { return buf_.size() - read_; }

private:
    std::vector<uint8_t> buf_;
    size_t read_ = 0;
};

enum class JobStatus : uint8_t {
    Win = 1,
    Loss = 2,
    Unknown = 3,
    Malformed = 4, // position did not decode; distinct from a budget miss
};

const char* to_string(JobStatus s);

struct JobAssign {
    uint64_t job_id = 0;
    std::vector<uint8_t> position;
    uint64_t node_budget = 0;
    uint32_t checkpoint_version = 0;

    bool operator==(const JobAssign&) const = default;
};

struct JobResult {
    uint64_t job_id = 0;
    JobStatus status = JobStatus::Unknown;
    uint64_t nodes = 0;
    uint64_t wall_micros = 0;
    uint32_t checkpoint_version = 0; // version in force when the job started
    std::vector<uint8_t> proof;      // solution-tree bytes, Win results only

    bool operator==(const JobResult&) const = default;
};

struct CheckpointPublish {
    std::vector<uint8_t> blob; // encode_checkpoint output, self-describing

    bool operator==(const CheckpointPublish&) const = default;
};

struct SolvedPos {
    game::Outcome outcome = game::Outcome::Win;
    std::vector<uint8_t> position;

    bool operator==(const SolvedPos&) const = default;
};

struct CriticalPos {
    std::vector<uint8_t> position;

    bool operator==(const CriticalPos&) const = default;
};

enum class PeerRole : uint8_t {
    Worker = 1,
    Trainer = 2,
};

struct WorkerHello {
    PeerRole role = PeerRole::Worker;
    uint32_t worker_id = 0;
    uint32_t checkpoint_version = 0;
    uint64_t busy_micros = 0;
    uint64_t wall_micros = 0;
    uint64_t nodes_expended = 0;

    bool operator==(const WorkerHello&) const = default;
};

struct Shutdown {
    bool operator==(const Shutdown&) const = default;
};

using Message = std::variant<JobAssign, JobResult, CheckpointPublish, SolvedPos,
                             CriticalPos, WorkerHello, Shutdown>;

MsgType type_of(const Message& m);
Frame to_frame(const Message& m);
Message parse_message(const Frame& f);

} // namespace solvent::wire
