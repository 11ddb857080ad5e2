// Wire messages exchanged between workers, primaries and clients, plus the
// Outbox through which state machines emit messages and timer requests.

#pragma once

#include <string>
#include <variant>
#include <vector>

#include "narwhal/core_types.hpp"

namespace narwhal {

inline constexpr std::int32_t kPrimaryRole = -1;

struct NodeAddr {
    ValidatorId validator;
    std::int32_t role = kPrimaryRole;  // kPrimaryRole or a worker id

    static NodeAddr primary(ValidatorId v) { return {v, kPrimaryRole}; }
    static NodeAddr worker(ValidatorId v, WorkerId w) { return {v, static_cast<std::int32_t>(w)}; }

    bool is_primary() const { return role == kPrimaryRole; }
    auto operator<=>(const NodeAddr&) const = default;
};

inline std::string to_string(const NodeAddr& a) {
    return to_string(a.validator) + (a.is_primary() ? std::string(".p") : ".w" + std::to_string(a.role));
}

// Worker plane
struct ClientTx {
    Transaction tx;
};
struct ReportBatch {
    Batch batch;
    Digest digest;  // digest claimed by the sender
};
struct BatchAck {
    Digest digest;
    ValidatorId acker;
};
struct RequestBatches {
    std::vector<Digest> digests;
};
struct BatchList {
    std::vector<Batch> batches;
};
struct Synchronize {
    std::vector<Digest> digests;
    ValidatorId source_hint;
};
struct ReportOwnBatch {
    Digest digest;
    WorkerId worker_id;
    SimTime sealed_at;
};
struct ReportOthersBatch {
    Digest digest;
    WorkerId worker_id;
};

// Primary plane
struct HeaderMsg {
    Header header;
};
struct VoteMsg {
    Vote vote;
};
struct CertificateMsg {
    Certificate certificate;
};
struct RequestVote {
    Header header;
};
struct FetchCertificates {
    std::vector<Digest> digests;
    Round round_lo = 0;
    Round round_hi = 0;  // empty range when round_hi < round_lo
};
struct CertificateRange {
    std::vector<Certificate> certificates;
    Round gc_round = 0;
};

using Message = std::variant<ClientTx, ReportBatch, BatchAck, RequestBatches, BatchList, Synchronize, ReportOwnBatch,
                             ReportOthersBatch, HeaderMsg, VoteMsg, CertificateMsg, RequestVote, FetchCertificates,
                             CertificateRange>;

inline const char* kind_name(const Message& m) {
    static constexpr const char* kNames[] = {
        "ClientTx",       "ReportBatch",       "BatchAck",  "RequestBatches", "BatchList",
        "Synchronize",    "ReportOwnBatch",    "ReportOthersBatch", "HeaderMsg", "VoteMsg",
        "CertificateMsg", "RequestVote",       "FetchCertificates", "CertificateRange"};
    return kNames[m.index()];
}

/// Digest that best identifies a message in traces; zero digest if none.
inline Digest key_digest(const Message& m) {
    return std::visit(
        [](const auto& msg) -> Digest {
            using T = std::decay_t<decltype(msg)>;
            if constexpr (std::is_same_v<T, ClientTx>) return msg.tx.digest();
            else if constexpr (std::is_same_v<T, ReportBatch> || std::is_same_v<T, BatchAck> ||
                               std::is_same_v<T, ReportOwnBatch> || std::is_same_v<T, ReportOthersBatch>)
                return msg.digest;
            else if constexpr (std::is_same_v<T, HeaderMsg> || std::is_same_v<T, RequestVote>)
                return msg.header.digest();
            else if constexpr (std::is_same_v<T, VoteMsg>) return msg.vote.header_digest;
            else if constexpr (std::is_same_v<T, CertificateMsg>) return msg.certificate.digest();
            else if constexpr (std::is_same_v<T, RequestBatches> || std::is_same_v<T, Synchronize> ||
                               std::is_same_v<T, FetchCertificates>)
                return msg.digests.empty() ? Digest{} : msg.digests.front();
            else if constexpr (std::is_same_v<T, BatchList>)
                return msg.batches.empty() ? Digest{} : msg.batches.front().digest();
            else return msg.certificates.empty() ? Digest{} : msg.certificates.front().digest();
        },
        m);
}

enum class TimerKind : std::uint8_t {
    batch_timeout,
    batch_retransmit,
    sync_retry,
    header_delay,
    vote_retry,
    cert_sync,
    exec_retry,
};

struct Timer {
    TimerKind kind;
    std::uint64_t tag = 0;
};

struct Outgoing {
    NodeAddr to;
    Message message;
};

struct TimerRequest {
    SimTime delay;
    Timer timer;
};

/// Collects what a state machine wants to send or schedule while handling one event.
struct Outbox {
    std::vector<Outgoing> messages;
    std::vector<TimerRequest> timers;

    void send(NodeAddr to, Message m) { messages.push_back({to, std::move(m)}); }
    void schedule(SimTime delay, Timer t) { timers.push_back({delay, t}); }
    void clear() {
        messages.clear();
        timers.clear();
    }
};

}  // namespace narwhal
