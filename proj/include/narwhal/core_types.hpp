// Shared protocol data model: identifiers, digests, canonical encoding,
// committees and quorum arithmetic, transactions, batches, headers, votes
// and certificates.

#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <openssl/evp.h>

namespace narwhal {

using Bytes = std::vector<std::uint8_t>;
using Round = std::uint64_t;
using Stake = std::uint64_t;
using Epoch = std::uint64_t;
using WorkerId = std::uint32_t;
using SimTime = std::int64_t;  // milliseconds of simulated time

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidatorId {
    std::uint32_t value = 0;

    constexpr auto operator<=>(const ValidatorId&) const = default;
};

inline std::string to_string(ValidatorId id) { return "v" + std::to_string(id.value); }

struct Digest {
    std::array<std::uint8_t, 32> bytes{};

    constexpr auto operator<=>(const Digest&) const = default;

    std::string hex() const {
        static constexpr char kHex[] = "0123456789abcdef";
        std::string out;
        out.reserve(64);
        for (auto b : bytes) {
            out.push_back(kHex[b >> 4]);
            out.push_back(kHex[b & 0xf]);
        }
        return out;
    }

    std::string short_hex() const { return hex().substr(0, 8); }
};

}  // namespace narwhal

template <>
struct std::hash<narwhal::ValidatorId> {
    std::size_t operator()(narwhal::ValidatorId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};

template <>
struct std::hash<narwhal::Digest> {
    std::size_t operator()(const narwhal::Digest& d) const noexcept {
        std::size_t h = 0;
        for (int i = 0; i < 8; ++i) h = (h << 8) | d.bytes[i];
        return h;
    }
};

namespace narwhal {

// Canonical encoding: big-endian integers, u32 length prefixes for
// variable-size fields, fields in declaration order.
class Encoder {
public:
    Encoder& u8(std::uint8_t v) {
        buf_.push_back(v);
        return *this;
    }
    Encoder& u32(std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> s));
        return *this;
    }
    Encoder& u64(std::uint64_t v) {
        for (int s = 56; s >= 0; s -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> s));
        return *this;
    }
    Encoder& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
    Encoder& bytes(std::span<const std::uint8_t> b) {
        u32(static_cast<std::uint32_t>(b.size()));
        buf_.insert(buf_.end(), b.begin(), b.end());
        return *this;
    }
    Encoder& str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
        return *this;
    }
    Encoder& digest(const Digest& d) {
        buf_.insert(buf_.end(), d.bytes.begin(), d.bytes.end());
        return *this;
    }
    Encoder& validator(ValidatorId v) { return u32(v.value); }

    const Bytes& data() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

/// SHA-256 of the given bytes.
inline Digest digest_of(std::span<const std::uint8_t> content) {
    Digest d;
    unsigned int len = 0;
    if (EVP_Digest(content.data(), content.size(), d.bytes.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
        throw ProtocolError("sha256 failed");
    return d;
}

inline Digest digest_of(std::string_view s) {
    return digest_of(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

// ---------------------------------------------------------------------------
// Committee

class Committee {
public:
    struct Member {
        ValidatorId id;
        Stake stake;
    };

    Committee() = default;

    Committee(std::vector<Member> members, Epoch epoch = 0) : members_(std::move(members)), epoch_(epoch) {
        if (members_.empty()) throw ProtocolError("committee must not be empty");
        std::sort(members_.begin(), members_.end(), [](const Member& a, const Member& b) { return a.id < b.id; });
        for (std::size_t i = 0; i < members_.size(); ++i) {
            if (members_[i].stake == 0) throw ProtocolError("validator stake must be positive");
            if (i > 0 && members_[i].id == members_[i - 1].id) throw ProtocolError("duplicate validator id");
            total_ += members_[i].stake;
        }
    }

    /// Unit-stake committee with ids 1..n.
    static Committee uniform(std::uint32_t n) {
        std::vector<Member> m;
        for (std::uint32_t i = 1; i <= n; ++i) m.push_back({ValidatorId{i}, 1});
        return Committee(std::move(m));
    }

    const std::vector<Member>& members() const { return members_; }
    std::size_t size() const { return members_.size(); }
    Epoch epoch() const { return epoch_; }
    Stake total_stake() const { return total_; }

    /// Largest Byzantine stake tolerated: total >= 3f + 1.
    Stake max_faulty() const { return (total_ - 1) / 3; }
    /// n - f; equals 2f + 1 when total = 3f + 1.
    Stake quorum_threshold() const { return total_ - max_faulty(); }
    Stake validity_threshold() const { return max_faulty() + 1; }

    bool contains(ValidatorId id) const { return find(id) != nullptr; }

    Stake stake(ValidatorId id) const {
        const Member* m = find(id);
        if (!m) throw ProtocolError("invalid voter: unknown validator " + to_string(id));
        return m->stake;
    }

    template <typename Range>
    Stake stake_of(const Range& voters) const {
        Stake s = 0;
        for (ValidatorId v : voters) s += stake(v);
        return s;
    }

    std::vector<ValidatorId> ids() const {
        std::vector<ValidatorId> out;
        for (const auto& m : members_) out.push_back(m.id);
        return out;
    }

private:
    const Member* find(ValidatorId id) const {
        auto it = std::lower_bound(members_.begin(), members_.end(), id,
                                   [](const Member& m, ValidatorId v) { return m.id < v; });
        return (it != members_.end() && it->id == id) ? &*it : nullptr;
    }

    std::vector<Member> members_;
    Epoch epoch_ = 0;
    Stake total_ = 0;
};

inline bool quorum_reached(const Committee& committee, const std::set<ValidatorId>& voters) {
    return committee.stake_of(voters) >= committee.quorum_threshold();
}

inline bool validity_reached(const Committee& committee, const std::set<ValidatorId>& voters) {
    return committee.stake_of(voters) >= committee.validity_threshold();
}

// ---------------------------------------------------------------------------
// Transactions and batches

inline constexpr std::size_t kMinTransactionSize = 9;

struct Transaction {
    Bytes payload;
    std::uint64_t gas_fee = 0;
    std::uint64_t submitter = 0;

    void encode(Encoder& e) const { e.bytes(payload).u64(gas_fee).u64(submitter); }

    Digest digest() const {
        Encoder e;
        e.str("tx");
        encode(e);
        return digest_of(e.data());
    }

    bool operator==(const Transaction&) const = default;
};

struct Batch {
    std::vector<Transaction> transactions;
    ValidatorId author;
    WorkerId worker_id = 0;

    void encode(Encoder& e) const {
        e.validator(author).u32(worker_id).u32(static_cast<std::uint32_t>(transactions.size()));
        for (const auto& tx : transactions) tx.encode(e);
    }

    Digest digest() const {
        if (transactions.empty()) throw ProtocolError("batch must not be empty");
        Encoder e;
        e.str("batch");
        encode(e);
        return digest_of(e.data());
    }

    bool operator==(const Batch&) const = default;
};

// ---------------------------------------------------------------------------
// Signatures: unforgeable tokens. A token is a keyed digest over the signed
// message; only the KeyRing knows the per-validator keys, so a node can sign
// only with the Signer it was handed.

struct Signature {
    Digest tag;
    auto operator<=>(const Signature&) const = default;
};

class KeyRing {
public:
    explicit KeyRing(std::uint64_t seed = 0) : seed_(seed) {}

    Signature sign(ValidatorId signer, const Digest& message) const {
        Encoder e;
        e.str("sig").u64(seed_).validator(signer).digest(message);
        return Signature{digest_of(e.data())};
    }

    bool verify(ValidatorId signer, const Digest& message, const Signature& sig) const {
        return sign(signer, message) == sig;
    }

private:
    std::uint64_t seed_;
};

class Signer {
public:
    Signer(const KeyRing* ring, ValidatorId id) : ring_(ring), id_(id) {}
    ValidatorId id() const { return id_; }
    Signature sign(const Digest& message) const { return ring_->sign(id_, message); }

private:
    const KeyRing* ring_;
    ValidatorId id_;
};

// ---------------------------------------------------------------------------
// Header, vote, certificate

/// Reference to a certificate together with its round.
struct CertRef {
    Round round = 0;
    Digest digest;
    auto operator<=>(const CertRef&) const = default;
};

struct PayloadRef {
    Digest batch;
    WorkerId worker_id = 0;
    auto operator<=>(const PayloadRef&) const = default;
};

/// Immutable once built; the digest is computed at construction.
class Header {
public:
    Header() = default;

    Header(ValidatorId author, Round round, Epoch epoch, std::vector<PayloadRef> payload, std::set<Digest> parents,
           std::set<CertRef> weak_parents, SimTime created_ts)
        : author_(author),
          round_(round),
          epoch_(epoch),
          payload_(std::move(payload)),
          parents_(std::move(parents)),
          weak_parents_(std::move(weak_parents)),
          created_ts_(created_ts) {
        std::set<Digest> seen;
        for (const auto& p : payload_)
            if (!seen.insert(p.batch).second) throw ProtocolError("duplicate payload digest in header");
        if (round_ == 0 && (!parents_.empty() || !weak_parents_.empty()))
            throw ProtocolError("genesis header must not have parents");
        for (const auto& w : weak_parents_)
            if (w.round + 2 > round_) throw ProtocolError("weak link must point two or more rounds back");
        digest_ = compute_digest();
    }

    ValidatorId author() const { return author_; }
    Round round() const { return round_; }
    Epoch epoch() const { return epoch_; }
    const std::vector<PayloadRef>& payload() const { return payload_; }
    const std::set<Digest>& parents() const { return parents_; }
    /// References to certificates two or more rounds back; ordering only.
    const std::set<CertRef>& weak_parents() const { return weak_parents_; }
    SimTime created_ts() const { return created_ts_; }
    const Digest& digest() const { return digest_; }

    void encode(Encoder& e) const {
        e.validator(author_).u64(round_).u64(epoch_).u32(static_cast<std::uint32_t>(payload_.size()));
        for (const auto& p : payload_) e.digest(p.batch).u32(p.worker_id);
        e.u32(static_cast<std::uint32_t>(parents_.size()));
        for (const auto& p : parents_) e.digest(p);
        e.u32(static_cast<std::uint32_t>(weak_parents_.size()));
        for (const auto& p : weak_parents_) e.u64(p.round).digest(p.digest);
        e.i64(created_ts_);
    }

    Digest compute_digest() const {
        Encoder e;
        e.str("header");
        encode(e);
        return digest_of(e.data());
    }

    bool operator==(const Header& o) const { return digest_ == o.digest_; }

private:
    ValidatorId author_;
    Round round_ = 0;
    Epoch epoch_ = 0;
    std::vector<PayloadRef> payload_;
    std::set<Digest> parents_;
    std::set<CertRef> weak_parents_;
    SimTime created_ts_ = 0;
    Digest digest_;
};

struct Vote {
    Digest header_digest;
    ValidatorId header_author;
    Round header_round = 0;
    ValidatorId voter;
    Signature signature;

    static Vote make(const Header& h, const Signer& signer) {
        return Vote{h.digest(), h.author(), h.round(), signer.id(), signer.sign(h.digest())};
    }

    void encode(Encoder& e) const {
        e.digest(header_digest).validator(header_author).u64(header_round).validator(voter).digest(signature.tag);
    }

    bool operator==(const Vote&) const = default;
};

struct InvalidCertificate : ProtocolError {
    using ProtocolError::ProtocolError;
};

class Certificate {
public:
    Certificate() = default;

    /// Throws InvalidCertificate unless the votes are distinct, all reference
    /// the header, carry valid tokens and reach the quorum threshold.
    static Certificate make(const Committee& committee, const KeyRing& keys, Header header, std::vector<Vote> votes) {
        std::sort(votes.begin(), votes.end(), [](const Vote& a, const Vote& b) { return a.voter < b.voter; });
        std::set<ValidatorId> voters;
        for (const auto& v : votes) {
            if (v.header_digest != header.digest() || v.header_author != header.author() ||
                v.header_round != header.round())
                throw InvalidCertificate("vote does not reference the header");
            if (!committee.contains(v.voter)) throw InvalidCertificate("unknown voter " + to_string(v.voter));
            if (!keys.verify(v.voter, v.header_digest, v.signature)) throw InvalidCertificate("bad vote signature");
            if (!voters.insert(v.voter).second) throw InvalidCertificate("duplicate voter");
        }
        if (!quorum_reached(committee, voters)) throw InvalidCertificate("votes below quorum threshold");
        Certificate c;
        c.header_ = std::move(header);
        c.votes_ = std::move(votes);
        return c;
    }

    static Certificate genesis(const Committee& committee, ValidatorId author) {
        Certificate c;
        c.header_ = Header(author, 0, committee.epoch(), {}, {}, {}, 0);
        return c;
    }

    /// Bypasses validation; only for building forged fixtures in tests.
    static Certificate unchecked(Header header, std::vector<Vote> votes) {
        Certificate c;
        c.header_ = std::move(header);
        c.votes_ = std::move(votes);
        return c;
    }

    const Header& header() const { return header_; }
    const std::vector<Vote>& votes() const { return votes_; }
    const Digest& digest() const { return header_.digest(); }
    ValidatorId author() const { return header_.author(); }
    Round round() const { return header_.round(); }
    bool is_genesis() const { return header_.round() == 0; }

    /// Re-checks the quorum. Genesis certificates carry no votes.
    bool verify(const Committee& committee, const KeyRing& keys) const {
        if (is_genesis()) return header_.parents().empty() && header_.payload().empty() && votes_.empty();
        try {
            (void)make(committee, keys, header_, votes_);
            return true;
        } catch (const ProtocolError&) {
            return false;
        }
    }

    void encode(Encoder& e) const {
        header_.encode(e);
        e.u32(static_cast<std::uint32_t>(votes_.size()));
        for (const auto& v : votes_) v.encode(e);
    }

    Bytes serialize() const {
        Encoder e;
        encode(e);
        return e.take();
    }

    /// Strong parents (previous round) followed by weak links.
    std::vector<CertRef> all_parents() const {
        std::vector<CertRef> out;
        for (const auto& p : header_.parents()) out.push_back({header_.round() - 1, p});
        out.insert(out.end(), header_.weak_parents().begin(), header_.weak_parents().end());
        return out;
    }

private:
    Header header_;
    std::vector<Vote> votes_;
};

}  // namespace narwhal
