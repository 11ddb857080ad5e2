// Primary: proposes headers from quorum-confirmed batch digests, votes on
// peers' headers, aggregates votes into certificates, maintains the local
// DAG and advances rounds. Missing history is pulled from peers.

#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <unordered_map>
#include <variant>

#include "narwhal/bullshark.hpp"
#include "narwhal/dag.hpp"
#include "narwhal/messages.hpp"

namespace narwhal {

struct ByzantineBehavior {
    enum class Kind { honest, silent, delayed, equivocator, vote_withholder };
    Kind kind = Kind::honest;
    std::uint32_t factor = 1;  // delay multiplier for `delayed`

    bool is_byzantine() const { return kind != Kind::honest; }
    bool operator==(const ByzantineBehavior&) const = default;
};

inline std::string to_string(const ByzantineBehavior& b) {
    switch (b.kind) {
    case ByzantineBehavior::Kind::honest: return "honest";
    case ByzantineBehavior::Kind::silent: return "silent";
    case ByzantineBehavior::Kind::delayed: return "delayed(" + std::to_string(b.factor) + ")";
    case ByzantineBehavior::Kind::equivocator: return "equivocator";
    case ByzantineBehavior::Kind::vote_withholder: return "vote_withholder";
    }
    return "?";
}

struct PrimaryConfig {
    std::size_t min_digests = 32;
    std::size_t max_digests = 1000;
    SimTime max_header_delay = 1000;
    Round gc_depth = kDefaultGcDepth;
    SimTime vote_retry_interval = 1000;
    SimTime cert_sync_interval = 1000;
    std::size_t deferred_limit = 10'000;
    std::size_t fetch_limit = 500;
    bool weak_links = true;
};

struct ProposerState {
    std::deque<PayloadRef> staged;
    std::set<Digest> staged_set;
    std::set<Digest> included;  // digests already placed in one of our headers
    SimTime last_header_ts = 0;
    Round last_proposed_round = 0;

    bool stage(const Digest& d, WorkerId worker) {
        if (included.contains(d) || !staged_set.insert(d).second) return false;
        staged.push_back({d, worker});
        return true;
    }
};

struct VoteAggregator {
    struct Entry {
        Header header;
        std::map<ValidatorId, Vote> votes;
        bool certified = false;
    };
    std::map<Digest, Entry> entries;
};

enum class VoteRejection { bad_author, wrong_epoch, bad_digest, too_old, bad_parents, equivocation, withheld };

inline const char* to_string(VoteRejection r) {
    switch (r) {
    case VoteRejection::bad_author: return "bad_author";
    case VoteRejection::wrong_epoch: return "wrong_epoch";
    case VoteRejection::bad_digest: return "bad_digest";
    case VoteRejection::too_old: return "too_old";
    case VoteRejection::bad_parents: return "bad_parents";
    case VoteRejection::equivocation: return "equivocation";
    case VoteRejection::withheld: return "withheld";
    }
    return "?";
}

struct Deferred {
    enum class Why { missing_batches, missing_parents } why;
};

using VoteDecision = std::variant<Vote, VoteRejection, Deferred>;

enum class CertRejection { bad_quorum, below_gc, conflict, bad_author };

struct CertStored {};
using CertOutcome = std::variant<CertStored, Deferred, CertRejection, std::monostate>;  // monostate: duplicate

class Primary {
public:
    Primary(ValidatorId self, Committee committee, const KeyRing* keys, LeaderSchedule schedule,
            PrimaryConfig config = {}, ByzantineBehavior behavior = {})
        : self_(self),
          committee_(std::move(committee)),
          keys_(keys),
          signer_(keys, self),
          schedule_(std::move(schedule)),
          config_(config),
          behavior_(behavior),
          dag_(committee_) {
        try_advance_round();
    }

    ValidatorId id() const { return self_; }
    NodeAddr addr() const { return NodeAddr::primary(self_); }
    const DagState& dag() const { return dag_; }
    DagState& dag_mut() { return dag_; }
    Round current_round() const { return current_round_; }
    const ProposerState& proposer() const { return proposer_; }
    const Committee& committee() const { return committee_; }

    /// Tells the proposer which certificates are already ordered (weak links
    /// skip them) and whether uncommitted payload remains in the DAG.
    void set_consensus_view(std::function<bool(const Digest&)> ordered, std::function<bool()> uncommitted_payload) {
        is_ordered_ = std::move(ordered);
        has_uncommitted_payload_ = std::move(uncommitted_payload);
    }

    /// Certificates inserted since the last call, in insertion order.
    std::vector<Certificate> take_newly_stored() { return std::exchange(newly_stored_, {}); }

    std::uint64_t conflicts_observed() const { return conflicts_; }
    const std::vector<Header>& proposed_headers() const { return proposed_; }
    const std::map<std::pair<ValidatorId, Round>, Digest>& votes_cast() const { return voted_; }

    void start(Outbox& out) {
        try_advance_round();
        arm_header_timer(0, out);
        arm_sync_timer(out);
    }

    // -- proposer ----------------------------------------------------------

    bool stage_digest(const Digest& d, WorkerId worker) {
        available_.insert(d);
        return proposer_.stage(d, worker);
    }

    std::optional<Header> try_make_header(SimTime now, Outbox& out) {
        if (proposer_.last_proposed_round >= current_round_) return std::nullopt;
        const Round round = current_round_;
        const auto* prev = dag_.round(round - 1);
        if (!prev || dag_.round_stake(round - 1, committee_) < committee_.quorum_threshold()) return std::nullopt;

        const bool enough_digests = proposer_.staged.size() >= config_.min_digests;
        const bool delay_elapsed = now - proposer_.last_header_ts >= config_.max_header_delay;
        const bool keep_alive = !proposer_.staged.empty() || uncommitted_payload();
        if (!enough_digests && !(delay_elapsed && keep_alive)) return std::nullopt;

        std::set<Digest> parents;
        for (const auto& [author, cert] : *prev) parents.insert(cert.digest());
        if (behavior_.kind == ByzantineBehavior::Kind::vote_withholder && (round - 1) % 2 == 1) {
            if (const Certificate* anchor = dag_.get(round - 1, schedule_.leader(round - 1))) {
                const Stake without = dag_.round_stake(round - 1, committee_) - committee_.stake(anchor->author());
                if (without >= committee_.quorum_threshold()) parents.erase(anchor->digest());
            }
        }
        std::set<CertRef> weak;
        if (config_.weak_links)
            weak = weak_link_candidates(dag_, parents, round, [this](const Digest& d) { return ordered(d); });

        std::vector<PayloadRef> payload;
        while (!proposer_.staged.empty() && payload.size() < config_.max_digests) {
            payload.push_back(proposer_.staged.front());
            proposer_.staged_set.erase(proposer_.staged.front().batch);
            proposer_.included.insert(proposer_.staged.front().batch);
            proposer_.staged.pop_front();
        }
        Header header(self_, round, committee_.epoch(), std::move(payload), parents, weak, now);
        proposer_.last_proposed_round = round;
        proposer_.last_header_ts = now;
        proposed_.push_back(header);

        if (behavior_.kind == ByzantineBehavior::Kind::equivocator && committee_.size() > 2) {
            Header twin(self_, round, committee_.epoch(), {}, parents, weak, now + 1);
            proposed_.push_back(twin);
            std::vector<ValidatorId> peers;
            for (const auto& m : committee_.members())
                if (m.id != self_) peers.push_back(m.id);
            const std::size_t half = (peers.size() + 1) / 2;
            register_own_header(header, out);
            register_own_header(twin, out);
            for (std::size_t i = 0; i < peers.size(); ++i)
                out.send(NodeAddr::primary(peers[i]), HeaderMsg{i < half ? header : twin});
        } else {
            register_own_header(header, out);
            for (const auto& m : committee_.members())
                if (m.id != self_) out.send(NodeAddr::primary(m.id), HeaderMsg{header});
        }
        arm_header_timer(now, out);
        return header;
    }

    // -- voting ------------------------------------------------------------

    VoteDecision verify_and_vote(const Header& header, ValidatorId from, Outbox& out) {
        if (header.author() != from || !committee_.contains(from)) return VoteRejection::bad_author;
        if (header.epoch() != committee_.epoch()) return VoteRejection::wrong_epoch;
        if (header.compute_digest() != header.digest()) return VoteRejection::bad_digest;
        if (header.round() == 0 || header.round() < dag_.gc_round()) return VoteRejection::too_old;

        const auto key = std::pair{header.author(), header.round()};
        if (auto it = voted_.find(key); it != voted_.end() && it->second != header.digest())
            return VoteRejection::equivocation;

        // parent structure
        std::vector<Digest> missing;
        std::set<ValidatorId> parent_authors;
        for (const auto& p : header.parents()) {
            if (header.round() - 1 < dag_.gc_round()) break;
            const Certificate* c = dag_.find(p);
            if (!c) {
                missing.push_back(p);
                continue;
            }
            if (c->round() != header.round() - 1 || !parent_authors.insert(c->author()).second)
                return VoteRejection::bad_parents;
        }
        for (const auto& w : header.weak_parents())
            if (w.round >= dag_.gc_round() && !dag_.contains(w.digest)) missing.push_back(w.digest);
        if (!missing.empty()) {
            pending_headers_.insert_or_assign(header.digest(), header);
            out.send(NodeAddr::primary(from), FetchCertificates{missing, 1, 0});
            return Deferred{Deferred::Why::missing_parents};
        }
        if (header.round() - 1 >= dag_.gc_round() &&
            committee_.stake_of(parent_authors) < committee_.quorum_threshold())
            return VoteRejection::bad_parents;

        // payload availability
        std::map<WorkerId, std::vector<Digest>> unavailable;
        for (const auto& p : header.payload())
            if (!available_.contains(p.batch)) unavailable[p.worker_id].push_back(p.batch);
        if (!unavailable.empty()) {
            pending_headers_.insert_or_assign(header.digest(), header);
            for (auto& [w, ds] : unavailable) out.send(NodeAddr::worker(self_, w), Synchronize{ds, from});
            return Deferred{Deferred::Why::missing_batches};
        }
        pending_headers_.erase(header.digest());

        if (behavior_.kind == ByzantineBehavior::Kind::vote_withholder && header.round() % 2 == 1 &&
            header.author() == schedule_.leader(header.round()))
            return VoteRejection::withheld;

        voted_.emplace(key, header.digest());
        Vote v = Vote::make(header, signer_);
        if (header.author() != self_) out.send(NodeAddr::primary(header.author()), VoteMsg{v});
        return v;
    }

    /// Returns the certificate once the header gathers a quorum; nullopt while pending.
    std::optional<Certificate> aggregate_vote(const Vote& vote, SimTime now, Outbox& out) {
        auto it = aggregator_.entries.find(vote.header_digest);
        if (it == aggregator_.entries.end()) return std::nullopt;
        auto& e = it->second;
        if (!committee_.contains(vote.voter) || !keys_->verify(vote.voter, vote.header_digest, vote.signature))
            return std::nullopt;
        e.votes.emplace(vote.voter, vote);
        if (e.certified) return std::nullopt;
        std::set<ValidatorId> voters;
        for (const auto& [v, _] : e.votes) voters.insert(v);
        if (!quorum_reached(committee_, voters)) return std::nullopt;
        std::vector<Vote> votes;
        for (const auto& [_, v] : e.votes) votes.push_back(v);
        Certificate cert = Certificate::make(committee_, *keys_, e.header, std::move(votes));
        e.certified = true;
        for (const auto& m : committee_.members())
            if (m.id != self_) out.send(NodeAddr::primary(m.id), CertificateMsg{cert});
        (void)process_incoming_certificate(cert, self_, now, out);
        return cert;
    }

    // -- certificates ------------------------------------------------------

    CertOutcome process_incoming_certificate(const Certificate& cert, ValidatorId from, SimTime now, Outbox& out) {
        if (cert.round() < dag_.gc_round()) return CertRejection::below_gc;
        if (cert.is_genesis()) return dag_.contains(cert.digest()) ? CertOutcome{std::monostate{}} : CertOutcome{CertRejection::bad_quorum};
        if (dag_.contains(cert.digest())) return std::monostate{};
        if (deferred_.contains(cert.digest())) return Deferred{Deferred::Why::missing_parents};
        if (!cert.verify(committee_, *keys_)) return CertRejection::bad_quorum;
        switch (dag_.insert(cert)) {
        case InsertResult::stored:
            on_stored(cert, now, out);
            return CertStored{};
        case InsertResult::duplicate:
            return std::monostate{};
        case InsertResult::below_gc:
            return CertRejection::below_gc;
        case InsertResult::conflict:
            ++conflicts_;
            return CertRejection::conflict;
        case InsertResult::missing_parents:
            defer_certificate(cert);
            {
                std::vector<Digest> missing;
                for (const auto& p : dag_.missing_parents(cert)) missing.push_back(p.digest);
                out.send(NodeAddr::primary(from == self_ ? cert.author() : from), FetchCertificates{missing, 1, 0});
            }
            arm_sync_timer(out);
            return Deferred{Deferred::Why::missing_parents};
        }
        return std::monostate{};
    }

    bool try_advance_round() {
        bool advanced = false;
        while (dag_.round_stake(current_round_, committee_) >= committee_.quorum_threshold()) {
            ++current_round_;
            advanced = true;
        }
        return advanced;
    }

    CertificateRange handle_fetch_certificates(const FetchCertificates& req) const {
        CertificateRange resp;
        resp.gc_round = dag_.gc_round();
        std::set<Digest> seen;
        for (const auto& d : req.digests) {
            if (resp.certificates.size() >= config_.fetch_limit) break;
            if (const Certificate* c = dag_.find(d); c && !c->is_genesis() && seen.insert(d).second)
                resp.certificates.push_back(*c);
        }
        if (req.round_hi >= req.round_lo) {
            for (auto& c : dag_.range(std::max<Round>(req.round_lo, 1), req.round_hi, config_.fetch_limit)) {
                if (resp.certificates.size() >= config_.fetch_limit) break;
                if (seen.insert(c.digest()).second) resp.certificates.push_back(std::move(c));
            }
        }
        std::sort(resp.certificates.begin(), resp.certificates.end(), [](const Certificate& a, const Certificate& b) {
            return std::pair{a.round(), a.author()} < std::pair{b.round(), b.author()};
        });
        return resp;
    }

    // -- dispatch ----------------------------------------------------------

    void on_message(const NodeAddr& from, const Message& m, SimTime now, Outbox& out) {
        if (auto* own = std::get_if<ReportOwnBatch>(&m)) {
            if (from.validator != self_) return;
            stage_digest(own->digest, own->worker_id);
            after_progress(now, out);
            if (proposer_.staged.size() >= config_.min_digests) (void)try_make_header(now, out);
        } else if (auto* others = std::get_if<ReportOthersBatch>(&m)) {
            if (from.validator != self_) return;
            available_.insert(others->digest);
            retry_pending_headers(out);
        } else if (auto* h = std::get_if<HeaderMsg>(&m)) {
            (void)verify_and_vote(h->header, from.validator, out);
        } else if (auto* rv = std::get_if<RequestVote>(&m)) {
            (void)verify_and_vote(rv->header, from.validator, out);
        } else if (auto* v = std::get_if<VoteMsg>(&m)) {
            if (v->vote.voter == from.validator) (void)aggregate_vote(v->vote, now, out);
        } else if (auto* c = std::get_if<CertificateMsg>(&m)) {
            (void)process_incoming_certificate(c->certificate, from.validator, now, out);
        } else if (auto* f = std::get_if<FetchCertificates>(&m)) {
            auto resp = handle_fetch_certificates(*f);
            if (!resp.certificates.empty() || f->round_hi >= f->round_lo) out.send(from, std::move(resp));
        } else if (auto* r = std::get_if<CertificateRange>(&m)) {
            for (const auto& c : r->certificates) (void)process_incoming_certificate(c, from.validator, now, out);
        }
    }

    void on_timer(const Timer& t, SimTime now, Outbox& out) {
        switch (t.kind) {
        case TimerKind::header_delay:
            header_timer_armed_ = false;
            (void)try_make_header(now, out);
            if (proposer_.last_proposed_round < current_round_) arm_header_timer(now, out);
            break;
        case TimerKind::vote_retry: {
            if (t.tag >= proposed_.size()) break;
            const Header& h = proposed_[t.tag];
            auto& e = aggregator_.entries.at(h.digest());
            if (e.certified || h.round() < dag_.gc_round()) break;
            for (const auto& m : committee_.members())
                if (!e.votes.contains(m.id)) out.send(NodeAddr::primary(m.id), RequestVote{h});
            out.schedule(config_.vote_retry_interval, t);
            break;
        }
        case TimerKind::cert_sync:
            sync_timer_armed_ = false;
            on_sync_tick(now, out);
            break;
        default:
            break;
        }
    }

    /// Whether this primary still has reason to keep its timers running.
    bool has_pending_work() const {
        if (!proposer_.staged.empty() || !deferred_.empty() || !pending_headers_.empty()) return true;
        for (const auto& [_, e] : aggregator_.entries)
            if (!e.certified && e.header.round() >= dag_.gc_round()) return true;
        return uncommitted_payload();
    }

    std::size_t deferred_count() const { return deferred_.size(); }

private:
    bool ordered(const Digest& d) const { return is_ordered_ && is_ordered_(d); }
    bool uncommitted_payload() const { return has_uncommitted_payload_ && has_uncommitted_payload_(); }

    void register_own_header(const Header& h, Outbox& out) {
        auto& e = aggregator_.entries[h.digest()];
        e.header = h;
        voted_.emplace(std::pair{self_, h.round()}, h.digest());
        e.votes.emplace(self_, Vote::make(h, signer_));
        const std::size_t idx = static_cast<std::size_t>(
            std::find_if(proposed_.begin(), proposed_.end(), [&](const Header& x) { return x.digest() == h.digest(); }) -
            proposed_.begin());
        out.schedule(config_.vote_retry_interval, Timer{TimerKind::vote_retry, idx});
        if (quorum_reached(committee_, {self_})) {
            Vote self_vote = e.votes.at(self_);
            e.votes.erase(self_);
            (void)aggregate_vote(self_vote, h.created_ts(), out);
        }
    }

    void on_stored(const Certificate& cert, SimTime now, Outbox& out) {
        newly_stored_.push_back(cert);
        // release children waiting on this certificate
        std::vector<Digest> ready{cert.digest()};
        while (!ready.empty()) {
            const Digest parent = ready.back();
            ready.pop_back();
            auto wit = waiters_.find(parent);
            if (wit == waiters_.end()) continue;
            auto children = std::move(wit->second);
            waiters_.erase(wit);
            for (const auto& child : children) {
                auto cit = deferred_.find(child);
                if (cit == deferred_.end() || !dag_.missing_parents(cit->second).empty()) continue;
                Certificate c = std::move(cit->second);
                deferred_.erase(cit);
                if (dag_.insert(c) == InsertResult::stored) {
                    newly_stored_.push_back(c);
                    ready.push_back(c.digest());
                }
            }
        }
        after_progress(now, out);
        retry_pending_headers(out);
    }

    void after_progress(SimTime now, Outbox& out) {
        if (try_advance_round()) {
            if (proposer_.staged.size() >= config_.min_digests) (void)try_make_header(now, out);
        }
        arm_header_timer(now, out);
        arm_sync_timer(out);
    }

    void defer_certificate(const Certificate& cert) {
        while (deferred_.size() >= config_.deferred_limit && !deferred_order_.empty()) {
            deferred_.erase(deferred_order_.front());
            deferred_order_.pop_front();
        }
        for (const auto& p : dag_.missing_parents(cert)) waiters_[p.digest].push_back(cert.digest());
        if (deferred_.emplace(cert.digest(), cert).second) deferred_order_.push_back(cert.digest());
    }

    void retry_pending_headers(Outbox& out) {
        if (pending_headers_.empty()) return;
        std::vector<Header> headers;
        for (auto it = pending_headers_.begin(); it != pending_headers_.end();) {
            if (it->second.round() < dag_.gc_round()) {
                it = pending_headers_.erase(it);
                continue;
            }
            headers.push_back(it->second);
            ++it;
        }
        for (const auto& h : headers) {
            bool ready = true;
            for (const auto& p : h.parents())
                if (h.round() - 1 >= dag_.gc_round() && !dag_.contains(p)) ready = false;
            for (const auto& w : h.weak_parents())
                if (w.round >= dag_.gc_round() && !dag_.contains(w.digest)) ready = false;
            for (const auto& p : h.payload())
                if (!available_.contains(p.batch)) ready = false;
            if (!ready) continue;
            Outbox scratch;
            (void)verify_and_vote(h, h.author(), scratch);
            for (auto& m : scratch.messages)
                if (std::holds_alternative<VoteMsg>(m.message)) out.send(m.to, std::move(m.message));
        }
    }

    void arm_header_timer(SimTime now, Outbox& out) {
        if (header_timer_armed_ || proposer_.last_proposed_round >= current_round_) return;
        if (proposer_.staged.empty() && !uncommitted_payload()) return;
        header_timer_armed_ = true;
        const SimTime due = proposer_.last_header_ts + config_.max_header_delay;
        out.schedule(std::max<SimTime>(1, due - now), Timer{TimerKind::header_delay, 0});
    }

    void arm_sync_timer(Outbox& out) {
        if (sync_timer_armed_ || !has_pending_work()) return;
        sync_timer_armed_ = true;
        out.schedule(config_.cert_sync_interval, Timer{TimerKind::cert_sync, 0});
    }

    void on_sync_tick(SimTime now, Outbox& out) {
        // drop deferred entries that GC made moot; insert those whose missing
        // parents fell below gc_round
        std::vector<Certificate> unblocked;
        for (auto it = deferred_.begin(); it != deferred_.end();) {
            if (it->second.round() < dag_.gc_round()) {
                it = deferred_.erase(it);
            } else if (dag_.missing_parents(it->second).empty()) {
                unblocked.push_back(std::move(it->second));
                it = deferred_.erase(it);
            } else {
                ++it;
            }
        }
        std::sort(unblocked.begin(), unblocked.end(), [](const Certificate& a, const Certificate& b) {
            return std::pair{a.round(), a.author()} < std::pair{b.round(), b.author()};
        });
        for (const auto& c : unblocked)
            if (dag_.insert(c) == InsertResult::stored) on_stored(c, now, out);
        std::vector<Digest> missing;
        for (const auto& [d, c] : deferred_)
            for (const auto& p : dag_.missing_parents(c)) missing.push_back(p.digest);
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        if (missing.size() > config_.fetch_limit) missing.resize(config_.fetch_limit);
        stalled_ticks_ = current_round_ == round_at_last_tick_ ? stalled_ticks_ + 1 : 0;
        const bool stalled = stalled_ticks_ >= 2;
        if (!missing.empty() || stalled) {
            FetchCertificates req{missing, 1, 0};
            if (stalled) {
                req.round_lo = current_round_ > 0 ? current_round_ - 1 : 0;
                req.round_hi = current_round_ + 2 * config_.gc_depth;
            }
            if (has_pending_work())
                for (const auto& m : committee_.members())
                    if (m.id != self_) out.send(NodeAddr::primary(m.id), req);
        }
        round_at_last_tick_ = current_round_;
        arm_sync_timer(out);
    }

    ValidatorId self_;
    Committee committee_;
    const KeyRing* keys_;
    Signer signer_;
    LeaderSchedule schedule_;
    PrimaryConfig config_;
    ByzantineBehavior behavior_;

    DagState dag_;
    Round current_round_ = 0;
    ProposerState proposer_;
    VoteAggregator aggregator_;
    std::vector<Header> proposed_;
    std::map<std::pair<ValidatorId, Round>, Digest> voted_;
    std::set<Digest> available_;
    std::map<Digest, Header> pending_headers_;
    std::map<Digest, Certificate> deferred_;
    std::deque<Digest> deferred_order_;
    std::unordered_map<Digest, std::vector<Digest>> waiters_;
    std::vector<Certificate> newly_stored_;
    std::uint64_t conflicts_ = 0;

    bool header_timer_armed_ = false;
    bool sync_timer_armed_ = false;
    Round round_at_last_tick_ = 0;
    std::uint32_t stalled_ticks_ = 0;

    std::function<bool(const Digest&)> is_ordered_;
    std::function<bool()> has_uncommitted_payload_;
};

}  // namespace narwhal
