// Worker pipeline: validate client transactions, seal batches, replicate
// them to peer workers, wait for a stake quorum of acknowledgments and
// report digests to the local primary. Also serves batch requests and
// synchronizes missing batches on behalf of the primary.

#pragma once

#include <deque>
#include <map>
#include <optional>

#include "narwhal/messages.hpp"
#include "narwhal/tx_payload.hpp"

namespace narwhal {

struct WorkerConfig {
    std::size_t batch_size_limit = 8;
    SimTime batch_timeout = 100;
    SimTime retransmit_interval = 500;
    SimTime sync_retry_interval = 500;
    std::uint32_t max_sync_attempts = 40;
};

enum class TxRejection { too_small, malformed };

inline const char* to_string(TxRejection r) { return r == TxRejection::too_small ? "too_small" : "malformed"; }

enum class AckProgress { quorum_complete, still_waiting, ignored };

class Worker {
public:
    Worker(ValidatorId self, WorkerId worker_id, Committee committee, WorkerConfig config = {})
        : self_(self), worker_id_(worker_id), committee_(std::move(committee)), config_(config) {}

    ValidatorId validator() const { return self_; }
    WorkerId id() const { return worker_id_; }
    NodeAddr addr() const { return NodeAddr::worker(self_, worker_id_); }

    /// Returns the rejection reason, or nullopt when the tx was buffered.
    std::optional<TxRejection> validate_tx(const Transaction& tx, SimTime now, Outbox& out) {
        if (tx.payload.size() < kMinTransactionSize) return TxRejection::too_small;
        if (!parse_payload(tx.payload)) return TxRejection::malformed;
        if (pending_.empty()) {
            buffer_started_at_ = now;
            out.schedule(config_.batch_timeout, Timer{TimerKind::batch_timeout, ++buffer_generation_});
        }
        pending_.push_back(tx);
        if (pending_.size() >= config_.batch_size_limit) {
            if (auto b = seal_batch(now)) broadcast_batch(*b, out);
        }
        return std::nullopt;
    }

    /// Seals when the size limit is met or the timeout elapsed on a non-empty buffer.
    std::optional<Batch> seal_batch(SimTime now) {
        if (pending_.empty()) return std::nullopt;
        const bool full = pending_.size() >= config_.batch_size_limit;
        const bool expired = now - buffer_started_at_ >= config_.batch_timeout;
        if (!full && !expired) return std::nullopt;
        Batch b;
        b.author = self_;
        b.worker_id = worker_id_;
        const std::size_t take = std::min(pending_.size(), config_.batch_size_limit);
        b.transactions.assign(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(take));
        pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(take));
        buffer_started_at_ = now;
        const Digest d = b.digest();
        store_.emplace(d, b);
        seal_times_.emplace(d, now);
        for (const auto& tx : b.transactions) sealed_tx_.emplace(tx.digest(), d);
        return b;
    }

    /// Sends the batch to the matching worker of every other validator and
    /// starts tracking acknowledgments. Returns the peers still owing an ACK.
    std::vector<ValidatorId> broadcast_batch(const Batch& batch, Outbox& out) {
        const Digest d = batch.digest();
        auto& w = awaiting_[d];
        w.ackers.insert(self_);
        retransmit_order_.push_back(d);
        std::vector<ValidatorId> peers;
        for (const auto& m : committee_.members()) {
            if (m.id == self_) continue;
            peers.push_back(m.id);
            out.send(NodeAddr::worker(m.id, worker_id_), ReportBatch{batch, d});
        }
        check_quorum(d, out);
        if (!w.forwarded)
            out.schedule(config_.retransmit_interval,
                         Timer{TimerKind::batch_retransmit, retransmit_order_.size() - 1});
        return peers;
    }

    AckProgress quorum_wait_ack(const Digest& digest, ValidatorId acker, Outbox& out) {
        auto it = awaiting_.find(digest);
        if (it == awaiting_.end() || !committee_.contains(acker)) return AckProgress::ignored;
        if (it->second.forwarded) return AckProgress::still_waiting;
        it->second.ackers.insert(acker);
        return check_quorum(digest, out) ? AckProgress::quorum_complete : AckProgress::still_waiting;
    }

    /// Returns true (and ACKs) iff the batch matches its claimed digest.
    bool handle_report_batch(const Batch& batch, const Digest& claimed, ValidatorId sender, Outbox& out) {
        if (batch.transactions.empty() || batch.digest() != claimed) return false;
        store_batch(claimed, batch, out);
        out.send(NodeAddr::worker(sender, worker_id_), BatchAck{claimed, self_});
        return true;
    }

    std::vector<Batch> handle_request_batches(const std::vector<Digest>& digests) const {
        std::vector<Batch> out;
        for (const auto& d : digests)
            if (auto it = store_.find(d); it != store_.end()) out.push_back(it->second);
        return out;
    }

    /// Requests every missing digest from the hinted peer first; retries
    /// go to all peers. Returns the digests that had to be fetched.
    std::vector<Digest> handle_synchronize(const std::vector<Digest>& digests, ValidatorId source_hint, Outbox& out) {
        std::vector<Digest> missing;
        for (const auto& d : digests) {
            if (store_.contains(d) || syncing_.contains(d)) continue;
            syncing_.emplace(d, 0);
            missing.push_back(d);
        }
        if (missing.empty()) return missing;
        if (source_hint != self_ && committee_.contains(source_hint))
            out.send(NodeAddr::worker(source_hint, worker_id_), RequestBatches{missing});
        else
            request_from_all(missing, out);
        if (!sync_timer_armed_) {
            sync_timer_armed_ = true;
            out.schedule(config_.sync_retry_interval, Timer{TimerKind::sync_retry, 0});
        }
        return missing;
    }

    void handle_batch_list(const std::vector<Batch>& batches, Outbox& out) {
        for (const auto& b : batches) {
            if (b.transactions.empty()) continue;
            const Digest d = b.digest();
            // only accept what was asked for
            if (!syncing_.contains(d)) continue;
            syncing_.erase(d);
            store_batch(d, b, out);
        }
    }

    void on_message(const NodeAddr& from, const Message& m, SimTime now, Outbox& out) {
        if (auto* c = std::get_if<ClientTx>(&m)) {
            (void)validate_tx(c->tx, now, out);
        } else if (auto* rb = std::get_if<ReportBatch>(&m)) {
            (void)handle_report_batch(rb->batch, rb->digest, from.validator, out);
        } else if (auto* ack = std::get_if<BatchAck>(&m)) {
            // the token of a worker ACK is its sender address
            if (ack->acker == from.validator) (void)quorum_wait_ack(ack->digest, ack->acker, out);
        } else if (auto* req = std::get_if<RequestBatches>(&m)) {
            auto batches = handle_request_batches(req->digests);
            if (!batches.empty()) out.send(from, BatchList{std::move(batches)});
        } else if (auto* list = std::get_if<BatchList>(&m)) {
            handle_batch_list(list->batches, out);
        } else if (auto* sync = std::get_if<Synchronize>(&m)) {
            if (from == NodeAddr::primary(self_)) (void)handle_synchronize(sync->digests, sync->source_hint, out);
        }
    }

    void on_timer(const Timer& t, SimTime now, Outbox& out) {
        switch (t.kind) {
        case TimerKind::batch_timeout:
            if (t.tag == buffer_generation_) {
                if (auto b = seal_batch(now)) broadcast_batch(*b, out);
                if (!pending_.empty())
                    out.schedule(config_.batch_timeout, Timer{TimerKind::batch_timeout, ++buffer_generation_});
            }
            break;
        case TimerKind::batch_retransmit: {
            const Digest& d = retransmit_order_.at(t.tag);
            auto& w = awaiting_.at(d);
            if (w.forwarded) break;
            const Batch& b = store_.at(d);
            for (const auto& m : committee_.members())
                if (!w.ackers.contains(m.id)) out.send(NodeAddr::worker(m.id, worker_id_), ReportBatch{b, d});
            out.schedule(config_.retransmit_interval, t);
            break;
        }
        case TimerKind::sync_retry: {
            sync_timer_armed_ = false;
            std::vector<Digest> retry;
            for (auto it = syncing_.begin(); it != syncing_.end();) {
                if (++it->second > config_.max_sync_attempts) {
                    it = syncing_.erase(it);
                } else {
                    retry.push_back(it->first);
                    ++it;
                }
            }
            if (!retry.empty()) {
                request_from_all(retry, out);
                sync_timer_armed_ = true;
                out.schedule(config_.sync_retry_interval, Timer{TimerKind::sync_retry, 0});
            }
            break;
        }
        default:
            break;
        }
    }

    bool has_batch(const Digest& d) const { return store_.contains(d); }
    const Batch* find_batch(const Digest& d) const {
        auto it = store_.find(d);
        return it == store_.end() ? nullptr : &it->second;
    }
    const std::map<Digest, Batch>& batch_store() const { return store_; }
    const std::map<Digest, SimTime>& seal_times() const { return seal_times_; }
    std::size_t pending_count() const { return pending_.size(); }
    bool forwarded(const Digest& d) const {
        auto it = awaiting_.find(d);
        return it != awaiting_.end() && it->second.forwarded;
    }
    std::size_t syncing_count() const { return syncing_.size(); }

private:
    struct AckState {
        std::set<ValidatorId> ackers;
        bool forwarded = false;
    };

    bool check_quorum(const Digest& d, Outbox& out) {
        auto& w = awaiting_.at(d);
        if (w.forwarded || !quorum_reached(committee_, w.ackers)) return false;
        w.forwarded = true;
        out.send(NodeAddr::primary(self_), ReportOwnBatch{d, worker_id_, seal_times_.at(d)});
        return true;
    }

    void store_batch(const Digest& d, const Batch& b, Outbox& out) {
        if (store_.emplace(d, b).second) out.send(NodeAddr::primary(self_), ReportOthersBatch{d, worker_id_});
    }

    void request_from_all(const std::vector<Digest>& digests, Outbox& out) {
        for (const auto& m : committee_.members())
            if (m.id != self_) out.send(NodeAddr::worker(m.id, worker_id_), RequestBatches{digests});
    }

    ValidatorId self_;
    WorkerId worker_id_;
    Committee committee_;
    WorkerConfig config_;

    std::deque<Transaction> pending_;
    SimTime buffer_started_at_ = 0;
    std::uint64_t buffer_generation_ = 0;
    std::map<Digest, Batch> store_;
    std::map<Digest, SimTime> seal_times_;
    std::map<Digest, Digest> sealed_tx_;  // tx digest -> batch digest, reported back to clients
    std::map<Digest, AckState> awaiting_;
    std::vector<Digest> retransmit_order_;
    std::map<Digest, std::uint32_t> syncing_;
    bool sync_timer_armed_ = false;
};

}  // namespace narwhal
