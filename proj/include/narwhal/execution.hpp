// Post-consensus execution: filter and order the transactions of each
// committed sub-DAG, lock the objects they touch, execute with bounded
// retries and commit effects atomically.

#pragma once

#include <deque>
#include <map>
#include <optional>
#include <ostream>
#include <variant>

#include "narwhal/bullshark.hpp"
#include "narwhal/tx_payload.hpp"

namespace narwhal {

inline constexpr std::uint32_t kMaxExecutionAttempts = 10;
inline constexpr SimTime kExecutionRetryInterval = 1000;

struct ConsensusOutput {
    CommittedSubDag sub_dag;
    std::vector<std::pair<Digest, std::vector<Batch>>> batches;  // per certificate, payload order
};

struct ObjectVersion {
    ObjectId object;
    std::uint64_t version = 0;
    bool operator==(const ObjectVersion&) const = default;
};

struct Effects {
    Digest tx;
    std::vector<ObjectVersion> inputs;   // version 0: created by this tx
    std::vector<ObjectVersion> outputs;
    bool aborted = false;  // gave up after kMaxExecutionAttempts
    bool operator==(const Effects&) const = default;
};

struct StoredObject {
    std::uint64_t version = 0;
    Bytes value;
    bool operator==(const StoredObject&) const = default;
};

class ObjectStore {
public:
    const StoredObject* get(const ObjectId& id) const {
        auto it = objects_.find(id);
        return it == objects_.end() ? nullptr : &it->second;
    }
    void put(const ObjectId& id, StoredObject obj) { objects_[id] = std::move(obj); }
    const std::map<ObjectId, StoredObject>& objects() const { return objects_; }
    bool operator==(const ObjectStore&) const = default;

private:
    std::map<ObjectId, StoredObject> objects_;
};

class EffectsLog {
public:
    bool contains(const Digest& tx) const { return index_.contains(tx); }
    const Effects* find(const Digest& tx) const {
        auto it = index_.find(tx);
        return it == index_.end() ? nullptr : &entries_[it->second];
    }
    bool append(Effects e) {
        if (!index_.emplace(e.tx, entries_.size()).second) return false;
        entries_.push_back(std::move(e));
        return true;
    }
    const std::vector<Effects>& entries() const { return entries_; }

    void write(std::ostream& os) const {
        auto list = [&](const std::vector<ObjectVersion>& vs) {
            for (std::size_t i = 0; i < vs.size(); ++i)
                os << (i ? "," : "") << vs[i].object.id.short_hex() << '@' << vs[i].version;
        };
        for (const auto& e : entries_) {
            if (e.aborted) {
                os << e.tx.hex() << " abort\n";
                continue;
            }
            os << e.tx.hex() << " in:";
            list(e.inputs);
            os << " out:";
            list(e.outputs);
            os << '\n';
        }
    }

private:
    std::vector<Effects> entries_;
    std::map<Digest, std::size_t> index_;
};

enum class OutputRejection { stale_leader_round, missing_batches };

struct Retry {
    std::uint32_t attempt;
};
struct PermanentFailure {
    std::uint32_t attempts;
};
using ExecutionResult = std::variant<Effects, Retry, PermanentFailure>;

/// Stable sort: gas fee descending, ties by tx digest ascending.
inline std::vector<Transaction> order_transactions(std::vector<Transaction> txs) {
    std::vector<std::pair<Digest, Transaction>> keyed;
    keyed.reserve(txs.size());
    for (auto& tx : txs) keyed.emplace_back(tx.digest(), std::move(tx));
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        if (a.second.gas_fee != b.second.gas_fee) return a.second.gas_fee > b.second.gas_fee;
        return a.first < b.first;
    });
    std::vector<Transaction> out;
    out.reserve(keyed.size());
    for (auto& [_, tx] : keyed) out.push_back(std::move(tx));
    return out;
}

struct ExecutionMetrics {
    std::uint64_t executed = 0;
    std::uint64_t retries = 0;
    std::uint64_t aborted = 0;
    std::uint64_t duplicates_dropped = 0;
    std::uint64_t outputs_handled = 0;
};

/// Serial executor. Outputs run one at a time; within an output, ready
/// transactions execute in order while conflicting ones wait on locks.
class Executor {
public:
    struct Pending {
        Transaction tx;
        Digest digest;
        TxIntent intent;
        std::uint32_t attempts = 0;
        std::uint64_t seq = 0;  // enqueue order
    };

    explicit Executor(std::map<Digest, std::uint32_t> injected_failures = {})
        : injected_failures_(std::move(injected_failures)) {}

    /// Genesis objects, version 1, value = key bytes.
    void create_genesis_objects(std::uint64_t count) {
        for (std::uint64_t k = 0; k < count; ++k) {
            Encoder e;
            e.u64(k);
            store_.put(object_id_for_key(k), StoredObject{1, e.take()});
        }
    }

    /// Validates an output and returns its surviving transactions in
    /// execution order.
    std::variant<std::vector<Transaction>, OutputRejection> handle_consensus_output(const ConsensusOutput& output) {
        const Round leader_round = output.sub_dag.leader.round();
        if (last_leader_round_ && leader_round <= *last_leader_round_) return OutputRejection::stale_leader_round;
        std::set<Digest> expected;
        for (const auto& c : output.sub_dag.certificates)
            for (const auto& p : c.header().payload()) expected.insert(p.batch);
        std::set<Digest> supplied;
        for (const auto& [_, batches] : output.batches)
            for (const auto& b : batches) supplied.insert(b.digest());
        if (expected != supplied) return OutputRejection::missing_batches;

        std::vector<Transaction> txs;
        std::set<Digest> seen;
        for (const auto& [_, batches] : output.batches)
            for (const auto& b : batches)
                for (const auto& tx : b.transactions) {
                    const Digest d = tx.digest();
                    if (!seen.insert(d).second || effects_.contains(d) || aborted_.contains(d)) {
                        ++metrics_.duplicates_dropped;
                        continue;
                    }
                    txs.push_back(tx);
                }
        last_leader_round_ = leader_round;
        ++metrics_.outputs_handled;
        return order_transactions(std::move(txs));
    }

    /// Queues transactions for execution. Those whose objects are free become
    /// ready; others wait on locks or on missing objects.
    std::vector<Digest> enqueue(const std::vector<Transaction>& txs) {
        for (const auto& tx : txs) {
            auto intent = parse_payload(tx.payload);
            if (!intent) continue;  // workers reject malformed payloads
            Pending p{tx, tx.digest(), std::move(*intent), 0, next_seq_++};
            if (effects_.contains(p.digest) || in_flight_.contains(p.digest)) continue;
            in_flight_.insert(p.digest);
            waiting_.push_back(std::move(p));
        }
        return promote_waiting();
    }

    /// Caller must hold the locks for `p`. Idempotent on already-written effects.
    ExecutionResult try_execute_immediately(Pending& p) {
        if (const Effects* e = effects_.find(p.digest)) return *e;
        ++p.attempts;
        auto fit = injected_failures_.find(p.digest);
        if (fit != injected_failures_.end() && p.attempts <= fit->second) {
            if (p.attempts >= kMaxExecutionAttempts) return PermanentFailure{p.attempts};
            return Retry{p.attempts};
        }
        Effects e;
        e.tx = p.digest;
        for (const auto& obj : p.intent.objects) {
            const StoredObject* cur = store_.get(obj);
            const std::uint64_t v = cur ? cur->version : 0;
            e.inputs.push_back({obj, v});
            e.outputs.push_back({obj, v + 1});
        }
        return e;
    }

    /// The atomic point: effects entry, object versions and lock release
    /// become visible together.
    void commit_certificate(const Pending& p, const Effects& effects) {
        if (crash_armed_ && *crash_armed_ == p.digest) {
            crash_armed_.reset();
            throw CrashInjected{};
        }
        if (effects_.append(effects)) {
            Bytes value =
                p.intent.value.empty() ? Bytes(p.digest.bytes.begin(), p.digest.bytes.end()) : p.intent.value;
            for (const auto& out : effects.outputs) store_.put(out.object, StoredObject{out.version, value});
            ++metrics_.executed;
        }
        release(p);
    }

    struct CrashInjected {};

    /// Runs ready transactions, earliest enqueued first, until each has
    /// committed, aborted or asked for a retry. Returns digests that need a
    /// retry timer. Picking by enqueue order (not by when a transaction became
    /// ready) makes the effects order independent of where a crash happened.
    std::vector<Digest> drive(const std::vector<Digest>& ready_in) {
        std::set<std::pair<std::uint64_t, Digest>> ready;
        auto add = [&](const Digest& d) {
            if (auto it = running_.find(d); it != running_.end()) ready.emplace(it->second.seq, d);
        };
        for (const auto& d : ready_in) add(d);
        std::vector<Digest> retry;
        while (!ready.empty()) {
            const Digest d = ready.begin()->second;
            ready.erase(ready.begin());
            auto it = running_.find(d);
            if (it == running_.end()) continue;
            Pending& p = it->second;
            auto result = try_execute_immediately(p);
            if (auto* e = std::get_if<Effects>(&result)) {
                commit_certificate(p, *e);
                in_flight_.erase(d);
                running_.erase(it);
            } else if (std::holds_alternative<Retry>(result)) {
                ++metrics_.retries;
                retry.push_back(d);
                continue;
            } else {
                ++metrics_.aborted;
                aborted_.insert(d);
                effects_.append(Effects{d, {}, {}, true});
                release(p);
                in_flight_.erase(d);
                running_.erase(it);
            }
            for (const auto& n : promote_waiting()) add(n);
        }
        return retry;
    }

    /// Executes a retried transaction again (called from the retry timer).
    std::vector<Digest> retry(const Digest& d) {
        if (!running_.contains(d)) return {};
        return drive({d});
    }

    /// True when no transaction is running or waiting on a lock.
    bool idle() const { return running_.empty() && lock_waiters() == 0; }

    void arm_crash(const Digest& tx) { crash_armed_ = tx; }

    /// Drops volatile state after a crash. Store, effects and the last fully
    /// handled leader round survive.
    void recover(std::optional<Round> last_completed_round) {
        running_.clear();
        waiting_.clear();
        in_flight_.clear();
        locks_.clear();
        last_leader_round_ = last_completed_round;
    }

    std::size_t parked() const {
        std::size_t n = 0;
        for (const auto& p : waiting_)
            if (missing_object(p)) ++n;
        return n;
    }
    std::size_t lock_waiters() const {
        std::size_t n = 0;
        for (const auto& p : waiting_)
            if (!missing_object(p)) ++n;
        return n;
    }

    const ObjectStore& store() const { return store_; }
    const EffectsLog& effects() const { return effects_; }
    const std::map<ObjectId, Digest>& lock_table() const { return locks_; }
    const std::set<Digest>& aborted() const { return aborted_; }
    const ExecutionMetrics& metrics() const { return metrics_; }
    const std::vector<Pending>& waiting() const { return waiting_; }

    /// Replaying the effects log from the genesis objects reproduces the store.
    bool store_matches_effects(std::uint64_t genesis_objects) const {
        std::map<ObjectId, std::uint64_t> versions;
        for (std::uint64_t k = 0; k < genesis_objects; ++k) versions[object_id_for_key(k)] = 1;
        for (const auto& e : effects_.entries()) {
            if (e.aborted) continue;
            for (std::size_t i = 0; i < e.inputs.size(); ++i) {
                auto it = versions.find(e.inputs[i].object);
                const std::uint64_t cur = it == versions.end() ? 0 : it->second;
                if (cur != e.inputs[i].version || e.outputs[i].version != cur + 1) return false;
                versions[e.outputs[i].object] = e.outputs[i].version;
            }
        }
        if (versions.size() != store_.objects().size()) return false;
        for (const auto& [id, v] : versions) {
            const StoredObject* o = store_.get(id);
            if (!o || o->version != v) return false;
        }
        return true;
    }

private:
    bool missing_object(const Pending& p) const {
        if (p.intent.create) return false;
        for (const auto& o : p.intent.objects)
            if (!store_.get(o)) return true;
        return false;
    }

    bool try_lock(const Pending& p) {
        for (const auto& o : p.intent.objects)
            if (locks_.contains(o)) return false;
        for (const auto& o : p.intent.objects) locks_.emplace(o, p.digest);  // ascending object id
        return true;
    }

    void release(const Pending& p) {
        for (const auto& o : p.intent.objects) {
            auto it = locks_.find(o);
            if (it != locks_.end() && it->second == p.digest) locks_.erase(it);
        }
    }

    /// Moves waiting transactions whose objects exist and are unlocked into
    /// the running set, preserving queue order. A transaction never overtakes
    /// an earlier waiting one that touches the same object.
    std::vector<Digest> promote_waiting() {
        std::vector<Digest> ready;
        std::set<ObjectId> blocked;
        std::vector<Pending> still;
        for (auto& p : waiting_) {
            bool conflict = missing_object(p);
            for (const auto& o : p.intent.objects)
                if (blocked.contains(o)) conflict = true;
            if (!conflict && try_lock(p)) {
                ready.push_back(p.digest);
                running_.emplace(p.digest, std::move(p));
            } else {
                if (!missing_object(p))
                    for (const auto& o : p.intent.objects) blocked.insert(o);
                still.push_back(std::move(p));
            }
        }
        waiting_ = std::move(still);
        return ready;
    }

    ObjectStore store_;
    EffectsLog effects_;
    std::map<ObjectId, Digest> locks_;
    std::vector<Pending> waiting_;
    std::map<Digest, Pending> running_;
    std::set<Digest> in_flight_;
    std::set<Digest> aborted_;
    std::optional<Round> last_leader_round_;
    std::optional<Digest> crash_armed_;
    std::map<Digest, std::uint32_t> injected_failures_;
    ExecutionMetrics metrics_;
    std::uint64_t next_seq_ = 0;
};

}  // namespace narwhal
