// A validator: one primary, its workers, the consensus instance fed by the
// primary's DAG, and the execution layer fed by consensus.

#pragma once

#include <deque>
#include <memory>

#include "narwhal/bullshark.hpp"
#include "narwhal/execution.hpp"
#include "narwhal/primary.hpp"
#include "narwhal/simnet.hpp"
#include "narwhal/worker.hpp"

namespace narwhal {

struct ValidatorConfig {
    PrimaryConfig primary;
    WorkerConfig worker;
    std::uint32_t workers = 1;
    std::uint64_t genesis_objects = 0;
    std::map<Digest, std::uint32_t> exec_failures;
    std::optional<Digest> crash_on_tx;
};

class Validator {
public:
    Validator(ValidatorId id, const Committee& committee, const KeyRing* keys, const LeaderSchedule& schedule,
              ValidatorConfig config, ByzantineBehavior behavior = {})
        : id_(id),
          behavior_(behavior),
          config_(config),
          primary_(id, committee, keys, schedule, config.primary, behavior),
          consensus_(committee, schedule, config.primary.gc_depth),
          executor_(config.exec_failures),
          primary_node_(this) {
        for (WorkerId w = 0; w < config.workers; ++w) {
            workers_.push_back(std::make_unique<Worker>(id, w, committee, config.worker));
            worker_nodes_.push_back(std::make_unique<WorkerNode>(this, w));
        }
        executor_.create_genesis_objects(config.genesis_objects);
        if (config.crash_on_tx) executor_.arm_crash(*config.crash_on_tx);
        primary_.set_consensus_view([this](const Digest& d) { return consensus_.state().is_committed(d); },
                                    [this] { return !uncommitted_payload_.empty(); });
    }

    Validator(const Validator&) = delete;
    Validator& operator=(const Validator&) = delete;

    void attach(Network& net) {
        net_ = &net;
        net.add_node(primary_.addr(), &primary_node_);
        for (WorkerId w = 0; w < workers_.size(); ++w) net.add_node(NodeAddr::worker(id_, w), worker_nodes_[w].get());
        Outbox out;
        primary_.start(out);
        net.flush(primary_.addr(), out);
    }

    ValidatorId id() const { return id_; }
    const ByzantineBehavior& behavior() const { return behavior_; }
    bool honest() const { return !behavior_.is_byzantine(); }
    const Primary& primary() const { return primary_; }
    Primary& primary() { return primary_; }
    const Bullshark& consensus() const { return consensus_; }
    const Executor& executor() const { return executor_; }
    const Worker& worker(WorkerId w) const { return *workers_.at(w); }
    std::size_t worker_count() const { return workers_.size(); }
    const std::vector<CommitLogEntry>& commit_log() const { return commit_log_; }
    const std::vector<CommittedSubDag>& committed() const { return committed_; }
    const std::map<Digest, SimTime>& tx_commit_times() const { return tx_commit_times_; }
    const std::map<Digest, Digest>& tx_batches() const { return tx_batch_; }
    const std::map<Digest, SimTime>& cert_commit_times() const { return cert_commit_times_; }
    std::uint32_t crashes() const { return crashes_; }
    std::size_t pending_outputs() const { return pending_outputs_.size(); }

    /// Largest number of rounds the DAG has held at once, and the bound it must
    /// respect at that moment: gc_depth + (current - committed) + 1.
    struct MemoryProbe {
        std::uint64_t violations = 0;
        std::size_t max_rounds = 0;
        std::uint64_t below_gc_inserts = 0;
    };
    const MemoryProbe& memory_probe() const { return probe_; }

    /// Called for every certificate this validator's DAG stores, with the
    /// gc_round in force at insertion.
    using StoreObserver = std::function<void(ValidatorId, const Certificate&, Round gc_round, SimTime)>;
    void set_store_observer(StoreObserver f) { observer_ = std::move(f); }

    const Batch* find_batch(const Digest& d) const {
        for (const auto& w : workers_)
            if (const Batch* b = w->find_batch(d)) return b;
        return nullptr;
    }

private:
    struct PrimaryNode : SimNode {
        explicit PrimaryNode(Validator* v) : v(v) {}
        void on_message(const NodeAddr& from, const Message& m, SimTime now, Outbox& out) override {
            v->primary_.on_message(from, m, now, out);
            v->after_primary(now, out);
        }
        void on_timer(const Timer& t, SimTime now, Outbox& out) override {
            if (t.kind == TimerKind::exec_retry) v->on_exec_retry(t, now, out);
            else v->primary_.on_timer(t, now, out);
            v->after_primary(now, out);
        }
        Validator* v;
    };

    struct WorkerNode : SimNode {
        WorkerNode(Validator* v, WorkerId w) : v(v), w(w) {}
        void on_message(const NodeAddr& from, const Message& m, SimTime now, Outbox& out) override {
            v->workers_[w]->on_message(from, m, now, out);
        }
        void on_timer(const Timer& t, SimTime now, Outbox& out) override { v->workers_[w]->on_timer(t, now, out); }
        Validator* v;
        WorkerId w;
    };

    void after_primary(SimTime now, Outbox& out) {
        for (const auto& cert : primary_.take_newly_stored()) {
            if (observer_) observer_(id_, cert, primary_.dag().gc_round(), now);
            if (!cert.header().payload().empty() && !consensus_.state().is_committed(cert.digest()))
                uncommitted_payload_.emplace(cert.digest(), cert.round());
            auto outcome = consensus_.process_certificate(primary_.dag_mut(), cert);
            for (auto& sub : outcome.committed) {
                append_commit_log(commit_log_, sub);
                for (const auto& c : sub.certificates) {
                    uncommitted_payload_.erase(c.digest());
                    cert_commit_times_.emplace(c.digest(), now);
                }
                committed_.push_back(sub);
                pending_outputs_.push_back(std::move(sub));
            }
        }
        const Round gc = primary_.dag().gc_round();
        std::erase_if(uncommitted_payload_, [gc](const auto& kv) { return kv.second < gc; });
        check_memory_bound();
        pump_execution(now, out);
    }

    void check_memory_bound() {
        const DagState& dag = primary_.dag();
        const std::size_t retained = dag.rounds_retained();
        const Round committed = consensus_.state().last_committed_round;
        const Round current = std::max(primary_.current_round(), dag.highest_round());
        const std::size_t bound = static_cast<std::size_t>(config_.primary.gc_depth + (current - committed) + 1);
        probe_.max_rounds = std::max(probe_.max_rounds, retained);
        if (retained > bound) ++probe_.violations;
        if (!dag.vertices().empty() && dag.vertices().begin()->first < dag.gc_round()) ++probe_.below_gc_inserts;
    }

    void pump_execution(SimTime now, Outbox& out) {
        while (executor_.idle()) {
            if (inflight_round_) {
                last_completed_round_ = inflight_round_;
                inflight_round_.reset();
            }
            if (pending_outputs_.empty()) return;
            const CommittedSubDag& sub = pending_outputs_.front();
            ConsensusOutput output{sub, {}};
            std::map<WorkerId, std::vector<Digest>> missing;
            ValidatorId hint = sub.leader.author();
            for (const auto& c : sub.certificates) {
                std::vector<Batch> batches;
                for (const auto& p : c.header().payload()) {
                    const Batch* b = p.worker_id < workers_.size() ? workers_[p.worker_id]->find_batch(p.batch) : nullptr;
                    if (b) {
                        batches.push_back(*b);
                    } else {
                        missing[p.worker_id].push_back(p.batch);
                        hint = c.author();
                    }
                }
                output.batches.emplace_back(c.digest(), std::move(batches));
            }
            if (!missing.empty()) {
                for (auto& [w, ds] : missing)
                    if (w < workers_.size()) out.send(NodeAddr::worker(id_, w), Synchronize{ds, hint});
                return;  // resumed when the worker reports the batches
            }
            for (const auto& [_, batches] : output.batches)
                for (const auto& b : batches)
                    for (const auto& tx : b.transactions) tx_batch_.emplace(tx.digest(), b.digest());
            const Round leader_round = sub.leader.round();
            auto handled = executor_.handle_consensus_output(output);
            pending_outputs_.pop_front();
            if (auto* txs = std::get_if<std::vector<Transaction>>(&handled)) {
                inflight_round_ = leader_round;
                run_guarded(now, out, [&] { return executor_.drive(executor_.enqueue(*txs)); });
            }
        }
    }

    void on_exec_retry(const Timer& t, SimTime now, Outbox& out) {
        if (t.tag < retry_generation_ || t.tag >= retry_digests_.size()) return;
        const Digest d = retry_digests_[t.tag];
        run_guarded(now, out, [&] { return executor_.retry(d); });
    }

    template <typename F>
    void run_guarded(SimTime now, Outbox& out, F&& step) {
        const std::size_t before = executor_.effects().entries().size();
        std::vector<Digest> retries;
        try {
            retries = step();
        } catch (const Executor::CrashInjected&) {
            ++crashes_;
            executor_.recover(last_completed_round_);
            inflight_round_.reset();
            pending_outputs_.clear();
            for (const auto& sub : committed_)
                if (!last_completed_round_ || sub.leader.round() > *last_completed_round_)
                    pending_outputs_.push_back(sub);
            retry_generation_ = retry_digests_.size();
        }
        const auto& entries = executor_.effects().entries();
        for (std::size_t i = before; i < entries.size(); ++i) tx_commit_times_.emplace(entries[i].tx, now);
        for (const auto& d : retries) {
            out.schedule(kExecutionRetryInterval, Timer{TimerKind::exec_retry, retry_digests_.size()});
            retry_digests_.push_back(d);
        }
    }

    ValidatorId id_;
    ByzantineBehavior behavior_;
    ValidatorConfig config_;
    Primary primary_;
    Bullshark consensus_;
    Executor executor_;
    std::vector<std::unique_ptr<Worker>> workers_;
    PrimaryNode primary_node_;
    std::vector<std::unique_ptr<WorkerNode>> worker_nodes_;
    Network* net_ = nullptr;
    StoreObserver observer_;

    std::map<Digest, Round> uncommitted_payload_;
    std::vector<CommitLogEntry> commit_log_;
    std::vector<CommittedSubDag> committed_;
    std::deque<CommittedSubDag> pending_outputs_;
    std::optional<Round> inflight_round_;
    std::optional<Round> last_completed_round_;
    std::vector<Digest> retry_digests_;
    std::size_t retry_generation_ = 0;
    std::map<Digest, SimTime> tx_commit_times_;
    std::map<Digest, Digest> tx_batch_;
    std::map<Digest, SimTime> cert_commit_times_;
    std::uint32_t crashes_ = 0;
    MemoryProbe probe_;
};

}  // namespace narwhal
