// Builds a committee of validators from a scenario, drives client load over
// the simulated network and collects what the checks and exporters need.

#pragma once

#include <cstdio>
#include <random>

#include "narwhal/harness/scenario.hpp"

namespace narwhal::harness {

struct LoadTx {
    std::uint64_t index;
    Transaction tx;
    Digest digest;
    SimTime at;
    std::vector<NodeAddr> targets;
};

/// Deterministic client load for a scenario.
inline std::vector<LoadTx> make_client_load(const Scenario& s) {
    std::vector<LoadTx> out;
    const auto& l = s.load;
    std::mt19937_64 rng(splitmix64(s.seed ^ 0x636c69656e74ULL));
    auto pick = [&](std::uint64_t lo, std::uint64_t hi) { return lo + rng() % (hi - lo + 1); };
    const auto ids = s.committee().ids();
    for (std::uint64_t i = 0; i < l.tx_count; ++i) {
        std::vector<std::uint64_t> keys;
        const bool create = l.create_every && i % l.create_every == l.create_every - 1;
        if (create) {
            keys.push_back(l.objects + i);
        } else {
            while (keys.size() < l.keys_per_tx) {
                const auto k = pick(0, l.objects - 1);
                if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
            }
        }
        const std::size_t head = 1 + 8 * keys.size();
        Bytes value(l.tx_size > head ? l.tx_size - head : 0);
        for (auto& b : value) b = static_cast<std::uint8_t>(rng());
        Transaction tx{make_payload(keys, create, value), pick(l.fee_min, l.fee_max), i};
        LoadTx c{i, tx, tx.digest(), l.start + static_cast<SimTime>(i) * l.interval, {}};
        const auto worker = static_cast<WorkerId>((i / ids.size()) % s.workers);
        c.targets.push_back(NodeAddr::worker(ids[i % ids.size()], worker));
        if (l.duplicate_every && i % l.duplicate_every == 0 && ids.size() > 1)
            c.targets.push_back(NodeAddr::worker(ids[(i + 1) % ids.size()], worker));
        out.push_back(std::move(c));
    }
    return out;
}

struct ReplicaMetrics {
    std::uint64_t committed_txs = 0;
    std::uint64_t aborted_txs = 0;
    std::uint64_t committed_certs = 0;
    double mean_latency_ms = 0;
    double mean_latency_rounds = 0;
    double certs_per_round = 0;
    std::uint64_t skipped_anchors = 0;
};

class Simulation {
public:
    explicit Simulation(Scenario s)
        : scenario_(std::move(s)),
          committee_(scenario_.committee()),
          keys_(splitmix64(scenario_.seed ^ 0x6b657973ULL)),
          schedule_(scenario_.schedule()),
          net_(network_config()) {
        if (scenario_.mode != "simulate") throw ScenarioError("Simulation needs mode = simulate");
        load_ = make_client_load(scenario_);
        std::map<Digest, std::uint32_t> failures;
        for (const auto& [idx, k] : scenario_.exec_faults)
            if (idx < load_.size()) failures[load_[idx].digest] = k;
        for (const auto& m : committee_.members()) {
            ValidatorConfig vc;
            vc.primary = scenario_.primary;
            vc.worker = scenario_.worker;
            vc.workers = scenario_.workers;
            vc.genesis_objects = scenario_.load.objects;
            vc.exec_failures = failures;
            if (auto it = scenario_.crash.find(m.id); it != scenario_.crash.end() && it->second < load_.size())
                vc.crash_on_tx = load_[it->second].digest;
            ByzantineBehavior b;
            if (auto it = scenario_.byzantine.find(m.id); it != scenario_.byzantine.end()) b = it->second;
            auto v = std::make_unique<Validator>(m.id, committee_, &keys_, schedule_, vc, b);
            v->set_store_observer([this](ValidatorId who, const Certificate& c, Round, SimTime) { observe(who, c); });
            validators_.push_back(std::move(v));
            if (b.is_byzantine()) net_.set_behavior(m.id, b);
        }
        for (const auto& [v, factor] : scenario_.slow) net_.set_slowness(v, factor);
        if (scenario_.trace) net_.enable_trace(true);
        for (auto& v : validators_) v->attach(net_);
        for (const auto& c : load_)
            for (const auto& to : c.targets) net_.inject(c.at, to, ClientTx{c.tx});
        for (const auto& c : load_)
            for (const auto& to : c.targets)
                if (scenario_.is_honest(to.validator)) {
                    expected_.insert(c.digest);
                    break;
                }
    }

    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    /// Runs until every honest replica has executed (or recorded an abort
    /// for) every transaction submitted to an honest validator, the network
    /// goes quiet, or max_time passes.
    RunResult run() {
        result_ = net_.run_until([this] { return done(); }, scenario_.max_time);
        return result_;
    }

    /// Stops once `round` is reached by the first honest primary.
    RunResult run_to_round(Round round) {
        Validator* v = first_honest();
        result_ = net_.run_until([&] { return v && v->primary().current_round() >= round; }, scenario_.max_time);
        return result_;
    }

    bool done() const {
        if (expected_.empty()) return false;
        std::size_t total = 0;
        for (const auto& v : validators_) {
            if (!v->honest()) continue;
            const std::size_t have = v->executor().effects().entries().size();
            if (have < expected_.size()) return false;
            total += have;
        }
        if (total == checked_total_) return false;
        checked_total_ = total;
        for (const auto& v : validators_) {
            if (!v->honest()) continue;
            const auto& fx = v->executor().effects();
            for (const auto& d : expected_)
                if (!fx.contains(d)) return false;
        }
        return true;
    }

    const Scenario& scenario() const { return scenario_; }
    const Committee& committee() const { return committee_; }
    const LeaderSchedule& schedule() const { return schedule_; }
    const Network& network() const { return net_; }
    const RunResult& result() const { return result_; }
    const std::vector<LoadTx>& load() const { return load_; }
    const std::set<Digest>& expected() const { return expected_; }
    const std::vector<std::unique_ptr<Validator>>& validators() const { return validators_; }
    const Validator& validator(ValidatorId id) const {
        for (const auto& v : validators_)
            if (v->id() == id) return *v;
        throw std::out_of_range("no validator " + to_string(id));
    }
    Validator* first_honest() const {
        for (const auto& v : validators_)
            if (v->honest()) return v.get();
        return nullptr;
    }

    /// Every certificate stored anywhere, by digest.
    const std::map<Digest, Certificate>& registry() const { return registry_; }
    /// Digest each (author, round) slot was first stored with; conflicting
    /// digests for one slot are counted.
    std::uint64_t slot_conflicts() const { return slot_conflicts_; }
    /// Insertion order per validator.
    const std::vector<Digest>& inserted(ValidatorId v) const {
        static const std::vector<Digest> none;
        auto it = inserted_.find(v);
        return it == inserted_.end() ? none : it->second;
    }

    std::map<Digest, SimTime> seal_times() const {
        std::map<Digest, SimTime> out;
        for (const auto& v : validators_)
            for (WorkerId w = 0; w < v->worker_count(); ++w)
                for (const auto& [d, t] : v->worker(w).seal_times()) out.emplace(d, t);
        return out;
    }

    ReplicaMetrics metrics(const Validator& v) const {
        ReplicaMetrics m;
        const auto seals = seal_times();
        double latency_sum = 0;
        std::uint64_t latency_n = 0;
        for (const auto& e : v.executor().effects().entries()) {
            if (e.aborted) {
                ++m.aborted_txs;
                continue;
            }
            ++m.committed_txs;
            auto b = v.tx_batches().find(e.tx);
            auto t = v.tx_commit_times().find(e.tx);
            if (b == v.tx_batches().end() || t == v.tx_commit_times().end()) continue;
            auto s = seals.find(b->second);
            if (s == seals.end()) continue;
            latency_sum += static_cast<double>(t->second - s->second);
            ++latency_n;
        }
        if (latency_n) m.mean_latency_ms = latency_sum / static_cast<double>(latency_n);
        double rounds_sum = 0;
        for (const auto& e : v.commit_log()) rounds_sum += static_cast<double>(e.leader_round - e.round);
        m.committed_certs = v.commit_log().size();
        if (m.committed_certs) m.mean_latency_rounds = rounds_sum / static_cast<double>(m.committed_certs);
        std::map<Round, std::uint64_t> per_round;
        for (const auto& d : inserted(v.id())) per_round[registry_.at(d).round()]++;
        if (!per_round.empty()) {
            std::uint64_t total = 0;
            for (const auto& [_, c] : per_round) total += c;
            m.certs_per_round = static_cast<double>(total) / static_cast<double>(per_round.size());
        }
        m.skipped_anchors = v.consensus().skipped().size();
        return m;
    }

private:
    NetworkConfig network_config() const {
        NetworkConfig c = scenario_.network;
        c.seed = splitmix64(scenario_.seed ^ 0x6e6574ULL);
        return c;
    }

    void observe(ValidatorId who, const Certificate& c) {
        inserted_[who].push_back(c.digest());
        registry_.emplace(c.digest(), c);
        auto [it, fresh] = slots_.emplace(std::pair{c.author(), c.round()}, c.digest());
        if (!fresh && it->second != c.digest()) ++slot_conflicts_;
    }

    Scenario scenario_;
    Committee committee_;
    KeyRing keys_;
    LeaderSchedule schedule_;
    Network net_;
    std::vector<std::unique_ptr<Validator>> validators_;
    std::vector<LoadTx> load_;
    std::set<Digest> expected_;
    RunResult result_;
    mutable std::size_t checked_total_ = 0;

    std::map<Digest, Certificate> registry_;
    std::map<std::pair<ValidatorId, Round>, Digest> slots_;
    std::uint64_t slot_conflicts_ = 0;
    std::map<ValidatorId, std::vector<Digest>> inserted_;
};

inline std::string fixed3(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", x);
    return buf;
}

}  // namespace narwhal::harness
