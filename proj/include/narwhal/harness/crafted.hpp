// Crafted mode: certificates are built by hand from the scenario's
// [vertices] table and delivered to each [view.N] in the listed order. Each
// view runs its own primary DAG and consensus instance.

#pragma once

#include "narwhal/harness/scenario.hpp"

namespace narwhal::harness {

/// Certifies a header with votes from the author first, then ascending ids,
/// until the quorum threshold is met.
inline Certificate certify(const Committee& committee, const KeyRing& keys, const Header& h) {
    std::vector<ValidatorId> voters{h.author()};
    for (const auto& m : committee.members())
        if (m.id != h.author()) voters.push_back(m.id);
    std::vector<Vote> votes;
    std::set<ValidatorId> have;
    for (auto v : voters) {
        if (quorum_reached(committee, have)) break;
        votes.push_back(Vote::make(h, Signer(&keys, v)));
        have.insert(v);
    }
    return Certificate::make(committee, keys, h, std::move(votes));
}

inline std::map<std::string, Certificate> build_crafted_certificates(const Scenario& s, const KeyRing& keys) {
    const Committee committee = s.committee();
    std::map<std::string, Certificate> out;
    for (const auto& v : s.vertices) {
        std::set<Digest> parents;
        for (const auto& p : v.parents) {
            if (p == "genesis") {
                for (const auto& m : committee.members()) parents.insert(Certificate::genesis(committee, m.id).digest());
                continue;
            }
            auto it = out.find(p);
            if (it == out.end()) throw ScenarioError("vertex " + v.name + " names unknown or later parent " + p);
            parents.insert(it->second.digest());
        }
        Header h(v.author, v.round, committee.epoch(), {}, std::move(parents), {}, 0);
        out.emplace(v.name, certify(committee, keys, h));
    }
    return out;
}

struct CraftedReplica {
    ValidatorId validator;
    std::unique_ptr<Primary> primary;
    std::unique_ptr<Bullshark> consensus;
    std::vector<CommitLogEntry> commit_log;
    std::vector<CommittedSubDag> committed;
    std::vector<std::string> delivered;
};

class CraftedRun {
public:
    explicit CraftedRun(Scenario s) : scenario_(std::move(s)), committee_(scenario_.committee()), keys_(scenario_.seed) {
        if (scenario_.mode != "crafted") throw ScenarioError("CraftedRun needs mode = crafted");
        certs_ = build_crafted_certificates(scenario_, keys_);
        for (const auto& [name, c] : certs_) names_.emplace(c.digest(), name);
        for (const auto& view : scenario_.views) {
            CraftedReplica r;
            r.validator = view.validator;
            PrimaryConfig pc = scenario_.primary;
            r.primary = std::make_unique<Primary>(view.validator, committee_, &keys_, scenario_.schedule(), pc);
            r.consensus = std::make_unique<Bullshark>(committee_, scenario_.schedule(), pc.gc_depth);
            replicas_.push_back(std::move(r));
        }
    }

    /// Delivers each view's certificates, stopping after those at rounds
    /// <= max_round when given.
    void run(std::optional<Round> max_round = std::nullopt) {
        for (std::size_t i = 0; i < replicas_.size(); ++i) {
            auto& r = replicas_[i];
            SimTime now = 0;
            for (const auto& name : scenario_.views[i].deliver) {
                const Certificate& c = certs_.at(name);
                if (max_round && c.round() > *max_round) continue;
                Outbox out;
                (void)r.primary->process_incoming_certificate(c, c.author(), ++now, out);
                r.delivered.push_back(name);
                for (const auto& stored : r.primary->take_newly_stored())
                    for (auto& sub : r.consensus->process_certificate(r.primary->dag_mut(), stored).committed) {
                        append_commit_log(r.commit_log, sub);
                        r.committed.push_back(std::move(sub));
                    }
            }
        }
    }

    const Scenario& scenario() const { return scenario_; }
    const Committee& committee() const { return committee_; }
    const std::map<std::string, Certificate>& certificates() const { return certs_; }
    const std::vector<CraftedReplica>& replicas() const { return replicas_; }
    const CraftedReplica& replica(ValidatorId v) const {
        for (const auto& r : replicas_)
            if (r.validator == v) return r;
        throw std::out_of_range("no view for " + to_string(v));
    }
    std::string name_of(const Digest& d) const {
        auto it = names_.find(d);
        return it == names_.end() ? d.short_hex() : it->second;
    }

private:
    Scenario scenario_;
    Committee committee_;
    KeyRing keys_;
    std::map<std::string, Certificate> certs_;
    std::map<Digest, std::string> names_;
    std::vector<CraftedReplica> replicas_;
};

}  // namespace narwhal::harness
