// Safety and liveness properties evaluated over finished simulations.
// Each check returns the violations it found; an empty list means it held.

#pragma once

#include "narwhal/harness/runner.hpp"

namespace narwhal::harness {

struct Violation {
    std::string check;
    std::string detail;
};

using Violations = std::vector<Violation>;

/// Commit logs must be prefix-comparable pairwise.
inline Violations check_agreement(const std::vector<std::pair<ValidatorId, std::vector<CommitLogEntry>>>& logs) {
    Violations out;
    for (std::size_t i = 0; i < logs.size(); ++i)
        for (std::size_t j = i + 1; j < logs.size(); ++j) {
            const auto& a = logs[i].second;
            const auto& b = logs[j].second;
            const std::size_t n = std::min(a.size(), b.size());
            for (std::size_t k = 0; k < n; ++k)
                if (!(a[k] == b[k])) {
                    out.push_back({"agreement", to_string(logs[i].first) + " and " + to_string(logs[j].first) +
                                                    " diverge at commit log line " + std::to_string(k)});
                    break;
                }
        }
    return out;
}

/// Effects logs of honest replicas must agree on their common prefix.
inline Violations check_effects_agreement(const std::vector<std::pair<ValidatorId, std::vector<Effects>>>& logs) {
    Violations out;
    for (std::size_t i = 0; i < logs.size(); ++i)
        for (std::size_t j = i + 1; j < logs.size(); ++j) {
            const auto& a = logs[i].second;
            const auto& b = logs[j].second;
            const std::size_t n = std::min(a.size(), b.size());
            for (std::size_t k = 0; k < n; ++k)
                if (!(a[k] == b[k])) {
                    out.push_back({"effects_agreement", to_string(logs[i].first) + " and " +
                                                            to_string(logs[j].first) + " diverge at effect " +
                                                            std::to_string(k)});
                    break;
                }
        }
    return out;
}

/// No certificate appears twice in a commit log; leader rounds increase
/// strictly from one committed sub-DAG to the next.
inline Violations check_commit_log_shape(ValidatorId who, const std::vector<CommitLogEntry>& log) {
    Violations out;
    std::set<Digest> seen;
    std::optional<std::pair<std::uint64_t, Round>> last;
    for (const auto& e : log) {
        if (!seen.insert(e.digest).second)
            out.push_back({"commit_once", to_string(who) + " committed " + e.digest.short_hex() + " twice"});
        if (last && e.commit_index != last->first && e.leader_round <= last->second)
            out.push_back({"monotone_anchors", to_string(who) + " anchor round " + std::to_string(e.leader_round) +
                                                   " after " + std::to_string(last->second)});
        last = std::pair{e.commit_index, e.leader_round};
    }
    return out;
}

/// Structural lemmas over every certificate any validator stored: digest
/// integrity, quorum-stake strong parents one round back (2/3-causality)
/// and at least f+1 stake of honest-authored parents (chain quality).
inline Violations check_certificate_lemmas(const std::map<Digest, Certificate>& registry, const Committee& committee,
                                           const std::function<bool(ValidatorId)>& honest) {
    Violations out;
    for (const auto& [d, c] : registry) {
        if (c.is_genesis()) continue;
        if (c.header().compute_digest() != d) out.push_back({"integrity", d.short_hex()});
        std::set<ValidatorId> authors;
        Stake honest_stake = 0;
        bool shape_ok = true;
        for (const auto& p : c.header().parents()) {
            const Certificate* parent = nullptr;
            if (auto it = registry.find(p); it != registry.end()) parent = &it->second;
            Round pr = 0;
            ValidatorId pa{};
            if (parent) {
                pr = parent->round();
                pa = parent->author();
            } else if (c.round() == 1) {
                for (const auto& m : committee.members())
                    if (Certificate::genesis(committee, m.id).digest() == p) pa = m.id;
                if (pa == ValidatorId{}) shape_ok = false;
            } else {
                shape_ok = false;  // parent never seen anywhere
                continue;
            }
            if (pr + 1 != c.round() || !authors.insert(pa).second) shape_ok = false;
            if (honest(pa)) honest_stake += committee.stake(pa);
        }
        if (!shape_ok || committee.stake_of(authors) < committee.quorum_threshold())
            out.push_back({"causality", to_string(c.author()) + "@" + std::to_string(c.round()) +
                                            " has parents below quorum stake"});
        if (honest_stake < committee.validity_threshold())
            out.push_back({"chain_quality", to_string(c.author()) + "@" + std::to_string(c.round()) + " has " +
                                                std::to_string(honest_stake) + " honest parent stake"});
    }
    return out;
}

/// An anchor one honest replica skipped is never committed as an anchor by
/// another honest replica.
inline Violations check_skip_soundness(const Simulation& sim) {
    Violations out;
    std::map<Round, ValidatorId> committed_leaders;
    for (const auto& v : sim.validators())
        if (v->honest())
            for (const auto& sub : v->committed()) committed_leaders.emplace(sub.leader.round(), sub.leader.author());
    for (const auto& v : sim.validators()) {
        if (!v->honest()) continue;
        for (const auto& s : v->consensus().skipped())
            if (auto it = committed_leaders.find(s.round); it != committed_leaders.end() && it->second == s.leader)
                out.push_back({"skip_soundness", to_string(v->id()) + " skipped round " + std::to_string(s.round) +
                                                     " which another replica committed"});
    }
    return out;
}

/// Every payload batch of a committed certificate is held by honest
/// workers with at least f+1 stake.
inline Violations check_availability(const Simulation& sim) {
    Violations out;
    std::set<Digest> batches;
    for (const auto& v : sim.validators())
        if (v->honest())
            for (const auto& sub : v->committed())
                for (const auto& c : sub.certificates)
                    for (const auto& p : c.header().payload()) batches.insert(p.batch);
    for (const auto& b : batches) {
        Stake holders = 0;
        for (const auto& v : sim.validators())
            if (v->honest() && v->find_batch(b)) holders += sim.committee().stake(v->id());
        if (holders < sim.committee().validity_threshold())
            out.push_back({"availability", "batch " + b.short_hex() + " held by stake " + std::to_string(holders)});
    }
    return out;
}

/// Retained rounds never exceed gc_depth + (current - committed) + 1 and
/// nothing sits below gc_round.
inline Violations check_gc_bound(const Simulation& sim) {
    Violations out;
    for (const auto& v : sim.validators()) {
        const auto& p = v->memory_probe();
        if (p.violations)
            out.push_back({"gc_bound", to_string(v->id()) + " exceeded the retained-round bound " +
                                           std::to_string(p.violations) + " times"});
        if (p.below_gc_inserts)
            out.push_back({"gc_bound", to_string(v->id()) + " held rounds below gc_round"});
    }
    return out;
}

/// Certificates of `slow` stored by honest replicas at rounds >= their
/// gc_round are all committed, except those in the last `window` rounds
/// below the final commit, which may still be in flight. Payload-carrying
/// certificates are never exempt.
inline Violations check_fairness(const Simulation& sim, ValidatorId slow, Round window) {
    Violations out;
    for (const auto& v : sim.validators()) {
        if (!v->honest()) continue;
        std::set<Digest> committed;
        for (const auto& e : v->commit_log()) committed.insert(e.digest);
        const Round gc = v->primary().dag().gc_round();
        const Round last = v->consensus().state().last_committed_round;
        for (const auto& d : sim.inserted(v->id())) {
            const Certificate& c = sim.registry().at(d);
            if (c.author() != slow || c.round() < gc) continue;
            const bool settled = c.round() + window <= last || !c.header().payload().empty();
            if (settled && !committed.contains(d))
                out.push_back({"fairness", to_string(v->id()) + " never committed " + to_string(slow) + "@" +
                                               std::to_string(c.round())});
        }
    }
    return out;
}

/// Every wave (four rounds) up to the last commit that has an anchor led
/// by an honest validator commits at least one anchor.
inline Violations check_wave_progress(const Simulation& sim) {
    Violations out;
    for (const auto& v : sim.validators()) {
        if (!v->honest()) continue;
        std::set<Round> waves;
        for (const auto& sub : v->committed()) waves.insert(LeaderSchedule::wave(sub.leader.round()));
        const Round last = v->consensus().state().last_committed_round;
        for (Round w = 1; 4 * w - 1 <= last; ++w) {
            const bool honest_leader = sim.scenario().is_honest(sim.schedule().leader(4 * w - 3)) ||
                                       sim.scenario().is_honest(sim.schedule().leader(4 * w - 1));
            if (honest_leader && !waves.contains(w))
                out.push_back({"wave_progress", to_string(v->id()) + " committed nothing in wave " + std::to_string(w)});
        }
    }
    return out;
}

/// All transactions sent to honest validators executed everywhere honest.
inline Violations check_liveness(const Simulation& sim) {
    Violations out;
    for (const auto& v : sim.validators()) {
        if (!v->honest()) continue;
        std::uint64_t missing = 0;
        for (const auto& d : sim.expected())
            if (!v->executor().effects().contains(d)) ++missing;
        if (missing)
            out.push_back({"liveness", to_string(v->id()) + " is missing " + std::to_string(missing) + " of " +
                                           std::to_string(sim.expected().size()) + " transactions"});
    }
    return out;
}

/// Each honest replica executed each transaction at most once and its
/// object store matches its effects log.
inline Violations check_exactly_once(const Simulation& sim) {
    Violations out;
    for (const auto& v : sim.validators()) {
        if (!v->honest()) continue;
        std::set<Digest> seen;
        for (const auto& e : v->executor().effects().entries())
            if (!seen.insert(e.tx).second)
                out.push_back({"exactly_once", to_string(v->id()) + " executed " + e.tx.short_hex() + " twice"});
        if (!v->executor().store_matches_effects(sim.scenario().load.objects))
            out.push_back({"exactly_once", to_string(v->id()) + " store diverges from its effects log"});
    }
    return out;
}

/// The safety checks that must hold in every run.
inline Violations check_safety(const Simulation& sim) {
    Violations out;
    auto add = [&](Violations v) { out.insert(out.end(), v.begin(), v.end()); };
    std::vector<std::pair<ValidatorId, std::vector<CommitLogEntry>>> logs;
    std::vector<std::pair<ValidatorId, std::vector<Effects>>> effects;
    for (const auto& v : sim.validators()) {
        if (!v->honest()) continue;
        logs.emplace_back(v->id(), v->commit_log());
        effects.emplace_back(v->id(), v->executor().effects().entries());
        add(check_commit_log_shape(v->id(), v->commit_log()));
    }
    add(check_agreement(logs));
    add(check_effects_agreement(effects));
    if (sim.slot_conflicts())
        out.push_back({"containment", std::to_string(sim.slot_conflicts()) + " conflicting certificates stored"});
    add(check_certificate_lemmas(sim.registry(), sim.committee(),
                                 [&](ValidatorId v) { return sim.scenario().is_honest(v); }));
    add(check_skip_soundness(sim));
    add(check_availability(sim));
    add(check_gc_bound(sim));
    add(check_exactly_once(sim));
    return out;
}

}  // namespace narwhal::harness
