// Reference commit sequence computed from a complete DAG by brute force,
// and the incremental replay it is compared against.
//
// The oracle never uses DagState: reachability is a transitive closure over
// all parent edges, built round by round.

#pragma once

#include <random>

#include "narwhal/harness/crafted.hpp"

namespace narwhal::harness {

struct RandomDagParams {
    std::uint32_t n = 4;
    Round rounds = 10;
    std::uint32_t weak_permille = 200;  // chance a vertex adds one weak link
    std::uint32_t skip_permille = 150;  // chance a validator has no vertex in a round
};

/// A random valid DAG: each round has at least a quorum of authors, each
/// vertex has a random quorum of parents from the round below and sometimes a
/// weak link to an older certificate it cannot reach.
inline std::vector<Certificate> random_dag(std::uint64_t seed, const RandomDagParams& p, const KeyRing& keys) {
    const Committee committee = Committee::uniform(p.n);
    std::mt19937_64 rng(splitmix64(seed ^ 0x646167ULL));
    auto chance = [&](std::uint32_t permille) { return rng() % 1000 < permille; };
    std::vector<Certificate> out;
    std::vector<std::vector<Certificate>> by_round(p.rounds + 1);
    for (const auto& m : committee.members()) by_round[0].push_back(Certificate::genesis(committee, m.id));
    std::map<Digest, std::set<Digest>> reach;  // strong+weak closure, for choosing weak links
    for (const auto& g : by_round[0]) reach[g.digest()] = {g.digest()};

    for (Round r = 1; r <= p.rounds; ++r) {
        std::vector<ValidatorId> authors;
        for (const auto& m : committee.members())
            if (!chance(p.skip_permille)) authors.push_back(m.id);
        while (authors.size() < committee.quorum_threshold()) {
            const ValidatorId v{static_cast<std::uint32_t>(1 + rng() % p.n)};
            if (std::find(authors.begin(), authors.end(), v) == authors.end()) authors.push_back(v);
        }
        std::sort(authors.begin(), authors.end());
        const auto& prev = by_round[r - 1];
        for (auto a : authors) {
            std::vector<std::size_t> idx(prev.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            std::shuffle(idx.begin(), idx.end(), rng);
            const std::size_t lo = committee.quorum_threshold();
            const std::size_t take = lo + rng() % (prev.size() - lo + 1);
            std::set<Digest> parents;
            std::set<Digest> closure;
            for (std::size_t i = 0; i < take; ++i) {
                parents.insert(prev[idx[i]].digest());
                const auto& c = reach.at(prev[idx[i]].digest());
                closure.insert(c.begin(), c.end());
            }
            std::set<CertRef> weak;
            if (r >= 3 && chance(p.weak_permille)) {
                std::vector<const Certificate*> candidates;
                for (Round wr = 1; wr + 2 <= r; ++wr)
                    for (const auto& c : by_round[wr])
                        if (!closure.contains(c.digest())) candidates.push_back(&c);
                if (!candidates.empty()) {
                    const Certificate* w = candidates[rng() % candidates.size()];
                    weak.insert(CertRef{w->round(), w->digest()});
                    const auto& c = reach.at(w->digest());
                    closure.insert(c.begin(), c.end());
                }
            }
            Header h(a, r, committee.epoch(), {}, std::move(parents), std::move(weak), static_cast<SimTime>(r));
            Certificate cert = certify(committee, keys, h);
            closure.insert(cert.digest());
            reach[cert.digest()] = std::move(closure);
            by_round[r].push_back(cert);
            out.push_back(cert);
        }
    }
    return out;
}

/// Commit sequence of a complete DAG: the highest anchor with f+1 votes
/// commits, earlier anchors reachable along the chain of committed anchors
/// commit before it, and each anchor outputs its not-yet-output history
/// sorted by (round, author).
inline std::vector<CommitLogEntry> oracle_commit(const std::vector<Certificate>& dag, const Committee& committee,
                                                 const LeaderSchedule& schedule) {
    std::map<Digest, const Certificate*> by_digest;
    std::map<std::pair<Round, ValidatorId>, const Certificate*> slot;
    Round top_round = 0;
    for (const auto& c : dag) {
        by_digest[c.digest()] = &c;
        slot[{c.round(), c.author()}] = &c;
        top_round = std::max(top_round, c.round());
    }
    std::vector<const Certificate*> sorted;
    for (const auto& [_, c] : by_digest) sorted.push_back(c);
    std::sort(sorted.begin(), sorted.end(), [](const Certificate* a, const Certificate* b) {
        return std::pair{a->round(), a->author()} < std::pair{b->round(), b->author()};
    });
    std::map<Digest, std::set<Digest>> reach;
    for (const Certificate* c : sorted) {
        std::set<Digest> r{c->digest()};
        for (const auto& p : c->all_parents())
            if (auto it = reach.find(p.digest); it != reach.end()) r.insert(it->second.begin(), it->second.end());
        reach[c->digest()] = std::move(r);
    }

    auto anchor_at = [&](Round r) -> const Certificate* {
        auto it = slot.find({r, schedule.leader(r)});
        return it == slot.end() ? nullptr : it->second;
    };
    const Certificate* top = nullptr;
    for (Round r = 1; r + 1 <= top_round; r += 2) {
        const Certificate* a = anchor_at(r);
        if (!a) continue;
        Stake votes = 0;
        for (const Certificate* c : sorted)
            if (c->round() == r + 1 && c->header().parents().contains(a->digest())) votes += committee.stake(c->author());
        if (votes >= committee.validity_threshold()) top = a;
    }
    std::vector<const Certificate*> anchors;
    if (top) {
        anchors.push_back(top);
        const Certificate* cursor = top;
        for (Round r = top->round(); r >= 3;) {
            r -= 2;
            const Certificate* a = anchor_at(r);
            if (a && reach.at(cursor->digest()).contains(a->digest())) {
                anchors.push_back(a);
                cursor = a;
            }
        }
        std::reverse(anchors.begin(), anchors.end());
    }
    std::vector<CommitLogEntry> log;
    std::set<Digest> output;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        std::vector<const Certificate*> sub;
        for (const auto& d : reach.at(anchors[i]->digest())) {
            const Certificate* c = by_digest.at(d);
            if (c->round() >= 1 && !output.contains(d)) sub.push_back(c);
        }
        std::sort(sub.begin(), sub.end(), [](const Certificate* a, const Certificate* b) {
            return std::pair{a->round(), a->author()} < std::pair{b->round(), b->author()};
        });
        for (const Certificate* c : sub) {
            output.insert(c->digest());
            log.push_back({i, anchors[i]->round(), c->author(), c->round(), c->digest()});
        }
    }
    return log;
}

/// Feeds certificates in the given order (not necessarily causal) through
/// a primary's DAG and a consensus instance; returns the commit log.
inline std::vector<CommitLogEntry> incremental_commit(const std::vector<Certificate>& order, const Committee& committee,
                                                      const KeyRing& keys, const LeaderSchedule& schedule,
                                                      Round gc_depth = kDefaultGcDepth) {
    PrimaryConfig pc;
    pc.gc_depth = gc_depth;
    const ValidatorId self = committee.members().front().id;
    Primary primary(self, committee, &keys, schedule, pc);
    Bullshark consensus(committee, schedule, gc_depth);
    std::vector<CommitLogEntry> log;
    SimTime now = 0;
    for (const auto& c : order) {
        Outbox out;
        (void)primary.process_incoming_certificate(c, c.author(), ++now, out);
        for (const auto& stored : primary.take_newly_stored())
            for (const auto& sub : consensus.process_certificate(primary.dag_mut(), stored).committed)
                append_commit_log(log, sub);
    }
    return log;
}

struct OracleComparison {
    std::uint64_t trials = 0;
    std::uint64_t matches = 0;
    std::vector<std::string> mismatches;
};

/// For each seed, a random DAG replayed in `permutations` random delivery
/// orders; every incremental log must equal the oracle's.
inline OracleComparison compare_with_oracle(std::uint64_t seed_lo, std::uint64_t seed_hi, const RandomDagParams& params,
                                            std::uint32_t permutations) {
    OracleComparison out;
    const Committee committee = Committee::uniform(params.n);
    for (std::uint64_t seed = seed_lo; seed <= seed_hi; ++seed) {
        const KeyRing keys(seed);
        const LeaderSchedule schedule(committee, seed);
        const auto dag = random_dag(seed, params, keys);
        const auto expected = oracle_commit(dag, committee, schedule);
        std::mt19937_64 rng(splitmix64(seed ^ 0x7065726dULL));
        for (std::uint32_t k = 0; k < permutations; ++k) {
            auto order = dag;
            std::shuffle(order.begin(), order.end(), rng);
            ++out.trials;
            if (incremental_commit(order, committee, keys, schedule) == expected) {
                ++out.matches;
            } else {
                out.mismatches.push_back("seed " + std::to_string(seed) + " permutation " + std::to_string(k));
            }
        }
    }
    return out;
}

}  // namespace narwhal::harness
