// Partially synchronous Bullshark ordering over the local DAG.
//
// Anchors sit at odd rounds; a round r+1 certificate that has the anchor of
// round r among its parents counts as a vote for it. An anchor with f+1
// votes commits directly; earlier anchors are ordered before it if they
// are reachable from the next anchor known to commit, and skipped otherwise.

#pragma once

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <unordered_set>

#include "narwhal/dag.hpp"

namespace narwhal {

inline constexpr Round kDefaultGcDepth = 50;

// ---------------------------------------------------------------------------
// Leader schedule

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stake-weighted pick keyed by (seed, round): splitmix64(seed ^ splitmix64(round))
/// reduced modulo total stake, then located on the cumulative stake line in
/// ascending validator-id order.
inline ValidatorId leader_schedule(Round round, const Committee& committee, std::uint64_t seed) {
    if (round % 2 == 0) throw ProtocolError("anchor rounds are odd");
    const Stake point = splitmix64(seed ^ splitmix64(round)) % committee.total_stake();
    Stake acc = 0;
    for (const auto& m : committee.members()) {
        acc += m.stake;
        if (point < acc) return m.id;
    }
    return committee.members().back().id;
}

class LeaderSchedule {
public:
    LeaderSchedule() = default;
    LeaderSchedule(Committee committee, std::uint64_t seed, std::map<Round, ValidatorId> overrides = {})
        : committee_(std::move(committee)), seed_(seed), overrides_(std::move(overrides)) {}

    ValidatorId leader(Round round) const {
        if (auto it = overrides_.find(round); it != overrides_.end()) return it->second;
        return leader_schedule(round, committee_, seed_);
    }

    static bool is_anchor_round(Round r) { return r % 2 == 1; }
    /// Four-round wave bookkeeping; informational only.
    static Round wave(Round r) { return (r + 3) / 4; }

private:
    Committee committee_;
    std::uint64_t seed_ = 0;
    std::map<Round, ValidatorId> overrides_;
};

// ---------------------------------------------------------------------------
// State and outputs

struct CommittedSubDag {
    Certificate leader;
    std::vector<Certificate> certificates;  // leader last
    std::uint64_t commit_index = 0;
};

struct Outcome {
    std::vector<CommittedSubDag> committed;  // empty means no-op
    bool is_commit() const { return !committed.empty(); }
};

struct SkippedAnchor {
    Round round;
    ValidatorId leader;
    bool present;  // the leader's certificate existed locally when skipped
};

struct ConsensusState {
    Round last_committed_round = 0;
    std::optional<std::pair<Round, ValidatorId>> last_committed_leader;
    std::map<ValidatorId, Round> last_committed_per_author;
    Round gc_depth = kDefaultGcDepth;
    std::unordered_set<Digest> committed;
    std::map<Round, std::vector<Digest>> committed_by_round;  // for pruning below gc_round
    std::uint64_t next_commit_index = 0;

    bool is_committed(const Digest& d) const { return committed.contains(d); }
};

// ---------------------------------------------------------------------------
// Commit rule

inline Stake count_anchor_votes(const DagState& dag, const Certificate& anchor, const Committee& committee) {
    const auto* children = dag.round(anchor.round() + 1);
    if (!children) return 0;
    Stake votes = 0;
    for (const auto& [author, cert] : *children)
        if (cert.header().parents().contains(anchor.digest())) votes += committee.stake(author);
    return votes;
}

/// Uncommitted causal history of the anchor at rounds >= max(gc_round, 1),
/// ascending round with ties by ascending author; the anchor comes last.
inline std::vector<Certificate> flatten_sub_dag(const Certificate& anchor, const DagState& dag,
                                                const std::unordered_set<Digest>& committed, Round gc_round) {
    auto history = dag.causal_history(anchor, [&](const Certificate& c) {
        return c.round() >= gc_round && c.round() >= 1 && !committed.contains(c.digest());
    });
    std::sort(history.begin(), history.end(), [](const Certificate* a, const Certificate* b) {
        return std::pair{a->round(), a->author()} < std::pair{b->round(), b->author()};
    });
    std::vector<Certificate> out;
    out.reserve(history.size());
    for (const auto* c : history) out.push_back(*c);
    return out;
}

/// Weak links for a header at `round`: certificates at rounds in
/// [max(gc_round, 1), round - 2] not reachable from the chosen strong
/// parents and not yet ordered. Only the newest unreachable certificates are
/// returned; older ones are covered through them.
inline std::set<CertRef> weak_link_candidates(const DagState& dag, const std::set<Digest>& strong_parents, Round round,
                                              const std::function<bool(const Digest&)>& already_ordered) {
    std::set<CertRef> out;
    if (round < 3) return out;
    const Round lo = std::max<Round>(dag.gc_round(), 1);
    std::unordered_set<Digest> reachable;
    auto absorb = [&](const Certificate& from) {
        for (const auto* c : dag.causal_history(from, [&](const Certificate& x) {
                 return x.round() >= lo && !reachable.contains(x.digest());
             }))
            reachable.insert(c->digest());
    };
    for (const auto& p : strong_parents)
        if (const Certificate* c = dag.find(p)) absorb(*c);
    for (Round r = round - 2; r >= lo; --r) {
        const auto* certs = dag.round(r);
        if (certs) {
            for (const auto& [author, cert] : *certs) {
                if (reachable.contains(cert.digest()) || already_ordered(cert.digest())) continue;
                out.insert(CertRef{r, cert.digest()});
                absorb(cert);
            }
        }
        if (r == lo) break;
    }
    return out;
}

class Bullshark {
public:
    Bullshark(Committee committee, LeaderSchedule schedule, Round gc_depth = kDefaultGcDepth)
        : committee_(std::move(committee)), schedule_(std::move(schedule)) {
        state_.gc_depth = gc_depth;
    }

    const ConsensusState& state() const { return state_; }
    const LeaderSchedule& schedule() const { return schedule_; }
    const std::vector<SkippedAnchor>& skipped() const { return skipped_; }

    /// `cert` must already be in `dag`.
    Outcome process_certificate(DagState& dag, const Certificate& cert) {
        Outcome out;
        if (cert.round() < 2 || cert.round() % 2 != 0) return out;
        const Round anchor_round = cert.round() - 1;
        if (anchor_round <= state_.last_committed_round) return out;
        const Certificate* anchor = dag.get(anchor_round, schedule_.leader(anchor_round));
        if (!anchor) return out;
        if (count_anchor_votes(dag, *anchor, committee_) < committee_.validity_threshold()) return out;
        out.committed = commit_leader(dag, order_leaders(dag, *anchor));
        return out;
    }

    /// Anchors to commit, oldest first, ending with the triggering anchor.
    std::vector<Certificate> order_leaders(const DagState& dag, const Certificate& trigger) {
        std::deque<Certificate> ordered{trigger};
        const Certificate* cursor = &trigger;
        for (Round r = trigger.round(); r >= 3;) {
            r -= 2;
            if (r <= state_.last_committed_round || r < dag.gc_round()) break;
            const ValidatorId leader = schedule_.leader(r);
            const Certificate* candidate = dag.get(r, leader);
            if (candidate && dag.linked(*cursor, *candidate)) {
                ordered.push_front(*candidate);
                cursor = candidate;
            } else {
                skipped_.push_back({r, leader, candidate != nullptr});
            }
        }
        return {ordered.begin(), ordered.end()};
    }

    std::vector<CommittedSubDag> commit_leader(DagState& dag, const std::vector<Certificate>& anchors) {
        std::vector<CommittedSubDag> out;
        for (const auto& anchor : anchors) {
            CommittedSubDag sub;
            sub.leader = anchor;
            sub.certificates = flatten_sub_dag(anchor, dag, state_.committed, dag.gc_round());
            sub.commit_index = state_.next_commit_index++;
            for (const auto& c : sub.certificates) {
                state_.committed.insert(c.digest());
                state_.committed_by_round[c.round()].push_back(c.digest());
                auto& hw = state_.last_committed_per_author[c.author()];
                hw = std::max(hw, c.round());
            }
            state_.last_committed_round = anchor.round();
            state_.last_committed_leader = std::pair{anchor.round(), anchor.author()};
            out.push_back(std::move(sub));
        }
        if (!anchors.empty()) {
            dag.garbage_collect(state_.last_committed_round, state_.gc_depth);
            while (!state_.committed_by_round.empty() && state_.committed_by_round.begin()->first < dag.gc_round()) {
                for (const auto& d : state_.committed_by_round.begin()->second) state_.committed.erase(d);
                state_.committed_by_round.erase(state_.committed_by_round.begin());
            }
        }
        return out;
    }

private:
    Committee committee_;
    LeaderSchedule schedule_;
    ConsensusState state_;
    std::vector<SkippedAnchor> skipped_;
};

// ---------------------------------------------------------------------------
// Commit log: "commit_index leader_round author round digest" per certificate

struct CommitLogEntry {
    std::uint64_t commit_index;
    Round leader_round;
    ValidatorId author;
    Round round;
    Digest digest;

    bool operator==(const CommitLogEntry&) const = default;
};

inline void append_commit_log(std::vector<CommitLogEntry>& log, const CommittedSubDag& sub) {
    for (const auto& c : sub.certificates)
        log.push_back({sub.commit_index, sub.leader.round(), c.author(), c.round(), c.digest()});
}

inline void write_commit_log(std::ostream& os, const std::vector<CommitLogEntry>& log) {
    for (const auto& e : log)
        os << e.commit_index << ' ' << e.leader_round << ' ' << e.author.value << ' ' << e.round << ' '
           << e.digest.hex() << '\n';
}

}  // namespace narwhal
