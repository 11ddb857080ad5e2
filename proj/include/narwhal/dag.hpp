// Local round-based DAG of certificates: insertion with parent checks,
// reachability, causal history, garbage collection and DOT export.

#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "narwhal/core_types.hpp"

namespace narwhal {

enum class InsertResult {
    stored,
    duplicate,         // same certificate already present
    conflict,          // a different certificate for this (author, round) exists
    below_gc,          // dropped, round < gc_round
    missing_parents,
};

inline const char* to_string(InsertResult r) {
    switch (r) {
    case InsertResult::stored: return "stored";
    case InsertResult::duplicate: return "duplicate";
    case InsertResult::conflict: return "conflict";
    case InsertResult::below_gc: return "below_gc";
    case InsertResult::missing_parents: return "missing_parents";
    }
    return "?";
}

class DagState {
public:
    using RoundMap = std::map<ValidatorId, Certificate>;

    DagState() = default;

    /// Seeds round 0 with one genesis certificate per validator.
    explicit DagState(const Committee& committee) {
        for (const auto& m : committee.members()) {
            auto g = Certificate::genesis(committee, m.id);
            index_.emplace(g.digest(), std::pair{Round{0}, m.id});
            vertices_[0].emplace(m.id, std::move(g));
        }
    }

    Round gc_round() const { return gc_round_; }
    const std::map<Round, RoundMap>& vertices() const { return vertices_; }

    /// Parent references (strong or weak) at or above gc_round that are not stored.
    std::vector<CertRef> missing_parents(const Certificate& cert) const {
        std::vector<CertRef> out;
        for (const auto& p : cert.all_parents())
            if (p.round >= gc_round_ && !index_.contains(p.digest)) out.push_back(p);
        return out;
    }

    InsertResult insert(const Certificate& cert) {
        if (cert.round() < gc_round_) return InsertResult::below_gc;
        if (const Certificate* existing = get(cert.round(), cert.author()))
            return existing->digest() == cert.digest() ? InsertResult::duplicate : InsertResult::conflict;
        if (!missing_parents(cert).empty()) return InsertResult::missing_parents;
        index_.emplace(cert.digest(), std::pair{cert.round(), cert.author()});
        vertices_[cert.round()].emplace(cert.author(), cert);
        return InsertResult::stored;
    }

    const Certificate* find(const Digest& d) const {
        auto it = index_.find(d);
        if (it == index_.end()) return nullptr;
        return get(it->second.first, it->second.second);
    }

    const Certificate* get(Round r, ValidatorId author) const {
        auto rit = vertices_.find(r);
        if (rit == vertices_.end()) return nullptr;
        auto it = rit->second.find(author);
        return it == rit->second.end() ? nullptr : &it->second;
    }

    const RoundMap* round(Round r) const {
        auto it = vertices_.find(r);
        return it == vertices_.end() ? nullptr : &it->second;
    }

    bool contains(const Digest& d) const { return index_.contains(d); }
    std::size_t size() const { return index_.size(); }
    std::size_t rounds_retained() const { return vertices_.size(); }
    Round highest_round() const { return vertices_.empty() ? 0 : vertices_.rbegin()->first; }

    Stake round_stake(Round r, const Committee& committee) const {
        const RoundMap* m = round(r);
        if (!m) return 0;
        Stake s = 0;
        for (const auto& [author, _] : *m) s += committee.stake(author);
        return s;
    }

    /// True iff a directed path of parent edges leads from later to earlier.
    bool linked(const Certificate& later, const Certificate& earlier) const {
        if (later.round() <= earlier.round()) return later.digest() == earlier.digest();
        std::vector<const Certificate*> stack{&later};
        std::unordered_set<Digest> seen{later.digest()};
        while (!stack.empty()) {
            const Certificate* c = stack.back();
            stack.pop_back();
            for (const auto& p : c->all_parents()) {
                if (p.round < earlier.round()) continue;
                if (p.digest == earlier.digest()) return true;
                if (p.round == earlier.round() || !seen.insert(p.digest).second) continue;
                if (const Certificate* next = find(p.digest)) stack.push_back(next);
            }
        }
        return false;
    }

    /// Every stored certificate reachable from root (root included) for which
    /// keep() holds. Traversal does not continue through rejected vertices.
    template <typename Pred>
    std::vector<const Certificate*> causal_history(const Certificate& root, Pred keep) const {
        std::vector<const Certificate*> out;
        const Certificate* start = find(root.digest());
        if (!start || !keep(*start)) return out;
        std::vector<const Certificate*> stack{start};
        std::unordered_set<Digest> seen{root.digest()};
        while (!stack.empty()) {
            const Certificate* c = stack.back();
            stack.pop_back();
            out.push_back(c);
            for (const auto& p : c->all_parents()) {
                if (!seen.insert(p.digest).second) continue;
                const Certificate* next = find(p.digest);
                if (next && keep(*next)) stack.push_back(next);
            }
        }
        return out;
    }

    /// Raises gc_round to committed_round - gc_depth and purges rounds below
    /// it. Returns the purged half-open range [from, to).
    std::pair<Round, Round> garbage_collect(Round committed_round, Round gc_depth) {
        if (gc_depth < 1) throw ProtocolError("gc_depth must be >= 1");
        const Round from = gc_round_;
        if (committed_round > gc_depth) gc_round_ = std::max(gc_round_, committed_round - gc_depth);
        while (!vertices_.empty() && vertices_.begin()->first < gc_round_) {
            for (const auto& [_, cert] : vertices_.begin()->second) index_.erase(cert.digest());
            vertices_.erase(vertices_.begin());
        }
        return {from, gc_round_};
    }

    /// Certificates with round in [lo, hi], ascending round then author.
    std::vector<Certificate> range(Round lo, Round hi, std::size_t limit) const {
        std::vector<Certificate> out;
        for (auto it = vertices_.lower_bound(std::max(lo, gc_round_)); it != vertices_.end() && it->first <= hi; ++it)
            for (const auto& [_, c] : it->second) {
                if (out.size() >= limit) return out;
                out.push_back(c);
            }
        return out;
    }

private:
    std::map<Round, RoundMap> vertices_;
    std::unordered_map<Digest, std::pair<Round, ValidatorId>> index_;
    Round gc_round_ = 0;
};

struct DotStyle {
    std::set<Digest> anchors;
    std::set<Digest> committed;
};

/// One node per certificate labeled "author@round", one edge per parent
/// reference; weak links dashed.
inline void emit_dag_dot(const DagState& dag, std::ostream& os, const DotStyle& style = {}) {
    os << "digraph dag {\n  rankdir=BT;\n  node [shape=box];\n";
    for (const auto& [round, certs] : dag.vertices()) {
        for (const auto& [author, cert] : certs) {
            os << "  \"" << cert.digest().short_hex() << "\" [label=\"" << author.value << "@" << round << "\"";
            const bool anchor = style.anchors.contains(cert.digest());
            const bool committed = style.committed.contains(cert.digest());
            if (anchor) os << ", color=red, penwidth=2";
            if (committed) os << ", style=filled, fillcolor=lightgrey";
            os << "];\n";
        }
    }
    for (const auto& [round, certs] : dag.vertices()) {
        for (const auto& [author, cert] : certs) {
            for (const auto& p : cert.header().parents())
                if (dag.contains(p))
                    os << "  \"" << cert.digest().short_hex() << "\" -> \"" << p.short_hex() << "\";\n";
            for (const auto& w : cert.header().weak_parents())
                if (dag.contains(w.digest))
                    os << "  \"" << cert.digest().short_hex() << "\" -> \"" << w.digest.short_hex()
                       << "\" [style=dashed];\n";
        }
    }
    os << "}\n";
}

}  // namespace narwhal
