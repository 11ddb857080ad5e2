// Plain-file outputs of a run. Formats:
//
//   commit_<v>.log   commit_index leader_round author round digest
//   effects_<v>.log  tx in:obj@ver,... out:obj@ver,...   |  tx abort
//   metrics.txt      header line, then one row per replica that committed
//   trace.txt        time from to kind key, one delivered message per line
//   summary.txt      key value lines: stop reason, hashes, check results
//   dag_<v>.dot      Graphviz view of the replica's retained DAG

#pragma once

#include <filesystem>

#include "narwhal/harness/checks.hpp"
#include "narwhal/harness/crafted.hpp"

namespace narwhal::harness {

inline constexpr const char* kMetricsHeader =
    "replica committed_txs aborted_txs committed_certs mean_latency_ms mean_latency_rounds certs_per_round "
    "skipped_anchors";

struct MetricsRow {
    ValidatorId replica;
    ReplicaMetrics m;
};

inline void write_metrics(std::ostream& os, const std::vector<MetricsRow>& rows) {
    os << kMetricsHeader << '\n';
    for (const auto& r : rows) {
        if (r.m.committed_certs == 0) continue;
        os << r.replica.value << ' ' << r.m.committed_txs << ' ' << r.m.aborted_txs << ' ' << r.m.committed_certs << ' '
           << fixed3(r.m.mean_latency_ms) << ' ' << fixed3(r.m.mean_latency_rounds) << ' '
           << fixed3(r.m.certs_per_round) << ' ' << r.m.skipped_anchors << '\n';
    }
}

inline std::vector<MetricsRow> collect_metrics(const Simulation& sim) {
    std::vector<MetricsRow> rows;
    for (const auto& v : sim.validators()) rows.push_back({v->id(), sim.metrics(*v)});
    return rows;
}

inline DotStyle dot_style(const DagState& dag, const LeaderSchedule& schedule, const std::set<Digest>& committed_anchors,
                          const std::set<Digest>& committed) {
    DotStyle style;
    for (const auto& [round, certs] : dag.vertices()) {
        if (round == 0 || !LeaderSchedule::is_anchor_round(round)) continue;
        if (auto it = certs.find(schedule.leader(round)); it != certs.end()) style.anchors.insert(it->second.digest());
    }
    style.committed = committed;
    for (const auto& d : committed_anchors) style.anchors.insert(d);
    return style;
}

inline void write_dag_dot(std::ostream& os, const Validator& v) {
    std::set<Digest> committed, anchors;
    for (const auto& sub : v.committed()) {
        anchors.insert(sub.leader.digest());
        for (const auto& c : sub.certificates) committed.insert(c.digest());
    }
    emit_dag_dot(v.primary().dag(), os, dot_style(v.primary().dag(), v.consensus().schedule(), anchors, committed));
}

inline void write_dag_dot(std::ostream& os, const CraftedReplica& r) {
    std::set<Digest> committed, anchors;
    for (const auto& sub : r.committed) {
        anchors.insert(sub.leader.digest());
        for (const auto& c : sub.certificates) committed.insert(c.digest());
    }
    emit_dag_dot(r.primary->dag(), os, dot_style(r.primary->dag(), r.consensus->schedule(), anchors, committed));
}

inline void write_summary(std::ostream& os, const Simulation& sim, const Violations& violations) {
    const auto& r = sim.result();
    os << "scenario " << sim.scenario().name << '\n'
       << "seed " << sim.scenario().seed << '\n'
       << "stop " << to_string(r.stop) << '\n'
       << "end_time_ms " << r.end_time << '\n'
       << "events " << r.events << '\n'
       << "messages_sent " << sim.network().messages_sent() << '\n'
       << "messages_dropped " << sim.network().messages_dropped() << '\n'
       << "trace_hash " << std::hex << sim.network().trace_hash() << std::dec << '\n'
       << "expected_txs " << sim.expected().size() << '\n'
       << "violations " << violations.size() << '\n';
    for (const auto& v : sim.validators())
        os << "replica " << v->id().value << ' ' << to_string(v->behavior()) << " round "
           << v->primary().current_round() << " last_committed_round "
           << v->consensus().state().last_committed_round << " gc_round " << v->primary().dag().gc_round()
           << " crashes " << v->crashes() << '\n';
    for (const auto& v : violations) os << "violation " << v.check << ' ' << v.detail << '\n';
}

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
}
}  // namespace detail

inline void write_run_outputs(const std::filesystem::path& dir, const Simulation& sim, const Violations& violations) {
    std::filesystem::create_directories(dir);
    for (const auto& v : sim.validators()) {
        const std::string id = std::to_string(v->id().value);
        auto c = detail::open_out(dir / ("commit_" + id + ".log"));
        write_commit_log(c, v->commit_log());
        auto e = detail::open_out(dir / ("effects_" + id + ".log"));
        v->executor().effects().write(e);
        auto d = detail::open_out(dir / ("dag_" + id + ".dot"));
        write_dag_dot(d, *v);
    }
    auto m = detail::open_out(dir / "metrics.txt");
    write_metrics(m, collect_metrics(sim));
    auto t = detail::open_out(dir / "trace.txt");
    for (const auto& line : sim.network().trace_lines()) t << line << '\n';
    auto s = detail::open_out(dir / "summary.txt");
    write_summary(s, sim, violations);
}

inline void write_crafted_outputs(const std::filesystem::path& dir, const CraftedRun& run) {
    std::filesystem::create_directories(dir);
    std::vector<MetricsRow> rows;
    for (const auto& r : run.replicas()) {
        const std::string id = std::to_string(r.validator.value);
        auto c = detail::open_out(dir / ("commit_" + id + ".log"));
        write_commit_log(c, r.commit_log);
        auto d = detail::open_out(dir / ("dag_" + id + ".dot"));
        write_dag_dot(d, r);
        ReplicaMetrics m;
        m.committed_certs = r.commit_log.size();
        double rounds = 0;
        for (const auto& e : r.commit_log) rounds += static_cast<double>(e.leader_round - e.round);
        if (m.committed_certs) m.mean_latency_rounds = rounds / static_cast<double>(m.committed_certs);
        m.skipped_anchors = r.consensus->skipped().size();
        rows.push_back({r.validator, m});
    }
    auto m = detail::open_out(dir / "metrics.txt");
    write_metrics(m, rows);
    std::vector<std::pair<ValidatorId, std::vector<CommitLogEntry>>> logs;
    for (const auto& r : run.replicas()) logs.emplace_back(r.validator, r.commit_log);
    auto s = detail::open_out(dir / "summary.txt");
    const auto violations = check_agreement(logs);
    s << "scenario " << run.scenario().name << '\n' << "violations " << violations.size() << '\n';
    for (const auto& v : violations) s << "violation " << v.check << ' ' << v.detail << '\n';
}

}  // namespace narwhal::harness
