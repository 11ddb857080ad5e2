// Scenario files: flat `key = value` settings followed by optional
// `[section]` tables. `#` starts a comment.
//
//   n = 4
//   seed = 7
//   [byzantine]
//   2 = equivocator
//   [slow]
//   4 = 12
//
// Two modes: `simulate` (default) runs the full protocol over the simulated
// network; `crafted` replays hand-built certificates into each listed view.

#pragma once

#include <fstream>
#include <sstream>

#include "narwhal/validator.hpp"

namespace narwhal::harness {

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raw parse: top-level keys live in section "".
class KeyValueFile {
public:
    using Table = std::vector<std::pair<std::string, std::string>>;

    static KeyValueFile parse(std::istream& in) {
        KeyValueFile f;
        std::string line, section;
        f.order_.push_back("");
        f.tables_[""];
        for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ScenarioError("line " + std::to_string(lineno) + ": bad section header");
                section = trim(line.substr(1, line.size() - 2));
                if (!f.tables_.contains(section)) f.order_.push_back(section);
                f.tables_[section];
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos) throw ScenarioError("line " + std::to_string(lineno) + ": expected key = value");
            f.tables_[section].emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return f;
    }

    static KeyValueFile parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    bool has(const std::string& section) const { return tables_.contains(section); }
    const Table& table(const std::string& section) const {
        static const Table empty;
        auto it = tables_.find(section);
        return it == tables_.end() ? empty : it->second;
    }
    const std::vector<std::string>& sections() const { return order_; }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    }

private:
    std::map<std::string, Table> tables_;
    std::vector<std::string> order_;
};

struct ClientLoad {
    std::uint64_t tx_count = 0;
    std::size_t tx_size = 16;  // bytes, >= 9
    std::uint64_t fee_min = 1;
    std::uint64_t fee_max = 100;
    std::uint64_t objects = 64;  // genesis objects the load touches
    std::uint32_t keys_per_tx = 1;
    SimTime start = 10;
    SimTime interval = 5;
    std::uint64_t duplicate_every = 0;  // every k-th tx also goes to the next validator
    std::uint64_t create_every = 0;     // every k-th tx creates a fresh object
};

/// One hand-built certificate for crafted mode.
struct CraftedVertex {
    std::string name;
    ValidatorId author;
    Round round = 0;
    std::vector<std::string> parents;  // names; "genesis" means all genesis certificates
};

struct CraftedView {
    ValidatorId validator;
    std::vector<std::string> deliver;  // delivery order
};

struct Scenario {
    std::string name = "unnamed";
    std::string mode = "simulate";
    std::uint32_t n = 4;
    std::vector<Stake> stakes;  // empty = unit stakes
    std::uint64_t seed = 1;
    std::optional<std::uint64_t> leader_seed;
    std::map<Round, ValidatorId> leader_overrides;
    bool unsafe = false;

    NetworkConfig network;
    PrimaryConfig primary;
    WorkerConfig worker;
    std::uint32_t workers = 1;
    SimTime max_time = 120'000;
    bool trace = true;

    std::map<ValidatorId, ByzantineBehavior> byzantine;
    std::map<ValidatorId, std::uint32_t> slow;
    ClientLoad load;
    std::map<std::uint64_t, std::uint32_t> exec_faults;  // tx index -> transient failures
    std::map<ValidatorId, std::uint64_t> crash;          // validator -> tx index that crashes it

    // fuzz: seed s makes validator (s / 4 mod n) + 1 Byzantine with behavior
    // s mod 4 from {silent, delayed(10), equivocator, vote_withholder}
    bool fuzz_cycle_byzantine = false;

    // fairness check: rounds at the tail still considered in flight
    Round fairness_window = 10;

    // oracle-check parameters
    Round oracle_rounds = 10;
    std::uint32_t oracle_permutations = 20;
    std::uint32_t oracle_weak_permille = 200;

    std::vector<CraftedVertex> vertices;
    std::vector<CraftedView> views;

    Committee committee() const {
        if (stakes.empty()) return Committee::uniform(n);
        std::vector<Committee::Member> members;
        for (std::uint32_t i = 0; i < n; ++i) members.push_back({ValidatorId{i + 1}, stakes[i]});
        return Committee(std::move(members));
    }
    std::uint64_t schedule_seed() const { return leader_seed.value_or(seed); }
    LeaderSchedule schedule() const { return LeaderSchedule(committee(), schedule_seed(), leader_overrides); }

    bool is_honest(ValidatorId v) const { return !byzantine.contains(v); }
    std::uint64_t tx_target_count() const { return load.tx_count; }
};

inline ByzantineBehavior parse_behavior(const std::string& s) {
    using K = ByzantineBehavior::Kind;
    if (s == "honest") return {K::honest, 1};
    if (s == "silent") return {K::silent, 1};
    if (s == "equivocator") return {K::equivocator, 1};
    if (s == "vote_withholder") return {K::vote_withholder, 1};
    if (s.rfind("delayed", 0) == 0) {
        std::uint32_t k = 10;
        if (auto open = s.find('('); open != std::string::npos) {
            auto close = s.find(')', open);
            if (close == std::string::npos) throw ScenarioError("bad behavior: " + s);
            k = static_cast<std::uint32_t>(std::stoul(s.substr(open + 1, close - open - 1)));
        }
        if (k < 1) throw ScenarioError("delay factor must be >= 1");
        return {K::delayed, k};
    }
    throw ScenarioError("unknown behavior: " + s);
}

namespace detail {

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const auto x = std::stoull(v, &pos);
        if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ScenarioError(key + ": expected a non-negative integer, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ScenarioError(key + ": expected true/false, got '" + v + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        cur = KeyValueFile::trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

inline std::vector<std::string> words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

inline ValidatorId to_validator(const std::string& key, const std::string& v) {
    return ValidatorId{static_cast<std::uint32_t>(to_u64(key, v))};
}

}  // namespace detail

inline Scenario parse_scenario(const KeyValueFile& f) {
    using namespace detail;
    Scenario s;
    for (const auto& [k, v] : f.table("")) {
        auto u = [&] { return to_u64(k, v); };
        auto t = [&] { return static_cast<SimTime>(to_u64(k, v)); };
        if (k == "name") s.name = v;
        else if (k == "mode") s.mode = v;
        else if (k == "n") s.n = static_cast<std::uint32_t>(u());
        else if (k == "stakes") {
            for (const auto& x : split(v, ',')) s.stakes.push_back(to_u64(k, x));
        } else if (k == "seed") s.seed = u();
        else if (k == "leader_seed") s.leader_seed = u();
        else if (k == "unsafe") s.unsafe = to_bool(k, v);
        else if (k == "gst") s.network.gst = t();
        else if (k == "delta") s.network.delta = t();
        else if (k == "pre_gst_min") s.network.pre_gst_min = t();
        else if (k == "pre_gst_max") s.network.pre_gst_max = t();
        else if (k == "drop_before_gst") s.network.drop_before_gst = to_bool(k, v);
        else if (k == "drop_permille") s.network.drop_permille = static_cast<std::uint32_t>(u());
        else if (k == "local_delay") s.network.local_delay = t();
        else if (k == "max_time") s.max_time = t();
        else if (k == "trace") s.trace = to_bool(k, v);
        else if (k == "min_digests") s.primary.min_digests = u();
        else if (k == "max_digests") s.primary.max_digests = u();
        else if (k == "max_header_delay") s.primary.max_header_delay = t();
        else if (k == "gc_depth") s.primary.gc_depth = u();
        else if (k == "vote_retry_interval") s.primary.vote_retry_interval = t();
        else if (k == "cert_sync_interval") s.primary.cert_sync_interval = t();
        else if (k == "weak_links") s.primary.weak_links = to_bool(k, v);
        else if (k == "batch_size_limit") s.worker.batch_size_limit = u();
        else if (k == "batch_timeout") s.worker.batch_timeout = t();
        else if (k == "retransmit_interval") s.worker.retransmit_interval = t();
        else if (k == "workers") s.workers = static_cast<std::uint32_t>(u());
        else if (k == "fuzz_cycle_byzantine") s.fuzz_cycle_byzantine = to_bool(k, v);
        else if (k == "fairness_window") s.fairness_window = u();
        else if (k == "oracle_rounds") s.oracle_rounds = u();
        else if (k == "oracle_permutations") s.oracle_permutations = static_cast<std::uint32_t>(u());
        else if (k == "oracle_weak_permille") s.oracle_weak_permille = static_cast<std::uint32_t>(u());
        else throw ScenarioError("unknown key: " + k);
    }
    for (const auto& [k, v] : f.table("client_load")) {
        auto u = [&] { return to_u64(k, v); };
        auto& l = s.load;
        if (k == "tx_count") l.tx_count = u();
        else if (k == "tx_size") l.tx_size = u();
        else if (k == "fee_min") l.fee_min = u();
        else if (k == "fee_max") l.fee_max = u();
        else if (k == "objects") l.objects = u();
        else if (k == "keys_per_tx") l.keys_per_tx = static_cast<std::uint32_t>(u());
        else if (k == "start") l.start = static_cast<SimTime>(u());
        else if (k == "interval") l.interval = static_cast<SimTime>(u());
        else if (k == "duplicate_every") l.duplicate_every = u();
        else if (k == "create_every") l.create_every = u();
        else throw ScenarioError("unknown client_load key: " + k);
    }
    for (const auto& [k, v] : f.table("byzantine")) s.byzantine[to_validator(k, k)] = parse_behavior(v);
    for (const auto& [k, v] : f.table("slow")) s.slow[to_validator(k, k)] = static_cast<std::uint32_t>(to_u64(k, v));
    for (const auto& [k, v] : f.table("leaders")) s.leader_overrides[to_u64(k, k)] = to_validator(k, v);
    for (const auto& [k, v] : f.table("exec_faults"))
        s.exec_faults[to_u64(k, k)] = static_cast<std::uint32_t>(to_u64(k, v));
    for (const auto& [k, v] : f.table("crash")) s.crash[to_validator(k, k)] = to_u64(k, v);
    for (const auto& [k, v] : f.table("partitions")) {
        // start..end = v1,v2
        auto dots = k.find("..");
        if (dots == std::string::npos) throw ScenarioError("partition key must be start..end: " + k);
        Partition p;
        p.start = static_cast<SimTime>(to_u64(k, k.substr(0, dots)));
        p.end = static_cast<SimTime>(to_u64(k, k.substr(dots + 2)));
        for (const auto& x : split(v, ',')) p.group.insert(to_validator(k, x));
        s.network.partitions.push_back(std::move(p));
    }
    for (const auto& [k, v] : f.table("vertices")) {
        // name = author round parent,parent,...
        auto w = words(v);
        if (w.size() != 3) throw ScenarioError("vertex " + k + ": expected 'author round parents'");
        s.vertices.push_back({k, to_validator(k, w[0]), to_u64(k, w[1]), split(w[2], ',')});
    }
    for (const auto& sec : f.sections()) {
        if (sec.rfind("view.", 0) != 0) continue;
        CraftedView view{to_validator(sec, sec.substr(5)), {}};
        for (const auto& [k, v] : f.table(sec)) {
            if (k != "deliver") throw ScenarioError(sec + ": unknown key " + k);
            for (const auto& x : split(v, ',')) view.deliver.push_back(x);
        }
        s.views.push_back(std::move(view));
    }
    static const std::set<std::string> known{"",        "client_load", "byzantine", "slow",   "leaders",
                                             "exec_faults", "crash",   "partitions", "vertices"};
    for (const auto& sec : f.sections())
        if (!known.contains(sec) && sec.rfind("view.", 0) != 0) throw ScenarioError("unknown section: " + sec);
    return s;
}

/// Rejects inconsistent settings; Byzantine stake above f requires unsafe = true.
inline void validate(const Scenario& s) {
    if (s.mode != "simulate" && s.mode != "crafted") throw ScenarioError("mode must be simulate or crafted");
    if (s.n == 0) throw ScenarioError("n must be >= 1");
    if (!s.stakes.empty() && s.stakes.size() != s.n) throw ScenarioError("stakes must list n entries");
    const Committee committee = s.committee();
    auto check_member = [&](ValidatorId v, const char* what) {
        if (!committee.contains(v)) throw ScenarioError(std::string(what) + " names unknown validator " + to_string(v));
    };
    Stake byz = 0;
    for (const auto& [v, b] : s.byzantine) {
        check_member(v, "byzantine");
        if (b.is_byzantine()) byz += committee.stake(v);
    }
    for (const auto& [v, _] : s.slow) check_member(v, "slow");
    for (const auto& [v, _] : s.crash) check_member(v, "crash");
    for (const auto& [r, v] : s.leader_overrides) {
        check_member(v, "leaders");
        if (r % 2 == 0) throw ScenarioError("leader override at even round " + std::to_string(r));
    }
    if (byz > committee.max_faulty() && !s.unsafe)
        throw ScenarioError("Byzantine stake " + std::to_string(byz) + " exceeds f = " +
                            std::to_string(committee.max_faulty()) + "; set unsafe = true to run anyway");
    if (s.load.tx_count > 0 && s.load.tx_size < kMinTransactionSize)
        throw ScenarioError("tx_size must be >= " + std::to_string(kMinTransactionSize));
    if (s.load.fee_min > s.load.fee_max) throw ScenarioError("fee_min > fee_max");
    if (s.load.keys_per_tx == 0 || s.load.keys_per_tx > 127) throw ScenarioError("keys_per_tx must be in 1..127");
    if (s.load.tx_count > 0 && s.load.objects < s.load.keys_per_tx)
        throw ScenarioError("objects must be >= keys_per_tx");
    if (s.load.tx_count > 0 && s.load.tx_size < 1 + 8 * s.load.keys_per_tx)
        throw ScenarioError("tx_size too small for keys_per_tx");
    if (s.network.pre_gst_min < 1 || s.network.pre_gst_min > s.network.pre_gst_max)
        throw ScenarioError("need 1 <= pre_gst_min <= pre_gst_max");
    if (s.network.delta < 1) throw ScenarioError("delta must be >= 1");
    if (s.network.drop_permille > 1000) throw ScenarioError("drop_permille must be <= 1000");
    if (s.primary.gc_depth < 1) throw ScenarioError("gc_depth must be >= 1");
    if (s.workers < 1) throw ScenarioError("workers must be >= 1");
    if (s.mode == "crafted") {
        if (s.vertices.empty() || s.views.empty()) throw ScenarioError("crafted mode needs [vertices] and [view.N]");
        std::set<std::string> names;
        for (const auto& v : s.vertices) {
            check_member(v.author, "vertex");
            if (v.round == 0) throw ScenarioError("vertex " + v.name + ": round must be >= 1");
            if (!names.insert(v.name).second) throw ScenarioError("duplicate vertex " + v.name);
        }
        for (const auto& view : s.views) {
            check_member(view.validator, "view");
            for (const auto& d : view.deliver)
                if (!names.contains(d)) throw ScenarioError("view delivers unknown vertex " + d);
        }
    }
}

/// The scenario as run under `seed`.
inline Scenario with_seed(Scenario s, std::uint64_t seed) {
    s.seed = seed;
    if (s.fuzz_cycle_byzantine) {
        static const ByzantineBehavior cycle[] = {{ByzantineBehavior::Kind::silent, 1},
                                                  {ByzantineBehavior::Kind::delayed, 10},
                                                  {ByzantineBehavior::Kind::equivocator, 1},
                                                  {ByzantineBehavior::Kind::vote_withholder, 1}};
        s.byzantine.clear();
        const auto ids = s.committee().ids();
        s.byzantine[ids[(seed / 4) % ids.size()]] = cycle[seed % 4];
    }
    validate(s);
    return s;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario " + path);
    Scenario s = parse_scenario(KeyValueFile::parse(in));
    validate(s);
    return s;
}

inline Scenario scenario_from_string(const std::string& text) {
    Scenario s = parse_scenario(KeyValueFile::parse_string(text));
    validate(s);
    return s;
}

}  // namespace narwhal::harness
