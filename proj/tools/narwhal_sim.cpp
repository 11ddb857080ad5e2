// narwhal-sim: run scenarios, fuzz seeds, compare against the commit oracle
// and export DAG snapshots.

#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "narwhal/harness/export.hpp"
#include "narwhal/harness/oracle.hpp"

using namespace narwhal;
using namespace narwhal::harness;

namespace {

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& s) {
    auto dots = s.find("..");
    try {
        if (dots == std::string::npos) {
            auto x = std::stoull(s);
            return {x, x};
        }
        auto lo = std::stoull(s.substr(0, dots));
        auto hi = std::stoull(s.substr(dots + 2));
        if (lo > hi) throw std::invalid_argument("empty");
        return {lo, hi};
    } catch (const std::exception&) {
        throw CLI::ValidationError("--seeds", "expected A..B with A <= B, got '" + s + "'");
    }
}

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out_dir) {
    Scenario s = load_scenario(path);
    if (seed) s = with_seed(s, *seed);
    if (s.mode == "crafted") {
        CraftedRun run(s);
        run.run();
        write_crafted_outputs(out_dir, run);
        for (const auto& r : run.replicas())
            std::cout << "replica " << r.validator.value << " committed " << r.commit_log.size()
                      << " certificates in " << r.committed.size() << " sub-DAGs\n";
        return 0;
    }
    Simulation sim(s);
    const auto result = sim.run();
    auto violations = check_safety(sim);
    write_run_outputs(out_dir, sim, violations);
    std::cout << "stop " << to_string(result.stop) << " at " << result.end_time << " ms after " << result.events
              << " events\n";
    for (const auto& v : sim.validators()) {
        const auto m = sim.metrics(*v);
        std::cout << "replica " << v->id().value << " (" << to_string(v->behavior()) << ") txs " << m.committed_txs
                  << " certs " << m.committed_certs << " latency_ms " << fixed3(m.mean_latency_ms) << '\n';
    }
    for (const auto& v : violations) std::cout << "VIOLATION " << v.check << ": " << v.detail << '\n';
    std::cout << "outputs written to " << out_dir << '\n';
    return violations.empty() ? 0 : 2;
}

int cmd_fuzz(const std::string& path, const std::string& seeds) {
    const Scenario base = load_scenario(path);
    if (base.mode != "simulate") throw ScenarioError("fuzz needs a simulate scenario");
    const auto [lo, hi] = parse_seed_range(seeds);
    std::uint64_t failed = 0;
    const auto start = std::chrono::steady_clock::now();
    for (std::uint64_t seed = lo; seed <= hi; ++seed) {
        Simulation sim(with_seed(base, seed));
        const auto result = sim.run();
        const auto violations = check_safety(sim);
        std::string byz = "none";
        for (const auto& [v, b] : sim.scenario().byzantine) byz = to_string(v) + "=" + to_string(b);
        std::cout << "seed " << seed << ' ' << (violations.empty() ? "ok" : "FAIL") << " byzantine " << byz
                  << " stop " << to_string(result.stop) << " commits "
                  << (sim.first_honest() ? sim.first_honest()->committed().size() : 0) << '\n';
        for (const auto& v : violations) std::cout << "  " << v.check << ": " << v.detail << '\n';
        if (!violations.empty()) ++failed;
    }
    const auto secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (hi - lo + 1 - failed) << '/' << (hi - lo + 1) << " seeds passed in " << fixed3(secs) << " s\n";
    return failed ? 1 : 0;
}

int cmd_oracle(const std::string& path, const std::string& seeds) {
    const Scenario s = load_scenario(path);
    const auto [lo, hi] = parse_seed_range(seeds);
    RandomDagParams p;
    p.n = s.n;
    p.rounds = s.oracle_rounds;
    p.weak_permille = s.oracle_weak_permille;
    const auto cmp = compare_with_oracle(lo, hi, p, s.oracle_permutations);
    for (const auto& m : cmp.mismatches) std::cout << "mismatch " << m << '\n';
    std::cout << cmp.matches << '/' << cmp.trials << " delivery orders matched the oracle\n";
    return cmp.matches == cmp.trials ? 0 : 1;
}

int cmd_export_dot(const std::string& path, Round at_round, std::optional<std::uint64_t> seed,
                   std::optional<std::uint32_t> validator, const std::string& out) {
    Scenario s = load_scenario(path);
    if (seed) s = with_seed(s, *seed);
    std::ofstream file;
    if (!out.empty()) {
        file.open(out);
        if (!file) throw std::runtime_error("cannot write " + out);
    }
    std::ostream& os = out.empty() ? std::cout : file;
    if (s.mode == "crafted") {
        CraftedRun run(s);
        run.run(at_round);
        write_dag_dot(os, validator ? run.replica(ValidatorId{*validator}) : run.replicas().front());
        return 0;
    }
    Simulation sim(s);
    sim.run_to_round(at_round);
    const Validator* v = validator ? &sim.validator(ValidatorId{*validator}) : sim.first_honest();
    if (!v) throw ScenarioError("no honest validator to export");
    write_dag_dot(os, *v);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Narwhal DAG mempool and Bullshark commit rule simulator"};
    app.require_subcommand(1);

    std::string scenario, out_dir = "out", seeds, out_file;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint32_t> validator;
    Round at_round = 0;

    auto* run = app.add_subcommand("run", "run one scenario and write its outputs");
    run->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "override the scenario seed");
    run->add_option("--out", out_dir, "output directory")->capture_default_str();

    auto* fuzz = app.add_subcommand("fuzz", "run a scenario over a seed range and check safety");
    fuzz->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
    fuzz->add_option("--seeds", seeds, "seed range A..B")->required();

    auto* oracle = app.add_subcommand("oracle-check", "compare incremental commits with the brute-force oracle");
    oracle->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
    oracle->add_option("--seeds", seeds, "seed range A..B")->required();

    auto* dot = app.add_subcommand("export-dot", "write a validator's DAG as Graphviz DOT");
    dot->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
    dot->add_option("--at-round", at_round, "stop once this round is reached")->required();
    dot->add_option("--seed", seed, "override the scenario seed");
    dot->add_option("--validator", validator, "validator whose view to export (default: first honest)");
    dot->add_option("--out", out_file, "output file (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(scenario, seed, out_dir);
        if (*fuzz) return cmd_fuzz(scenario, seeds);
        if (*oracle) return cmd_oracle(scenario, seeds);
        if (*dot) return cmd_export_dot(scenario, at_round, seed, validator, out_file);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
