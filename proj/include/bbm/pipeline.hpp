#pragma once

// Run orchestration shared by the bbm command-line tool and the acceptance
// suite.  Every command reads a JSON-able options struct, writes its outputs
// plus a manifest into a directory, and emits pass/fail checks in checks.json.
// A command can be re-executed from its manifest alone.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbm/decoration.hpp"
#include "bbm/engine.hpp"
#include "bbm/manifest.hpp"
#include "bbm/parallel.hpp"
#include "bbm/spine.hpp"
#include "bbm/stats.hpp"

namespace bbm {

namespace fs = std::filesystem;

/// One numbered acceptance criterion (0 for informational results).
struct Check {
    int criterion = 0;
    std::string name;
    bool pass = false;
    nlohmann::json measured = nlohmann::json::object();
    std::string target;
};
nlohmann::json to_json(const Check& c);
Check check_from_json(const nlohmann::json& j);

std::vector<double> linear_grid(double lo, double hi, double step);

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
    double t = 10.0;
    std::uint64_t replicas = 100;
    std::uint64_t first_replica = 0;
    Mode mode = Mode::barrier;
    double slack = 8.0;
    double concave_coeff = 0.0;
    double concave_delta = 0.25;
    std::uint64_t seed = 1;
    std::vector<double> level_grid = linear_grid(2.0, 6.0, 0.5);
    double star_radius = -1.0;       ///< < 0 means sqrt(t)
    double carrier_v = 5.0;
    double companion_s = 8.0;        ///< exact Z_s on the same tree; clamped to t, 0 disables
    std::uint64_t genealogy_replicas = UINT64_MAX;  ///< replicas that also get star/carrier statistics
    bool write_populations = false;
    std::uint64_t max_particles = 50'000'000;

    double radius() const;
    SimConfig sim_config(std::uint64_t replica) const;
    nlohmann::json to_json() const;
    static SimulateOptions from_json(const nlohmann::json& j);
    void validate() const;
};

struct ReplicaRecord {
    std::uint64_t replica = 0;
    std::uint64_t leaves = 0;
    std::uint64_t particles = 0;
    std::uint64_t pruned = 0;
    double max_centered = 0.0;  ///< -inf when no leaf survives pruning
    double gap12 = 0.0;         ///< +inf with fewer than two leaves
    double martingale = 0.0;    ///< Z_t of the (possibly pruned) population
    double companion_z = 0.0;   ///< exact Z_s, NaN when not computed
    double carrier = 0.0;       ///< carrier statistic of one uniform level-set leaf, NaN if none/not computed
    std::vector<double> level_counts;
    std::vector<double> star_counts;  ///< NaN when genealogy was not computed
};

ReplicaRecord simulate_replica(const SimulateOptions& opt, std::uint64_t replica);
/// Same records as the run would produce, in replica order.
std::vector<ReplicaRecord> simulate_records(const SimulateOptions& opt, Execution exec);

std::string records_to_csv(const SimulateOptions& opt, const std::vector<ReplicaRecord>& records);
std::vector<ReplicaRecord> records_from_csv(const std::string& text, std::size_t grid_size);

RunManifest run_simulate(const SimulateOptions& opt, const fs::path& out, Execution exec);

struct RunData {
    fs::path dir;
    RunManifest manifest;
    SimulateOptions options;
    std::vector<ReplicaRecord> records;
};
RunData load_run(const fs::path& dir);

// ---------------------------------------------------------------------------
// analyses of simulate runs

struct LevelSetOptions {
    double vmin = 2.0, vmax = 6.0;
    nlohmann::json to_json() const;
    static LevelSetOptions from_json(const nlohmann::json& j);
};
/// Mean level-set and star counts, their exponents and the prefactor verdicts.
nlohmann::json analyze_level_sets(const RunData& run, const LevelSetOptions& opt, std::vector<Check>& checks);
RunManifest run_level_sets(const fs::path& run_dir, const LevelSetOptions& opt, const fs::path& out);

struct GapTailOptions {
    double wmin = 0.5, wmax = 2.5, wstep = 0.25;
    double umin = 1.0, umax = 3.0, ustep = 0.25;
    std::uint64_t min_replicas = 20;
    std::string reference;  ///< optional exact run compared against the primary run
    nlohmann::json to_json() const;
    static GapTailOptions from_json(const nlohmann::json& j);
};
nlohmann::json analyze_gap_tail(const RunData& run, const RunData* reference, const GapTailOptions& opt,
                                std::vector<Check>& checks);
RunManifest run_gap_tail(const fs::path& run_dir, const GapTailOptions& opt, const fs::path& out);

struct CarrierOptions {
    nlohmann::json to_json() const { return nlohmann::json::object(); }
};
nlohmann::json analyze_carriers(const RunData& run, std::vector<Check>& checks);
RunManifest run_carriers(const fs::path& run_dir, const fs::path& out);

// ---------------------------------------------------------------------------
// samplers

struct LawOptions {
    std::string path;  ///< cache file; empty = build in memory
    DecorationLawConfig config;
    nlohmann::json to_json() const;
    static LawOptions from_json(const nlohmann::json& j);
};
DecorationLaw load_law(const LawOptions& opt, Execution exec);

struct ClusterOptions {
    double t = 64.0;
    double r = 8.0;
    std::uint64_t samples = 2000;
    std::uint64_t max_attempts = 200000;
    std::uint64_t seed = 1;
    std::vector<double> v_grid = linear_grid(0.0, 5.0, 0.5);
    double vmin = 2.0, vmax = 5.0;
    std::vector<double> w_grid = linear_grid(0.5, 2.5, 0.25);
    double dip_w = 2.0;
    LawOptions law;
    nlohmann::json to_json() const;
    static ClusterOptions from_json(const nlohmann::json& j);
};
std::vector<ClusterSample> sample_clusters(const ClusterOptions& opt, const DecorationLaw& law, Execution exec);
nlohmann::json analyze_clusters(const ClusterOptions& opt, const std::vector<ClusterSample>& samples,
                                std::vector<Check>& checks);
RunManifest run_cluster_sample(const ClusterOptions& opt, const fs::path& out, Execution exec);

struct SpineOptions {
    double t = 3.0;
    std::uint64_t replicas = 10000;
    std::uint64_t seed = 1;
    std::vector<double> count_horizons{1.0, 2.0, 3.0};
    double second_moment_t = 2.0;
    std::uint64_t covariance_pairs = 20;
    std::uint64_t lifetime_events = 10000;
    bool engine_checks = true;  ///< leaf-count moments, covariance and drift sweep
    nlohmann::json to_json() const;
    static SpineOptions from_json(const nlohmann::json& j);
};
nlohmann::json verify_spine(const SpineOptions& opt, std::vector<Check>& checks, Execution exec);
RunManifest run_verify_spine(const SpineOptions& opt, const fs::path& out, Execution exec);

struct BarrierOptions {
    std::vector<double> x{-1.0}, y{-1.0}, t{50.0};
    bool decorated = false;
    std::uint64_t n = 100000;
    std::uint64_t seed = 1;
    LawOptions law;
    nlohmann::json to_json() const;
    static BarrierOptions from_json(const nlohmann::json& j);
};
std::vector<BarrierEstimate> barrier_grid(const BarrierOptions& opt, const DecorationLaw* law, Execution exec);
nlohmann::json analyze_barrier(const BarrierOptions& opt, const std::vector<BarrierEstimate>& rows,
                               std::vector<Check>& checks);
RunManifest run_barrier_prob(const BarrierOptions& opt, const fs::path& out, Execution exec);

// ---------------------------------------------------------------------------
// report

struct CriterionStatus {
    int id = 0;
    std::string title;
    std::string status;  ///< "pass", "fail" or "not run"
    std::vector<Check> checks;
    std::vector<std::string> missing;  ///< required checks with no input
};

/// Titles of the acceptance criteria and the checks each one requires.
struct CriterionSpec {
    int id;
    const char* title;
    std::vector<std::string> required;
};
const std::vector<CriterionSpec>& criteria();

/// Collects checks.json from every input directory (refusing stale inputs),
/// plus any checks computed on the spot.
std::vector<CriterionStatus> collect_report(const std::vector<fs::path>& inputs, const std::vector<Check>& extra = {});
std::string format_report(const std::vector<CriterionStatus>& status);
nlohmann::json report_to_json(const std::vector<CriterionStatus>& status);

/// Re-executes the command recorded in dir/manifest.json into `out` and
/// returns the names of files whose content differs.
std::vector<std::string> rerun_and_compare(const fs::path& dir, const fs::path& out, Execution exec);

/// Reruns every directory under `scratch` and passes when none differs.
Check determinism_check(const std::vector<fs::path>& dirs, const fs::path& scratch, Execution exec);

/// Dispatch used by rerun: executes `command` with options `config`.
RunManifest execute(const std::string& command, const nlohmann::json& config, const fs::path& out, Execution exec);

}  // namespace bbm
