#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "bbm/errors.hpp"
#include "bbm/io.hpp"
#include "bbm/manifest.hpp"
#include "bbm/pipeline.hpp"

using namespace bbm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("bbm_test_pipeline_" + name);
    fs::remove_all(p);
    return p;
}

SimulateOptions small(double t = 5.0, std::uint64_t replicas = 40) {
    SimulateOptions o;
    o.t = t;
    o.replicas = replicas;
    o.slack = 2.0;
    o.companion_s = 3.0;
    o.level_grid = {0.5, 1.0, 1.5, 2.0};
    return o;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(BBM_BINARY) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("horizon zero is a single particle at the origin") {
    SimulateOptions o = small(0.0, 1);
    const ReplicaRecord r = simulate_replica(o, 0);
    CHECK(r.leaves == 1);
    CHECK(r.max_centered == 0.0);
    CHECK(std::isinf(r.gap12));
}

TEST_CASE("serial and parallel paths agree byte for byte") {
    const SimulateOptions o = small();
    const auto a = simulate_records(o, Execution::serial);
    const auto b = simulate_records(o, Execution::parallel);
    CHECK(records_to_csv(o, a) == records_to_csv(o, b));
}

TEST_CASE("summary csv round trip") {
    const SimulateOptions o = small();
    const auto recs = simulate_records(o, Execution::serial);
    const auto back = records_from_csv(records_to_csv(o, recs), o.level_grid.size());
    REQUIRE(back.size() == recs.size());
    CHECK(records_to_csv(o, back) == records_to_csv(o, recs));
}

TEST_CASE("simulate runs are reproducible and record pruning") {
    const fs::path a = scratch("sim_a"), b = scratch("sim_b");
    const SimulateOptions o = small(6.0, 30);
    const RunManifest ma = run_simulate(o, a, Execution::parallel);
    const RunManifest mb = run_simulate(o, b, Execution::serial);
    CHECK(ma.hash == mb.hash);
    CHECK(read_file(a / "summary.csv") == read_file(b / "summary.csv"));
    CHECK(read_file(a / "manifest.json") == read_file(b / "manifest.json"));
    CHECK(fs::exists(a / "timing.json"));
    CHECK(ma.pruning.at("pruned_count").get<std::uint64_t>() > 0);
    CHECK(ma.pruning.at("mode") == "barrier");

    const RunData run = load_run(a);
    CHECK(run.records.size() == 30);
    CHECK(run.options.t == 6.0);

    CHECK(rerun_and_compare(a, scratch("sim_rerun"), Execution::parallel).empty());
}

TEST_CASE("analyses refuse too little data") {
    const fs::path run = scratch("tiny");
    run_simulate(small(4.0, 5), run, Execution::serial);
    CHECK_THROWS_WITH_AS(run_gap_tail(run, GapTailOptions{}, scratch("tiny_gap")),
                         doctest::Contains("insufficient data"), ValidationError);
    CHECK_THROWS_WITH_AS(run_level_sets(scratch("absent"), LevelSetOptions{}, scratch("tiny_ls")),
                         doctest::Contains("missing input"), ValidationError);
}

TEST_CASE("exact runs above the budget are refused") {
    SimulateOptions o = small(30.0, 1);
    o.mode = Mode::exact;
    CHECK_THROWS_AS(o.validate(), BudgetError);
    o.t = -1.0;
    CHECK_THROWS_AS(o.validate(), ValidationError);
}

TEST_CASE("report marks absent criteria and refuses stale inputs") {
    const auto empty = collect_report({});
    REQUIRE(empty.size() == 14);
    for (const auto& c : empty) CHECK(c.status == "not run");

    const fs::path run = scratch("report_run"), ls = scratch("report_ls");
    SimulateOptions o = small(6.0, 60);
    run_simulate(o, run, Execution::parallel);
    LevelSetOptions lso;
    lso.vmin = 0.5;
    lso.vmax = 2.0;
    run_level_sets(run, lso, ls);
    const auto st = collect_report({run, ls});
    CHECK(format_report(st).find("not run") != std::string::npos);
    CHECK(report_to_json(st).size() == 14);

    // recompute the run with another seed: the level-set output is now stale
    o.seed = 2;
    run_simulate(o, run, Execution::parallel);
    CHECK_THROWS_WITH_AS(collect_report({run, ls}), doctest::Contains("stale"), ValidationError);
}

TEST_CASE("checks serialize") {
    Check c{5, "level-set-slope", true, {{"slope", 1.4}}, "|slope - sqrt2| <= 0.15"};
    const Check back = check_from_json(to_json(c));
    CHECK(back.criterion == 5);
    CHECK(back.name == c.name);
    CHECK(back.pass);
    CHECK(back.measured == c.measured);
    CHECK(linear_grid(2.0, 6.0, 0.5).size() == 9);
}

TEST_CASE("command-line exit codes") {
    const fs::path out = scratch("cli");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("simulate --t 2 --replicas 3 --out " + (out / "ok").string()) == 0);
    CHECK(run_cli("simulate --t 30 --mode exact --out " + (out / "big").string()) == 2);
    CHECK(run_cli("simulate --t -1 --out " + (out / "neg").string()) == 1);
    CHECK(run_cli("simulate --out " + (out / "noarg").string()) == 1);
    CHECK(run_cli("gap-tail --run " + (out / "ok").string() + " --out " + (out / "gap").string()) == 1);
    CHECK(run_cli("cluster-sample --t 64 --r 2 --samples 20 --max-attempts 1 --law-samples 100 --law-ages 2,3 --out " +
                  (out / "starve").string()) == 3);
    CHECK(run_cli("report --inputs " + (out / "ok").string()) == 0);
}
