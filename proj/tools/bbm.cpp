// bbm: command-line front end for simulation, analysis and reporting.
//
// Precedence is flags > config file (--config, TOML/INI, one key per flag,
// subcommand keys under a [subcommand] section) > defaults.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bbm/errors.hpp"
#include "bbm/io.hpp"
#include "bbm/pipeline.hpp"

namespace {

using namespace bbm;

void add_law_options(CLI::App* cmd, LawOptions& law) {
    cmd->add_option("--law", law.path, "Decoration-law cache file (built when missing or stale)");
    cmd->add_option("--law-samples", law.config.samples, "Samples per decoration-law age table");
    cmd->add_option("--law-ages", law.config.ages, "Ages of the decoration-law tables")->delimiter(',');
    cmd->add_option("--law-slack", law.config.slack, "Barrier slack for pruned decoration tables");
}

int run(int argc, char** argv) {
    CLI::App app{"Branching Brownian motion extremes: simulation, cluster sampling and checks"};
    app.set_config("--config", "", "Config file (flags override it)");
    app.require_subcommand(1);
    int threads = 0;
    bool serial = false;
    app.add_option("--threads", threads, "Worker threads (0 = all available)")->check(CLI::NonNegativeNumber);
    app.add_flag("--serial", serial, "Use the serial reference path");

    std::string out;

    // simulate
    SimulateOptions sim;
    std::string mode = "pruned";
    auto* simulate = app.add_subcommand("simulate", "Replicated BBM runs with per-replica summaries");
    simulate->add_option("--t", sim.t, "Horizon")->required();
    simulate->add_option("--replicas", sim.replicas, "Number of replicas");
    simulate->add_option("--first-replica", sim.first_replica, "Index of the first replica");
    simulate->add_option("--mode", mode, "exact or pruned")->check(CLI::IsMember({"exact", "pruned"}));
    simulate->add_option("--slack", sim.slack, "Barrier slack L");
    simulate->add_option("--concave-coeff", sim.concave_coeff, "Concave barrier allowance c");
    simulate->add_option("--concave-delta", sim.concave_delta, "Concave barrier exponent delta");
    simulate->add_option("--seed", sim.seed, "Seed");
    simulate->add_option("--grid", sim.level_grid, "Level-set grid of v values")->delimiter(',');
    simulate->add_option("--star-radius", sim.star_radius, "Cluster radius r (default sqrt t)");
    simulate->add_option("--carrier-v", sim.carrier_v, "Level v for the carrier statistic");
    simulate->add_option("--companion-s", sim.companion_s, "Time of the exact companion Z_s (0 disables)");
    simulate->add_option("--genealogy-replicas", sim.genealogy_replicas,
                         "Replicas that also get star and carrier statistics");
    simulate->add_flag("--write-populations", sim.write_populations, "Store every population in binary form");
    simulate->add_option("--max-particles", sim.max_particles, "Particle budget per replica");
    simulate->add_option("--out", out, "Output directory")->required();

    std::string run_dir;
    LevelSetOptions lso;
    auto* level_sets = app.add_subcommand("level-sets", "Level-set and star-process growth from a simulate run");
    level_sets->add_option("--run", run_dir, "simulate run directory")->required();
    level_sets->add_option("--vmin", lso.vmin, "Fit window start");
    level_sets->add_option("--vmax", lso.vmax, "Fit window end");
    level_sets->add_option("--out", out, "Output directory")->required();

    GapTailOptions gto;
    auto* gap_tail = app.add_subcommand("gap-tail", "Top-two gap and max tails, optional exact-vs-pruned comparison");
    gap_tail->add_option("--run", run_dir, "simulate run directory")->required();
    gap_tail->add_option("--reference", gto.reference, "Exact run to compare against");
    gap_tail->add_option("--wmin", gto.wmin, "Gap window start");
    gap_tail->add_option("--wmax", gto.wmax, "Gap window end");
    gap_tail->add_option("--wstep", gto.wstep, "Gap grid step");
    gap_tail->add_option("--umin", gto.umin, "Max-tail window start");
    gap_tail->add_option("--umax", gto.umax, "Max-tail window end");
    gap_tail->add_option("--ustep", gto.ustep, "Max-tail grid step");
    gap_tail->add_option("--min-replicas", gto.min_replicas, "Minimum usable replicas");
    gap_tail->add_option("--out", out, "Output directory")->required();

    auto* carriers = app.add_subcommand("carriers", "Uniformity of carrier heights");
    carriers->add_option("--run", run_dir, "simulate run directory")->required();
    carriers->add_option("--out", out, "Output directory")->required();

    ClusterOptions cso;
    auto* cluster = app.add_subcommand("cluster-sample", "Rejection samples of the cluster law");
    cluster->add_option("--t", cso.t, "Walk horizon");
    cluster->add_option("--r", cso.r, "Cluster radius");
    cluster->add_option("--samples", cso.samples, "Accepted samples");
    cluster->add_option("--max-attempts", cso.max_attempts, "Attempts per sample before giving up");
    cluster->add_option("--seed", cso.seed, "Seed");
    cluster->add_option("--vmin", cso.vmin, "Mean-count fit window start");
    cluster->add_option("--vmax", cso.vmax, "Mean-count fit window end");
    cluster->add_option("--dip-w", cso.dip_w, "Gap level of the dip-time diagnostic");
    add_law_options(cluster, cso.law);
    cluster->add_option("--out", out, "Output directory")->required();

    SpineOptions spo;
    bool no_engine = false;
    auto* spine = app.add_subcommand("verify-spine", "Many-to-one / many-to-two identities and engine checks");
    spine->add_option("--t", spo.t, "Horizon");
    spine->add_option("--replicas", spo.replicas, "Replicas per estimator");
    spine->add_option("--seed", spo.seed, "Seed");
    spine->add_option("--lifetime-events", spo.lifetime_events, "Spine lifetimes for the rate test");
    spine->add_flag("--no-engine-checks", no_engine, "Skip leaf moments, covariance and drift sweep");
    spine->add_option("--out", out, "Output directory")->required();

    BarrierOptions bpo;
    auto* barrier = app.add_subcommand("barrier-prob", "Stay-below probabilities of (decorated) bridges");
    barrier->add_option("--x", bpo.x, "Start values")->delimiter(',')->allow_extra_args(false);
    barrier->add_option("--y", bpo.y, "End values")->delimiter(',')->allow_extra_args(false);
    barrier->add_option("--t", bpo.t, "Horizons")->delimiter(',')->allow_extra_args(false);
    barrier->add_flag("--decorated", bpo.decorated, "Decorated walk instead of the plain bridge");
    barrier->add_option("--n", bpo.n, "Samples per cell");
    barrier->add_option("--seed", bpo.seed, "Seed");
    add_law_options(barrier, bpo.law);
    barrier->add_option("--out", out, "Output directory")->required();

    std::vector<std::string> inputs, reruns;
    std::string report_out;
    auto* report = app.add_subcommand("report", "Map every acceptance criterion to pass / fail / not run");
    report->add_option("--inputs", inputs, "Run directories")->required();
    report->add_option("--rerun", reruns, "Directories to re-execute from their manifest (determinism)");
    report->add_option("--out", report_out, "Write the report as JSON here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::validation);
    }

    set_thread_count(threads);
    const Execution exec = serial ? Execution::serial : Execution::parallel;

    if (*simulate) {
        sim.mode = mode == "exact" ? Mode::exact : Mode::barrier;
        const RunManifest m = run_simulate(sim, out, exec);
        std::cout << "simulate: " << sim.replicas << " replicas -> " << out << " (manifest " << m.hash << ")\n";
    } else if (*level_sets) {
        const RunManifest m = run_level_sets(run_dir, lso, out);
        std::cout << "level-sets -> " << out << " (manifest " << m.hash << ")\n";
    } else if (*gap_tail) {
        const RunManifest m = run_gap_tail(run_dir, gto, out);
        std::cout << "gap-tail -> " << out << " (manifest " << m.hash << ")\n";
    } else if (*carriers) {
        const RunManifest m = run_carriers(run_dir, out);
        std::cout << "carriers -> " << out << " (manifest " << m.hash << ")\n";
    } else if (*cluster) {
        const RunManifest m = run_cluster_sample(cso, out, exec);
        std::cout << "cluster-sample -> " << out << " (manifest " << m.hash << ")\n";
    } else if (*spine) {
        spo.engine_checks = !no_engine;
        const RunManifest m = run_verify_spine(spo, out, exec);
        std::cout << "verify-spine -> " << out << " (manifest " << m.hash << ")\n";
    } else if (*barrier) {
        const RunManifest m = run_barrier_prob(bpo, out, exec);
        std::cout << "barrier-prob -> " << out << " (manifest " << m.hash << ")\n";
    } else if (*report) {
        std::vector<fs::path> dirs(inputs.begin(), inputs.end());
        std::vector<Check> extra;
        if (!reruns.empty()) {
            const std::vector<fs::path> rdirs(reruns.begin(), reruns.end());
            const fs::path tmp = fs::temp_directory_path() / ("bbm-rerun-" + hex64(fnv1a64(fs::absolute(rdirs[0]).string())));
            extra.push_back(determinism_check(rdirs, tmp, exec));
            fs::remove_all(tmp);
        }
        const auto status = collect_report(dirs, extra);
        std::cout << format_report(status);
        if (!report_out.empty()) write_file(report_out, report_to_json(status).dump(2) + "\n");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const bbm::StarvationError& e) {
        std::cerr << "error: " << e.what() << " (acceptance estimate " << e.acceptance_estimate() << ")\n";
        return static_cast<int>(bbm::ExitCode::starvation);
    } catch (const bbm::BudgetError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(bbm::ExitCode::budget);
    } catch (const bbm::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(bbm::ExitCode::validation);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(bbm::ExitCode::validation);
    }
}
