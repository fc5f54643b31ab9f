#include "bbm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include "bbm/centering.hpp"
#include "bbm/errors.hpp"
#include "bbm/genealogy.hpp"
#include "bbm/io.hpp"

namespace bbm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt2 = std::numbers::sqrt2;

bool same(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

nlohmann::json fit_json(const SlopeFit& f) {
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& r : f.grid) grid.push_back({r.x, r.log_value, r.weight});
    return {{"slope", f.slope}, {"intercept", f.intercept}, {"stderr", f.stderr}, {"method", f.method}, {"grid", grid}};
}

nlohmann::json tail_json(const std::vector<TailPoint>& c) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : c) out.push_back({{"w", p.w}, {"survival", p.survival}, {"stderr", p.stderr}, {"hits", p.hits}});
    return out;
}

nlohmann::json prefactor_json(const PrefactorReport& p) {
    return {{"v", p.v},
            {"ratio", p.ratio},
            {"linear", p.linear},
            {"plain", p.plain},
            {"cv_linear", json_number(p.cv_linear)},
            {"cv_plain", json_number(p.cv_plain)},
            {"cv_ratio", json_number(p.cv_ratio)},
            {"linear_flatter", p.linear_flatter},
            {"used", p.used},
            {"excluded", p.excluded}};
}

nlohmann::json checks_json(const std::vector<Check>& checks) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : checks) a.push_back(to_json(c));
    return a;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

fs::path absolute_dir(const fs::path& p) { return fs::absolute(p).lexically_normal(); }

Check make_check(int criterion, std::string name, bool pass, nlohmann::json measured, std::string target) {
    Check c;
    c.criterion = criterion;
    c.name = std::move(name);
    c.pass = pass;
    c.measured = std::move(measured);
    c.target = std::move(target);
    return c;
}

std::vector<double> get_grid(const nlohmann::json& j, const char* key, std::vector<double> fallback) {
    return j.contains(key) ? j.at(key).get<std::vector<double>>() : fallback;
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

nlohmann::json to_json(const Check& c) {
    return {{"criterion", c.criterion}, {"name", c.name}, {"pass", c.pass}, {"measured", c.measured}, {"target", c.target}};
}

Check check_from_json(const nlohmann::json& j) {
    return make_check(j.at("criterion").get<int>(), j.at("name").get<std::string>(), j.at("pass").get<bool>(),
                      j.at("measured"), j.at("target").get<std::string>());
}

std::vector<double> linear_grid(double lo, double hi, double step) {
    std::vector<double> g;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) g.push_back(lo + static_cast<double>(i) * step);
    return g;
}

// ---------------------------------------------------------------------------
// simulate

double SimulateOptions::radius() const { return star_radius < 0.0 ? std::sqrt(t) : star_radius; }

SimConfig SimulateOptions::sim_config(std::uint64_t replica) const {
    SimConfig c;
    c.horizon = t;
    c.mode = mode;
    c.slack = slack;
    c.concave_coeff = concave_coeff;
    c.concave_delta = concave_delta;
    c.seed = seed;
    c.replica = replica;
    c.max_particles = max_particles;
    return c;
}

void SimulateOptions::validate() const {
    sim_config(first_replica).validate();
    if (replicas == 0) throw ValidationError("--replicas must be at least 1");
    if (!(carrier_v > 0.0)) throw ValidationError("carrier level v must be positive");
    if (companion_s < 0.0) throw ValidationError("companion time must be >= 0");
    for (double v : level_grid)
        if (!std::isfinite(v)) throw ValidationError("level grid must be finite");
    if (mode == Mode::exact && t > std::log(static_cast<double>(max_particles)))
        throw BudgetError("exact simulation at horizon " + fmt(t) + " expects e^t particles, above the budget cap of " +
                          std::to_string(max_particles));
}

nlohmann::json SimulateOptions::to_json() const {
    return {{"t", t},
            {"replicas", replicas},
            {"first_replica", first_replica},
            {"mode", to_string(mode)},
            {"slack", slack},
            {"concave_coeff", concave_coeff},
            {"concave_delta", concave_delta},
            {"seed", seed},
            {"level_grid", level_grid},
            {"star_radius", radius()},
            {"carrier_v", carrier_v},
            {"companion_s", companion_s},
            {"genealogy_replicas", std::min(genealogy_replicas, replicas)},
            {"write_populations", write_populations},
            {"max_particles", max_particles}};
}

SimulateOptions SimulateOptions::from_json(const nlohmann::json& j) {
    SimulateOptions o;
    o.t = j.at("t").get<double>();
    o.replicas = j.at("replicas").get<std::uint64_t>();
    o.first_replica = get_or<std::uint64_t>(j, "first_replica", 0);
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "exact")
        o.mode = Mode::exact;
    else if (mode == "barrier" || mode == "pruned")
        o.mode = Mode::barrier;
    else
        throw ValidationError("unknown mode '" + mode + "'");
    o.slack = get_or(j, "slack", o.slack);
    o.concave_coeff = get_or(j, "concave_coeff", o.concave_coeff);
    o.concave_delta = get_or(j, "concave_delta", o.concave_delta);
    o.seed = get_or<std::uint64_t>(j, "seed", o.seed);
    o.level_grid = get_grid(j, "level_grid", o.level_grid);
    o.star_radius = get_or(j, "star_radius", o.star_radius);
    o.carrier_v = get_or(j, "carrier_v", o.carrier_v);
    o.companion_s = get_or(j, "companion_s", o.companion_s);
    o.genealogy_replicas = get_or<std::uint64_t>(j, "genealogy_replicas", o.genealogy_replicas);
    o.write_populations = get_or(j, "write_populations", o.write_populations);
    o.max_particles = get_or<std::uint64_t>(j, "max_particles", o.max_particles);
    return o;
}

ReplicaRecord simulate_replica(const SimulateOptions& opt, std::uint64_t replica) {
    const SimConfig cfg = opt.sim_config(replica);
    const std::size_t g = opt.level_grid.size();
    ReplicaRecord rec;
    rec.replica = replica;
    rec.companion_z = kNaN;
    rec.carrier = kNaN;
    rec.star_counts.assign(g, kNaN);
    rec.level_counts.assign(g, 0.0);

    if (replica - opt.first_replica < opt.genealogy_replicas) {
        const Population pop = simulate(cfg);
        rec.particles = pop.size();
        rec.pruned = pop.pruned_count();
        rec.leaves = pop.leaf_count();
        const double m = centering(opt.t);
        double top1 = -kInf, top2 = -kInf;
        for (std::uint32_t id : pop.leaves()) {
            const double h = pop.height(id);
            if (h > top1) {
                top2 = top1;
                top1 = h;
            } else if (h > top2) {
                top2 = h;
            }
            for (std::size_t j = 0; j < g; ++j)
                if (h - m >= -opt.level_grid[j]) rec.level_counts[j] += 1.0;
            rec.martingale += (kSqrt2 * opt.t - h) * std::exp(kSqrt2 * h - 2.0 * opt.t);
        }
        rec.max_centered = top1 - m;
        rec.gap12 = rec.leaves > 1 ? top1 - top2 : kInf;
        const double r = opt.radius();
        if (rec.leaves > 0) {
            const GenealogyIndex index(pop);
            const PointConfiguration star = star_process(index, r);
            for (std::size_t j = 0; j < g; ++j)
                rec.star_counts[j] = static_cast<double>(star.count_at_least(-opt.level_grid[j]));
            if (r > 0.0 && r < opt.t) {
                const std::vector<double> carriers = carrier_heights(index, opt.carrier_v, r);
                if (!carriers.empty()) {
                    const double u = bits_to_open_unit(draw_bits(derive_key(replica_key(opt.seed, replica), 0x63617272), 0));
                    rec.carrier = carriers[std::min(carriers.size() - 1,
                                                    static_cast<std::size_t>(u * static_cast<double>(carriers.size())))];
                }
            }
        } else {
            std::fill(rec.star_counts.begin(), rec.star_counts.end(), 0.0);
        }
    } else {
        const ReplicaSummary s = summarize_replica(cfg, opt.level_grid);
        rec.particles = s.particle_count;
        rec.pruned = s.pruned_count;
        rec.leaves = s.leaf_count;
        rec.max_centered = s.leaf_count > 0 ? s.max_centered : -kInf;
        rec.gap12 = s.leaf_count > 1 ? s.gap12 : kInf;
        rec.martingale = s.martingale;
        for (std::size_t j = 0; j < g; ++j) rec.level_counts[j] = static_cast<double>(s.level_counts[j]);
    }
    if (opt.companion_s > 0.0) rec.companion_z = martingale_at(cfg, std::min(opt.companion_s, opt.t));
    return rec;
}

std::vector<ReplicaRecord> simulate_records(const SimulateOptions& opt, Execution exec) {
    opt.validate();
    return map_replicas(opt.first_replica, opt.replicas, [&](std::uint64_t r) { return simulate_replica(opt, r); },
                        exec);
}

std::string records_to_csv(const SimulateOptions& opt, const std::vector<ReplicaRecord>& records) {
    std::ostringstream out;
    out << "replica,leaves,particles,pruned,max_centered,gap12,martingale,companion_z,carrier";
    for (double v : opt.level_grid) out << ",N@" << format_double(v);
    for (double v : opt.level_grid) out << ",S@" << format_double(v);
    out << '\n';
    for (const auto& r : records) {
        out << r.replica << ',' << r.leaves << ',' << r.particles << ',' << r.pruned << ','
            << format_double(r.max_centered) << ',' << format_double(r.gap12) << ',' << format_double(r.martingale)
            << ',' << format_double(r.companion_z) << ',' << format_double(r.carrier);
        for (double c : r.level_counts) out << ',' << format_double(c);
        for (double c : r.star_counts) out << ',' << format_double(c);
        out << '\n';
    }
    return out.str();
}

std::vector<ReplicaRecord> records_from_csv(const std::string& text, std::size_t grid_size) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty summary file");
    std::vector<ReplicaRecord> out;
    const std::size_t expected = 9 + 2 * grid_size;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != expected) throw ValidationError("summary row has " + std::to_string(f.size()) + " fields");
        ReplicaRecord r;
        r.replica = std::stoull(f[0]);
        r.leaves = std::stoull(f[1]);
        r.particles = std::stoull(f[2]);
        r.pruned = std::stoull(f[3]);
        r.max_centered = parse_double(f[4]);
        r.gap12 = parse_double(f[5]);
        r.martingale = parse_double(f[6]);
        r.companion_z = parse_double(f[7]);
        r.carrier = parse_double(f[8]);
        for (std::size_t j = 0; j < grid_size; ++j) r.level_counts.push_back(parse_double(f[9 + j]));
        for (std::size_t j = 0; j < grid_size; ++j) r.star_counts.push_back(parse_double(f[9 + grid_size + j]));
        out.push_back(std::move(r));
    }
    return out;
}

RunManifest run_simulate(const SimulateOptions& opt, const fs::path& out, Execution exec) {
    const std::string started = utc_now();
    const auto records = simulate_records(opt, exec);
    RunManifest m;
    m.command = "simulate";
    m.config = opt.to_json();
    m.seed = opt.seed;
    m.replica_first = opt.first_replica;
    m.replica_count = opt.replicas;
    std::uint64_t pruned = 0, particles = 0, extinct = 0;
    for (const auto& r : records) {
        pruned += r.pruned;
        particles += r.particles;
        if (r.leaves == 0) ++extinct;
    }
    m.pruning = {{"mode", to_string(opt.mode)},
                 {"slack", opt.mode == Mode::barrier ? opt.slack : 0.0},
                 {"concave_coeff", opt.concave_coeff},
                 {"pruned_count", pruned},
                 {"particle_count", particles},
                 {"extinct_replicas", extinct}};
    m.add_file(out, "summary.csv", records_to_csv(opt, records));
    if (opt.write_populations) {
        for (std::uint64_t r = opt.first_replica; r < opt.first_replica + opt.replicas; ++r) {
            std::ostringstream bin;
            write_population_binary(bin, simulate(opt.sim_config(r)));
            char name[64];
            std::snprintf(name, sizeof name, "populations/replica_%08llu.bin", static_cast<unsigned long long>(r));
            m.add_file(out, name, bin.str());
        }
    }
    m.add_file(out, "checks.json", dump(nlohmann::json::array()));
    m.write(out);
    write_timing(out, started, utc_now());
    return m;
}

RunData load_run(const fs::path& dir) {
    RunData run;
    run.dir = absolute_dir(dir);
    run.manifest = load_manifest(dir);
    if (run.manifest.command != "simulate")
        throw ValidationError(dir.string() + " is a '" + run.manifest.command + "' run, expected a simulate run");
    run.options = SimulateOptions::from_json(run.manifest.config);
    run.records = records_from_csv(read_file(dir / "summary.csv"), run.options.level_grid.size());
    if (run.records.size() != run.options.replicas) throw ValidationError("summary row count differs from manifest");
    return run;
}

namespace {

RunManifest analysis_manifest(const std::string& command, const RunData& run, nlohmann::json config) {
    RunManifest m;
    m.command = command;
    config["run"] = run.dir.string();
    m.config = std::move(config);
    m.seed = run.manifest.seed;
    m.replica_first = run.manifest.replica_first;
    m.replica_count = run.manifest.replica_count;
    m.pruning = run.manifest.pruning;
    m.inputs.push_back({{"dir", run.dir.string()}, {"hash", run.manifest.hash}});
    return m;
}

void finish(RunManifest& m, const fs::path& out, const nlohmann::json& result, const std::vector<Check>& checks,
            const std::string& started) {
    nlohmann::json r = result;
    if (!m.inputs.empty()) r["input_manifests"] = m.inputs;
    m.add_file(out, "result.json", dump(r));
    m.add_file(out, "checks.json", dump(checks_json(checks)));
    m.write(out);
    write_timing(out, started, utc_now());
}

}  // namespace

// ---------------------------------------------------------------------------
// level sets

nlohmann::json LevelSetOptions::to_json() const { return {{"vmin", vmin}, {"vmax", vmax}}; }

LevelSetOptions LevelSetOptions::from_json(const nlohmann::json& j) {
    LevelSetOptions o;
    o.vmin = get_or(j, "vmin", o.vmin);
    o.vmax = get_or(j, "vmax", o.vmax);
    return o;
}

nlohmann::json analyze_level_sets(const RunData& run, const LevelSetOptions& opt, std::vector<Check>& checks) {
    const auto& grid = run.options.level_grid;
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < grid.size(); ++j)
        if (grid[j] >= opt.vmin - 1e-9 && grid[j] <= opt.vmax + 1e-9 && grid[j] > 0.0) cols.push_back(j);
    if (cols.size() < 3) throw ValidationError("level-set window holds fewer than 3 grid levels");
    if (run.records.size() < 2) throw ValidationError("insufficient data: level sets need at least 2 replicas");

    std::vector<double> v;
    for (std::size_t j : cols) v.push_back(grid[j]);

    // Z per replica: exact companion value when present, else raw Z_t of an exact run.
    std::vector<double> z;
    for (const auto& r : run.records) {
        if (std::isfinite(r.companion_z))
            z.push_back(r.companion_z);
        else if (run.options.mode == Mode::exact)
            z.push_back(r.martingale);
        else
            throw ValidationError("pruned run has no companion Z; rerun simulate with --companion-s > 0");
    }
    const std::string z_source = std::isfinite(run.records.front().companion_z)
                                     ? "exact Z_s at s=" + fmt(std::min(run.options.companion_s, run.options.t))
                                     : "Z_t of the exact run";

    auto curve = [&](bool star, std::vector<std::vector<double>>& rows, std::vector<double>& zs) {
        std::vector<MeanEstimate> means;
        for (std::size_t i = 0; i < run.records.size(); ++i) {
            const auto& src = star ? run.records[i].star_counts : run.records[i].level_counts;
            if (!std::isfinite(src[cols[0]])) continue;
            std::vector<double> row;
            for (std::size_t j : cols) row.push_back(src[j]);
            rows.push_back(std::move(row));
            zs.push_back(z[i]);
        }
        for (std::size_t k = 0; k < cols.size(); ++k) {
            std::vector<double> col;
            for (const auto& row : rows) col.push_back(row[k]);
            means.push_back(mean_estimate(col));
        }
        return means;
    };

    const int tag5 = same(run.options.t, 16.0) ? 5 : 0;
    const int tag6 = same(run.options.t, 16.0) ? 6 : 0;
    nlohmann::json out;
    out["t"] = run.options.t;
    out["v"] = v;
    out["z_source"] = z_source;

    {
        std::vector<std::vector<double>> rows;
        std::vector<double> zs;
        const auto means = curve(false, rows, zs);
        std::vector<FitPoint> over_v, raw;
        nlohmann::json m = nlohmann::json::array();
        for (std::size_t k = 0; k < v.size(); ++k) {
            over_v.push_back({v[k], means[k].mean / v[k], means[k].stderr / v[k]});
            raw.push_back({v[k], means[k].mean, means[k].stderr});
            m.push_back({{"v", v[k]}, {"mean", means[k].mean}, {"stderr", means[k].stderr}});
        }
        const SlopeFit fit = fit_log_slope(over_v);
        const SlopeFit raw_fit = fit_log_slope(raw);
        // Typical rather than mean growth; diagnostic only.
        std::vector<FitPoint> med;
        for (std::size_t k = 0; k < v.size(); ++k) {
            std::vector<double> col;
            for (const auto& row : rows) col.push_back(row[k]);
            if (col.empty()) break;
            std::nth_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(col.size() / 2), col.end());
            if (col[col.size() / 2] > 0.0) med.push_back({v[k], col[col.size() / 2], 0.0});
        }
        const double median_slope = med.size() >= 2 ? fit_log_slope(med).slope : kNaN;
        const PrefactorReport pre = prefactor_discrimination(v, rows, zs);
        out["level_sets"] = {{"replicas", rows.size()},
                             {"means", m},
                             {"fit_mean_over_v", fit_json(fit)},
                             {"fit_mean", fit_json(raw_fit)},
                             {"median_slope", json_number(median_slope)},
                             {"prefactor", prefactor_json(pre)}};
        checks.push_back(make_check(tag5, "level-set-slope", std::abs(raw_fit.slope - kSqrt2) <= 0.15,
                                    {{"slope", raw_fit.slope},
                                     {"stderr", raw_fit.stderr},
                                     {"slope_over_v", fit.slope},
                                     {"median_slope", json_number(median_slope)}},
                                    "log-slope of mean N(v) within sqrt2 +- 0.15"));
        checks.push_back(make_check(tag5, "level-set-prefactor", pre.cv_ratio < 0.7,
                                    {{"cv_linear", json_number(pre.cv_linear)},
                                     {"cv_plain", json_number(pre.cv_plain)},
                                     {"cv_ratio", json_number(pre.cv_ratio)},
                                     {"excluded_z", pre.excluded}},
                                    "CV(linear-normalized) / CV(plain) < 0.7"));
    }
    {
        std::vector<std::vector<double>> rows;
        std::vector<double> zs;
        const auto means = curve(true, rows, zs);
        if (rows.size() >= 2) {
            std::vector<FitPoint> raw;
            nlohmann::json m = nlohmann::json::array();
            for (std::size_t k = 0; k < v.size(); ++k) {
                raw.push_back({v[k], means[k].mean, means[k].stderr});
                m.push_back({{"v", v[k]}, {"mean", means[k].mean}, {"stderr", means[k].stderr}});
            }
            const SlopeFit fit = fit_log_slope(raw);
            const PrefactorReport pre = prefactor_discrimination(v, rows, zs);
            out["star"] = {{"replicas", rows.size()},
                           {"radius", run.options.radius()},
                           {"means", m},
                           {"fit_mean", fit_json(fit)},
                           {"prefactor", prefactor_json(pre)}};
            checks.push_back(make_check(tag6, "star-slope", std::abs(fit.slope - kSqrt2) <= 0.15,
                                        {{"slope", fit.slope}, {"stderr", fit.stderr}},
                                        "log-slope of mean star count within sqrt2 +- 0.15"));
            checks.push_back(make_check(tag6, "star-prefactor", !pre.linear_flatter,
                                        {{"cv_linear", json_number(pre.cv_linear)},
                                         {"cv_plain", json_number(pre.cv_plain)},
                                         {"cv_ratio", json_number(pre.cv_ratio)}},
                                        "plain normalization flatter than linear (verdict reversed)"));
        }
    }
    return out;
}

RunManifest run_level_sets(const fs::path& run_dir, const LevelSetOptions& opt, const fs::path& out) {
    const std::string started = utc_now();
    const RunData run = load_run(run_dir);
    std::vector<Check> checks;
    const nlohmann::json result = analyze_level_sets(run, opt, checks);
    RunManifest m = analysis_manifest("level-sets", run, opt.to_json());
    std::ostringstream csv;
    csv << "kind,v,mean,stderr\n";
    for (const char* kind : {"level_sets", "star"}) {
        if (!result.contains(kind)) continue;
        for (const auto& p : result[kind]["means"])
            csv << kind << ',' << format_double(p["v"].get<double>()) << ',' << format_double(p["mean"].get<double>())
                << ',' << format_double(p["stderr"].get<double>()) << '\n';
    }
    m.add_file(out, "level_sets.csv", csv.str());
    finish(m, out, result, checks, started);
    return m;
}

// ---------------------------------------------------------------------------
// gap and max tails

nlohmann::json GapTailOptions::to_json() const {
    return {{"wmin", wmin}, {"wmax", wmax}, {"wstep", wstep}, {"umin", umin},          {"umax", umax},
            {"ustep", ustep}, {"min_replicas", min_replicas}, {"reference", reference}};
}

GapTailOptions GapTailOptions::from_json(const nlohmann::json& j) {
    GapTailOptions o;
    o.wmin = get_or(j, "wmin", o.wmin);
    o.wmax = get_or(j, "wmax", o.wmax);
    o.wstep = get_or(j, "wstep", o.wstep);
    o.umin = get_or(j, "umin", o.umin);
    o.umax = get_or(j, "umax", o.umax);
    o.ustep = get_or(j, "ustep", o.ustep);
    o.min_replicas = get_or<std::uint64_t>(j, "min_replicas", o.min_replicas);
    o.reference = get_or<std::string>(j, "reference", "");
    return o;
}

nlohmann::json analyze_gap_tail(const RunData& run, const RunData* reference, const GapTailOptions& opt,
                                std::vector<Check>& checks) {
    const double t = run.options.t;
    const std::uint64_t n = run.records.size();
    std::vector<double> gaps, maxima;
    for (const auto& r : run.records) {
        maxima.push_back(r.max_centered);
        if (std::isfinite(r.gap12)) gaps.push_back(r.gap12);
    }
    if (gaps.size() < opt.min_replicas)
        throw ValidationError("insufficient data: gap-tail needs at least " + std::to_string(opt.min_replicas) +
                              " replicas with two or more leaves, the run has " + std::to_string(gaps.size()));
    nlohmann::json out;
    out["t"] = t;
    out["replicas"] = n;
    out["gap_samples"] = gaps.size();
    out["gaps_dropped"] = n - gaps.size();

    const auto curve = tail_curve(gaps, linear_grid(opt.wmin, opt.wmax, opt.wstep));
    out["gap12_curve"] = tail_json(curve);
    try {
        const SlopeFit fit = fit_tail(curve);
        out["gap12_fit"] = fit_json(fit);
        checks.push_back(make_check(same(t, 16.0) && n >= 100000 ? 8 : 0, "gap12-tail-slope",
                                    fit.slope >= -4.3 && fit.slope <= -2.6,
                                    {{"slope", fit.slope}, {"stderr", fit.stderr}, {"samples", gaps.size()}},
                                    "log P(gap12 > w) slope in [-4.3, -2.6] over w in [0.5, 2.5]"));
    } catch (const ValidationError& e) {
        out["gap12_fit_error"] = e.what();
    }

    if (maxima.size() >= 10000) {
        const MaxTailReport mt = max_tail_check(maxima, linear_grid(opt.umin, opt.umax, opt.ustep));
        // Diagnostic only: slope after dividing out the u prefactor of the right tail.
        std::vector<FitPoint> over_u;
        for (const auto& p : mt.right_curve)
            if (p.hits > 0 && p.w > 0.0) over_u.push_back({p.w, p.survival / p.w, p.stderr / p.w});
        const double slope_over_u = over_u.size() >= 3 ? fit_log_slope(over_u).slope : std::nan("");
        out["max_tails"] = {{"samples", mt.samples},
                            {"right_slope_over_u", json_number(slope_over_u)},
                            {"right", fit_json(mt.right)},
                            {"left", fit_json(mt.left)},
                            {"right_curve", tail_json(mt.right_curve)},
                            {"left_curve", tail_json(mt.left_curve)},
                            {"right_bound_ok", mt.right_ok},
                            {"left_bound_ok", mt.left_ok}};
        const int tag = same(t, 12.0) && n >= 100000 ? 4 : 0;
        checks.push_back(make_check(tag, "max-right-tail", mt.right.slope >= -1.8 && mt.right.slope <= -1.15,
                                    {{"slope", mt.right.slope}, {"stderr", mt.right.stderr},
                                     {"slope_over_u", json_number(slope_over_u)}},
                                    "log P(max > u) slope in [-1.8, -1.15] over u in [1, 3]"));
        checks.push_back(make_check(tag, "max-left-tail", mt.left.slope >= -1.1 && mt.left.slope <= -0.35,
                                    {{"slope", mt.left.slope}, {"stderr", mt.left.stderr}},
                                    "log P(max < -u) slope in [-1.1, -0.35] over u in [1, 3]"));
    } else {
        out["max_tails"] = "not run: needs at least 10000 replicas";
    }

    if (reference) {
        if (!same(reference->options.t, t)) throw ValidationError("reference run has a different horizon");
        std::vector<double> ref_max, ref_gap, gap_all;
        for (const auto& r : reference->records) {
            ref_max.push_back(r.max_centered);
            ref_gap.push_back(r.gap12);
        }
        for (const auto& r : run.records) gap_all.push_back(r.gap12);
        const double ks_max = ks_two_sample(maxima, ref_max);
        const double ks_gap = ks_two_sample(gap_all, ref_gap);
        std::uint64_t paired = 0, identical = 0;
        for (const auto& r : run.records)
            for (const auto& q : reference->records)
                if (q.replica == r.replica) {
                    ++paired;
                    if (q.max_centered == r.max_centered) ++identical;
                    break;
                }
        out["reference"] = {{"dir", reference->dir.string()},
                            {"ks_max", ks_max},
                            {"ks_gap12", ks_gap},
                            {"paired_replicas", paired},
                            {"identical_max", identical}};
        const bool cert = same(t, 10.0) && n >= 10000 && reference->records.size() >= 10000 &&
                          reference->options.mode == Mode::exact && run.options.mode == Mode::barrier &&
                          same(run.options.slack, 8.0);
        checks.push_back(make_check(cert ? 3 : 0, "ks-max-exact-vs-pruned", ks_max <= 0.05, {{"ks", ks_max}},
                                    "two-sample KS <= 0.05"));
        checks.push_back(make_check(cert ? 3 : 0, "ks-gap12-exact-vs-pruned", ks_gap <= 0.05, {{"ks", ks_gap}},
                                    "two-sample KS <= 0.05"));
    }
    return out;
}

RunManifest run_gap_tail(const fs::path& run_dir, const GapTailOptions& opt, const fs::path& out) {
    const std::string started = utc_now();
    const RunData run = load_run(run_dir);
    std::optional<RunData> ref;
    GapTailOptions o = opt;
    if (!opt.reference.empty()) {
        ref = load_run(opt.reference);
        o.reference = ref->dir.string();
    }
    std::vector<Check> checks;
    const nlohmann::json result = analyze_gap_tail(run, ref ? &*ref : nullptr, o, checks);
    RunManifest m = analysis_manifest("gap-tail", run, o.to_json());
    if (ref) m.inputs.push_back({{"dir", ref->dir.string()}, {"hash", ref->manifest.hash}});
    std::ostringstream csv;
    csv << "w,survival,stderr,hits\n";
    for (const auto& p : result["gap12_curve"])
        csv << format_double(p["w"].get<double>()) << ',' << format_double(p["survival"].get<double>()) << ','
            << format_double(p["stderr"].get<double>()) << ',' << p["hits"].get<std::uint64_t>() << '\n';
    m.add_file(out, "gap12_tail.csv", csv.str());
    finish(m, out, result, checks, started);
    return m;
}

// ---------------------------------------------------------------------------
// carriers

nlohmann::json analyze_carriers(const RunData& run, std::vector<Check>& checks) {
    std::vector<double> c;
    for (const auto& r : run.records)
        if (std::isfinite(r.carrier)) c.push_back(r.carrier);
    if (c.size() < 20)
        throw ValidationError("insufficient data: carriers need at least 20 replicas with a nonempty level set, got " +
                              std::to_string(c.size()));
    const UniformityReport u = ks_uniform(c);
    const nlohmann::json out = {{"t", run.options.t},
                                {"v", run.options.carrier_v},
                                {"r", run.options.radius()},
                                {"total", u.total},
                                {"inside", u.sample_count},
                                {"ks", u.ks},
                                {"critical_95", u.critical},
                                {"overflow_fraction", u.overflow_fraction},
                                {"bins", u.bins}};
    const bool tagged = same(run.options.t, 16.0) && same(run.options.carrier_v, 5.0) &&
                        same(run.options.radius(), std::sqrt(16.0));
    checks.push_back(make_check(tagged ? 7 : 0, "carrier-uniformity",
                                u.ks <= 0.1 && u.overflow_fraction <= 0.1 && u.total >= 2000,
                                {{"ks", u.ks}, {"overflow_fraction", u.overflow_fraction}, {"samples", u.total}},
                                "KS <= 0.1, overflow <= 0.1, at least 2000 samples"));
    return out;
}

RunManifest run_carriers(const fs::path& run_dir, const fs::path& out) {
    const std::string started = utc_now();
    const RunData run = load_run(run_dir);
    std::vector<Check> checks;
    const nlohmann::json result = analyze_carriers(run, checks);
    RunManifest m = analysis_manifest("carriers", run, nlohmann::json::object());
    std::ostringstream csv;
    csv << "replica,carrier\n";
    for (const auto& r : run.records)
        if (std::isfinite(r.carrier)) csv << r.replica << ',' << format_double(r.carrier) << '\n';
    m.add_file(out, "carriers.csv", csv.str());
    finish(m, out, result, checks, started);
    return m;
}

// ---------------------------------------------------------------------------
// decoration law

nlohmann::json LawOptions::to_json() const {
    return {{"path", path},
            {"ages", config.ages},
            {"samples", config.samples},
            {"slack", config.slack},
            {"seed", config.seed}};
}

LawOptions LawOptions::from_json(const nlohmann::json& j) {
    LawOptions o;
    o.path = get_or<std::string>(j, "path", "");
    o.config.ages = get_grid(j, "ages", o.config.ages);
    o.config.samples = get_or<std::uint64_t>(j, "samples", o.config.samples);
    o.config.slack = get_or(j, "slack", o.config.slack);
    o.config.seed = get_or<std::uint64_t>(j, "seed", o.config.seed);
    return o;
}

DecorationLaw load_law(const LawOptions& opt, Execution exec) {
    return DecorationLaw::load_or_build(opt.path, opt.config, exec);
}

namespace {

// The cache path does not affect any output, so it stays out of manifests.
nlohmann::json law_identity(const LawOptions& law) {
    nlohmann::json j = law.to_json();
    j.erase("path");
    return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// cluster law

nlohmann::json ClusterOptions::to_json() const {
    return {{"t", t},         {"r", r},         {"samples", samples}, {"max_attempts", max_attempts},
            {"seed", seed},   {"v_grid", v_grid}, {"vmin", vmin},     {"vmax", vmax},
            {"w_grid", w_grid}, {"dip_w", dip_w}, {"law", law_identity(law)}};
}

ClusterOptions ClusterOptions::from_json(const nlohmann::json& j) {
    ClusterOptions o;
    o.t = get_or(j, "t", o.t);
    o.r = get_or(j, "r", o.r);
    o.samples = get_or<std::uint64_t>(j, "samples", o.samples);
    o.max_attempts = get_or<std::uint64_t>(j, "max_attempts", o.max_attempts);
    o.seed = get_or<std::uint64_t>(j, "seed", o.seed);
    o.v_grid = get_grid(j, "v_grid", o.v_grid);
    o.vmin = get_or(j, "vmin", o.vmin);
    o.vmax = get_or(j, "vmax", o.vmax);
    o.w_grid = get_grid(j, "w_grid", o.w_grid);
    o.dip_w = get_or(j, "dip_w", o.dip_w);
    if (j.contains("law")) o.law = LawOptions::from_json(j.at("law"));
    return o;
}

std::vector<ClusterSample> sample_clusters(const ClusterOptions& opt, const DecorationLaw& law, Execution exec) {
    if (!(opt.r > 0.0 && opt.r <= opt.t)) throw ValidationError("cluster sampling needs 0 < r <= t");
    if (opt.samples == 0) throw ValidationError("--samples must be at least 1");
    return map_replicas(
        0, opt.samples,
        [&](std::uint64_t i) { return sample_cluster_nu(opt.t, opt.r, opt.max_attempts, replica_key(opt.seed, i), law); },
        exec);
}

nlohmann::json analyze_clusters(const ClusterOptions& opt, const std::vector<ClusterSample>& samples,
                                std::vector<Check>& checks) {
    if (samples.size() < 2) throw ValidationError("insufficient data: cluster statistics need at least 2 samples");
    std::uint64_t attempts = 0, warnings = 0;
    for (const auto& s : samples) {
        attempts += s.attempts;
        if (s.short_horizon_warning) ++warnings;
    }
    const double acceptance = static_cast<double>(samples.size()) / static_cast<double>(attempts);

    nlohmann::json means = nlohmann::json::array();
    std::vector<FitPoint> fit_pts;
    std::vector<double> m2, m2_se, shape;
    for (double v : opt.v_grid) {
        std::vector<double> c, c2;
        for (const auto& s : samples) {
            const double k = static_cast<double>(s.config.count_closed(-v, 0.0));
            c.push_back(k);
            c2.push_back(k * k);
        }
        const MeanEstimate a = mean_estimate(c), b = mean_estimate(c2);
        means.push_back({{"v", v}, {"mean", a.mean}, {"stderr", a.stderr}, {"second_moment", b.mean},
                         {"second_moment_stderr", b.stderr}});
        if (v >= opt.vmin - 1e-9 && v <= opt.vmax + 1e-9) fit_pts.push_back({v, a.mean, a.stderr});
        m2.push_back(b.mean);
        m2_se.push_back(b.stderr);
        shape.push_back((v + 1.0) * std::exp(2.0 * kSqrt2 * v));
    }
    const bool tagged = same(opt.t, 64.0) && same(opt.r, 8.0);
    nlohmann::json out;
    out["t"] = opt.t;
    out["r"] = opt.r;
    out["samples"] = samples.size();
    out["attempts"] = attempts;
    out["acceptance"] = acceptance;
    out["t_times_acceptance"] = opt.t * acceptance;
    out["short_horizon_warnings"] = warnings;
    out["counts"] = means;

    const SlopeFit fit = fit_log_slope(fit_pts);
    out["mean_fit"] = fit_json(fit);
    checks.push_back(make_check(tagged ? 9 : 0, "cluster-mean-slope", std::abs(fit.slope - kSqrt2) <= 0.2,
                                {{"slope", fit.slope}, {"stderr", fit.stderr}},
                                "log-slope of mean count([-v,0]) within sqrt2 +- 0.2 over v in [2, 5]"));
    const DominanceReport dom = dominance_check(m2, m2_se, shape);
    out["second_moment"] = {{"c", dom.c}, {"ratio", dom.ratio}, {"ratio_stderr", dom.ratio_se},
                            {"calibration_points", dom.calibration}};
    checks.push_back(make_check(tagged ? 9 : 0, "cluster-second-moment", dom.pass, {{"c", dom.c}, {"ratio", dom.ratio}},
                                "E count^2 <= (c + 3 SE)(v+1)e^{2 sqrt2 v}, c fitted on the first half of the grid"));

    const GapProfile gp = cluster_gap_profile(samples, opt.w_grid, opt.dip_w);
    nlohmann::json curve = nlohmann::json::array();
    std::vector<FitPoint> gap_pts;
    for (const auto& p : gp.curve) {
        curve.push_back({{"w", p.w}, {"probability", p.probability}, {"stderr", p.stderr}, {"hits", p.hits}});
        if (p.hits > 0) gap_pts.push_back({p.w, p.probability, p.stderr});
    }
    out["gap_curve"] = curve;
    if (gap_pts.size() >= 3) {
        const SlopeFit gfit = fit_log_slope(gap_pts);
        out["gap_fit"] = fit_json(gfit);
        checks.push_back(make_check(tagged ? 10 : 0, "cluster-gap-slope", gfit.slope >= -2.6 && gfit.slope <= -1.4,
                                    {{"slope", gfit.slope}, {"stderr", gfit.stderr}},
                                    "log P(C([-w,0)) = 0) slope in [-2.6, -1.4] over w in [0.5, 2.5]"));
    }
    const double med = gp.dip_median();
    out["dip"] = {{"w", gp.dip_w}, {"samples", gp.dip_times.size()}, {"median", json_number(med)}};
    checks.push_back(make_check(tagged ? 10 : 0, "cluster-dip-median",
                                std::isfinite(med) && med >= opt.dip_w / 4.0 && med <= opt.dip_w,
                                {{"median", json_number(med)}, {"samples", gp.dip_times.size()}},
                                "median first passage below -w in [w/4, w] at w = " + fmt(opt.dip_w)));
    return out;
}

RunManifest run_cluster_sample(const ClusterOptions& opt, const fs::path& out, Execution exec) {
    const std::string started = utc_now();
    const DecorationLaw law = load_law(opt.law, exec);
    const auto samples = sample_clusters(opt, law, exec);
    std::vector<Check> checks;
    const nlohmann::json result = analyze_clusters(opt, samples, checks);
    RunManifest m;
    m.command = "cluster-sample";
    m.config = opt.to_json();
    m.seed = opt.seed;
    m.replica_count = opt.samples;
    m.pruning = {{"decoration_law", law_identity(opt.law)}};
    // r = 8 clusters hold thousands of atoms each, so the atoms go to disk
    // once, streamed, and clusters.json keeps only per-sample metadata.
    {
        fs::create_directories(out);
        std::ofstream csv(out / "clusters.csv", std::ios::binary | std::ios::trunc);
        write_cluster_samples_csv(csv, samples);
        if (!csv.flush()) throw ValidationError("cannot write " + (out / "clusters.csv").string());
    }
    m.add_written_file(out, "clusters.csv");
    nlohmann::json js = nlohmann::json::array();
    for (const auto& s : samples)
        js.push_back({{"attempts", s.attempts}, {"decorations", s.path.decorations.size()},
                      {"points", s.config.total()}, {"atoms", s.config.atoms().size()}});
    m.add_file(out, "clusters.json", dump(js));
    finish(m, out, result, checks, started);
    return m;
}

// ---------------------------------------------------------------------------
// spine identities

nlohmann::json SpineOptions::to_json() const {
    return {{"t", t},
            {"replicas", replicas},
            {"seed", seed},
            {"count_horizons", count_horizons},
            {"second_moment_t", second_moment_t},
            {"covariance_pairs", covariance_pairs},
            {"lifetime_events", lifetime_events},
            {"engine_checks", engine_checks}};
}

SpineOptions SpineOptions::from_json(const nlohmann::json& j) {
    SpineOptions o;
    o.t = get_or(j, "t", o.t);
    o.replicas = get_or<std::uint64_t>(j, "replicas", o.replicas);
    o.seed = get_or<std::uint64_t>(j, "seed", o.seed);
    o.count_horizons = get_grid(j, "count_horizons", o.count_horizons);
    o.second_moment_t = get_or(j, "second_moment_t", o.second_moment_t);
    o.covariance_pairs = get_or<std::uint64_t>(j, "covariance_pairs", o.covariance_pairs);
    o.lifetime_events = get_or<std::uint64_t>(j, "lifetime_events", o.lifetime_events);
    o.engine_checks = get_or(j, "engine_checks", o.engine_checks);
    return o;
}

namespace {

nlohmann::json identity_json(const IdentityReport& r) {
    return {{"name", r.name}, {"lhs", r.lhs}, {"lhs_se", r.lhs_se}, {"rhs", r.rhs},
            {"rhs_se", r.rhs_se}, {"z", r.z}, {"oracle", json_number(r.oracle)}};
}

std::vector<double> leaf_counts(double t, std::uint64_t seed, std::uint64_t n, Execution exec) {
    return map_replicas(
        0, n,
        [&](std::uint64_t r) {
            SimConfig c;
            c.horizon = t;
            c.seed = seed;
            c.replica = r;
            return static_cast<double>(summarize_replica(c, {}).leaf_count);
        },
        exec);
}

}  // namespace

nlohmann::json verify_spine(const SpineOptions& opt, std::vector<Check>& checks, Execution exec) {
    if (!(opt.t > 0.0)) throw ValidationError("verify-spine needs t > 0");
    if (opt.replicas < 100) throw ValidationError("insufficient data: verify-spine needs at least 100 replicas");
    nlohmann::json out;
    out["t"] = opt.t;
    out["replicas"] = opt.replicas;

    if (opt.engine_checks) {
        const bool standard = opt.replicas >= 10000;
        nlohmann::json counts = nlohmann::json::array();
        for (double h : opt.count_horizons) {
            const MeanEstimate m = mean_estimate(leaf_counts(h, opt.seed, opt.replicas, exec));
            const double target = std::exp(h);
            const double z = std::abs(m.mean - target) / m.stderr;
            counts.push_back({{"t", h}, {"mean", m.mean}, {"stderr", m.stderr}, {"target", target}, {"z", z}});
            const bool tag = standard && (same(h, 1.0) || same(h, 2.0) || same(h, 3.0));
            checks.push_back(make_check(tag ? 1 : 0, "leaf-mean t=" + fmt(h), z <= 3.0,
                                        {{"mean", m.mean}, {"stderr", m.stderr}, {"target", target}},
                                        "within 3 SE of e^t"));
        }
        out["leaf_means"] = counts;
        {
            const double h = opt.second_moment_t;
            std::vector<double> sq = leaf_counts(h, opt.seed, opt.replicas, exec);
            for (double& x : sq) x *= x;
            const MeanEstimate m = mean_estimate(sq);
            const double target = 2.0 * std::exp(2.0 * h) - std::exp(h);
            const double z = std::abs(m.mean - target) / m.stderr;
            out["leaf_second_moment"] = {{"t", h}, {"mean", m.mean}, {"stderr", m.stderr}, {"target", target}, {"z", z}};
            checks.push_back(make_check(standard && same(h, 2.0) ? 1 : 0, "leaf-second-moment t=" + fmt(h), z <= 3.0,
                                        {{"mean", m.mean}, {"stderr", m.stderr}, {"target", target}},
                                        "within 3 SE of 2e^{2t} - e^t"));
        }
        {
            const double tc = 3.0;
            const std::uint64_t reps = std::max<std::uint64_t>(opt.replicas, 100);
            const CovarianceReport cov =
                pairwise_covariance_check(tc, opt.seed, reps, opt.covariance_pairs, linear_grid(0.0, tc, 0.5));
            nlohmann::json bins = nlohmann::json::array();
            double worst = 0.0;
            for (const auto& b : cov.bins) {
                const double z = b.stderr_product > 0 ? std::abs(b.mean_product - b.expected) / b.stderr_product : 0.0;
                if (b.n > 1) worst = std::max(worst, z);
                bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"n", b.n}, {"mean_product", b.mean_product},
                                {"stderr", b.stderr_product}, {"expected", b.expected}, {"z", z}});
            }
            const auto& ind = cov.independent;
            out["covariance"] = {{"t", tc},
                                 {"bins", bins},
                                 {"independent", {{"n", ind.n}, {"mean_product", ind.mean_product},
                                                  {"stderr", ind.stderr_product}}},
                                 {"worst_z", worst}};
            checks.push_back(make_check(reps >= 10000 ? 2 : 0, "covariance t=3", cov.pass,
                                        {{"worst_z", worst}, {"bins", cov.bins.size()}},
                                        "binned E[h_x h_y] within 3 SE of mean t - d; independent roots within 3 SE of 0"));
        }
        {
            const DriftBoundsReport d = drift_bounds_check(default_drift_horizons());
            out["drift_bounds"] = {{"points", d.points},
                                   {"violations", d.violations},
                                   {"min_lower_margin", d.min_lower_margin},
                                   {"min_upper_margin", d.min_upper_margin}};
            checks.push_back(make_check(14, "drift-bounds", d.violations == 0 && d.points > 0,
                                        {{"points", d.points}, {"violations", d.violations}},
                                        "zero violations over the grid"));
        }
    }

    const int tag = same(opt.t, 3.0) ? 11 : 0;
    const std::vector<std::pair<std::string, SpineFunctional>> fs = {
        {"many-to-one F=1", SpineFunctional::one()},
        {"many-to-one above", SpineFunctional::above(0.0)},
        {"many-to-one window", SpineFunctional::window(-2.0, 0.0, 1.0)}};
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& [name, f] : fs) {
        const IdentityReport r = many_to_one_check(f, opt.t, opt.replicas, opt.seed);
        ids.push_back(identity_json(r));
        checks.push_back(make_check(tag, name, r.pass, {{"z", r.z}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"functional", r.name}},
                                    "within 3 combined SE"));
    }
    {
        const IdentityReport r = many_to_two_check(opt.t, opt.replicas, opt.seed);
        ids.push_back(identity_json(r));
        checks.push_back(make_check(tag, "many-to-two", r.pass,
                                    {{"z", r.z}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"oracle", json_number(r.oracle)}},
                                    "within 3 combined SE"));
    }
    out["identities"] = ids;

    {
        std::vector<double> spine, off;
        for (std::uint64_t i = 0; spine.size() < opt.lifetime_events; ++i) {
            const SpineRealization s = simulate_one_spine(opt.t, derive_key(replica_key(opt.seed, i), 0x6c696665));
            spine.insert(spine.end(), s.spine_lifetimes.begin(), s.spine_lifetimes.end());
            if (off.size() < opt.lifetime_events)
                off.insert(off.end(), s.offspine_lifetimes.begin(), s.offspine_lifetimes.end());
        }
        const double ks2 = ks_statistic(spine, [](double x) { return x <= 0 ? 0.0 : 1.0 - std::exp(-2.0 * x); });
        const double ks1 = ks_statistic(off, [](double x) { return x <= 0 ? 0.0 : 1.0 - std::exp(-x); });
        const double c2 = ks_critical_95(static_cast<double>(spine.size()));
        const double c1 = ks_critical_95(static_cast<double>(off.size()));
        out["lifetimes"] = {{"spine_events", spine.size()}, {"spine_ks", ks2}, {"spine_critical", c2},
                            {"offspine_events", off.size()}, {"offspine_ks", ks1}, {"offspine_critical", c1}};
        checks.push_back(make_check(tag, "spine-branch-rate", ks2 <= c2,
                                    {{"ks", ks2}, {"critical", c2}, {"events", spine.size()}},
                                    "KS vs Exp(2) below the 95% critical value"));
        checks.push_back(make_check(0, "offspine-branch-rate", ks1 <= c1,
                                    {{"ks", ks1}, {"critical", c1}, {"events", off.size()}},
                                    "KS vs Exp(1) below the 95% critical value"));
    }
    {
        const double t = opt.t;
        const auto overlaps = map_replicas(
            0, opt.replicas,
            [&](std::uint64_t i) { return simulate_two_spine_overlap(t, derive_key(replica_key(opt.seed, i), 0x6f766c70)); },
            exec);
        auto cdf = [t](double x) { return x < 0 ? 0.0 : (x >= t ? 1.0 : 1.0 - std::exp(-2.0 * x)); };
        auto cdf_left = [t](double x) { return x <= 0 ? 0.0 : (x > t ? 1.0 : 1.0 - std::exp(-2.0 * x)); };
        const double ks = ks_statistic(overlaps, cdf, cdf_left);
        const double crit = ks_critical_95(static_cast<double>(overlaps.size()));
        out["overlap"] = {{"samples", overlaps.size()}, {"ks", ks}, {"critical", crit}};
        checks.push_back(make_check(tag, "two-spine-overlap", ks <= crit, {{"ks", ks}, {"critical", crit}},
                                    "KS of t - d vs Exp(2) ^ t below the 95% critical value"));
    }
    return out;
}

RunManifest run_verify_spine(const SpineOptions& opt, const fs::path& out, Execution exec) {
    const std::string started = utc_now();
    std::vector<Check> checks;
    const nlohmann::json result = verify_spine(opt, checks, exec);
    RunManifest m;
    m.command = "verify-spine";
    m.config = opt.to_json();
    m.seed = opt.seed;
    m.replica_count = opt.replicas;
    m.pruning = {{"mode", "exact"}};
    finish(m, out, result, checks, started);
    return m;
}

// ---------------------------------------------------------------------------
// barrier probabilities

nlohmann::json BarrierOptions::to_json() const {
    nlohmann::json j = {{"x", x}, {"y", y}, {"t", t}, {"decorated", decorated}, {"n", n}, {"seed", seed}};
    if (decorated) j["law"] = law_identity(law);
    return j;
}

BarrierOptions BarrierOptions::from_json(const nlohmann::json& j) {
    BarrierOptions o;
    o.x = get_grid(j, "x", o.x);
    o.y = get_grid(j, "y", o.y);
    o.t = get_grid(j, "t", o.t);
    o.decorated = get_or(j, "decorated", o.decorated);
    o.n = get_or<std::uint64_t>(j, "n", o.n);
    o.seed = get_or<std::uint64_t>(j, "seed", o.seed);
    if (j.contains("law")) o.law = LawOptions::from_json(j.at("law"));
    return o;
}

std::vector<BarrierEstimate> barrier_grid(const BarrierOptions& opt, const DecorationLaw* law, Execution) {
    if (opt.n == 0) throw ValidationError("--n must be at least 1");
    std::vector<BarrierEstimate> rows;
    // One stream for the whole grid: every cell sees the same randomness.
    const std::uint64_t key = replica_key(opt.seed, 0);
    for (double t : opt.t)
        for (double x : opt.x)
            for (double y : opt.y) rows.push_back(estimate_barrier_probability(x, y, t, opt.decorated, opt.n, key, law));
    return rows;
}

nlohmann::json analyze_barrier(const BarrierOptions& opt, const std::vector<BarrierEstimate>& rows,
                               std::vector<Check>& checks) {
    nlohmann::json out;
    nlohmann::json table = nlohmann::json::array();
    for (const auto& r : rows)
        table.push_back({{"x", r.x}, {"y", r.y}, {"t", r.t}, {"estimate", r.estimate}, {"stderr", r.stderr},
                         {"n", r.n}, {"t_times_p", r.t * r.estimate}, {"oracle", json_number(r.oracle)}});
    out["rows"] = table;
    out["decorated"] = opt.decorated;

    auto find = [&](double x, double y, double t) -> const BarrierEstimate* {
        for (const auto& r : rows)
            if (same(r.x, x) && same(r.y, y) && same(r.t, t)) return &r;
        return nullptr;
    };

    if (!opt.decorated) {
        double worst = 0.0;
        for (const auto& r : rows) {
            const double se = std::sqrt(r.oracle * (1.0 - r.oracle) / static_cast<double>(r.n));
            const double z = se > 0 ? std::abs(r.estimate - r.oracle) / se : (r.estimate == r.oracle ? 0.0 : kInf);
            worst = std::max(worst, z);
        }
        out["oracle_worst_z"] = json_number(worst);
        checks.push_back(make_check(12, "barrier-oracle", worst <= 3.0, {{"worst_z", json_number(worst)},
                                                                          {"cells", rows.size()}},
                                    "every cell within 3 SE of 1 - e^{-2xy/t}"));
    } else {
        nlohmann::json stab = nlohmann::json::array();
        bool any = false, ok = true;
        for (double t : opt.t)
            for (double x : opt.x)
                for (double y : opt.y) {
                    const auto* a = find(x, y, t);
                    const auto* b = find(x, y, 2.0 * t);
                    if (!a || !b) continue;
                    const double ta = a->t * a->estimate, tb = b->t * b->estimate;
                    const double rel = ta > 0 ? std::abs(tb - ta) / ta : kInf;
                    any = true;
                    if (!(rel <= 0.15)) ok = false;
                    stab.push_back({{"x", x}, {"y", y}, {"t", t}, {"tp_t", ta}, {"tp_2t", tb},
                                    {"relative_difference", json_number(rel)}});
                }
        out["stability"] = stab;
        if (any)
            checks.push_back(make_check(12, "barrier-decorated-stability", ok, {{"pairs", stab}},
                                        "t p(t) and 2t p(2t) within 15%"));
        nlohmann::json norm = nlohmann::json::array();
        for (const auto& r : rows)
            if (r.x < 0 && r.y < 0)
                norm.push_back({{"x", r.x}, {"y", r.y}, {"t", r.t}, {"tp_over_2xy", r.t * r.estimate / (2 * r.x * r.y)}});
        out["normalization_trend"] = norm;
    }

    // Monotonicity: lowering either endpoint can only help the walk stay below 0.
    std::uint64_t comparisons = 0, violations = 0;
    for (double t : opt.t) {
        std::vector<double> xs = opt.x, ys = opt.y;
        std::sort(xs.begin(), xs.end());
        std::sort(ys.begin(), ys.end());
        for (double y : ys)
            for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
                const auto *lo = find(xs[i], y, t), *hi = find(xs[i + 1], y, t);
                ++comparisons;
                if (lo->estimate < hi->estimate - 3.0 * std::hypot(lo->stderr, hi->stderr)) ++violations;
            }
        for (double x : xs)
            for (std::size_t i = 0; i + 1 < ys.size(); ++i) {
                const auto *lo = find(x, ys[i], t), *hi = find(x, ys[i + 1], t);
                ++comparisons;
                if (lo->estimate < hi->estimate - 3.0 * std::hypot(lo->stderr, hi->stderr)) ++violations;
            }
    }
    out["monotonicity"] = {{"comparisons", comparisons}, {"violations", violations}};
    if (comparisons > 0)
        checks.push_back(make_check(12, opt.decorated ? "barrier-monotonicity" : "barrier-monotonicity-undecorated",
                                    violations == 0, {{"comparisons", comparisons}, {"violations", violations}},
                                    "non-increasing in x and in y within 3 SE"));
    return out;
}

RunManifest run_barrier_prob(const BarrierOptions& opt, const fs::path& out, Execution exec) {
    const std::string started = utc_now();
    DecorationLaw law;
    if (opt.decorated) law = load_law(opt.law, exec);
    const auto rows = barrier_grid(opt, opt.decorated ? &law : nullptr, exec);
    std::vector<Check> checks;
    const nlohmann::json result = analyze_barrier(opt, rows, checks);
    RunManifest m;
    m.command = "barrier-prob";
    m.config = opt.to_json();
    m.seed = opt.seed;
    m.replica_count = opt.n;
    std::ostringstream csv;
    write_barrier_csv(csv, rows);
    m.add_file(out, "barrier.csv", csv.str());
    finish(m, out, result, checks, started);
    return m;
}

// ---------------------------------------------------------------------------
// report

const std::vector<CriterionSpec>& criteria() {
    static const std::vector<CriterionSpec> specs = {
        {1, "Engine soundness (leaf-count moments)",
         {"leaf-mean t=1", "leaf-mean t=2", "leaf-mean t=3", "leaf-second-moment t=2"}},
        {2, "Covariance structure t - d", {"covariance t=3"}},
        {3, "Pruning certification (exact vs slack 8 at t=10)", {"ks-max-exact-vs-pruned", "ks-gap12-exact-vs-pruned"}},
        {4, "Max tails at t=12", {"max-right-tail", "max-left-tail"}},
        {5, "Level-set growth v e^{sqrt2 v}", {"level-set-slope", "level-set-prefactor"}},
        {6, "Star-process growth e^{sqrt2 v}", {"star-slope", "star-prefactor"}},
        {7, "Carrier heights uniform", {"carrier-uniformity"}},
        {8, "Top-two gap tail -(2+sqrt2)", {"gap12-tail-slope"}},
        {9, "Cluster mean and second moment", {"cluster-mean-slope", "cluster-second-moment"}},
        {10, "Cluster gap -2 and dip time", {"cluster-gap-slope", "cluster-dip-median"}},
        {11, "Spinal identities",
         {"many-to-one F=1", "many-to-one above", "many-to-one window", "many-to-two", "spine-branch-rate",
          "two-spine-overlap"}},
        {12, "Barrier probabilities",
         {"barrier-oracle", "barrier-decorated-stability", "barrier-monotonicity"}},
        {13, "Determinism", {"determinism"}},
        {14, "Drift-bound sweep", {"drift-bounds"}},
    };
    return specs;
}

std::vector<CriterionStatus> collect_report(const std::vector<fs::path>& inputs, const std::vector<Check>& extra) {
    std::vector<Check> all = extra;
    for (const auto& dir : inputs) {
        const RunManifest m = load_manifest(dir);
        for (const auto& in : m.inputs) {
            const fs::path src = in.at("dir").get<std::string>();
            if (!fs::exists(src / "manifest.json")) continue;
            if (load_manifest(src).hash != in.at("hash").get<std::string>())
                throw ValidationError("stale data: " + dir.string() + " was computed from an older version of " +
                                      src.string());
        }
        if (!m.files.contains("checks.json")) continue;
        for (const auto& j : nlohmann::json::parse(read_file(dir / "checks.json"))) all.push_back(check_from_json(j));
    }
    std::vector<CriterionStatus> out;
    for (const auto& spec : criteria()) {
        CriterionStatus s;
        s.id = spec.id;
        s.title = spec.title;
        for (const auto& c : all)
            if (c.criterion == spec.id) s.checks.push_back(c);
        bool failed = false;
        for (const auto& c : s.checks)
            if (!c.pass) failed = true;
        for (const auto& name : spec.required) {
            const bool found = std::any_of(s.checks.begin(), s.checks.end(), [&](const Check& c) { return c.name == name; });
            if (!found) s.missing.push_back(name);
        }
        s.status = failed ? "fail" : (s.missing.empty() ? "pass" : "not run");
        out.push_back(std::move(s));
    }
    return out;
}

std::string format_report(const std::vector<CriterionStatus>& status) {
    std::ostringstream o;
    for (const auto& s : status) {
        char head[160];
        std::snprintf(head, sizeof head, "[%-7s] %2d  %s\n", s.status.c_str(), s.id, s.title.c_str());
        o << head;
        for (const auto& c : s.checks)
            o << "            " << (c.pass ? "ok   " : "FAIL ") << c.name << "  " << c.measured.dump() << "  (" << c.target
              << ")\n";
        for (const auto& m : s.missing) o << "            not run: " << m << '\n';
    }
    return o.str();
}

nlohmann::json report_to_json(const std::vector<CriterionStatus>& status) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& s : status) {
        nlohmann::json cs = nlohmann::json::array();
        for (const auto& c : s.checks) cs.push_back(to_json(c));
        a.push_back({{"id", s.id}, {"title", s.title}, {"status", s.status}, {"checks", cs}, {"missing", s.missing}});
    }
    return a;
}

RunManifest execute(const std::string& command, const nlohmann::json& config, const fs::path& out, Execution exec) {
    if (command == "simulate") return run_simulate(SimulateOptions::from_json(config), out, exec);
    if (command == "level-sets") return run_level_sets(config.at("run").get<std::string>(), LevelSetOptions::from_json(config), out);
    if (command == "gap-tail") return run_gap_tail(config.at("run").get<std::string>(), GapTailOptions::from_json(config), out);
    if (command == "carriers") return run_carriers(config.at("run").get<std::string>(), out);
    if (command == "cluster-sample") return run_cluster_sample(ClusterOptions::from_json(config), out, exec);
    if (command == "verify-spine") return run_verify_spine(SpineOptions::from_json(config), out, exec);
    if (command == "barrier-prob") return run_barrier_prob(BarrierOptions::from_json(config), out, exec);
    throw ValidationError("cannot re-execute command '" + command + "'");
}

std::vector<std::string> rerun_and_compare(const fs::path& dir, const fs::path& out, Execution exec) {
    const RunManifest before = load_manifest(dir);
    const RunManifest after = execute(before.command, before.config, out, exec);
    std::vector<std::string> diff;
    for (const auto& [name, h] : before.files.items())
        if (!after.files.contains(name) || after.files.at(name) != h) diff.push_back(name);
    for (const auto& [name, h] : after.files.items())
        if (!before.files.contains(name)) diff.push_back(name);
    if (read_file(dir / "manifest.json") != read_file(out / "manifest.json")) diff.push_back("manifest.json");
    return diff;
}

Check determinism_check(const std::vector<fs::path>& dirs, const fs::path& scratch, Execution exec) {
    Check c;
    c.criterion = 13;
    c.name = "determinism";
    c.target = "byte-identical outputs on rerun";
    nlohmann::json runs = nlohmann::json::array();
    bool ok = !dirs.empty();
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        const fs::path tmp = scratch / ("rerun_" + std::to_string(i));
        fs::remove_all(tmp);
        const auto diff = rerun_and_compare(dirs[i], tmp, exec);
        fs::remove_all(tmp);
        ok = ok && diff.empty();
        runs.push_back({{"dir", dirs[i].string()}, {"differing_files", diff}});
    }
    c.pass = ok;
    c.measured = {{"reruns", runs}};
    return c;
}

}  // namespace bbm
