#include "bbm/decoration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "bbm/centering.hpp"
#include "bbm/engine.hpp"
#include "bbm/errors.hpp"

namespace bbm {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t decoration_budget = 50'000'000;

nlohmann::json config_json(const DecorationLawConfig& cfg) {
    return {{"ages", cfg.ages}, {"samples", cfg.samples}, {"slack", cfg.slack}, {"seed", cfg.seed}};
}

void check_config(const DecorationLawConfig& cfg) {
    if (cfg.ages.empty() || !std::is_sorted(cfg.ages.begin(), cfg.ages.end()) || !(cfg.ages.front() > 0.0))
        throw ValidationError("decoration table ages must be positive and increasing");
    if (std::adjacent_find(cfg.ages.begin(), cfg.ages.end()) != cfg.ages.end())
        throw ValidationError("decoration table ages must be distinct");
    if (cfg.samples < 2) throw ValidationError("decoration tables need at least two samples");
}

}  // namespace

DecorationLaw DecorationLaw::build(const DecorationLawConfig& cfg, Execution exec) {
    check_config(cfg);
    DecorationLaw law;
    law.cfg_ = cfg;
    for (std::size_t a = 0; a < cfg.ages.size(); ++a) {
        SimConfig sim;
        sim.horizon = cfg.ages[a];
        // The first table age is also the exact-simulation cutoff, so it is
        // tabulated exactly; older tables use the barrier.
        sim.mode = a == 0 ? Mode::exact : Mode::barrier;
        sim.slack = cfg.slack;
        sim.seed = derive_key(cfg.seed, a);
        auto maxima = map_replicas(
            0, cfg.samples,
            [&](std::uint64_t r) {
                SimConfig c = sim;
                c.replica = r;
                return centered_max(c);
            },
            exec);
        std::vector<double> finite;
        finite.reserve(maxima.size());
        for (double m : maxima)
            if (std::isfinite(m)) finite.push_back(m);
        std::sort(finite.begin(), finite.end());
        law.lost_.push_back(maxima.size() - finite.size());
        law.tables_.push_back(std::move(finite));
    }
    return law;
}

std::string DecorationLaw::to_json() const {
    nlohmann::json j;
    j["config"] = config_json(cfg_);
    j["lost"] = lost_;
    j["tables"] = tables_;
    return j.dump();
}

DecorationLaw DecorationLaw::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    DecorationLaw law;
    const auto& c = j.at("config");
    law.cfg_.ages = c.at("ages").get<std::vector<double>>();
    law.cfg_.samples = c.at("samples").get<std::uint64_t>();
    law.cfg_.slack = c.at("slack").get<double>();
    law.cfg_.seed = c.at("seed").get<std::uint64_t>();
    check_config(law.cfg_);
    law.lost_ = j.at("lost").get<std::vector<std::uint64_t>>();
    law.tables_ = j.at("tables").get<std::vector<std::vector<double>>>();
    if (law.tables_.size() != law.cfg_.ages.size() || law.lost_.size() != law.cfg_.ages.size())
        throw ValidationError("decoration table does not match its configuration");
    for (std::size_t i = 0; i < law.tables_.size(); ++i)
        if (law.tables_[i].size() + law.lost_[i] != law.cfg_.samples || law.tables_[i].empty())
            throw ValidationError("decoration table has the wrong sample count");
    return law;
}

DecorationLaw DecorationLaw::load_or_build(const std::string& path, const DecorationLawConfig& cfg, Execution exec) {
    if (!path.empty()) {
        std::ifstream in(path);
        if (in) {
            std::stringstream buf;
            buf << in.rdbuf();
            try {
                DecorationLaw law = from_json(buf.str());
                if (config_json(law.cfg_) == config_json(cfg)) return law;
            } catch (const std::exception&) {
                // stale or corrupt cache: rebuild below
            }
        }
    }
    DecorationLaw law = build(cfg, exec);
    if (!path.empty()) {
        std::ofstream out(path);
        if (out) out << law.to_json();
    }
    return law;
}

double DecorationLaw::table_quantile(std::size_t i, double u) const {
    const std::vector<double>& xs = tables_[i];
    const double n = static_cast<double>(cfg_.samples);
    const double lost = static_cast<double>(lost_[i]);
    // Plotting position of the order statistic of rank k (0-based) is (k + 0.5) / n.
    const double p = u * n - 0.5 - lost;
    const double last = static_cast<double>(xs.size() - 1);
    if (p < 0.0) {
        if (lost_[i] > 0) return neg_inf;
        // Lower tail beyond the smallest sample: exponential with rate 2 - sqrt2.
        return xs.front() + std::log(2.0 * n * u) / (2.0 - sqrt2);
    }
    if (p >= last) {
        // Upper tail beyond the largest sample: exponential with rate sqrt2.
        return xs.back() - std::log(2.0 * n * (1.0 - u)) / sqrt2;
    }
    const auto k = static_cast<std::size_t>(p);
    const double w = p - static_cast<double>(k);
    return xs[k] + w * (xs[k + 1] - xs[k]);
}

double DecorationLaw::quantile(double age, double u) const {
    if (tables_.empty()) throw ValidationError("decoration law has no tables");
    if (!(u > 0.0 && u < 1.0)) throw ValidationError("quantile level must lie in (0, 1)");
    const auto& ages = cfg_.ages;
    if (age < ages.front()) throw ValidationError("decoration age below the tabulated range; simulate it exactly");
    if (age >= ages.back()) return table_quantile(ages.size() - 1, u);
    const auto hi = static_cast<std::size_t>(std::upper_bound(ages.begin(), ages.end(), age) - ages.begin());
    const std::size_t lo = hi - 1;
    const double qlo = table_quantile(lo, u);
    const double qhi = table_quantile(hi, u);
    if (!std::isfinite(qlo) || !std::isfinite(qhi)) return neg_inf;
    const double w = (age - ages[lo]) / (ages[hi] - ages[lo]);
    return qlo + w * (qhi - qlo);
}

namespace {

struct ExceedVisitor {
    double level;
    bool on_particle(const ParticleEvent& ev) { return !(ev.alive && ev.end_pos > level); }
    void on_pruned(const ParticleEvent&) {}
};

struct Collector {
    std::vector<Particle> particles;
    bool on_particle(const ParticleEvent& ev) {
        particles.push_back({ev.parent, ev.birth_time, ev.birth_pos, ev.end_time, ev.end_pos, ev.alive});
        return true;
    }
    void on_pruned(const ParticleEvent&) {}
};

}  // namespace

bool exact_decoration_exceeds(std::uint64_t key, double age, double level) {
    ExceedVisitor visitor{centering(age) + level};
    const Barrier none(age, 0.0, 0.0, 0.0, 0.25);
    return !detail::grow_from(key, age, false, none, decoration_budget, visitor);
}

Population exact_decoration(std::uint64_t key, double age) {
    Collector collector;
    const Barrier none(age, 0.0, 0.0, 0.0, 0.25);
    detail::grow_from(key, age, false, none, decoration_budget, collector);
    return Population(age, Mode::exact, 0.0, 0, std::move(collector.particles));
}

}  // namespace bbm
