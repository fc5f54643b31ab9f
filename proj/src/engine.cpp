#include "bbm/engine.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace bbm {

void SimConfig::validate() const {
    if (!(horizon >= 0.0) || !std::isfinite(horizon))
        throw ValidationError("invalid horizon " + std::to_string(horizon) + " (must be finite and >= 0)");
    if (mode == Mode::barrier) {
        if (!(slack >= 0.0)) throw ValidationError("invalid barrier slack " + std::to_string(slack) + " (must be >= 0)");
        if (!(concave_coeff >= 0.0)) throw ValidationError("concave barrier coefficient must be >= 0");
        if (!(concave_delta >= 0.0 && concave_delta < 0.5)) throw ValidationError("concave barrier delta must lie in [0, 1/2)");
    }
    if (max_particles == 0) throw ValidationError("particle budget must be positive");
}

Barrier::Barrier(const SimConfig& cfg)
    : Barrier(cfg.horizon, centering(std::max(cfg.horizon, 0.0)), cfg.slack, cfg.concave_coeff, cfg.concave_delta) {}

Barrier::Barrier(double horizon, double target, double slack, double concave_coeff, double concave_delta)
    : horizon_(horizon),
      slope_(horizon > 0.0 ? target / horizon : 0.0),
      slack_(slack),
      coeff_(concave_coeff),
      exponent_(0.5 - concave_delta) {}

double Barrier::at(double s) const noexcept {
    double b = slope_ * s - slack_;
    if (coeff_ > 0.0) b -= coeff_ * std::pow(std::max(0.0, std::min(s, horizon_ - s)), exponent_);
    return b;
}

bool Barrier::crossed(double s0, double x0, double s1, double x1, double u) const noexcept {
    const double d0 = x0 - at(s0);
    const double d1 = x1 - at(s1);
    if (d1 < 0.0 || d0 <= 0.0) return true;
    const double dt = s1 - s0;
    if (dt <= 0.0) return false;
    return u < std::exp(-2.0 * d0 * d1 / dt);
}

bool Barrier::crossed_keyed(double s0, double x0, double s1, double x1, std::uint64_t key) const noexcept {
    const double d0 = x0 - at(s0);
    const double d1 = x1 - at(s1);
    if (d1 < 0.0 || d0 <= 0.0) return true;
    const double dt = s1 - s0;
    if (dt <= 0.0) return false;
    const double a = -2.0 * d0 * d1 / dt;
    if (a < -40.0) return false;
    return bits_to_open_unit(draw_bits(key, slot::crossing)) < std::exp(a);
}

namespace {

void check_exact_budget(const SimConfig& cfg) {
    // Expected number of leaves is e^t.
    if (cfg.horizon > std::log(static_cast<double>(cfg.max_particles)))
        throw BudgetError("exact simulation at horizon " + std::to_string(cfg.horizon) +
                          " expects e^t particles, above the budget cap of " + std::to_string(cfg.max_particles));
}

struct PopulationBuilder {
    std::vector<Particle> particles;
    std::uint64_t pruned = 0;

    bool on_particle(const ParticleEvent& ev) {
        particles.push_back({ev.parent, ev.birth_time, ev.birth_pos, ev.end_time, ev.end_pos, ev.alive});
        return true;
    }
    void on_pruned(const ParticleEvent&) { ++pruned; }
};

Population build(const SimConfig& cfg) {
    PopulationBuilder builder;
    detail::grow(cfg, builder);
    return Population(cfg.horizon, cfg.mode, cfg.mode == Mode::barrier ? cfg.slack : 0.0, builder.pruned,
                      std::move(builder.particles));
}

}  // namespace

Population simulate_exact(const SimConfig& cfg) {
    cfg.validate();
    if (cfg.mode != Mode::exact) throw ValidationError("simulate_exact requires exact mode");
    check_exact_budget(cfg);
    return build(cfg);
}

Population simulate_pruned(const SimConfig& cfg) {
    cfg.validate();
    if (cfg.mode != Mode::barrier) throw ValidationError("simulate_pruned requires barrier mode");
    return build(cfg);
}

Population simulate(const SimConfig& cfg) {
    return cfg.mode == Mode::exact ? simulate_exact(cfg) : simulate_pruned(cfg);
}

double martingale_at(const SimConfig& cfg, double s) {
    cfg.validate();
    if (!(s >= 0.0 && s <= cfg.horizon)) throw ValidationError("martingale_at: need 0 <= s <= horizon");
    SimConfig at_s = cfg;
    at_s.horizon = s;
    check_exact_budget(at_s);

    const double t = cfg.horizon;
    double sum = 0.0;
    std::uint64_t visited = 0;
    std::vector<detail::Pending> stack{{replica_key(cfg.seed, cfg.replica), -1, 0.0, 0.0}};
    while (!stack.empty()) {
        const detail::Pending p = stack.back();
        stack.pop_back();
        if (++visited > cfg.max_particles) throw BudgetError("particle budget exceeded in martingale_at");

        const double natural_end = p.birth_time - std::log(bits_to_open_unit(draw_bits(p.key, slot::lifetime)));
        const double end = std::min(natural_end, t);
        const double end_pos =
            p.birth_pos + std::sqrt(end - p.birth_time) * normal_quantile(bits_to_open_unit(draw_bits(p.key, slot::increment)));
        if (end >= s) {
            double x = end_pos;
            if (end > s) {
                const double span = end - p.birth_time;
                const double w = (s - p.birth_time) / span;
                const double sd = std::sqrt((s - p.birth_time) * (end - s) / span);
                x = p.birth_pos + w * (end_pos - p.birth_pos) +
                    sd * normal_quantile(bits_to_open_unit(draw_bits(p.key, slot::bridge)));
            }
            sum += (sqrt2 * s - x) * std::exp(sqrt2 * x - 2.0 * s);
            continue;
        }
        stack.push_back({child_key(p.key, 1), -1, end, end_pos});
        stack.push_back({child_key(p.key, 0), -1, end, end_pos});
    }
    return sum;
}

namespace {

struct SummaryVisitor {
    double t;
    double m_t;
    const std::vector<double>& grid;
    ReplicaSummary& out;
    double top1 = -std::numeric_limits<double>::infinity();
    double top2 = -std::numeric_limits<double>::infinity();

    bool on_particle(const ParticleEvent& ev) {
        ++out.particle_count;
        if (!ev.alive) return true;
        ++out.leaf_count;
        const double h = ev.end_pos;
        if (h > top1) {
            top2 = top1;
            top1 = h;
        } else if (h > top2) {
            top2 = h;
        }
        const double centered = h - m_t;
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (centered >= -grid[i]) ++out.level_counts[i];
        out.martingale += (sqrt2 * t - h) * std::exp(sqrt2 * h - 2.0 * t);
        return true;
    }
    void on_pruned(const ParticleEvent&) { ++out.pruned_count; }
};

}  // namespace

ReplicaSummary summarize_replica(const SimConfig& cfg, const std::vector<double>& level_grid) {
    cfg.validate();
    if (cfg.mode == Mode::exact) check_exact_budget(cfg);
    ReplicaSummary out;
    out.replica = cfg.replica;
    out.level_counts.assign(level_grid.size(), 0);
    SummaryVisitor visitor{cfg.horizon, centering(cfg.horizon), level_grid, out};
    detail::grow(cfg, visitor);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.max_centered = out.leaf_count > 0 ? visitor.top1 - visitor.m_t : nan;
    out.second_centered = out.leaf_count > 1 ? visitor.top2 - visitor.m_t : nan;
    out.gap12 = out.leaf_count > 1 ? visitor.top1 - visitor.top2 : nan;
    return out;
}

namespace {

struct MaxVisitor {
    double top = -std::numeric_limits<double>::infinity();
    bool on_particle(const ParticleEvent& ev) {
        if (ev.alive && ev.end_pos > top) top = ev.end_pos;
        return true;
    }
    void on_pruned(const ParticleEvent&) {}
};

}  // namespace

double centered_max(const SimConfig& cfg) {
    cfg.validate();
    if (cfg.mode == Mode::exact) check_exact_budget(cfg);
    MaxVisitor visitor;
    detail::grow(cfg, visitor);
    return visitor.top - centering(cfg.horizon);
}

}  // namespace bbm
