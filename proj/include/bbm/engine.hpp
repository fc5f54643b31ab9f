#pragma once

// Event-driven simulation of binary branching Brownian motion.
//
// Positions are advanced only at branch times and at the horizon, using exact
// Gaussian increments.  The tree is grown depth-first, so particles are
// emitted in pre-order.  Each particle owns a key; its lifetime, increment and
// auxiliary uniforms are fixed slots of that key.  Two runs from the same
// (seed, replica) therefore grow the same tree, and a pruned run retains a
// subset of the particles of the exact run.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bbm/centering.hpp"
#include "bbm/errors.hpp"
#include "bbm/population.hpp"
#include "bbm/rng.hpp"

namespace bbm {

struct SimConfig {
    double horizon = 0.0;
    Mode mode = Mode::exact;
    double slack = 8.0;           ///< barrier offset L below the linear interpolation of m(t)
    double concave_coeff = 0.0;   ///< c in the optional -c min(s, t-s)^(1/2 - delta) allowance
    double concave_delta = 0.25;  ///< delta of that allowance
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    std::uint64_t max_particles = 50'000'000;

    /// Throws ValidationError on negative horizon/slack or bad barrier shape.
    void validate() const;
};

/// Lower barrier b(s) = (s/t) a - L - c min(s, t-s)^(1/2-delta), where the
/// target a is m(t) for population runs.
class Barrier {
public:
    explicit Barrier(const SimConfig& cfg);
    Barrier(double horizon, double target, double slack, double concave_coeff, double concave_delta);

    double at(double s) const noexcept;

    /// True when the particle path from (s0, x0) to (s1, x1) falls below the
    /// barrier.  Uses the Brownian-bridge crossing probability against the
    /// chord of the barrier over [s0, s1]; `u` is a uniform in (0, 1).
    bool crossed(double s0, double x0, double s1, double x1, double u) const noexcept;

    /// Same decision, drawing u from slot::crossing of `key` only when the
    /// crossing probability is not negligible.  Identical to crossed() with
    /// that u, since open-unit uniforms never fall below e^-40.
    bool crossed_keyed(double s0, double x0, double s1, double x1, std::uint64_t key) const noexcept;

private:
    double horizon_;
    double slope_;
    double slack_;
    double coeff_;
    double exponent_;
};

namespace slot {
inline constexpr std::uint64_t lifetime = 0;
inline constexpr std::uint64_t increment = 1;
inline constexpr std::uint64_t crossing = 2;
inline constexpr std::uint64_t bridge = 3;
}  // namespace slot

/// Key of child `which` (0 or 1) of the particle with key `parent`.
constexpr std::uint64_t child_key(std::uint64_t parent, unsigned which) noexcept {
    return derive_key(parent, 0xc4ceb9fe1a85ec53ULL + which);
}

/// Everything known about one particle once its lifetime has been drawn.
struct ParticleEvent {
    std::uint64_t key = 0;
    std::int64_t parent = -1;  ///< pre-order index of the parent
    std::int64_t index = -1;   ///< pre-order index assigned to this particle (-1 when pruned)
    double birth_time = 0.0;
    double birth_pos = 0.0;
    double end_time = 0.0;
    double end_pos = 0.0;
    double lifetime = 0.0;  ///< full Exp(1) lifetime, not truncated at the horizon
    bool alive = false;
};

namespace detail {

struct Pending {
    std::uint64_t key;
    std::int64_t parent;
    double birth_time;
    double birth_pos;
};

template <class Visitor>
bool grow_from(std::uint64_t root_key, double t, bool prune, const Barrier& barrier, std::uint64_t max_particles,
               Visitor& visit);

/// Grows one realization depth-first and reports each particle to `visit`.
///
/// Visitor requirements:
///   bool on_particle(const ParticleEvent&)  -- return false to stop early
///   void on_pruned(const ParticleEvent&)
/// Returns false when the visitor stopped the traversal.
template <class Visitor>
bool grow(const SimConfig& cfg, Visitor& visit) {
    return grow_from(replica_key(cfg.seed, cfg.replica), cfg.horizon, cfg.mode == Mode::barrier, Barrier(cfg),
                     cfg.max_particles, visit);
}

/// Same traversal from an arbitrary root key, with an explicit barrier.
template <class Visitor>
bool grow_from(std::uint64_t root_key, double t, bool prune, const Barrier& barrier, std::uint64_t max_particles,
               Visitor& visit) {
    const bool pruning = prune && t > 0.0;

    std::vector<Pending> stack;
    stack.reserve(256);
    stack.push_back({root_key, -1, 0.0, 0.0});
    std::int64_t next_index = 0;

    while (!stack.empty()) {
        const Pending p = stack.back();
        stack.pop_back();

        ParticleEvent ev;
        ev.key = p.key;
        ev.parent = p.parent;
        ev.birth_time = p.birth_time;
        ev.birth_pos = p.birth_pos;
        ev.lifetime = -std::log(bits_to_open_unit(draw_bits(p.key, slot::lifetime)));
        const double natural_end = p.birth_time + ev.lifetime;
        ev.alive = natural_end >= t;
        ev.end_time = ev.alive ? t : natural_end;
        const double dt = ev.end_time - p.birth_time;
        ev.end_pos = p.birth_pos + std::sqrt(dt) * normal_quantile(bits_to_open_unit(draw_bits(p.key, slot::increment)));

        if (pruning && barrier.crossed_keyed(p.birth_time, p.birth_pos, ev.end_time, ev.end_pos, p.key)) {
            visit.on_pruned(ev);
            continue;
        }

        ev.index = next_index++;
        if (static_cast<std::uint64_t>(next_index) > max_particles)
            throw BudgetError("particle budget exceeded: more than " + std::to_string(max_particles) +
                              " particles at horizon " + std::to_string(t));
        if (!visit.on_particle(ev)) return false;
        if (!ev.alive) {
            stack.push_back({child_key(p.key, 1), ev.index, ev.end_time, ev.end_pos});
            stack.push_back({child_key(p.key, 0), ev.index, ev.end_time, ev.end_pos});
        }
    }
    return true;
}

}  // namespace detail

/// Exact simulation; cfg.mode must be exact.
Population simulate_exact(const SimConfig& cfg);

/// Barrier-pruned simulation; cfg.mode must be barrier.
Population simulate_pruned(const SimConfig& cfg);

/// Dispatches on cfg.mode.
Population simulate(const SimConfig& cfg);

/// Derivative-martingale value at an intermediate time s <= horizon, computed
/// on the exact tree of the same (seed, replica).  Positions at time s are
/// bridge-interpolated between the horizon-run endpoints, so the value belongs
/// to the same realization whatever cfg.mode is.  Cost grows like e^s.
double martingale_at(const SimConfig& cfg, double s);

/// Per-replica summary used by large replicated runs.  Computed by streaming
/// the leaves, without storing the genealogy.
struct ReplicaSummary {
    std::uint64_t replica = 0;
    std::uint64_t leaf_count = 0;
    std::uint64_t particle_count = 0;
    std::uint64_t pruned_count = 0;
    double max_centered = 0.0;     ///< h*_t - m_t
    double second_centered = 0.0;  ///< second largest leaf height minus m_t (NaN with one leaf)
    double gap12 = 0.0;            ///< top-two gap (NaN with fewer than two leaves)
    double martingale = 0.0;       ///< Z_t with unit normalization (biased under pruning)
    std::vector<std::uint64_t> level_counts;  ///< #{x : h_t(x) - m_t >= -v} for each v of the grid
};

ReplicaSummary summarize_replica(const SimConfig& cfg, const std::vector<double>& level_grid);

/// Centered maximum h*_t - m(t) of one realization; -inf when a pruned run
/// loses every particle.
double centered_max(const SimConfig& cfg);

}  // namespace bbm
