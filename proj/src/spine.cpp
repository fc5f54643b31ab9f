#include "bbm/spine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "bbm/centering.hpp"
#include "bbm/engine.hpp"
#include "bbm/errors.hpp"
#include "bbm/parallel.hpp"
#include "bbm/rng.hpp"

namespace bbm {

namespace {
constexpr double nan = std::numeric_limits<double>::quiet_NaN();

// Salts of the per-walk streams.
constexpr std::uint64_t salt_times = 1;
constexpr std::uint64_t salt_bridge = 2;
constexpr std::uint64_t salt_decoration = 0x1000;
// Slot of a decoration key used for its tabulated maximum.
constexpr std::uint64_t slot_table = 9;
}  // namespace

// ---------------------------------------------------------------------------

double drift_middle(double r, double s, double t) {
    // r + (t - r) can round a few ulps above t
    if (!(0.0 <= r && 0.0 <= s && r + s <= t * (1.0 + 1e-12)))
        throw ValidationError("drift_middle: need 0 <= r <= r+s <= t");
    if (t - r <= 0.0) return 0.0;
    const double span = t - r;
    const double rest = std::max(0.0, t - (r + s));
    return log_plus(r + s) - (rest / span * log_plus(r) + (1.0 - rest / span) * log_plus(t));
}

std::vector<double> default_drift_horizons(std::size_t count) {
    std::vector<double> out;
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(std::pow(10.0, 3.0 * static_cast<double>(i) / static_cast<double>(count - 1)));
    return out;
}

DriftBoundsReport drift_bounds_check(const std::vector<double>& horizons, std::size_t fractions) {
    if (fractions < 2) throw ValidationError("drift sweep needs at least two grid fractions");
    DriftBoundsReport rep;
    rep.min_lower_margin = rep.min_upper_margin = std::numeric_limits<double>::infinity();
    // Rounding can push an exact zero slightly negative; allow a few ulps.
    constexpr double tol = 1e-12;
    for (double t : horizons) {
        std::vector<double> rs;
        for (std::size_t i = 0; i < fractions; ++i)
            rs.push_back(std::min(t, t * static_cast<double>(i) / static_cast<double>(fractions - 1)));
        // Points around log+ kinks at 1 and near the endpoints.
        for (double extra : {0.5, 1.0, 1.5, t - 1.0, t - 0.5})
            if (extra >= 0.0 && extra <= t) rs.push_back(extra);
        for (double r : rs) {
            std::vector<double> ss;
            for (std::size_t j = 0; j < fractions; ++j)
                ss.push_back(std::min(t - r, (t - r) * static_cast<double>(j) / static_cast<double>(fractions - 1)));
            for (double extra : {1.0 - r, 1.0, t - r - 1.0})
                if (extra >= 0.0 && extra <= t - r) ss.push_back(extra);
            for (double s : ss) {
                const double mid = drift_middle(r, s, t);
                const double lower = mid + 1.0;
                const double upper = 1.0 + log_plus(std::min(s, t - r - s)) - mid;
                ++rep.points;
                if (lower < -tol || upper < -tol) ++rep.violations;
                if (std::min(lower, upper) < std::min(rep.min_lower_margin, rep.min_upper_margin)) {
                    rep.worst_r = r;
                    rep.worst_s = s;
                    rep.worst_t = t;
                }
                rep.min_lower_margin = std::min(rep.min_lower_margin, lower);
                rep.min_upper_margin = std::min(rep.min_upper_margin, upper);
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------

namespace {

double exact_cutoff(double r, const DecorationLaw& law) { return law.empty() ? r : std::max(r, law.exact_age()); }

double table_uniform(std::uint64_t key) { return bits_to_open_unit(draw_bits(key, slot_table)); }

// Evaluates the decorations of `path` in order of increasing cost: tabulated
// ones first, then exact ones from the youngest.  Returns the indicator of A_t.
bool evaluate(DecoratedWalkPath& path, const DecorationLaw& law, bool early_exit) {
    const double cut = exact_cutoff(path.radius, law);
    bool ok = true;
    for (Decoration& d : path.decorations) {
        if (d.time <= cut) continue;
        if (law.empty()) throw ValidationError("decoration of age " + std::to_string(d.time) + " needs a decoration law");
        d.max = law.quantile(d.time, table_uniform(d.key));
        d.status = d.walk + d.max <= 0.0 ? DecorationStatus::below : DecorationStatus::above;
        if (d.status == DecorationStatus::above) {
            ok = false;
            if (early_exit) return false;
        }
    }
    for (Decoration& d : path.decorations) {
        if (d.time > cut) break;
        d.status = exact_decoration_exceeds(d.key, d.time, -d.walk) ? DecorationStatus::above : DecorationStatus::below;
        if (d.status == DecorationStatus::above) {
            ok = false;
            if (early_exit) return false;
        }
    }
    return ok;
}

void check_walk_args(double t, double r) {
    if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("decorated walk needs a finite horizon t > 0");
    if (!(r >= 0.0 && r <= t)) throw ValidationError("decorated walk needs 0 <= r <= t");
}

}  // namespace

DecoratedWalkPath sample_decorated_walk(double t, double r, std::uint64_t key, const DecorationLaw& law, double start,
                                        double end, WalkOptions opts) {
    check_walk_args(t, r);
    DecoratedWalkPath path;
    path.horizon = t;
    path.radius = r;
    path.start = start;
    path.end = end;
    path.key = key;

    RngStream times(derive_key(key, salt_times));
    RngStream normals(derive_key(key, salt_bridge));
    double prev_s = 0.0, prev_w = 0.0;
    for (std::uint64_t k = 0;; ++k) {
        const double s = prev_s + times.exponential(2.0);
        if (!(s < t)) break;
        // 0 -> 0 bridge, conditioned on the previous value.
        const double rest = t - prev_s;
        const double mean = prev_w * (t - s) / rest;
        const double sd = std::sqrt((s - prev_s) * (t - s) / rest);
        const double w = mean + sd * normals.normal();
        Decoration d;
        d.time = s;
        d.bridge = w;
        d.walk = w + start * (1.0 - s / t) + end * (s / t) - gamma_drift(t, s);
        d.key = derive_key(key, salt_decoration + k);
        d.max = nan;
        path.decorations.push_back(d);
        prev_s = s;
        prev_w = w;
    }
    path.accepted = evaluate(path, law, opts.early_exit);
    return path;
}

bool recheck_acceptance(const DecoratedWalkPath& path, const DecorationLaw& law) {
    DecoratedWalkPath copy = path;
    for (Decoration& d : copy.decorations) {
        d.status = DecorationStatus::unevaluated;
        d.max = nan;
    }
    return evaluate(copy, law, false);
}

double walk_between(const DecoratedWalkPath& path, double s, std::uint64_t salt) {
    const double t = path.horizon;
    if (!(s >= 0.0 && s <= t)) throw ValidationError("walk_between: time outside [0, t]");
    double s0 = 0.0, w0 = 0.0, s1 = t, w1 = 0.0;
    for (const Decoration& d : path.decorations) {
        if (d.time <= s) {
            s0 = d.time;
            w0 = d.bridge;
        } else {
            s1 = d.time;
            w1 = d.bridge;
            break;
        }
    }
    double w = w0;
    if (s > s0 && s1 > s0) {
        const double u = (s - s0) / (s1 - s0);
        const double sd = std::sqrt((s - s0) * (s1 - s) / (s1 - s0));
        RngStream rng(derive_key(path.key, salt));
        w = w0 + u * (w1 - w0) + sd * rng.normal();
    }
    return w + path.start * (1.0 - s / t) + path.end * (s / t) - gamma_drift(t, s);
}

// ---------------------------------------------------------------------------

ClusterSample sample_cluster_nu(double t, double r, std::uint64_t max_attempts, std::uint64_t key,
                                const DecorationLaw& law) {
    check_walk_args(t, r);
    if (max_attempts == 0) throw ValidationError("max-attempts must be at least 1");
    ClusterSample out;
    out.t_used = t;
    out.r_used = r;
    out.short_horizon_warning = t < 4.0 * r;
    for (std::uint64_t a = 0; a < max_attempts; ++a) {
        DecoratedWalkPath path = sample_decorated_walk(t, r, derive_key(key, a), law);
        if (!path.accepted) continue;
        std::vector<double> heights{0.0};
        for (Decoration& d : path.decorations) {
            if (d.time > r) break;
            const Population dec = exact_decoration(d.key, d.time);
            const double m = centering(d.time);
            double top = -std::numeric_limits<double>::infinity();
            for (std::uint32_t id : dec.leaves()) {
                const double centered = dec.height(id) - m;
                top = std::max(top, centered);
                heights.push_back(centered + d.walk);
            }
            d.max = top;
        }
        out.config = PointConfiguration::from_heights(std::move(heights), Reference::relative_to_local_max);
        out.path = std::move(path);
        out.attempts = a + 1;
        return out;
    }
    throw StarvationError("cluster sampler gave up after " + std::to_string(max_attempts) +
                              " attempts without satisfying the conditioning event (acceptance rate below " +
                              std::to_string(1.0 / static_cast<double>(max_attempts)) + ")",
                          0.0);
}

double first_passage_below(const DecoratedWalkPath& path, double w, int refinements) {
    const double t = path.horizon;
    auto shifted = [&](double s, double bridge) {
        return bridge + path.start * (1.0 - s / t) + path.end * (s / t) - gamma_drift(t, s);
    };
    if (path.start <= -w) return 0.0;
    double s0 = 0.0, b0 = 0.0;
    for (const Decoration& d : path.decorations) {
        if (d.walk > -w) {
            s0 = d.time;
            b0 = d.bridge;
            continue;
        }
        // Crossing somewhere in (s0, d.time]; bisect with conditional bridge points.
        double s1 = d.time, b1 = d.bridge;
        RngStream rng(derive_key(path.key, 0x70617373));
        for (int i = 0; i < refinements; ++i) {
            const double sm = 0.5 * (s0 + s1);
            const double sd = std::sqrt((sm - s0) * (s1 - sm) / (s1 - s0));
            const double bm = 0.5 * (b0 + b1) + sd * rng.normal();
            if (shifted(sm, bm) <= -w) {
                s1 = sm;
                b1 = bm;
            } else {
                s0 = sm;
                b0 = bm;
            }
        }
        return s1;
    }
    return nan;
}

double GapProfile::dip_median() const {
    if (dip_times.empty()) return nan;
    std::vector<double> v = dip_times;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

GapProfile cluster_gap_profile(const std::vector<ClusterSample>& samples, const std::vector<double>& w_grid,
                               double dip_w) {
    if (samples.empty()) throw ValidationError("gap profile needs at least one cluster sample");
    GapProfile prof;
    prof.samples = samples.size();
    prof.dip_w = dip_w;
    for (const ClusterSample& c : samples) prof.attempts += c.attempts;
    const double n = static_cast<double>(samples.size());
    for (double w : w_grid) {
        if (!(w > 0.0)) throw ValidationError("gap profile needs w > 0");
        GapPoint g;
        g.w = w;
        for (const ClusterSample& c : samples)
            if (c.config.count_half_open(-w, 0.0) == 0) ++g.hits;
        g.probability = static_cast<double>(g.hits) / n;
        g.stderr = std::sqrt(g.probability * (1.0 - g.probability) / n);
        prof.curve.push_back(g);
    }
    for (const ClusterSample& c : samples) {
        if (c.config.count_half_open(-dip_w, 0.0) != 0) continue;
        const double tau = first_passage_below(c.path, dip_w);
        if (std::isfinite(tau)) prof.dip_times.push_back(tau);
    }
    return prof;
}

// ---------------------------------------------------------------------------

namespace {

struct SpinePending {
    std::uint64_t key;
    std::int64_t parent;
    double birth_time;
    double birth_pos;
    unsigned marks;  // bit j set when mark j rides on this particle
};

}  // namespace

SpineRealization simulate_spine(double t, unsigned marks, std::uint64_t key, std::uint64_t max_particles) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("spine horizon must be finite and >= 0");
    if (marks < 1 || marks > 2) throw ValidationError("spine processes carry one or two marks");
    SpineRealization out;
    out.marked.assign(marks, 0);
    out.overlap = t;
    std::vector<Particle> parts;
    std::vector<SpinePending> stack{{key, -1, 0.0, 0.0, (1u << marks) - 1}};
    while (!stack.empty()) {
        const SpinePending p = stack.back();
        stack.pop_back();
        const int carried = std::popcount(p.marks);
        const double rate = static_cast<double>(1u << carried);
        const double life = -std::log(bits_to_open_unit(draw_bits(p.key, slot::lifetime))) / rate;
        if (carried == 1) out.spine_lifetimes.push_back(life);
        if (carried == 0) out.offspine_lifetimes.push_back(life);
        const bool alive = p.birth_time + life >= t;
        const double end = alive ? t : p.birth_time + life;
        const double pos =
            p.birth_pos + std::sqrt(end - p.birth_time) *
                              normal_quantile(bits_to_open_unit(draw_bits(p.key, slot::increment)));
        const auto id = static_cast<std::int64_t>(parts.size());
        if (parts.size() >= max_particles) throw BudgetError("spine simulation exceeded its particle budget");
        parts.push_back({p.parent, p.birth_time, p.birth_pos, end, pos, alive});
        if (alive) {
            for (unsigned j = 0; j < marks; ++j)
                if (p.marks & (1u << j)) out.marked[j] = static_cast<std::uint32_t>(id);
            continue;
        }
        unsigned child_marks[2] = {0, 0};
        for (unsigned j = 0; j < marks; ++j)
            if (p.marks & (1u << j)) child_marks[draw_bits(p.key, 4 + j) >> 63] |= 1u << j;
        if (carried == 2 && child_marks[0] && child_marks[1]) out.overlap = end;
        stack.push_back({child_key(p.key, 1), id, end, pos, child_marks[1]});
        stack.push_back({child_key(p.key, 0), id, end, pos, child_marks[0]});
    }
    out.population = Population(t, Mode::exact, 0.0, 0, std::move(parts));
    return out;
}

SpineRealization simulate_one_spine(double t, std::uint64_t key) { return simulate_spine(t, 1, key); }

double simulate_two_spine_overlap(double t, std::uint64_t key) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("spine horizon must be finite and >= 0");
    // Only the shared segment matters: while together the pair branches at
    // rate 4 and splits with probability 1/2 at each branching.  The draws
    // coincide with those of simulate_spine(t, 2, key) along the shared line.
    std::uint64_t k = key;
    double s = 0.0;
    while (true) {
        s += -std::log(bits_to_open_unit(draw_bits(k, slot::lifetime))) / 4.0;
        if (s >= t) return t;
        const unsigned c0 = static_cast<unsigned>(draw_bits(k, 4) >> 63);
        const unsigned c1 = static_cast<unsigned>(draw_bits(k, 5) >> 63);
        if (c0 != c1) return s;
        k = child_key(k, c0);
    }
}

double SpineFunctional::operator()(double h, double top) const {
    switch (kind) {
        case Kind::one: return 1.0;
        case Kind::above: return h >= a ? 1.0 : 0.0;
        case Kind::window: return (h >= a && h <= b && top <= u) ? 1.0 : 0.0;
    }
    return 0.0;
}

std::string SpineFunctional::name() const {
    switch (kind) {
        case Kind::one: return "F=1";
        case Kind::above: return "F=1{h>=" + std::to_string(a) + "}";
        case Kind::window:
            return "F=1{h in [" + std::to_string(a) + "," + std::to_string(b) + "], max<=" + std::to_string(u) + "}";
    }
    return "F";
}

namespace {

struct MeanSe {
    double mean = 0.0, se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe out;
    const double n = static_cast<double>(xs.size());
    if (xs.empty()) return out;
    double s = 0.0;
    for (double x : xs) s += x;
    out.mean = s / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.se = xs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    return out;
}

IdentityReport compare(std::string name, const std::vector<double>& lhs, const std::vector<double>& rhs, double oracle) {
    IdentityReport rep;
    rep.name = std::move(name);
    const MeanSe l = mean_se(lhs), r = mean_se(rhs);
    rep.lhs = l.mean;
    rep.lhs_se = l.se;
    rep.rhs = r.mean;
    rep.rhs_se = r.se;
    const double se = std::hypot(l.se, r.se);
    rep.z = se > 0.0 ? std::abs(l.mean - r.mean) / se : (l.mean == r.mean ? 0.0 : std::numeric_limits<double>::infinity());
    rep.pass = rep.z <= 3.0;
    rep.oracle = oracle;
    return rep;
}

double centered_top(const Population& pop) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::uint32_t id : pop.leaves()) top = std::max(top, pop.height(id));
    return top - centering(pop.horizon());
}

std::uint64_t spine_stream(std::uint64_t seed, std::uint64_t replica) {
    return derive_key(replica_key(seed, replica), 0x7370696e65);
}

}  // namespace

IdentityReport many_to_one_check(const SpineFunctional& f, double t, std::uint64_t replicas, std::uint64_t seed) {
    if (replicas < 2) throw ValidationError("many-to-one check needs at least two replicas");
    SimConfig cfg;
    cfg.horizon = t;
    cfg.seed = seed;
    const double m = centering(t);
    auto lhs = map_replicas(0, replicas, [&](std::uint64_t r) {
        SimConfig c = cfg;
        c.replica = r;
        const Population pop = simulate_exact(c);
        const double top = centered_top(pop);
        double sum = 0.0;
        for (std::uint32_t id : pop.leaves()) sum += f(pop.height(id) - m, top);
        return sum;
    });
    const double et = std::exp(t);
    auto rhs = map_replicas(0, replicas, [&](std::uint64_t r) {
        const SpineRealization s = simulate_one_spine(t, spine_stream(seed, r));
        return et * f(s.population.height(s.marked[0]) - m, centered_top(s.population));
    });
    return compare("many-to-one " + f.name(), lhs, rhs, f.kind == SpineFunctional::Kind::one ? et : nan);
}

IdentityReport many_to_two_check(double t, std::uint64_t replicas, std::uint64_t seed) {
    if (replicas < 2) throw ValidationError("many-to-two check needs at least two replicas");
    SimConfig cfg;
    cfg.horizon = t;
    cfg.seed = seed;
    auto lhs = map_replicas(0, replicas, [&](std::uint64_t r) {
        SimConfig c = cfg;
        c.replica = r;
        const auto n = static_cast<double>(simulate_exact(c).leaf_count());
        return n * n;
    });
    const double e3t = std::exp(3.0 * t);
    auto rhs = map_replicas(0, replicas, [&](std::uint64_t r) {
        const double overlap = simulate_two_spine_overlap(t, spine_stream(seed, r));
        return e3t * std::exp(-(t - overlap));
    });
    return compare("many-to-two F=1", lhs, rhs, 2.0 * std::exp(2.0 * t) - std::exp(t));
}

// ---------------------------------------------------------------------------

BarrierEstimate estimate_barrier_probability(double x, double y, double t, bool decorated, std::uint64_t n,
                                             std::uint64_t key, const DecorationLaw* law) {
    if (n < 1) throw ValidationError("barrier probability needs n >= 1");
    if (!(t > 0.0)) throw ValidationError("barrier probability needs t > 0");
    BarrierEstimate est;
    est.x = x;
    est.y = y;
    est.t = t;
    est.decorated = decorated;
    est.n = n;
    est.oracle = decorated ? nan : (x <= 0.0 && y <= 0.0 ? 1.0 - std::exp(-2.0 * x * y / t) : 0.0);
    if (decorated && law == nullptr) throw ValidationError("decorated barrier probability needs a decoration law");
    auto hits = map_replicas(0, n, [&](std::uint64_t i) -> unsigned char {
        const std::uint64_t k = derive_key(key, i);
        if (!decorated) {
            // Maximum of a Brownian bridge x -> y over [0, t].
            const double e = -std::log(bits_to_open_unit(draw_bits(k, 0)));
            const double top = 0.5 * (x + y + std::sqrt((y - x) * (y - x) + 2.0 * t * e));
            return top <= 0.0;
        }
        return sample_decorated_walk(t, 0.0, k, *law, x, y).accepted;
    });
    std::uint64_t h = 0;
    for (unsigned char b : hits) h += b;
    est.estimate = static_cast<double>(h) / static_cast<double>(n);
    est.stderr = std::sqrt(est.estimate * (1.0 - est.estimate) / static_cast<double>(n));
    return est;
}

}  // namespace bbm
