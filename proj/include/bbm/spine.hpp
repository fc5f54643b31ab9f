#pragma once

// Spinal decomposition tools: the decorated random-walk-like process
// (W-hat, N, H), rejection sampling of the cluster law nu through the event
// A_t, one- and two-spine BBMs for the many-to-one and many-to-two identities,
// and barrier (stay-below) probabilities of the decorated bridge.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bbm/decoration.hpp"
#include "bbm/point_config.hpp"
#include "bbm/population.hpp"

namespace bbm {

// ---------------------------------------------------------------------------
// Drift bounds

/// log+(r+s) - ((t-(r+s))/(t-r) log+ r + s/(t-r) log+ t).  Zero when r = t.
double drift_middle(double r, double s, double t);

struct DriftBoundsReport {
    std::uint64_t points = 0;
    std::uint64_t violations = 0;
    double min_lower_margin = 0.0;  ///< min over the grid of (middle + 1)
    double min_upper_margin = 0.0;  ///< min over the grid of (1 + log+(s ^ (t-r-s)) - middle)
    double worst_r = 0.0, worst_s = 0.0, worst_t = 0.0;
};

/// Checks -1 <= middle <= 1 + log+(min(s, t-r-s)) for each t of `horizons`
/// on a (fractions x fractions) grid of 0 <= r <= r+s <= t.
DriftBoundsReport drift_bounds_check(const std::vector<double>& horizons, std::size_t fractions = 41);

/// Log-spaced horizons from 1 to 1000.
std::vector<double> default_drift_horizons(std::size_t count = 61);

// ---------------------------------------------------------------------------
// Decorated walk

enum class DecorationStatus : std::uint8_t { unevaluated, below, above };

struct Decoration {
    double time = 0.0;         ///< sigma_k, also the age of the decoration
    double bridge = 0.0;       ///< W_{sigma_k} of the 0 -> 0 bridge, before shifts
    double walk = 0.0;         ///< W-hat_{t, sigma_k} including the endpoint shift
    std::uint64_t key = 0;     ///< key of the decoration BBM
    double max = 0.0;          ///< centered max (NaN unless computed)
    DecorationStatus status = DecorationStatus::unevaluated;
};

struct DecoratedWalkPath {
    double horizon = 0.0;
    double radius = 0.0;
    double start = 0.0;  ///< W-hat_{t,0}
    double end = 0.0;    ///< W-hat_{t,t}
    std::uint64_t key = 0;
    std::vector<Decoration> decorations;  ///< increasing times
    bool accepted = false;
};

struct WalkOptions {
    bool early_exit = true;  ///< stop evaluating decorations at the first violation
};

/// Draws the Poisson(2) times and the bridge values, and evaluates A_t.
/// Ages below max(r, law.exact_age()) are simulated exactly.
DecoratedWalkPath sample_decorated_walk(double t, double r, std::uint64_t key, const DecorationLaw& law,
                                        double start = 0.0, double end = 0.0, WalkOptions opts = {});

/// Re-evaluates A_t from scratch using only the stored keys; no early exit.
bool recheck_acceptance(const DecoratedWalkPath& path, const DecorationLaw& law);

/// W-hat at an arbitrary time, consistent with the stored values (bridge
/// point sampled between neighbouring decorations from a keyed stream).
double walk_between(const DecoratedWalkPath& path, double s, std::uint64_t salt);

// ---------------------------------------------------------------------------
// Cluster law

struct ClusterSample {
    PointConfiguration config{Reference::relative_to_local_max};
    DecoratedWalkPath path;
    double t_used = 0.0;
    double r_used = 0.0;
    std::uint64_t attempts = 0;
    bool short_horizon_warning = false;  ///< t < 4 r
};

/// Rejection-samples A_t and returns the cluster: the spine atom at 0 plus
/// every decoration with sigma_k <= r, shifted by W-hat.  Throws
/// StarvationError after max_attempts failures.
ClusterSample sample_cluster_nu(double t, double r, std::uint64_t max_attempts, std::uint64_t key,
                                const DecorationLaw& law);

/// First time W-hat falls to -w or below, refined by bisection between the
/// decoration times where the crossing happens.  NaN if it never does at
/// the sampled times.
double first_passage_below(const DecoratedWalkPath& path, double w, int refinements = 12);

struct GapPoint {
    double w = 0.0;
    double probability = 0.0;
    double stderr = 0.0;
    std::uint64_t hits = 0;
};

struct GapProfile {
    std::vector<GapPoint> curve;
    std::uint64_t samples = 0;
    std::uint64_t attempts = 0;
    double dip_w = 0.0;
    std::vector<double> dip_times;  ///< first-passage times among no-point samples at dip_w
    double dip_median() const;
};

/// P(C([-w, 0)) = 0) over `samples` clusters, plus the dip-time diagnostic at dip_w.
GapProfile cluster_gap_profile(const std::vector<ClusterSample>& samples, const std::vector<double>& w_grid,
                               double dip_w);

// ---------------------------------------------------------------------------
// Spine processes

struct SpineRealization {
    Population population;
    std::vector<std::uint32_t> marked;        ///< leaf ids carrying each mark
    std::vector<double> spine_lifetimes;      ///< full lifetimes of marked particles
    std::vector<double> offspine_lifetimes;   ///< full lifetimes of unmarked particles
    double overlap = 0.0;                     ///< t - d between the marks (t with one mark)
};

/// BBM with `marks` (1 or 2) spine particles: a particle carrying m marks
/// branches at rate 2^m and each mark moves to a uniformly chosen child.
SpineRealization simulate_spine(double t, unsigned marks, std::uint64_t key,
                                std::uint64_t max_particles = 50'000'000);

SpineRealization simulate_one_spine(double t, std::uint64_t key);
/// t - d(X_t(1), X_t(2)) for the two-spine process.
double simulate_two_spine_overlap(double t, std::uint64_t key);

/// Test functionals for the many-to-one identity.
struct SpineFunctional {
    enum class Kind : std::uint8_t { one, above, window } kind = Kind::one;
    double a = 0.0, b = 0.0, u = 0.0;
    double operator()(double centered_height, double centered_max) const;
    std::string name() const;

    static SpineFunctional one() { return {}; }
    static SpineFunctional above(double a) { return {Kind::above, a, 0.0, 0.0}; }
    static SpineFunctional window(double a, double b, double u) { return {Kind::window, a, b, u}; }
};

struct IdentityReport {
    std::string name;
    double lhs = 0.0, lhs_se = 0.0;
    double rhs = 0.0, rhs_se = 0.0;
    double z = 0.0;  ///< |lhs - rhs| / combined SE
    bool pass = false;
    double oracle = 0.0;  ///< closed form when one exists (NaN otherwise)
};

/// E sum_x F(x) from exact populations against e^t E~ F(X_t) from spine runs.
IdentityReport many_to_one_check(const SpineFunctional& f, double t, std::uint64_t replicas, std::uint64_t seed);

/// E |L_t|^2 from exact populations against e^{3t} E~(2) e^{-d} from two-spine runs.
IdentityReport many_to_two_check(double t, std::uint64_t replicas, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Barrier probabilities

struct BarrierEstimate {
    double x = 0.0, y = 0.0, t = 0.0;
    bool decorated = false;
    std::uint64_t n = 0;
    double estimate = 0.0;
    double stderr = 0.0;
    double oracle = 0.0;  ///< 1 - e^{-2xy/t} for the undecorated bridge, NaN otherwise
};

/// Undecorated: Brownian bridge x -> y on [0, t] stays <= 0, sampled through
/// the exact law of its maximum.  Decorated: A_t for the walk from x to y.
/// Sample i uses stream derive_key(key, i) whatever x and y are, so curves
/// over a grid of endpoints share their randomness.
BarrierEstimate estimate_barrier_probability(double x, double y, double t, bool decorated, std::uint64_t n,
                                             std::uint64_t key, const DecorationLaw* law = nullptr);

}  // namespace bbm
