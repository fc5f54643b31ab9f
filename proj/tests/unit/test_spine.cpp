#include <doctest.h>

#include <cmath>
#include <limits>

#include "bbm/centering.hpp"
#include "bbm/decoration.hpp"
#include "bbm/errors.hpp"
#include "bbm/rng.hpp"
#include "bbm/spine.hpp"
#include "bbm/stats.hpp"

using namespace bbm;

namespace {

const DecorationLaw& tiny_law() {
    static const DecorationLaw law = [] {
        DecorationLawConfig c;
        c.ages = {2.0, 3.0};
        c.samples = 200;
        return DecorationLaw::build(c, Execution::serial);
    }();
    return law;
}

}  // namespace

TEST_CASE("drift bounds") {
    CHECK(drift_middle(5.0, 0.0, 5.0) == 0.0);
    CHECK(drift_middle(2.0, 0.0, 9.0) == doctest::Approx(0.0).epsilon(1e-15));
    // r = 0, s = t/2, t = 10
    const double mid = drift_middle(0.0, 5.0, 10.0);
    CHECK(mid >= -1.0);
    CHECK(mid <= 1.0 + log_plus(5.0));
    const DriftBoundsReport rep = drift_bounds_check(default_drift_horizons());
    CHECK(rep.points > 0);
    CHECK(rep.violations == 0);
    CHECK(rep.min_lower_margin >= 0.0);
}

TEST_CASE("decoration law tables") {
    const DecorationLaw& law = tiny_law();
    CHECK(law.exact_age() == 2.0);
    double prev = -std::numeric_limits<double>::infinity();
    for (double u = 0.01; u < 1.0; u += 0.01) {
        const double q = law.quantile(3.0, u);
        CHECK(q >= prev);
        prev = q;
        const double mid = law.quantile(2.5, u);
        CHECK(mid >= std::min(law.quantile(2.0, u), q));
        CHECK(mid <= std::max(law.quantile(2.0, u), q));
        CHECK(law.quantile(10.0, u) == q);
    }
    const DecorationLaw copy = DecorationLaw::from_json(law.to_json());
    for (double u : {0.1, 0.5, 0.9}) CHECK(copy.quantile(2.7, u) == law.quantile(2.7, u));
    CHECK_THROWS_AS(law.quantile(1.0, 0.5), ValidationError);
}

TEST_CASE("decorated walk") {
    const DecorationLaw& law = tiny_law();
    const double t = 10.0;
    int accepted = 0;
    for (std::uint64_t k = 0; k < 200; ++k) {
        const DecoratedWalkPath p = sample_decorated_walk(t, 1.0, k, law, 0.0, 0.0, {false});
        double last = 0.0;
        for (const Decoration& d : p.decorations) {
            CHECK(d.time > last);
            CHECK(d.time < t);
            CHECK(d.walk == doctest::Approx(d.bridge - gamma_drift(t, d.time)));
            last = d.time;
        }
        CHECK(recheck_acceptance(p, law) == p.accepted);
        // the early-exit variant agrees on the verdict
        CHECK(sample_decorated_walk(t, 1.0, k, law).accepted == p.accepted);
        accepted += p.accepted;
    }
    CHECK(accepted > 0);
    CHECK(accepted < 200);
    CHECK_THROWS_AS(sample_decorated_walk(0.0, 0.0, 1, law), ValidationError);
    CHECK_THROWS_AS(sample_decorated_walk(5.0, 6.0, 1, law), ValidationError);
}

TEST_CASE("bridge marginal at the midpoint") {
    const DecorationLaw& law = tiny_law();
    const double t = 10.0, s = 5.0;
    const int n = 20000;
    std::vector<double> raw, xs;
    for (std::uint64_t k = 0; k < n; ++k) {
        const DecoratedWalkPath p = sample_decorated_walk(t, 0.0, k, law);
        raw.push_back(walk_between(p, s, 99));
        xs.push_back((raw.back() + gamma_drift(t, s)) / std::sqrt(s * (t - s) / t));
    }
    const MeanEstimate m = mean_estimate(raw);
    CHECK(std::abs(m.mean + gamma_drift(t, s)) <= 3.0 * m.stderr);
    const double var = m.stderr * m.stderr * n;
    CHECK(var == doctest::Approx(t / 4.0).epsilon(0.05));
    const double d = ks_statistic(xs, [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); });
    CHECK(d < ks_critical_95(n));
}

TEST_CASE("a walk with no branch times is accepted") {
    // no Poisson(2) point on [0, 0.001] for most keys
    const DecoratedWalkPath p = sample_decorated_walk(0.001, 0.0, 0, tiny_law());
    if (p.decorations.empty()) CHECK(p.accepted);
    int empty = 0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        const DecoratedWalkPath q = sample_decorated_walk(0.001, 0.0, k, tiny_law());
        if (q.decorations.empty()) {
            ++empty;
            CHECK(q.accepted);
        }
    }
    CHECK(empty > 90);
}

TEST_CASE("cluster samples") {
    const DecorationLaw& law = tiny_law();
    for (std::uint64_t k = 0; k < 20; ++k) {
        const ClusterSample c = sample_cluster_nu(16.0, 2.0, 100000, k, law);
        CHECK(c.config.top() == 0.0);
        CHECK(c.config.count_at(0.0) >= 1);
        CHECK(c.path.accepted);
        CHECK(c.attempts >= 1);
        CHECK_FALSE(c.short_horizon_warning);
    }
    CHECK(sample_cluster_nu(4.0, 2.0, 100000, 1, law).short_horizon_warning);
    CHECK_THROWS_AS(sample_cluster_nu(16.0, 2.0, 0, 1, law), ValidationError);
    int starved = 0;
    for (std::uint64_t k = 0; k < 30; ++k) {
        try {
            sample_cluster_nu(64.0, 2.0, 1, k, law);
        } catch (const StarvationError&) {
            ++starved;
        }
    }
    CHECK(starved > 0);
}

TEST_CASE("first passage below a level") {
    const DecorationLaw& law = tiny_law();
    const DecoratedWalkPath p = sample_decorated_walk(16.0, 0.0, 5, law, 0.0, 0.0, {false});
    const double tau = first_passage_below(p, 1.0);
    if (!std::isnan(tau)) {
        CHECK(tau > 0.0);
        CHECK(tau < 16.0);
        for (const Decoration& d : p.decorations)
            if (d.time < tau - 1e-9) CHECK(d.walk > -1.0);
    }
    CHECK(std::isnan(first_passage_below(p, 1e9)));
}

TEST_CASE("spine processes") {
    for (std::uint64_t k = 0; k < 50; ++k) {
        const SpineRealization one = simulate_one_spine(3.0, k);
        REQUIRE(one.marked.size() == 1);
        CHECK(one.population[one.marked[0]].alive);
        CHECK(one.overlap == 3.0);
        const double o = simulate_two_spine_overlap(3.0, k);
        CHECK(o >= 0.0);
        CHECK(o <= 3.0);
    }
    const SpineRealization two = simulate_spine(2.0, 2, 7);
    CHECK(two.marked.size() == 2);
    CHECK_THROWS_AS(simulate_spine(2.0, 3, 7), ValidationError);
}

TEST_CASE("many-to-one and many-to-two at small horizons") {
    const IdentityReport one = many_to_one_check(SpineFunctional::one(), 2.0, 4000, 3);
    CHECK(one.pass);
    CHECK(one.oracle == doctest::Approx(std::exp(2.0)));
    CHECK(many_to_one_check(SpineFunctional::above(0.0), 2.0, 4000, 3).pass);
    CHECK(many_to_one_check(SpineFunctional::above(0.0), 4.0, 4000, 5).pass);
    const IdentityReport two = many_to_two_check(1.5, 4000, 3);
    CHECK(two.pass);
    CHECK(two.oracle == doctest::Approx(2 * std::exp(3.0) - std::exp(1.5)));
}

TEST_CASE("undecorated barrier probability matches the reflection formula") {
    const BarrierEstimate e = estimate_barrier_probability(-1.0, -1.0, 50.0, false, 100000, 17);
    CHECK(e.oracle == doctest::Approx(0.0392105608));
    CHECK(std::abs(e.estimate - e.oracle) <= 4.0 * std::sqrt(e.oracle * (1 - e.oracle) / 100000.0));
    CHECK(estimate_barrier_probability(1.0, -1.0, 5.0, false, 100, 1).estimate == 0.0);
    CHECK_THROWS_AS(estimate_barrier_probability(-1.0, -1.0, 5.0, true, 10, 1), ValidationError);
}

TEST_CASE("decorated barrier probabilities are monotone under common randomness") {
    const DecorationLaw& law = tiny_law();
    double prev = -1.0;
    for (double x : {0.0, -1.0, -2.0, -3.0}) {
        const BarrierEstimate e = estimate_barrier_probability(x, x, 10.0, true, 1500, 4, &law);
        CHECK(e.estimate >= prev);
        prev = e.estimate;
    }
    CHECK(prev > 0.0);
}
