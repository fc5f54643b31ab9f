#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "bbm/centering.hpp"
#include "bbm/engine.hpp"
#include "bbm/errors.hpp"
#include "bbm/genealogy.hpp"

using namespace bbm;

namespace {

// root branches at s; two leaves at a and b
Population cherry(double s, double t, double x, double a, double b) {
    std::vector<Particle> ps{{-1, 0.0, 0.0, s, x, false}, {0, s, x, t, a, true}, {0, s, x, t, b, true}};
    return Population(t, Mode::exact, 0.0, 0, ps);
}

Population sample(double t, std::uint64_t replica) {
    SimConfig c;
    c.horizon = t;
    c.seed = 77;
    c.replica = replica;
    return simulate_exact(c);
}

// distance by walking both ancestor chains
double naive_distance(const Population& pop, std::size_t x, std::size_t y) {
    if (x == y) return 0.0;
    std::vector<std::int64_t> ax;
    for (std::int64_t a = static_cast<std::int64_t>(x); a >= 0; a = pop[a].parent) ax.push_back(a);
    for (std::int64_t b = static_cast<std::int64_t>(y); b >= 0; b = pop[b].parent)
        if (std::find(ax.begin(), ax.end(), b) != ax.end()) return pop.horizon() - pop[b].end_time;
    return pop.horizon();
}

// maximal in the open ball, ties to the lowest id
std::vector<std::uint32_t> naive_local_maxima(const Population& pop, double r) {
    std::vector<std::uint32_t> out;
    for (std::uint32_t x : pop.leaves()) {
        bool ok = true;
        for (std::uint32_t y : pop.leaves()) {
            if (y == x || naive_distance(pop, x, y) >= r) continue;
            if (pop.height(y) > pop.height(x) || (pop.height(y) == pop.height(x) && y < x)) ok = false;
        }
        if (ok) out.push_back(x);
    }
    return out;
}

}  // namespace

TEST_CASE("point configurations merge and count") {
    const auto pc = PointConfiguration::from_heights({0.0, -1.0, -1.0, 2.0, -3.0}, Reference::centered);
    CHECK(pc.total() == 5);
    CHECK(pc.atoms().size() == 4);
    CHECK(pc.top() == 2.0);
    CHECK(pc.count_at(-1.0) == 2);
    CHECK(pc.count_closed(-1.0, 0.0) == 3);
    CHECK(pc.count_half_open(-1.0, 0.0) == 2);
    CHECK(pc.count_at_least(-1.0) == 4);
    CHECK(pc.count_at_least(5.0) == 0);
    PointConfiguration other(Reference::centered);
    other.merge_shifted(pc, 1.0);
    CHECK(other.top() == 3.0);
    CHECK(other.total() == 5);
    CHECK_THROWS_AS(PointConfiguration().top(), ValidationError);
}

TEST_CASE("distance of two children of a root branching at s") {
    const Population pop = cherry(1.5, 4.0, 0.3, 1.0, -0.5);
    CHECK(genealogical_distance(pop, 1, 2) == doctest::Approx(2.5));
    CHECK(genealogical_distance(pop, 1, 1) == 0.0);
    CHECK_THROWS_AS(genealogical_distance(pop, 0, 1), ValidationError);
}

TEST_CASE("distance agrees with the ancestor-walk oracle") {
    const Population pop = sample(6.0, 1);
    const GenealogyIndex index(pop);
    std::mt19937_64 gen(5);
    const auto leaves = pop.leaves();
    std::uniform_int_distribution<std::size_t> pick(0, leaves.size() - 1);
    for (int k = 0; k < 2000; ++k) {
        const auto x = leaves[pick(gen)], y = leaves[pick(gen)];
        CHECK(index.distance(x, y) == naive_distance(pop, x, y));
        CHECK(index.distance(x, y) == index.distance(y, x));
    }
}

TEST_CASE("local maxima agree with the brute-force definition") {
    for (std::uint64_t rep = 0; rep < 4; ++rep) {
        const Population pop = sample(5.0, rep);
        for (double r : {0.0, 0.7, 1.5, std::sqrt(5.0), 4.9, 5.0}) CHECK(local_maxima(pop, r) == naive_local_maxima(pop, r));
    }
}

TEST_CASE("local maxima at the extreme radii") {
    const Population pop = sample(6.0, 2);
    const auto all = local_maxima(pop, 0.0);
    CHECK(all.size() == pop.leaf_count());
    const auto top = local_maxima(pop, 6.0);
    REQUIRE(top.size() == 1);
    for (std::uint32_t x : pop.leaves()) CHECK(pop.height(x) <= pop.height(top[0]));
    CHECK_THROWS_AS(local_maxima(pop, 7.0), ValidationError);
}

TEST_CASE("balls around local maxima cover every leaf") {
    const double t = 8.0, r = std::sqrt(8.0);
    const Population pop = sample(t, 3);
    const GenealogyIndex index(pop);
    const auto maxima = local_maxima(index, r);
    for (std::uint32_t x : pop.leaves()) {
        const bool covered =
            std::any_of(maxima.begin(), maxima.end(), [&](std::uint32_t m) { return index.distance(x, m) < r; });
        CHECK(covered);
    }
}

TEST_CASE("clusters") {
    const Population pop = sample(5.0, 4);
    const GenealogyIndex index(pop);
    // r = t: whole population shifted
    const std::uint32_t x = pop.leaves()[pop.leaf_count() / 2];
    const PointConfiguration all = cluster(index, x, 5.0);
    CHECK(all.total() == pop.leaf_count());
    std::vector<double> shifted;
    for (std::uint32_t y : pop.leaves()) shifted.push_back(pop.height(y) - pop.height(x));
    CHECK(all == PointConfiguration::from_heights(shifted, Reference::relative_to_local_max));
    for (std::uint32_t m : local_maxima(index, 1.0)) {
        const PointConfiguration c = cluster(index, m, 1.0);
        CHECK(c.top() == 0.0);
        CHECK(c.count_at(0.0) >= 1);
    }
}

TEST_CASE("extremal and star processes") {
    const Population pop = sample(6.0, 5);
    const PointConfiguration e = extremal_process(pop);
    CHECK(e.total() == pop.leaf_count());
    CHECK(e.top() == doctest::Approx(pop.height(local_maxima(pop, 6.0)[0]) - centering(6.0)));
    const PointConfiguration s = star_process(pop, 1.0);
    CHECK(s.total() == local_maxima(pop, 1.0).size());
    CHECK(s.top() == e.top());
    for (double v : {0.5, 1.0, 2.0}) {
        CHECK(level_set_count(pop, v) == e.count_at_least(-v));
        CHECK(s.count_at_least(-v) <= e.count_at_least(-v));
    }
    const LabeledExtremalProcess lep = labeled_extremal_process(GenealogyIndex(pop), 1.0, INFINITY);
    CHECK(lep.entries.size() == s.total());
    std::uint64_t total = 0;
    for (const auto& en : lep.entries) total += en.cluster.total();
    CHECK(total == pop.leaf_count());
}

TEST_CASE("carrier statistic") {
    const double t = 8.0, v = 2.0, r = 2.0;
    const Population pop = sample(t, 6);
    const GenealogyIndex index(pop);
    const auto c = carrier_heights(index, v, r);
    CHECK(c.size() == level_set_count(pop, v));
    const double top = extremal_process(pop).top();
    for (double x : c) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0 + top / v + 1e-12);
    }
    // leaves that are local maxima carry themselves
    const double m = centering(t);
    std::size_t k = 0;
    const auto maxima = local_maxima(index, r);
    for (std::uint32_t x : pop.leaves()) {
        if (pop.height(x) - m < -v) continue;
        if (std::find(maxima.begin(), maxima.end(), x) != maxima.end())
            CHECK(c[k] == doctest::Approx((pop.height(x) - m + v) / v));
        ++k;
    }
    CHECK_THROWS_AS(carrier_heights(pop, 0.0, r), ValidationError);
    CHECK_THROWS_AS(carrier_heights(pop, v, t), ValidationError);
    CHECK(alpha_ratio(index, v, 1.0, r) == 1.0);
}

TEST_CASE("gap12 and the derivative martingale") {
    const Population pop = cherry(1.0, 2.0, 0.0, 1.0, -0.5);
    CHECK(gap12(pop) == doctest::Approx(1.5));
    const double s2 = std::sqrt(2.0);
    const double z = (2 * s2 - 1.0) * std::exp(s2 * 1.0 - 4.0) + (2 * s2 + 0.5) * std::exp(-s2 * 0.5 - 4.0);
    CHECK(derivative_martingale(pop).value == doctest::Approx(z));
    // a particle above sqrt2 t contributes a negative term
    const Population high = cherry(0.5, 1.0, 0.0, 3.0, 2.9);
    CHECK(derivative_martingale(high).value < 0.0);
    CHECK_THROWS_AS(gap12(simulate_exact(SimConfig{})), ValidationError);

    SimConfig c;
    c.horizon = 8.0;
    c.mode = Mode::barrier;
    const Population pruned = simulate_pruned(c);
    CHECK_THROWS_AS(derivative_martingale(pruned), ValidationError);
    CHECK(derivative_martingale(pruned, true).biased);
}

TEST_CASE("separation count") {
    const Population pop = sample(8.0, 7);
    const GenealogyIndex index(pop);
    const SeparationCount s = separation_count(index, 2.0, 1.0);
    const auto n = level_set_count(pop, 2.0);
    CHECK(s.pairs == n * (n - 1) / 2);
    CHECK(s.inside <= s.pairs);
}

TEST_CASE("covariance check at small horizon") {
    const CovarianceReport rep = pairwise_covariance_check(2.0, 11, 2000, 10, {0.0, 0.5, 1.0, 1.5, 2.0});
    CHECK(rep.pass);
    CHECK(rep.independent.within(3.0));
    CHECK_THROWS_AS(pairwise_covariance_check(2.0, 11, 10, 10, {0.0, 2.0}), ValidationError);
}

TEST_CASE("an isolated leaf is its own cluster") {
    // siblings split at s = 1, so they are 1 apart at t = 2
    const Population pop = cherry(1.0, 2.0, 0.0, 0.3, -0.4);
    const PointConfiguration c = cluster(pop, 1, 0.5);
    CHECK(c.total() == 1);
    CHECK(c.count_at(0.0) == 1);
    CHECK(local_maxima(pop, 0.5).size() == 2);
}

TEST_CASE("degenerate processes") {
    const Population root = simulate_exact(SimConfig{});
    const PointConfiguration e = extremal_process(root);
    CHECK(e.total() == 1);
    CHECK(e.count_at(0.0) == 1);

    const Population pop = sample(6.0, 8);
    const PointConfiguration all = extremal_process(pop);
    CHECK(level_set_count(pop, -all.top() - 0.01) == 0);
    // star atoms are a sub-multiset of the extremal atoms
    const PointConfiguration star = star_process(pop, 1.5);
    for (const Atom& a : star.atoms()) CHECK(all.count_at(a.height) >= a.multiplicity);
}

TEST_CASE("covariance at the spec distances") {
    const CovarianceReport rep = pairwise_covariance_check(3.0, 12, 3000, 20, {0.0, 0.05, 0.9, 1.1, 3.0});
    CHECK(rep.pass);
    CHECK(rep.bins[0].expected == doctest::Approx(3.0).epsilon(0.02));
    CHECK(rep.bins[0].within(3.0));
    CHECK(rep.bins[2].expected == doctest::Approx(2.0).epsilon(0.02));
    CHECK(rep.bins[2].within(3.0));
    CHECK(rep.independent.within(3.0));
}
