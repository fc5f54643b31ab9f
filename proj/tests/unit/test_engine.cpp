#include <doctest.h>

#include <cmath>
#include <set>
#include <tuple>

#include "bbm/engine.hpp"
#include "bbm/genealogy.hpp"
#include "bbm/stats.hpp"

using namespace bbm;

namespace {

SimConfig config(double t, Mode mode, std::uint64_t replica = 0, double slack = 8.0) {
    SimConfig c;
    c.horizon = t;
    c.mode = mode;
    c.slack = slack;
    c.seed = 2024;
    c.replica = replica;
    return c;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("zero horizon is a single particle at the origin") {
    const Population pop = simulate_exact(config(0.0, Mode::exact));
    REQUIRE(pop.size() == 1);
    CHECK(pop.leaf_count() == 1);
    CHECK(pop[0].end_pos == 0.0);
    CHECK(pop[0].end_time == 0.0);
    pop.validate();
}

TEST_CASE("same seed and replica give the same population") {
    const Population a = simulate_exact(config(6.0, Mode::exact, 3));
    const Population b = simulate_exact(config(6.0, Mode::exact, 3));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].parent == b[i].parent);
        CHECK(a[i].end_pos == b[i].end_pos);
        CHECK(a[i].end_time == b[i].end_time);
    }
    const Population c = simulate_exact(config(6.0, Mode::exact, 4));
    CHECK((c.size() != a.size() || c[c.size() - 1].end_pos != a[a.size() - 1].end_pos));
}

TEST_CASE("populations satisfy their structural invariants") {
    for (std::uint64_t r = 0; r < 20; ++r) {
        simulate_exact(config(5.0, Mode::exact, r)).validate();
        simulate_pruned(config(8.0, Mode::barrier, r, 3.0)).validate();
    }
}

TEST_CASE("pruned particles are a subset of the exact run") {
    for (std::uint64_t r = 0; r < 10; ++r) {
        const Population exact = simulate_exact(config(9.0, Mode::exact, r));
        const Population pruned = simulate_pruned(config(9.0, Mode::barrier, r, 4.0));
        std::set<std::tuple<double, double, double, double>> seen;
        for (const Particle& p : exact.particles()) seen.insert({p.birth_time, p.birth_pos, p.end_time, p.end_pos});
        CHECK(pruned.size() <= exact.size());
        for (const Particle& p : pruned.particles())
            CHECK(seen.count({p.birth_time, p.birth_pos, p.end_time, p.end_pos}) == 1);
    }
}

TEST_CASE("a distant barrier reproduces the exact run") {
    for (std::uint64_t r = 0; r < 20; ++r) {
        const Population exact = simulate_exact(config(6.0, Mode::exact, r));
        const Population pruned = simulate_pruned(config(6.0, Mode::barrier, r, 60.0));
        CHECK(pruned.pruned_count() == 0);
        CHECK(pruned.size() == exact.size());
        CHECK(gap12(pruned) == gap12(exact));
    }
}

TEST_CASE("increments are Gaussian with variance equal to the lifetime") {
    std::vector<double> z;
    for (std::uint64_t r = 0; z.size() < 20000; ++r) {
        const Population pop = simulate_exact(config(4.0, Mode::exact, r));
        for (const Particle& p : pop.particles())
            if (p.end_time > p.birth_time) z.push_back((p.end_pos - p.birth_pos) / std::sqrt(p.end_time - p.birth_time));
    }
    CHECK(ks_statistic(z, normal_cdf) < ks_critical_95(static_cast<double>(z.size())));
}

TEST_CASE("root lifetime is Exp(1) truncated at the horizon") {
    const double t = 2.0;
    std::vector<double> first;
    for (std::uint64_t r = 0; r < 5000; ++r) first.push_back(simulate_exact(config(t, Mode::exact, r))[0].end_time);
    auto cdf = [t](double x) { return x < 0 ? 0.0 : (x >= t ? 1.0 : 1.0 - std::exp(-x)); };
    auto cdf_left = [t](double x) { return x <= 0 ? 0.0 : (x > t ? 1.0 : 1.0 - std::exp(-x)); };
    CHECK(ks_statistic(first, cdf, cdf_left) < ks_critical_95(5000.0));
}

TEST_CASE("mean leaf count is e^t") {
    std::vector<double> n;
    for (std::uint64_t r = 0; r < 4000; ++r) n.push_back(static_cast<double>(simulate_exact(config(2.0, Mode::exact, r)).leaf_count()));
    const MeanEstimate m = mean_estimate(n);
    CHECK(std::abs(m.mean - std::exp(2.0)) < 3.0 * m.stderr);
}

TEST_CASE("second moment of the leaf count") {
    // E N_t^2 = 2 e^{2t} - e^t
    const double t = 1.5;
    std::vector<double> n2;
    for (std::uint64_t r = 0; r < 100000; ++r) {
        const double n = static_cast<double>(summarize_replica(config(t, Mode::exact, r), {}).leaf_count);
        n2.push_back(n * n);
    }
    const MeanEstimate m = mean_estimate(n2);
    CHECK(std::abs(m.mean - (2 * std::exp(2 * t) - std::exp(t))) < 3.0 * m.stderr);
}

TEST_CASE("derivative martingale means agree across horizons") {
    std::vector<MeanEstimate> est;
    for (double t : {2.0, 3.0, 4.0}) {
        std::vector<double> z;
        SimConfig c = config(t, Mode::exact);
        c.seed = 500 + static_cast<std::uint64_t>(t);
        for (std::uint64_t r = 0; r < 100000; ++r) {
            c.replica = r;
            z.push_back(summarize_replica(c, {}).martingale);
        }
        est.push_back(mean_estimate(z));
    }
    for (std::size_t i = 0; i < est.size(); ++i)
        for (std::size_t j = i + 1; j < est.size(); ++j)
            CHECK(std::abs(est[i].mean - est[j].mean) <
                  3.0 * std::sqrt(est[i].stderr * est[i].stderr + est[j].stderr * est[j].stderr));
    CHECK(summarize_replica(config(0.0, Mode::exact), {}).martingale == 0.0);
}

TEST_CASE("budget and validation errors") {
    CHECK_THROWS_AS(simulate_exact(config(30.0, Mode::exact)), BudgetError);
    SimConfig small = config(10.0, Mode::exact);
    small.max_particles = 100;
    CHECK_THROWS_AS(simulate_exact(small), BudgetError);
    CHECK_THROWS_AS(simulate_exact(config(-1.0, Mode::exact)), ValidationError);
    CHECK_THROWS_AS(simulate_pruned(config(5.0, Mode::barrier, 0, -2.0)), ValidationError);
    CHECK_THROWS_AS(simulate_exact(config(5.0, Mode::barrier)), ValidationError);
    CHECK_THROWS_AS(simulate_pruned(config(5.0, Mode::exact)), ValidationError);
}

TEST_CASE("streaming summary agrees with the stored population") {
    const std::vector<double> grid{1.0, 3.0};
    for (std::uint64_t r = 0; r < 10; ++r) {
        const SimConfig c = config(7.0, Mode::exact, r);
        const Population pop = simulate_exact(c);
        const ReplicaSummary s = summarize_replica(c, grid);
        CHECK(s.leaf_count == pop.leaf_count());
        CHECK(s.particle_count == pop.size());
        CHECK(s.gap12 == gap12(pop));
        CHECK(s.level_counts[0] == level_set_count(pop, 1.0));
        CHECK(s.level_counts[1] == level_set_count(pop, 3.0));
        CHECK(s.martingale == doctest::Approx(derivative_martingale(pop).value).epsilon(1e-12));
        CHECK(centered_max(c) == s.max_centered);
        CHECK(martingale_at(c, 7.0) == doctest::Approx(s.martingale).epsilon(1e-12));
    }
}

TEST_CASE("martingale at an intermediate time has mean zero") {
    // many-to-one: E Z_s = e^{-s} E[(sqrt2 s - B_s) e^{sqrt2 B_s}] = 0
    std::vector<double> z;
    for (std::uint64_t r = 0; r < 3000; ++r) z.push_back(martingale_at(config(8.0, Mode::exact, r), 3.0));
    const MeanEstimate m = mean_estimate(z);
    CHECK(std::abs(m.mean) < 3.0 * m.stderr);
    CHECK_THROWS_AS(martingale_at(config(8.0, Mode::exact), 9.0), ValidationError);
}

TEST_CASE("barrier shape") {
    SimConfig c = config(10.0, Mode::barrier, 0, 2.0);
    const Barrier b(c);
    CHECK(b.at(0.0) == doctest::Approx(-2.0));
    CHECK(b.at(10.0) == doctest::Approx(centering(10.0) - 2.0));
    c.concave_coeff = 1.0;
    const Barrier bc(c);
    CHECK(bc.at(5.0) == doctest::Approx(b.at(5.0) - std::pow(5.0, 0.25)));
    // a path ending below the barrier is always pruned
    CHECK(b.crossed(0.0, 0.0, 1.0, -5.0, 0.999));
    CHECK(!b.crossed(0.0, 5.0, 1.0, 5.0, 0.5));
}
