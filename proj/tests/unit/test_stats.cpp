#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "bbm/errors.hpp"
#include "bbm/stats.hpp"

using namespace bbm;

namespace {
const double inf = std::numeric_limits<double>::infinity();
}

TEST_CASE("weighted log-slope fit matches a generic least-squares solve") {
    // reference from numpy: normal equations with weights (v/se)^2
    const std::vector<FitPoint> pts{{1, 3.0, 0.3}, {2, 1.2, 0.1}, {3, 0.5, 0.06}, {4, 0.21, 0.02}, {5, 0.08, 0.01}};
    const SlopeFit f = fit_log_slope(pts);
    CHECK(f.slope == doctest::Approx(-0.8955220517599405).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(1.9885282830822026).epsilon(1e-12));
    CHECK(f.stderr == doctest::Approx(0.009559977193003815).epsilon(1e-9));
    const SlopeFit g = refit(f);
    CHECK(g.slope == f.slope);
    CHECK(g.stderr == f.stderr);

    // unknown errors fall back to ordinary least squares
    auto plain = pts;
    plain[2].stderr = 0.0;
    CHECK(fit_log_slope(plain).slope == doctest::Approx(-0.8991651171011354).epsilon(1e-12));
}

TEST_CASE("exact exponentials are recovered exactly") {
    std::vector<FitPoint> pts;
    for (double x = 0; x <= 4; x += 0.5) pts.push_back({x, 7.0 * std::exp(-std::sqrt(2.0) * x), 0.0});
    const SlopeFit f = fit_log_slope(pts);
    CHECK(f.slope == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-12));
    CHECK(std::exp(f.intercept) == doctest::Approx(7.0));
    CHECK(f.stderr < 1e-10);
}

TEST_CASE("jittered synthetic data") {
    std::mt19937_64 gen(21);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<FitPoint> pts;
    for (double x = 0; x <= 3; x += 0.1) pts.push_back({x, std::exp(2.0 * x + noise(gen)), 0.0});
    const SlopeFit f = fit_log_slope(pts);
    CHECK(std::abs(f.slope - 2.0) <= 3 * f.stderr);
    CHECK(f.stderr > 0.0);

    std::vector<FitPoint> gap;
    for (double x = 0.5; x <= 2.5; x += 0.25) gap.push_back({x, std::exp(-(2 + std::sqrt(2.0)) * x), 0.0});
    CHECK(fit_log_slope(gap).slope == doctest::Approx(-3.41421356).epsilon(1e-8));
}

TEST_CASE("fit input validation") {
    CHECK_THROWS_AS(fit_log_slope({{1, 1, 0}, {2, 2, 0}}), ValidationError);
    CHECK_THROWS_AS(fit_log_slope({{1, 1, 0}, {2, 0, 0}, {3, 1, 0}}), ValidationError);
    CHECK_THROWS_AS(fit_log_slope({{1, 1, 0}, {1, 2, 0}, {1, 3, 0}}), ValidationError);
}

TEST_CASE("one-sample KS against scipy") {
    CHECK(ks_statistic({0.05, 0.3, 0.31, 0.7, 0.9, 0.95}, [](double x) { return std::clamp(x, 0.0, 1.0); }) ==
          doctest::Approx(0.2333333333333334));
    CHECK(ks_statistic({0.2, 1.5, 0.7, 3.0, 0.01}, [](double x) { return x <= 0 ? 0.0 : 1.0 - std::exp(-x); }) ==
          doctest::Approx(0.21873075307798187));
    CHECK(ks_statistic({0.5}, [](double x) { return std::clamp(x, 0.0, 1.0); }) == doctest::Approx(0.5));
    CHECK(ks_critical_95(100) == doctest::Approx(0.136));
    CHECK(ks_critical_95(100, 100) == doctest::Approx(1.36 * std::sqrt(0.02)));
}

TEST_CASE("KS with an atom") {
    // X = min(E, 1): atom of mass e^-1 at 1
    auto cdf = [](double x) { return x < 0 ? 0.0 : x >= 1 ? 1.0 : 1.0 - std::exp(-x); };
    auto left = [](double x) { return x <= 0 ? 0.0 : x > 1 ? 1.0 : 1.0 - std::exp(-x); };
    std::mt19937_64 gen(3);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> xs;
    for (int i = 0; i < 20000; ++i) xs.push_back(std::min(e(gen), 1.0));
    CHECK(ks_statistic(xs, cdf, left) < ks_critical_95(20000));
    // ignoring the atom is detected
    auto wrong = [](double x) { return x <= 0 ? 0.0 : 1.0 - std::exp(-x); };
    CHECK(ks_statistic(xs, wrong, wrong) > 0.3);
}

TEST_CASE("two-sample KS") {
    CHECK(ks_two_sample({0.1, 0.5, 0.9, 1.3, 2.0, 2.2}, {0.4, 0.45, 1.0, 3.0}) == doctest::Approx(1.0 / 3.0));
    CHECK(ks_two_sample({1, 2, 3}, {1, 2, 3}) == 0.0);
    // infinities are legitimate values
    CHECK(ks_two_sample({inf, inf, 0.0, 1.0}, {0.0, 1.0, 2.0, 3.0}) == doctest::Approx(0.5));
    CHECK(ks_two_sample({-inf, 0.0}, {-inf, 0.0}) == 0.0);
}

TEST_CASE("uniformity test") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> xs;
    for (int i = 0; i < 5000; ++i) xs.push_back(u(gen));
    const UniformityReport r = ks_uniform(xs);
    CHECK(r.ks < 0.0192);
    CHECK(r.critical == doctest::Approx(1.36 / std::sqrt(5000.0)));
    std::uint64_t s = 0;
    for (auto b : r.bins) s += b;
    CHECK(s == 5000);
    CHECK(r.overflow_fraction == 0.0);

    std::vector<double> grid;
    for (int i = 1; i <= 200; ++i) grid.push_back((i - 0.5) / 200.0);
    CHECK(ks_uniform(grid).ks == doctest::Approx(0.5 / 200.0));

    const UniformityReport zeros = ks_uniform(std::vector<double>(100, 0.0));
    CHECK(zeros.ks == doctest::Approx(1.0));

    xs.resize(100);
    for (int i = 0; i < 25; ++i) xs.push_back(1.5);
    const UniformityReport over = ks_uniform(xs);
    CHECK(over.total == 125);
    CHECK(over.sample_count == 100);
    CHECK(over.overflow_fraction == doctest::Approx(0.2));

    CHECK_THROWS_AS(ks_uniform(std::vector<double>(10, 0.5)), ValidationError);
    CHECK_THROWS_AS(ks_uniform(std::vector<double>(30, -0.1)), ValidationError);
}

TEST_CASE("tail curves") {
    const auto c = tail_curve({1.0}, {0.5, 1.0, 1.5});
    REQUIRE(c.size() == 3);
    CHECK(c[0].survival == 1.0);
    CHECK(c[1].survival == 0.0);
    CHECK(c[2].hits == 0);
    const auto l = left_tail_curve({-2.0, 0.0, 1.0, -0.5}, {1.0, 3.0});
    CHECK(l[0].survival == 0.25);
    CHECK(l[1].survival == 0.0);

    std::mt19937_64 gen(5);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> xs;
    for (int i = 0; i < 200000; ++i) xs.push_back(e(gen));
    const SlopeFit f = fit_tail(tail_curve(xs, {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0}));
    CHECK(f.slope == doctest::Approx(-1.0).epsilon(0.03));
}

TEST_CASE("max tail check") {
    std::mt19937_64 gen(9);
    // asymmetric Laplace: rate sqrt2 on the right, 1 on the left
    std::exponential_distribution<double> right(std::sqrt(2.0)), left(1.0);
    std::bernoulli_distribution side(0.5);
    std::vector<double> g;
    for (int i = 0; i < 100000; ++i) g.push_back(side(gen) ? right(gen) : -left(gen));
    const MaxTailReport ok = max_tail_check(g, {1.0, 1.5, 2.0, 2.5, 3.0});
    CHECK(ok.right.slope == doctest::Approx(-std::sqrt(2.0)).epsilon(0.05));
    CHECK(ok.left.slope == doctest::Approx(-1.0).epsilon(0.05));
    CHECK(ok.right_ok);
    CHECK(ok.left_ok);

    // Laplace tails decay too slowly on the right
    std::vector<double> lap;
    for (int i = 0; i < 100000; ++i) lap.push_back(side(gen) ? left(gen) : -left(gen));
    const MaxTailReport bad = max_tail_check(lap, {1.0, 1.5, 2.0, 2.5, 3.0});
    CHECK_FALSE(bad.right_ok);
    CHECK(bad.left.slope == doctest::Approx(-1.0).epsilon(0.05));

    // standard Gumbel: right slope near -1, told apart from -sqrt2
    std::extreme_value_distribution<double> gumbel(0.0, 1.0);
    std::vector<double> gs;
    for (int i = 0; i < 100000; ++i) gs.push_back(gumbel(gen));
    const MaxTailReport gr = max_tail_check(gs, {1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0});
    CHECK(gr.right.slope == doctest::Approx(-1.0).epsilon(0.15));
    CHECK(gr.right.slope > -std::sqrt(2.0) + 5 * gr.right.stderr);
    CHECK_FALSE(gr.right_ok);

    CHECK_THROWS_AS(max_tail_check(std::vector<double>(100, 0.0), {1.0, 2.0, 3.0}), ValidationError);
}

TEST_CASE("prefactor discrimination") {
    const std::vector<double> v{2, 3, 4, 5, 6};
    const std::vector<double> z{0.5, 1.0, 2.0, -0.1};
    const double s2 = std::sqrt(2.0);
    std::vector<std::vector<double>> lin, flat;
    for (double zi : z) {
        std::vector<double> a, b;
        for (double vj : v) {
            a.push_back(zi * vj * std::exp(s2 * vj));
            b.push_back(zi * std::exp(s2 * vj));
        }
        lin.push_back(a);
        flat.push_back(b);
    }
    const PrefactorReport a = prefactor_discrimination(v, lin, z);
    CHECK(a.used == 3);
    CHECK(a.excluded == 1);
    CHECK(a.linear_flatter);
    CHECK(a.cv_linear < 0.05);
    const PrefactorReport b = prefactor_discrimination(v, flat, z);
    CHECK_FALSE(b.linear_flatter);
    CHECK(b.cv_ratio > 1.0);
}

TEST_CASE("means and dispersion") {
    const MeanEstimate m = mean_estimate({1, 2, 3, 4});
    CHECK(m.mean == 2.5);
    CHECK(m.stderr == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(m.n == 4);
    CHECK(coefficient_of_variation({1, 2, 3, 4}) == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.5));
}

TEST_CASE("second-moment dominance") {
    std::vector<double> shape, se;
    for (double v = 0; v <= 5; v += 0.5) {
        shape.push_back((v + 1) * std::exp(2 * std::sqrt(2.0) * v));
        se.push_back(0.0);
    }
    std::vector<double> scaled;
    for (double s : shape) scaled.push_back(3.0 * s);
    const DominanceReport ok = dominance_check(scaled, se, shape);
    CHECK(ok.pass);
    CHECK(ok.c == doctest::Approx(3.0));

    std::vector<double> faster;
    for (std::size_t i = 0; i < shape.size(); ++i) faster.push_back(shape[i] * std::exp(0.5 * i));
    CHECK_FALSE(dominance_check(faster, se, shape).pass);
}
