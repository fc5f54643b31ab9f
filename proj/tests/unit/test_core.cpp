#include <doctest.h>

#include <cmath>
#include <set>

#include "bbm/centering.hpp"
#include "bbm/errors.hpp"
#include "bbm/rng.hpp"

using namespace bbm;

TEST_CASE("keyed draws are deterministic and distinct") {
    CHECK(draw_bits(42, 0) == draw_bits(42, 0));
    CHECK(draw_bits(42, 0) != draw_bits(42, 1));
    CHECK(derive_key(7, 1) != derive_key(7, 2));
    CHECK(replica_key(1, 0) != replica_key(2, 0));
    std::set<std::uint64_t> keys;
    for (std::uint64_t r = 0; r < 10000; ++r) keys.insert(replica_key(5, r));
    CHECK(keys.size() == 10000);
}

TEST_CASE("open unit uniforms never hit the endpoints") {
    CHECK(bits_to_open_unit(0) > 0.0);
    CHECK(bits_to_open_unit(~0ULL) < 1.0);
    CHECK(std::isfinite(normal_quantile(bits_to_open_unit(~0ULL))));
    CHECK(std::isfinite(normal_quantile(bits_to_open_unit(0))));
    CHECK(bits_to_open_unit(0) > std::exp(-40.0));
    RngStream s(123);
    double sum = 0;
    for (int i = 0; i < 100000; ++i) sum += s.uniform();
    CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal quantile against reference values") {
    // scipy.stats.norm.ppf
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-13));
    CHECK(normal_quantile(0.3) == doctest::Approx(-0.5244005127080409).epsilon(1e-13));
    CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-12));
    CHECK(normal_quantile(0.5) == 0.0);
    for (double p : {0.01, 0.2, 0.4, 0.49}) CHECK(normal_quantile(p) == doctest::Approx(-normal_quantile(1 - p)));
}

TEST_CASE("stream forks are reproducible") {
    RngStream a(9), b(9);
    for (int i = 0; i < 5; ++i) CHECK(a.next_bits() == b.next_bits());
    CHECK(a.fork(3).next_bits() == b.fork(3).next_bits());
    CHECK(a.fork(3).next_bits() != a.fork(4).next_bits());
}

TEST_CASE("centering") {
    CHECK(centering(0.0) == 0.0);
    CHECK(centering(1.0) == doctest::Approx(std::sqrt(2.0)));
    // 30-digit evaluation with mpmath
    CHECK(centering(10.0) == doctest::Approx(11.6998753234582302).epsilon(1e-12));
    CHECK(centering(0.5) == doctest::Approx(0.5 * std::sqrt(2.0)));
}

TEST_CASE("gamma drift") {
    CHECK(gamma_drift(10.0, 0.0) == 0.0);
    CHECK(gamma_drift(10.0, 10.0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(gamma_drift(1.0, 1.0) == 0.0);
    CHECK(gamma_drift(100.0, 10.0) == doctest::Approx(1.9538082402181762).epsilon(1e-12));
    // (s/t) m(t) - m(s)
    CHECK(gamma_drift(50.0, 7.0) == doctest::Approx(7.0 / 50.0 * centering(50.0) - centering(7.0)).epsilon(1e-12));
    CHECK_THROWS_AS(gamma_drift(10.0, 11.0), ValidationError);
    CHECK_THROWS_AS(gamma_drift(10.0, -1.0), ValidationError);
}
