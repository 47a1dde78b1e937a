#include <doctest.h>

#include <cmath>

#include "abrw/rng.hpp"
#include "abrw/stats.hpp"

using namespace abrw;

TEST_CASE("summary mean and standard error") {
    Summary s = summarize({1, 2, 3, 4});
    CHECK(s.mean == doctest::Approx(2.5));
    // sd = sqrt(5/3), se = sd/2
    CHECK(s.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(summarize({}).n == 0);
}

TEST_CASE("variance estimate recovers known variance") {
    CounterRng rng(99);
    std::vector<double> xs(200000);
    for (auto& x : xs) x = rng.uniform();  // Var = 1/12
    VarianceEstimate v = variance_estimate(xs);
    CHECK(v.variance == doctest::Approx(1.0 / 12.0).epsilon(0.02));
    CHECK(std::abs(v.variance - 1.0 / 12.0) < 4 * v.se);
}

TEST_CASE("percentile interpolation") {
    std::vector<double> xs{4, 1, 3, 2};
    CHECK(percentile(xs, 0.0) == doctest::Approx(1));
    CHECK(percentile(xs, 1.0) == doctest::Approx(4));
    CHECK(percentile(xs, 0.5) == doctest::Approx(2.5));
}

TEST_CASE("normal cdf reference values") {
    CHECK(normal_cdf(0) == doctest::Approx(0.5));
    CHECK(normal_cdf(1.959963985) == doctest::Approx(0.975).epsilon(1e-6));
    CHECK(normal_cdf(-1.959963985) == doctest::Approx(0.025).epsilon(1e-4));
}

TEST_CASE("kolmogorov tail reference values") {
    // Q(0.8276) ~ 0.5, Q(1.2238) ~ 0.1, Q(1.6276) ~ 0.01
    CHECK(kolmogorov_tail(0.82757) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(kolmogorov_tail(1.22385) == doctest::Approx(0.1).epsilon(1e-3));
    CHECK(kolmogorov_tail(1.62762) == doctest::Approx(0.01).epsilon(1e-2));
    CHECK(kolmogorov_tail(0.0) == 1.0);
}

TEST_CASE("one-sample KS accepts normal data and rejects uniform data") {
    CounterRng rng(4242);
    std::vector<double> normal(20000);
    for (auto& x : normal) {
        // Box-Muller from the counter stream
        double u1 = rng.uniform(), u2 = rng.uniform();
        x = std::sqrt(-2 * std::log(u1)) * std::cos(2 * M_PI * u2);
    }
    CHECK(ks_test_standard_normal(normal).p_value > 0.01);

    std::vector<double> uniform(20000);
    for (auto& x : uniform) x = rng.uniform();
    CHECK(ks_test_standard_normal(uniform).p_value < 1e-6);
}

TEST_CASE("two-sample KS accepts same law and rejects shifted law") {
    CounterRng rng(777);
    auto draw = [&](double shift) {
        std::vector<double> xs(5000);
        for (auto& x : xs) x = rng.uniform() + shift;
        return xs;
    };
    CHECK(ks_two_sample(draw(0.0), draw(0.0)).p_value > 0.01);
    CHECK(ks_two_sample(draw(0.0), draw(0.15)).p_value < 1e-6);
}

TEST_CASE("skewness of symmetric and asymmetric samples") {
    CounterRng rng(31337);
    std::vector<double> sym(50000), asym(50000);
    for (size_t i = 0; i < sym.size(); ++i) {
        sym[i] = rng.uniform() < 0.5 ? 1.0 : -1.0;
        double u = rng.uniform();
        asym[i] = -std::log(u);  // exponential, skewness 2
    }
    CHECK(std::abs(skewness(sym).value) < 3 * skewness(sym).se);
    CHECK(skewness(asym).value == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("counter rng is a pure function of key and counter") {
    CHECK(counter_u64(12, 34) == counter_u64(12, 34));
    CHECK(counter_u64(12, 34) != counter_u64(12, 35));
    CHECK(counter_u64(12, 34) != counter_u64(13, 34));
    CounterRng a(5), b(5);
    for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());

    // uniforms live strictly inside (0,1)
    CounterRng rng(2024);
    for (int i = 0; i < 100000; ++i) {
        double u = rng.uniform();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("derived keys differ across indices") {
    CHECK(derive_key(1, 0) != derive_key(1, 1));
    CHECK(derive_key(1, 0) != derive_key(2, 0));
    CHECK(derive_key(1, 7) == derive_key(1, 7));
}

TEST_CASE("counter rng moments") {
    CounterRng rng(986);
    double sum = 0, sq = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        sum += u;
        sq += u * u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.005));
    CHECK(sq / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));

    double esum = 0;
    for (int i = 0; i < n; ++i) esum += rng.exponential();
    CHECK(esum / n == doctest::Approx(1.0).epsilon(0.01));
}
