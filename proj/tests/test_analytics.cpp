#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "abrw/analytics.hpp"
#include "helpers.hpp"

using namespace abrw;

namespace {

// test-only modified Bessel I_n by power series; independent of everything
// in the library
double bessel_i(int n, double x) {
    double half = x / 2.0;
    double term = 1.0;
    for (int i = 1; i <= n; ++i) term *= half / i;
    double sum = term;
    for (int k = 1; k < 200; ++k) {
        term *= half * half / (double(k) * double(k + n));
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

// test-only adaptive Simpson quadrature
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double eps, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double whole = (b - a) / 6.0 * (fa + 4 * fm + fb);
    double left = (m - a) / 6.0 * (fa + 4 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15 * eps)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, eps / 2, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, eps / 2, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double eps = 1e-12) {
    double m = 0.5 * (a + b);
    return adaptive_simpson(f, a, b, f(a), f(m), f(b), eps, 40);
}

}  // namespace

TEST_CASE("pz_table matches the Bessel closed form for nn1") {
    OffspringLaw law = testutil::nn1();
    PzTable table = pz_table(law, 1.0, 10, 1e-10);
    // p_z(1) = e^{-2} I_z(2): frozen from the series oracle
    CHECK(table.at1(0) == doctest::Approx(0.30850832255367104).epsilon(1e-9));
    CHECK(table.at1(1) == doctest::Approx(0.21526928924893766).epsilon(1e-9));
    CHECK(table.at1(-1) == doctest::Approx(0.21526928924893766).epsilon(1e-9));
    CHECK(table.at1(2) == doctest::Approx(0.09323903330473338).epsilon(1e-9));
    // live series oracle agreement across the window
    for (int z = -6; z <= 6; ++z)
        CHECK(table.at1(z) ==
              doctest::Approx(std::exp(-2.0) * bessel_i(std::abs(z), 2.0)).epsilon(1e-8));
    // quadrature oracle for p_0
    double quad = integrate([](double u) { return std::exp(-(2.0 - 2.0 * std::cos(u))); }, -M_PI,
                            M_PI) /
                  (2 * M_PI);
    CHECK(table.at1(0) == doctest::Approx(quad).epsilon(1e-10));
}

TEST_CASE("pz_table at t=0 is a point mass") {
    OffspringLaw law = testutil::nn1();
    PzTable table = pz_table(law, 0.0, 5, 1e-12);
    CHECK(table.at1(0) == doctest::Approx(1.0).epsilon(1e-12));
    for (int z = 1; z <= 5; ++z) {
        CHECK(std::abs(table.at1(z)) < 1e-12);
        CHECK(std::abs(table.at1(-z)) < 1e-12);
    }
}

TEST_CASE("pz_table death mode uses the substituted transform") {
    OffspringLaw law = testutil::death1();
    PzTable table = pz_table(law, 1.0, 10, 1e-10);
    // gap(u) = 1.1 (1 - cos u), so p_z(t) = e^{-1.1 t} I_z(1.1 t)
    CHECK(table.at1(0) == doctest::Approx(0.4414403775096749).epsilon(1e-9));
    for (int z = -4; z <= 4; ++z)
        CHECK(table.at1(z) ==
              doctest::Approx(std::exp(-1.1) * bessel_i(std::abs(z), 1.1)).epsilon(1e-8));
}

TEST_CASE("pz_table window invariants") {
    for (const auto* name : {"nn1", "death1"}) {
        OffspringLaw law = load_law_file(testutil::config_dir() + "/laws/" + name + ".json");
        for (double t : {0.5, 1.0, 2.0}) {
            PzTable table = pz_table(law, t, 30, 1e-10);
            CHECK(table.sum_window() == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(table.sup() <= 1.0 + 1e-12);
            CHECK(table.sum_sq() <= table.sup() + 1e-12);
            for (double v : table.values) CHECK(v >= -table.wrap_error - 1e-15);
        }
    }
}

TEST_CASE("d=2 table is a product of 1-d kernels for the separable law") {
    OffspringLaw law = testutil::nn2();
    PzTable table = pz_table(law, 0.7, 5, 1e-10);
    for (int a = -3; a <= 3; ++a)
        for (int b = -3; b <= 3; ++b) {
            double want =
                std::exp(-2 * 1.4) * bessel_i(std::abs(a), 1.4) * bessel_i(std::abs(b), 1.4);
            CHECK(table.at(Site(a, b)) == doctest::Approx(want).epsilon(1e-7));
        }
}

TEST_CASE("ode oracle agrees with the grid table to 1e-8") {
    for (const auto* name : {"nn1", "death1"}) {
        OffspringLaw law = load_law_file(testutil::config_dir() + "/laws/" + name + ".json");
        for (double t : {0.5, 1.0, 2.0}) {
            PzTable grid = pz_table(law, t, 10, 1e-10);
            PzTable oracle = pz_ode_oracle(law, t, 40, 1e-10);
            double worst = 0;
            for (int z = -10; z <= 10; ++z)
                worst = std::max(worst, std::abs(grid.at1(z) - oracle.at1(z)));
            CHECK(worst <= 1e-8);
        }
    }
}

TEST_CASE("ode oracle conserves mass and honours t=0") {
    OffspringLaw law = testutil::nn1();
    PzTable zero = pz_ode_oracle(law, 0.0, 10, 1e-10);
    CHECK(zero.at1(0) == doctest::Approx(1.0));
    PzTable table = pz_ode_oracle(law, 1.0, 40, 1e-10);
    CHECK(table.sum_window() == doctest::Approx(1.0).epsilon(1e-8));
    // a box too small for the horizon must refuse
    CHECK_THROWS_AS(pz_ode_oracle(law, 4.0, 3, 1e-10), Error);
}

TEST_CASE("parseval sum closed form, t=0, and monotonicity") {
    OffspringLaw law = testutil::nn1();
    CHECK(parseval_sum(law, 1.0) == doctest::Approx(0.20700192122398670).epsilon(1e-8));
    CHECK(parseval_sum(law, 0.0) == doctest::Approx(1.0));
    double quad = integrate([](double u) { return std::exp(-4.0 + 4.0 * std::cos(u)); }, -M_PI,
                            M_PI) /
                  (2 * M_PI);
    CHECK(parseval_sum(law, 1.0) == doctest::Approx(quad).epsilon(1e-9));
    double prev = 1.0;
    for (double t : {0.25, 0.5, 1.0, 2.0, 4.0}) {
        double v = parseval_sum(law, t);
        CHECK(v < prev);
        prev = v;
    }
    // table-based sum of squares approaches the integral
    PzTable table = pz_table(law, 1.0, 30, 1e-10);
    CHECK(table.sum_sq() == doctest::Approx(parseval_sum(law, 1.0)).epsilon(1e-8));
}

TEST_CASE("second_moment_M closed forms") {
    OffspringLaw law = testutil::nn1();
    std::array<double, kMaxDim> pi{M_PI, 0, 0, 0}, mpi{-M_PI, 0, 0, 0};
    CHECK(second_moment_M(law, pi, mpi, 1.0).real() ==
          doctest::Approx(269.28586232849008).epsilon(1e-10));
    std::array<double, kMaxDim> h{M_PI / 2, 0, 0, 0}, mh{-M_PI / 2, 0, 0, 0};
    CHECK(second_moment_M(law, h, mh, 3.0).real() == doctest::Approx(1.0).epsilon(1e-10));

    std::array<double, kMaxDim> zero{};
    for (double t : {0.3, 1.0, 5.0}) {
        double want = 1.0 + 4.0 * (1.0 - std::exp(-2.0 * t)) / 2.0;
        CHECK(second_moment_M(law, zero, zero, t).real() == doctest::Approx(want).epsilon(1e-12));
    }
    // t -> infinity limit is E[W^2] = 1 + E||phi||^2 / lambda = 3
    CHECK(second_moment_M(law, zero, zero, 60.0).real() == doctest::Approx(3.0).epsilon(1e-10));

    OffspringLaw death = testutil::death1();
    double t = 2.0;
    double wantd = 1.0 + death.second_moment_at_zero() * (1.0 - std::exp(-0.1 * t)) / 0.1;
    CHECK(second_moment_M(death, zero, zero, t).real() == doctest::Approx(wantd).epsilon(1e-12));
    // death-mode E[W^2] = 1 + E[(||phi||-1)^2]/lambda = 11
    CHECK(second_moment_M(death, zero, zero, 400.0).real() ==
          doctest::Approx(11.0).epsilon(1e-9));
}

TEST_CASE("variance constant and prediction") {
    OffspringLaw law = testutil::nn1();
    CHECK(variance_constant(law, 0.5) == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(variance_constant(law, 1.0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(variance_constant(law, 1.0) / variance_constant(law, 0.5) ==
          doctest::Approx(1.6).epsilon(1e-12));
    CHECK(variance_prediction(law, 0.5, 1.0) ==
          doctest::Approx(1.25 * 0.20700192122398670).epsilon(1e-8));

    // death mode uses the substituted second moment: E[W^2] = 11, C = 5.25
    OffspringLaw death = testutil::death1();
    CHECK(variance_constant(death, 0.5) == doctest::Approx(5.25).epsilon(1e-12));
}

TEST_CASE("conditional mean of the origin count") {
    OffspringLaw law = testutil::nn1();
    PzTable table = pz_table(law, 1.0, 25, 1e-10);

    std::map<Site, int> delta0{{Site(), 1}};
    CHECK(conditional_mean_S(table, delta0) == doctest::Approx(0.30850832255367104).epsilon(1e-8));

    // all-red box: S approaches 1 as the box grows
    std::map<Site, int> all_red;
    for (int z = -25; z <= 25; ++z) all_red[Site(z)] = 1;
    CHECK(conditional_mean_S(table, all_red) == doctest::Approx(1.0).epsilon(1e-9));

    // antisymmetric colouring under a symmetric law
    std::map<Site, int> antisym;
    for (int z = 1; z <= 10; ++z) {
        antisym[Site(z)] = 1;
        antisym[Site(-z)] = -1;
    }
    CHECK(std::abs(conditional_mean_S(table, antisym)) < 1e-12);

    // support outside the table radius
    std::map<Site, int> far{{Site(40), 1}};
    CHECK_THROWS_AS(conditional_mean_S(table, far), Error);
}

TEST_CASE("clt params") {
    OffspringLaw law = testutil::nn1();
    CHECK(clt_params(law, 1.0).variance == doctest::Approx(0.20700192122398670).epsilon(1e-8));
    CHECK(clt_params(law, 0.0).variance == doctest::Approx(1.0));
    double prev = clt_params(law, 0.25).variance;
    for (double t : {0.5, 1.0, 2.0}) {
        double v = clt_params(law, t).variance;
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("tail bound values and monotonicity") {
    OffspringLaw law = testutil::nn1();
    PzTable table = pz_table(law, 1.0, 30, 1e-12);
    // 2 e^2 (1 - p_0(1))
    CHECK(tail_bound(law, table, 0) == doctest::Approx(10.218941593189166).epsilon(1e-6));
    double prev = tail_bound(law, table, 0);
    for (int r = 1; r <= 30; ++r) {
        double b = tail_bound(law, table, r);
        CHECK(b <= prev + 1e-12);
        prev = b;
    }
    CHECK(tail_bound(law, table, 25) < 1e-9);
    CHECK_THROWS_AS(tail_bound(law, table, 31), Error);

    int r = trust_radius(law, 1.0, 1e-6);
    CHECK(tail_bound(law, r, 1.0) <= 1e-6);
    CHECK((r == 0 || tail_bound(law, r - 1, 1.0) > 1e-6));
}

TEST_CASE("scaling exponent fit") {
    std::vector<std::pair<double, double>> exact;
    for (double t : {10.0, 20.0, 40.0, 80.0, 160.0}) exact.emplace_back(t, std::pow(t, -0.5));
    SlopeFit fit = scaling_exponent(exact);
    CHECK(fit.slope == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(fit.stderr_slope == doctest::Approx(0.0));

    std::vector<std::pair<double, double>> short_series{{1, 1}, {2, 0.7}, {4, 0.5}, {8, 0.35}};
    CHECK_THROWS_AS(scaling_exponent(short_series), Error);
    std::vector<std::pair<double, double>> narrow;
    for (double t : {10.0, 12.0, 14.0, 16.0, 18.0}) narrow.emplace_back(t, 1.0 / t);
    CHECK_THROWS_AS(scaling_exponent(narrow), Error);
}

TEST_CASE("sup_z p_z decays like t^{-1/2} for death1") {
    OffspringLaw law = testutil::death1();
    std::vector<std::pair<double, double>> series;
    for (double t : {20.0, 40.0, 80.0, 160.0, 320.0})
        series.emplace_back(t, pz_table(law, t, 8, 1e-10).sup());
    SlopeFit fit = scaling_exponent(series);
    CHECK(fit.slope == doctest::Approx(-0.5).epsilon(0.02));
}

TEST_CASE("pz table csv shape") {
    OffspringLaw law = testutil::nn1();
    PzTable table = pz_table(law, 1.0, 2, 1e-10);
    std::string csv = pz_table_csv(table);
    CHECK(csv.substr(0, 6) == "z_1,p\n");
    size_t rows = size_t(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(rows == 6);  // header + 5 sites
}
