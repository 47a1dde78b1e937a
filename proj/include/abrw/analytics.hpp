#pragma once

#include <complex>
#include <map>
#include <string>
#include <vector>

#include "abrw/offspring.hpp"

namespace abrw {

// Values of p_z(t) = e^{-lambda t} E[X_{-z}(t)] on the window [-radius,radius]^d.
// Computed either by torus-grid inversion (exact periodized sum, certified by
// grid doubling) or by the time-stepping oracle; the two must agree and tests
// hold them to that.
struct PzTable {
    int dim = 1;
    double t = 0;
    int radius = 0;
    int grid_size = 0;      // 0 for the ODE oracle
    double wrap_error = 0;  // max-norm difference of the last grid doubling
    std::vector<double> values;  // lexicographic over the window

    size_t index(const Site& z) const;
    double at(const Site& z) const;      // CoverageGap outside the window
    double at1(int z) const { return at(Site(int32_t(z))); }

    double sum_window() const;
    double sum_within(int r) const;      // CoverageGap if r > radius
    double sup() const;
    double sum_sq() const;
};

PzTable pz_table(const OffspringLaw& law, double t, int radius, double tol);

// Independent oracle: integrates q' = mu' * q - lambda q from a point mass
// with an embedded Runge-Kutta pair and local error control, on a box large
// enough that the escaped mass stays below 10*step_tol.
PzTable pz_ode_oracle(const OffspringLaw& law, double t, int box_radius, double step_tol);

// sum_z p_z(t)^2 via the torus integral of exp(-2 (lambda - Re mu_hat) t);
// relative accuracy 1e-8, certified by grid doubling.
double parseval_sum(const OffspringLaw& law, double t);

// Closed form for E[M_u(t) M_v(t)] of the Fourier-mode martingales.
std::complex<double> second_moment_M(const OffspringLaw& law,
                                     const std::array<double, kMaxDim>& u,
                                     const std::array<double, kMaxDim>& v, double t);

// Variance constant C = p E[W^2] - p^2 with E[W^2] = 1 + E[phi_hat(0)^2]/lambda
// (mode-consistent second moment; equals the raw E||phi||^2 in stay mode).
double variance_constant(const OffspringLaw& law, double p);

// Leading-order prediction C * sum_z p_z(t)^2 of Var[e^{-lambda t} Y_0(t)].
double variance_prediction(const OffspringLaw& law, double p, double t);

// S = sum_z p_z(t) zeta_z, the conditional mean of e^{-lambda t} Z_0(t).
double conditional_mean_S(const PzTable& table, const std::map<Site, int>& zeta);

struct CltParams {
    double mean = 0;
    double variance = 0;
};
CltParams clt_params(const OffspringLaw& law, double t);

// 2 e^{lambda T} sum_{|z|>r} p_z(T), padded by the table's wrap certificate.
double tail_bound(const OffspringLaw& law, const PzTable& table_at_T, int r);
double tail_bound(const OffspringLaw& law, int r, double T, double tol = 1e-12);

// smallest radius whose tail bound is <= target (linear scan on one table)
int trust_radius(const OffspringLaw& law, double T, double target, int r_max = 4096);

struct SlopeFit {
    double slope = 0;
    double stderr_slope = 0;
    size_t points = 0;
};

// log-log least squares; requires >= 5 points spanning >= one decade in t
SlopeFit scaling_exponent(const std::vector<std::pair<double, double>>& series);
// same fit without the span gate (for short acceptance grids)
SlopeFit slope_loglog(const std::vector<std::pair<double, double>>& series);

std::string pz_table_csv(const PzTable& table);

}  // namespace abrw
