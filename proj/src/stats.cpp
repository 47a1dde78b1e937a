#include "abrw/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace abrw {

Summary summarize(const std::vector<double>& xs) {
    Summary s;
    s.n = xs.size();
    if (xs.empty()) return s;
    double sum = 0;
    for (double x : xs) sum += x;
    s.mean = sum / double(xs.size());
    if (xs.size() < 2) return s;
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / double(xs.size() - 1) / double(xs.size()));
    return s;
}

VarianceEstimate variance_estimate(const std::vector<double>& xs) {
    VarianceEstimate v;
    v.n = xs.size();
    if (xs.size() < 2) return v;
    const double n = double(xs.size());
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= n;
    double m2 = 0, m4 = 0;
    for (double x : xs) {
        double d = x - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    double s2 = m2 / (n - 1);
    m2 /= n;
    m4 /= n;
    v.variance = s2;
    // Var(s^2) ~ (m4 - m2^2 (n-3)/(n-1)) / n
    double var_of_var = (m4 - m2 * m2 * (n - 3) / (n - 1)) / n;
    v.se = var_of_var > 0 ? std::sqrt(var_of_var) : 0;
    return v;
}

double percentile(std::vector<double> xs, double q) {
    if (xs.empty()) throw std::invalid_argument("percentile of empty sample");
    std::sort(xs.begin(), xs.end());
    if (q <= 0) return xs.front();
    if (q >= 1) return xs.back();
    double pos = q * double(xs.size() - 1);
    size_t lo = size_t(pos);
    double frac = pos - double(lo);
    if (lo + 1 >= xs.size()) return xs.back();
    return xs[lo] * (1 - frac) + xs[lo + 1] * frac;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double kolmogorov_tail(double x) {
    if (x <= 0) return 1.0;
    if (x < 0.2) return 1.0;  // tail indistinguishable from 1 this low
    double sum = 0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * x * x);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {
// Stephens' small-sample correction for the asymptotic KS distribution
double ks_pvalue(double d, double n_eff) {
    double rt = std::sqrt(n_eff);
    return kolmogorov_tail((rt + 0.12 + 0.11 / rt) * d);
}
}  // namespace

KsResult ks_test_standard_normal(std::vector<double> samples) {
    if (samples.empty()) throw std::invalid_argument("KS test on empty sample");
    std::sort(samples.begin(), samples.end());
    const double n = double(samples.size());
    double d = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        double f = normal_cdf(samples[i]);
        d = std::max(d, std::abs(f - double(i) / n));
        d = std::max(d, std::abs(double(i + 1) / n - f));
    }
    return {d, ks_pvalue(d, n)};
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("KS test on empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    size_t i = 0, j = 0;
    double d = 0;
    const double na = double(a.size()), nb = double(b.size());
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(double(i) / na - double(j) / nb));
    }
    double n_eff = na * nb / (na + nb);
    return {d, ks_pvalue(d, n_eff)};
}

Skewness skewness(const std::vector<double>& xs) {
    Skewness out;
    if (xs.size() < 3) return out;
    const double n = double(xs.size());
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= n;
    double m2 = 0, m3 = 0;
    for (double x : xs) {
        double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    out.value = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0;
    out.se = std::sqrt(6.0 / n);
    return out;
}

}  // namespace abrw
