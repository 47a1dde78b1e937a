#pragma once

#include <cstdint>
#include <vector>

namespace abrw {

struct Summary {
    double mean = 0;
    double se = 0;  // sample SD / sqrt(n)
    size_t n = 0;
};
Summary summarize(const std::vector<double>& xs);

struct VarianceEstimate {
    double variance = 0;
    double se = 0;  // SE of the sample variance via the fourth central moment
    size_t n = 0;
};
VarianceEstimate variance_estimate(const std::vector<double>& xs);

// linear-interpolated quantile, q in [0,1]
double percentile(std::vector<double> xs, double q);

double normal_cdf(double x);

// Kolmogorov asymptotic tail Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2)
double kolmogorov_tail(double x);

struct KsResult {
    double statistic = 0;
    double p_value = 0;
};

// one-sample KS against the standard normal (samples already standardized)
KsResult ks_test_standard_normal(std::vector<double> samples);
// two-sample KS
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

struct Skewness {
    double value = 0;
    double se = 0;  // sqrt(6/n)
};
Skewness skewness(const std::vector<double>& xs);

}  // namespace abrw
