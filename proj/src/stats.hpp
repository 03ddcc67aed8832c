#pragma once

#include <cstdint>
#include <vector>

namespace tail {

// Regularized upper incomplete gamma Q(a, x); series expansion for
// x < a + 1, continued fraction otherwise.
double gamma_q(double a, double x);

// Survival function of the chi-square distribution with df degrees of
// freedom, i.e. the p-value of an observed statistic.
double chi_square_pvalue(double statistic, int df);

// Pearson statistic of observed counts against expected counts.
double chi_square_statistic(const std::vector<int64_t>& observed, const std::vector<double>& expected);

struct MeanStd {
  double mean = 0.0;
  double sd = 0.0;        // sample standard deviation
  double std_error = 0.0;  // sd / sqrt(n)
  size_t n = 0;
};

MeanStd mean_std(const std::vector<double>& values);

}  // namespace tail
