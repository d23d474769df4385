#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kesten {

// Fixed-order pairwise summation; bitwise reproducible for a given input order.
double pairwise_sum(std::span<const double> x);

struct MeanCI {
  double mean = 0.0;
  double se = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
};

MeanCI mean_ci(std::span<const double> x, double level = 0.95);

double normal_quantile(double p);
double student_t_quantile(double p, double dof);
// Two-sided p-value of a t statistic.
double student_t_two_sided(double t, double dof);

// Two-sided z for a confidence level, e.g. 0.95 -> 1.95996...
double z_for_level(double level);

double ks_statistic(std::vector<double> a, std::vector<double> b);
// Asymptotic Kolmogorov survival P(D > d) for sample sizes n, m.
double ks_pvalue(double d, std::size_t n, std::size_t m);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double intercept_se = 0.0;
  double residual_sd = 0.0;
  std::size_t dof = 0;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace kesten
