#include "kesten/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "kesten/errors.hpp"

namespace kesten {

double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 16) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

double normal_quantile(double p) {
  boost::math::normal_distribution<double> nd;
  return boost::math::quantile(nd, p);
}

double student_t_quantile(double p, double dof) {
  boost::math::students_t_distribution<double> td(dof);
  return boost::math::quantile(td, p);
}

double student_t_two_sided(double t, double dof) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t_distribution<double> td(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(td, std::abs(t)));
}

double z_for_level(double level) { return normal_quantile(0.5 + 0.5 * level); }

MeanCI mean_ci(std::span<const double> x, double level) {
  MeanCI r;
  r.n = x.size();
  if (r.n == 0) return r;
  r.mean = pairwise_sum(x) / static_cast<double>(r.n);
  if (r.n > 1) {
    std::vector<double> dev(r.n);
    for (std::size_t i = 0; i < r.n; ++i) dev[i] = (x[i] - r.mean) * (x[i] - r.mean);
    const double var = pairwise_sum(dev) / static_cast<double>(r.n - 1);
    r.se = std::sqrt(var / static_cast<double>(r.n));
  }
  const double z = z_for_level(level);
  r.lo = r.mean - z * r.se;
  r.hi = r.mean + z * r.se;
  return r;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::TooFewSamples, "ks_statistic needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_pvalue(double d, std::size_t n, std::size_t m) {
  const double ne = static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(n + m);
  const double sq = std::sqrt(ne);
  const double lambda = (sq + 0.12 + 0.11 / sq) * d;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw Error(ErrorCode::InvalidArgument, "linear_fit needs at least two paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) throw Error(ErrorCode::InvalidArgument, "linear_fit needs distinct abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.dof = n - 2;
  if (f.dof > 0) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      rss += r * r;
    }
    f.residual_sd = std::sqrt(rss / static_cast<double>(f.dof));
    f.slope_se = f.residual_sd / std::sqrt(sxx);
    f.intercept_se = f.residual_sd * std::sqrt(1.0 / static_cast<double>(n) + mx * mx / sxx);
  }
  return f;
}

}  // namespace kesten
