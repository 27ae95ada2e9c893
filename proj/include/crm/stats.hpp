#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "crm/matrix.hpp"

namespace crm {

// Missing cells are quiet NaNs. Every reduction below skips them.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double x) noexcept { return std::isnan(x); }

// Consistency constant making the MAD estimate sigma for Gaussian data.
inline constexpr double kMadScale = 1.4826;

inline std::vector<double> present(std::span<const double> x) {
  std::vector<double> out;
  out.reserve(x.size());
  for (double v : x)
    if (!is_missing(v)) out.push_back(v);
  return out;
}

inline double mean(std::span<const double> x) {
  double s = 0.0;
  std::size_t n = 0;
  for (double v : x)
    if (!is_missing(v)) {
      s += v;
      ++n;
    }
  return n ? s / static_cast<double>(n) : kMissing;
}

/// Sample variance (n - 1 denominator) over present values.
inline double variance(std::span<const double> x) {
  const double m = mean(x);
  double s = 0.0;
  std::size_t n = 0;
  for (double v : x)
    if (!is_missing(v)) {
      s += (v - m) * (v - m);
      ++n;
    }
  return n > 1 ? s / static_cast<double>(n - 1) : kMissing;
}

inline double median(std::span<const double> x) {
  std::vector<double> v = present(x);
  if (v.empty()) return kMissing;
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + h, v.end());
  const double hi = v[h];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + h);
  return (lo + hi) / 2.0;
}

/// Scaled median absolute deviation, 1.4826 * median|x - median(x)|.
inline double mad(std::span<const double> x) {
  const double m = median(x);
  if (is_missing(m)) return kMissing;
  std::vector<double> dev;
  dev.reserve(x.size());
  for (double v : x)
    if (!is_missing(v)) dev.push_back(std::abs(v - m));
  return kMadScale * median(dev);
}

/// Plotting positions (i - a) / (n + 1 - 2a), a = 3/8 for n <= 10 else 1/2.
inline std::vector<double> plotting_positions(std::size_t n) {
  std::vector<double> p(n);
  const double a = n <= 10 ? 3.0 / 8.0 : 0.5;
  const double denom = static_cast<double>(n) + 1.0 - 2.0 * a;
  for (std::size_t i = 0; i < n; ++i) p[i] = (static_cast<double>(i + 1) - a) / denom;
  return p;
}

inline double normal_quantile(double p, double center = 0.0, double sdev = 1.0) {
  return boost::math::quantile(boost::math::normal(center, sdev), p);
}

/// Pearson correlation over index pairs where both values are present.
inline double correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionMismatch("correlation lengths");
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!is_missing(x[i]) && !is_missing(y[i])) {
      sx += x[i];
      sy += y[i];
      ++n;
    }
  if (n < 2) return kMissing;
  const double mx = sx / n, my = sy / n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!is_missing(x[i]) && !is_missing(y[i])) {
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
      sxy += (x[i] - mx) * (y[i] - my);
    }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace crm
