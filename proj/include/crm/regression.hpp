#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "crm/error.hpp"
#include "crm/matquad.hpp"
#include "crm/matrix.hpp"

namespace crm {

struct WeightedFit {
  Vector coef;
  Vector residuals;
  SymMatrix q_inverse;  // (X^T Z X)^-1
};

/// Weighted least squares without intercept: minimizes sum z_i (y - X b)_i^2.
/// Empty `z` means unit weights. Throws NotPositiveDefinite when X^T Z X is
/// singular. One step of iterative refinement keeps X^T Z residuals at
/// round-off level even for ill-scaled designs.
inline WeightedFit weighted_least_squares(const Matrix& x, std::span<const double> z,
                                          std::span<const double> y) {
  const std::size_t n = x.rows(), k = x.cols();
  if (y.size() != n) throw DimensionMismatch("regression response length");
  if (!z.empty() && z.size() != n) throw DimensionMismatch("regression weight length");
  auto w = [&](std::size_t i) { return z.empty() ? 1.0 : z[i]; };

  Matrix q(k, k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = x.row(i);
    const double wi = w(i);
    for (std::size_t a = 0; a < k; ++a) {
      const double wa = wi * r[a];
      if (wa == 0.0) continue;
      for (std::size_t b = a; b < k; ++b) q(a, b) += wa * r[b];
    }
  }
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < a; ++b) q(a, b) = q(b, a);

  WeightedFit fit;
  fit.q_inverse = k ? spd_invert(SymMatrix(std::move(q))) : SymMatrix();
  auto xtzv = [&](std::span<const double> v) {
    Vector g(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double wv = w(i) * v[i];
      const auto r = x.row(i);
      for (std::size_t a = 0; a < k; ++a) g[a] += r[a] * wv;
    }
    return g;
  };
  auto residual = [&](std::span<const double> b) {
    Vector e(y.begin(), y.end());
    if (k == 0) return e;
    const Vector fitted = x * b;
    for (std::size_t i = 0; i < n; ++i) e[i] -= fitted[i];
    return e;
  };

  fit.coef = k ? fit.q_inverse.matrix() * xtzv(y) : Vector{};
  fit.residuals = residual(fit.coef);
  if (k) {
    const Vector delta = fit.q_inverse.matrix() * xtzv(fit.residuals);
    for (std::size_t a = 0; a < k; ++a) fit.coef[a] += delta[a];
    fit.residuals = residual(fit.coef);
  }
  return fit;
}

/// Ordinary least squares without intercept, with the statistics used for
/// factor testing. F compares the fitted model against the zero model with
/// (K, n - K) degrees of freedom.
struct OlsResult {
  Vector coef;
  Vector t_values;
  double f_statistic = 0.0;
  double rss = 0.0;
  std::size_t n_obs = 0;
  std::size_t df_model = 0;
  std::size_t df_resid = 0;
};

inline OlsResult ols_no_intercept(const Matrix& x, std::span<const double> y) {
  const std::size_t n = x.rows(), k = x.cols();
  if (k == 0) throw DimensionMismatch("regression needs at least one column");
  if (n <= k)
    throw SingularDesign(std::to_string(n) + " observations for " + std::to_string(k) + " coefficients");
  WeightedFit fit;
  try {
    fit = weighted_least_squares(x, {}, y);
  } catch (const NotPositiveDefinite& e) {
    throw SingularDesign(e.what());
  }
  OlsResult r;
  r.coef = fit.coef;
  r.n_obs = n;
  r.df_model = k;
  r.df_resid = n - k;
  double tss0 = 0.0;
  for (double v : y) tss0 += v * v;
  for (double e : fit.residuals) r.rss += e * e;
  const double sigma2 = r.rss / static_cast<double>(r.df_resid);
  r.f_statistic = ((tss0 - r.rss) / static_cast<double>(k)) / sigma2;
  r.t_values.resize(k);
  for (std::size_t a = 0; a < k; ++a)
    r.t_values[a] = r.coef[a] / std::sqrt(sigma2 * fit.q_inverse(a, a));
  return r;
}

}  // namespace crm
