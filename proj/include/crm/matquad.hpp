#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "crm/error.hpp"
#include "crm/matrix.hpp"

namespace crm {

/// Pivots at or below this fraction of the largest input diagonal are
/// rejected as not positive-definite.
inline constexpr double kPivotTolerance = 1e-12;

/// Inverts a symmetric positive-definite matrix in place on a flat buffer
/// laid out as a[i + n * j] = A(i, j).
///
/// Three passes over the buffer: the Cholesky factor L is written into the
/// lower triangle (diagonal holds 1 / L_ii), L is inverted in place, and the
/// inverse is recomposed as L^-T L^-1. The upper triangle is read only during
/// the first pass.
inline void spd_invert_in_place(std::span<double> a, std::size_t n) {
  if (a.size() != n * n) throw DimensionMismatch("spd_invert buffer size");
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a[i * (n + 1)]);
  const double tol = kPivotTolerance * max_diag;

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double sum = a[i + n * j];
      for (std::size_t k = i; k-- > 0;) sum -= a[i + n * k] * a[j + n * k];
      if (j == i) {
        if (!(sum > tol))
          throw NotPositiveDefinite("pivot " + std::to_string(i) + " is " + std::to_string(sum));
        a[j + n * i] = 1.0 / std::sqrt(sum);
      } else {
        a[j + n * i] = sum * a[i * (n + 1)];
      }
    }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t k = i; k < j; ++k) sum -= a[j + n * k] * a[k + n * i];
      a[j + i * n] = sum * a[j * (n + 1)];
    }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t k = j; k < n; ++k) sum += a[k + n * i] * a[k + n * j];
      a[i + n * j] = a[j + n * i] = sum;
    }
}

/// Returns A^-1 for a symmetric positive-definite A.
/// Throws NotPositiveDefinite when a Cholesky pivot fails the tolerance.
inline SymMatrix spd_invert(const SymMatrix& a) {
  const std::size_t n = a.size();
  Matrix buf = a.matrix();  // symmetric, so row- vs column-major is moot
  spd_invert_in_place(buf.data(), n);
  return SymMatrix(std::move(buf));
}

/// Q~ = Phi^-1 + Omega^T Xi^-1 Omega, with Xi = diag(xi^2).
inline SymMatrix woodbury_core(std::span<const double> xi, const Matrix& omega,
                               const SymMatrix& phi) {
  const std::size_t n = omega.rows();
  const std::size_t k = omega.cols();
  if (xi.size() != n) throw DimensionMismatch("xi length " + std::to_string(xi.size()) +
                                              " vs omega rows " + std::to_string(n));
  if (phi.size() != k) throw DimensionMismatch("phi size vs omega cols");
  Matrix q = spd_invert(phi).matrix();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / (xi[i] * xi[i]);
    const auto r = omega.row(i);
    for (std::size_t a = 0; a < k; ++a) {
      const double wa = w * r[a];
      if (wa == 0.0) continue;
      for (std::size_t b = a; b < k; ++b) q(a, b) += wa * r[b];
    }
  }
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < a; ++b) q(a, b) = q(b, a);
  return SymMatrix(std::move(q));
}

/// Applies Gamma^-1 = Xi^-1 - Xi^-1 Omega Q~^-1 Omega^T Xi^-1 for the factor
/// model Gamma = Xi + Omega Phi Omega^T. Only K x K inverses are formed.
class GammaInverse {
 public:
  GammaInverse(std::span<const double> xi, const Matrix& omega, const SymMatrix& phi)
      : xi_(xi.begin(), xi.end()), omega_(omega) {
    for (std::size_t i = 0; i < xi_.size(); ++i)
      if (!(xi_[i] > 0.0))
        throw ValidationError("specific risk must be positive (index " + std::to_string(i) + ")");
    if (omega_.cols() > 0) qinv_ = spd_invert(woodbury_core(xi_, omega_, phi));
    else if (xi_.size() != omega_.rows() && omega_.rows() != 0)
      throw DimensionMismatch("xi length vs omega rows");
  }

  Vector apply(std::span<const double> v) const {
    if (v.size() != xi_.size())
      throw DimensionMismatch("vector length " + std::to_string(v.size()) + " vs N " +
                              std::to_string(xi_.size()));
    Vector y(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] / (xi_[i] * xi_[i]);
    if (omega_.cols() == 0) return y;
    const Vector t = transpose_times(omega_, y);   // Omega^T Xi^-1 v
    const Vector u = qinv_.matrix() * t;           // Q~^-1 (...)
    const Vector w = omega_ * u;                   // Omega (...)
    for (std::size_t i = 0; i < v.size(); ++i) y[i] -= w[i] / (xi_[i] * xi_[i]);
    return y;
  }

  const SymMatrix& qtilde_inverse() const noexcept { return qinv_; }

 private:
  Vector xi_;
  Matrix omega_;
  SymMatrix qinv_;
};

inline Vector gamma_inverse_apply(std::span<const double> xi, const Matrix& omega,
                                  const SymMatrix& phi, std::span<const double> v) {
  if (omega.rows() != xi.size() && omega.cols() > 0)
    throw DimensionMismatch("xi length vs omega rows");
  return GammaInverse(xi, omega, phi).apply(v);
}

}  // namespace crm
