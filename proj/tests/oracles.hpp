#pragma once

// Reference implementations written independently of the library, used only
// by tests. Market matrices here are in R's layout: row 0 is the OLDEST date.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "crm/matrix.hpp"

namespace oracle {

using crm::Matrix;
using Vec = std::vector<double>;

/// Gauss-Jordan with partial pivoting on a general square matrix.
inline Matrix gauss_jordan_inverse(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix w(n, 2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) w(i, j) = a(i, j);
    w(i, n + i) = 1.0;
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(w(r, c)) > std::abs(w(p, c))) p = r;
    if (w(p, c) == 0.0) throw std::runtime_error("singular");
    for (std::size_t j = 0; j < 2 * n; ++j) std::swap(w(c, j), w(p, j));
    const double piv = w(c, c);
    for (std::size_t j = 0; j < 2 * n; ++j) w(c, j) /= piv;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = w(r, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < 2 * n; ++j) w(r, j) -= f * w(c, j);
    }
  }
  Matrix inv(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) inv(i, j) = w(i, n + j);
  return inv;
}

/// Gamma = diag(xi^2) + Omega Phi Omega^T, formed densely.
inline Matrix dense_gamma(const Vec& xi, const Matrix& omega, const Matrix& phi) {
  const std::size_t n = omega.rows(), k = omega.cols();
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = i == j ? xi[i] * xi[i] : 0.0;
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) s += omega(i, a) * phi(a, b) * omega(j, b);
      g(i, j) = s;
    }
  return g;
}

inline Vec mat_vec(const Matrix& m, const Vec& v) {
  Vec out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i] += m(i, j) * v[j];
  return out;
}

/// Wichura's AS241 (PPND16), accurate to about 1e-16.
inline double qnorm_as241(double p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
               1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
               0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
               0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0 ? -val : val;
}

// --- R primitives ---------------------------------------------------------

inline Vec r_ppoints(std::size_t n) {
  const double a = n <= 10 ? 3.0 / 8.0 : 0.5;
  Vec out;
  for (std::size_t i = 1; i <= n; ++i) out.push_back((double(i) - a) / (double(n) + 1.0 - 2.0 * a));
  return out;
}

inline double r_median(Vec x) {
  std::erase_if(x, [](double v) { return std::isnan(v); });
  if (x.empty()) return NAN;
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

inline double r_mad(const Vec& x) {
  const double m = r_median(x);
  Vec d;
  for (double v : x)
    if (!std::isnan(v)) d.push_back(std::abs(v - m));
  return 1.4826 * r_median(d);
}

inline double r_mean_narm(const Vec& x) {
  double s = 0.0;
  std::size_t n = 0;
  for (double v : x)
    if (!std::isnan(v)) {
      s += v;
      ++n;
    }
  return n ? s / double(n) : NAN;
}

/// qnorm(ppoints(x)[rank(x, ties = first)], center, sdev), rank by counting.
inline Vec r_normalize(const Vec& x, double center, double sdev) {
  const std::size_t n = x.size();
  const Vec pp = r_ppoints(n);
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (x[j] < x[i] || (x[j] == x[i] && j < i)) ++rank;
    out[i] = sdev == 0.0 ? center : center + sdev * qnorm_as241(pp[rank]);
  }
  return out;
}

inline Vec column(const Matrix& m, std::size_t j) {
  Vec v;
  for (std::size_t i = 0; i < m.rows(); ++i) v.push_back(m(i, j));
  return v;
}

inline Vec row(const Matrix& m, std::size_t i) {
  Vec v;
  for (std::size_t j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
  return v;
}

// --- style factor chain (1-based indices mirrored from the R code) ---------

/// ret[k] for k = 0..days corresponds to R row (last - k).
inline Matrix r_calc_ret_mv(const Matrix& prc, int back, int days, int d_r) {
  const int nrow = int(prc.rows());
  const int last = nrow - back;
  const int first = last - days;
  auto P = [&](int r1, std::size_t j) { return prc(std::size_t(r1 - 1), j); };
  Matrix ret(std::size_t(last - first + 1), prc.cols());
  for (int r = last; r >= first; --r)
    for (std::size_t j = 0; j < prc.cols(); ++j) {
      double yest = 0.0;
      for (int i = 1; i <= d_r; ++i) yest += P(r - i, j);
      yest /= d_r;
      ret(std::size_t(last - r), j) = P(r, j) / yest - 1.0;
    }
  return ret;
}

inline Matrix r_calc_ret_mv_clean(const Matrix& prc, int back, int days, int d_r) {
  Matrix ret = r_calc_ret_mv(prc, back, days, d_r);
  const std::size_t R = ret.rows(), C = ret.cols();
  Vec rmad(R), cmad(C), rmed(R);
  for (std::size_t i = 0; i < R; ++i) {
    rmad[i] = r_mad(row(ret, i));
    rmed[i] = r_median(row(ret, i));
  }
  for (std::size_t j = 0; j < C; ++j) cmad[j] = r_mad(column(ret, j));
  std::vector<std::vector<char>> bad(R, std::vector<char>(C));
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) bad[i][j] = std::abs(ret(i, j) - rmed[i]) > 5.0 * std::max(rmad[i], cmad[j]);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j)
      if (bad[i][j]) ret(i, j) = NAN;
  Vec avg(R);
  for (std::size_t i = 0; i < R; ++i) avg[i] = r_mean_narm(row(ret, i));
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) {
      if (bad[i][j]) ret(i, j) = avg[i];
      ret(i, j) -= avg[i];
    }
  return ret;
}

inline Vec r_momentum(const Matrix& prc, int back, int days, int d_r) {
  const Matrix ret = r_calc_ret_mv_clean(prc, back, days, d_r);
  Vec mom;
  for (std::size_t j = 0; j < ret.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < ret.rows(); ++i) s += ret(i, j);
    mom.push_back(s / double(ret.rows()));
  }
  return r_normalize(mom, 0.0, r_mad(mom));
}

inline Vec r_adr_normalize(Vec x, const std::vector<bool>& is_adr) {
  Vec non, adr;
  for (std::size_t i = 0; i < x.size(); ++i) (is_adr[i] ? adr : non).push_back(x[i]);
  const double s = r_mad(non);
  if (!adr.empty()) {
    const Vec a = r_normalize(adr, 0.0, s);
    std::size_t k = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (is_adr[i]) x[i] = a[k++];
  }
  return r_normalize(x, 0.0, s);
}

/// Mean of log(price * volume) over the d_addv most recent rows (the last
/// rows of the R-layout matrices), zero dollar volume skipped.
inline Vec r_liquidity(const Matrix& prc, const Matrix& vol, const std::vector<bool>& is_adr, int d_addv) {
  Vec addv;
  const std::size_t n = prc.rows();
  for (std::size_t j = 0; j < prc.cols(); ++j) {
    Vec logs;
    for (std::size_t r = n - std::size_t(d_addv); r < n; ++r) {
      const double dv = prc(r, j) * vol(r, j);
      logs.push_back(dv == 0.0 ? NAN : std::log(dv));
    }
    addv.push_back(r_mean_narm(logs));
  }
  return r_adr_normalize(addv, is_adr);
}

inline Vec r_size(const Matrix& cap, const std::vector<bool>& is_adr, int days) {
  Vec out;
  const std::size_t n = cap.rows();
  for (std::size_t j = 0; j < cap.cols(); ++j) {
    Vec logs;
    for (std::size_t r = n - std::size_t(days); r < n; ++r) logs.push_back(cap(r, j) == 0.0 ? NAN : std::log(cap(r, j)));
    out.push_back(r_mean_narm(logs));
  }
  return r_adr_normalize(out, is_adr);
}

inline Vec r_calc_sr(const Vec& tv) {
  Vec sr;
  for (double v : tv) sr.push_back(std::log(std::sqrt(v)));
  sr = r_normalize(sr, r_median(sr), r_mad(sr));
  for (auto& v : sr) v = std::exp(v);
  return sr;
}

inline Vec r_intraday_vol(const Matrix& high, const Matrix& low, const Matrix& prc, int days) {
  Vec tv;
  const std::size_t n = prc.rows();
  for (std::size_t j = 0; j < prc.cols(); ++j) {
    double s = 0.0;
    for (std::size_t r = n - std::size_t(days); r < n; ++r) {
      const double hl = std::abs(high(r, j) - low(r, j)) / prc(r, j);
      s += hl * hl;
    }
    tv.push_back(s / days);
  }
  return r_calc_sr(tv);
}

// --- horizon decoupling ----------------------------------------------------

/// Correlation of the last return with the M-period sum, from the full
/// Toeplitz covariance C(s) = eta_s lambda^s, C(0) = 1.
inline double toeplitz_rho(double lambda, const Vec& eta, std::size_t M) {
  auto C = [&](std::size_t s) { return s == 0 ? 1.0 : eta[s - 1] * std::pow(lambda, double(s)); };
  double var = 0.0, cov = 0.0;
  for (std::size_t r = 0; r < M; ++r) {
    cov += C(M - 1 - r);
    for (std::size_t q = 0; q < M; ++q) var += C(r > q ? r - q : q - r);
  }
  return cov / std::sqrt(var);
}

}  // namespace oracle
