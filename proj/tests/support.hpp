#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "crm/crm.hpp"

namespace support {

using crm::Matrix;
using crm::SymMatrix;
using crm::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = nd(rng);
  return m;
}

/// B B^T / n + n * 1e-2 I style SPD matrix with moderate conditioning.
inline SymMatrix random_spd(std::mt19937_64& rng, std::size_t n) {
  const Matrix b = random_matrix(rng, n, n);
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += b(i, k) * b(j, k);
      a(i, j) = a(j, i) = s / double(n);
    }
  for (std::size_t i = 0; i < n; ++i) a(i, i) += 0.1;
  return SymMatrix(std::move(a));
}

inline Vector random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline std::vector<std::string> tickers(std::size_t n, const std::string& prefix = "S") {
  std::vector<std::string> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(prefix + std::to_string(100 + i));
  return t;
}

/// Consecutive ISO dates, most recent first.
inline std::vector<std::string> dates(std::size_t d) {
  std::vector<std::string> out;
  for (std::size_t r = 0; r < d; ++r) {
    const std::size_t k = d - 1 - r;
    char buf[48];
    std::snprintf(buf, sizeof buf, "%04zu-%02zu-%02zu", 2000 + k / 336, 1 + (k / 28) % 12, 1 + k % 28);
    out.emplace_back(buf);
  }
  return out;
}

/// History whose panels are all built from recent-first close prices; high,
/// low, volume and cap default to close*(1 +- 1%), 1000 and close*1e6.
inline crm::MarketHistory history_from_close(const Matrix& close, std::vector<std::string> names = {}) {
  crm::MarketHistory h;
  h.dates = dates(close.rows());
  h.tickers = names.empty() ? tickers(close.cols()) : std::move(names);
  h.close = close;
  h.adjusted_close = close;
  h.high = Matrix(close.rows(), close.cols());
  h.low = h.high;
  h.volume = h.high;
  h.cap = h.high;
  for (std::size_t r = 0; r < close.rows(); ++r)
    for (std::size_t c = 0; c < close.cols(); ++c) {
      h.high(r, c) = close(r, c) * 1.01;
      h.low(r, c) = close(r, c) * 0.99;
      h.volume(r, c) = 1000.0;
      h.cap(r, c) = close(r, c) * 1e6;
    }
  h.is_adr.assign(close.cols(), false);
  return h;
}

/// Reverses rows: recent-first <-> oldest-first.
inline Matrix flip(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(m.rows() - 1 - r, c);
  return out;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("crm_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline crm::Universe all_of(const crm::MarketHistory& h) { return {h.tickers, h.dates.front()}; }

}  // namespace support
