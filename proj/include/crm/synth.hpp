#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crm/error.hpp"
#include "crm/factors.hpp"
#include "crm/io.hpp"
#include "crm/matrix.hpp"
#include "crm/riskmodel.hpp"
#include "crm/universe.hpp"

namespace crm {

// ---------------------------------------------------------------------------
// Counter-based random numbers: Philox4x32-10 (Salmon et al., SC'11).

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter c, Key k) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        k[0] += 0x9E3779B9u;
        k[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    }
    return c;
  }
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// A named stream of standard normals. Draw (t, j) depends only on the seed,
/// the stream name and the pair (t, j), so streams keyed by ticker are stable
/// under reordering of the universe.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = fnv1a64(name) ^ (seed * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull);
    h ^= h >> 31;
    key_ = {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  }

  /// Four normals for counter (t, j) via two Box-Muller pairs.
  std::array<double, 4> quad(std::uint64_t t, std::uint64_t j) const {
    const auto r = Philox4x32::generate(
        {static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32), static_cast<std::uint32_t>(j),
         static_cast<std::uint32_t>(j >> 32)},
        key_);
    std::array<double, 4> out{};
    for (int p = 0; p < 2; ++p) {
      const double u1 = (static_cast<double>(r[2 * p]) + 0.5) / 4294967296.0;
      const double u2 = (static_cast<double>(r[2 * p + 1]) + 0.5) / 4294967296.0;
      const double rad = std::sqrt(-2.0 * std::log(u1));
      out[2 * p] = rad * std::cos(2.0 * std::numbers::pi * u2);
      out[2 * p + 1] = rad * std::sin(2.0 * std::numbers::pi * u2);
    }
    return out;
  }

  double normal(std::uint64_t t, std::uint64_t j = 0) const { return quad(t, j / 4)[j % 4]; }

  double uniform(std::uint64_t t, std::uint64_t j = 0) const {
    const auto r = Philox4x32::generate({static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32),
                                         static_cast<std::uint32_t>(j), 0xFFFFFFFFu},
                                        key_);
    return (static_cast<double>(r[0]) + 0.5) / 4294967296.0;
  }

 private:
  Philox4x32::Key key_{};
};

// ---------------------------------------------------------------------------

struct SynthSpec {
  std::size_t N = 0, K = 0, M = 0;
  SymMatrix phi_star;
  Vector xi_star;
  FactorLoadings omega_star;
  std::uint64_t seed = 0;
  double price_level = 50.0;
  double range_scale = 0.01;        // high/low = close * exp(+-range_scale |z|)
  double log_volume_mean = 13.0;
  double log_volume_sd = 0.5;
  double log_shares_mean = 18.0;
  double log_shares_sd = 1.0;
  std::string start_date = "2000-01-03";
};

struct SynthTruth {
  SymMatrix phi_star;
  Vector xi_star;
  FactorLoadings omega_star;
  Matrix factor_returns;  // M x K, row 0 most recent
  Matrix idiosyncratic;   // M x N, row 0 most recent
};

struct SynthMarket {
  MarketHistory history;
  ReturnsPanel returns;
  SynthTruth truth;
};

namespace detail {

/// Lower-triangular L with L L^T = a; tolerates positive semi-definite input
/// by zeroing columns with vanishing pivots.
inline Matrix psd_cholesky(const SymMatrix& a) {
  const std::size_t n = a.size();
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a(i, i)));
  const double tol = 1e-12 * std::max(scale, 1e-300);
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d < -tol) throw InvalidSpec("phi_star is not positive semi-definite");
    if (d <= tol) continue;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

inline std::vector<std::string> business_days(const std::string& start, std::size_t count) {
  using namespace std::chrono;
  const int y = std::stoi(start.substr(0, 4));
  const unsigned m = static_cast<unsigned>(std::stoi(start.substr(5, 2)));
  const unsigned d = static_cast<unsigned>(std::stoi(start.substr(8, 2)));
  const year_month_day first{year{y}, month{m}, day{d}};
  if (!first.ok()) throw InvalidSpec("start date " + start);
  sys_days day_point{first};
  std::vector<std::string> out;
  while (out.size() < count) {
    const weekday wd{day_point};
    if (wd != Saturday && wd != Sunday) {
      const year_month_day ymd{day_point};
      char buf[16];
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
      out.emplace_back(buf);
    }
    day_point += days{1};
  }
  return out;
}

}  // namespace detail

inline void validate(const SynthSpec& s) {
  if (s.N == 0 || s.M == 0) throw InvalidSpec("N and M must be positive");
  if (s.omega_star.n() != s.N || s.omega_star.k() != s.K || s.omega_star.omega.rows() != s.N ||
      s.omega_star.omega.cols() != s.K)
    throw InvalidSpec("omega_star must be N x K");
  if (s.phi_star.size() != s.K) throw InvalidSpec("phi_star must be K x K");
  if (s.xi_star.size() != s.N) throw InvalidSpec("xi_star must have N entries");
  for (double x : s.xi_star)
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidSpec("xi_star entries must be finite and >= 0");
  if (!(s.price_level > 0.0)) throw InvalidSpec("price_level must be positive");
  if (!(s.range_scale >= 0.0)) throw InvalidSpec("range_scale must be >= 0");
  std::set<std::string> seen;
  for (const auto& t : s.omega_star.tickers)
    if (!seen.insert(t).second) throw InvalidSpec("duplicate ticker " + t);
  detail::psd_cholesky(s.phi_star);
}

/// Draws f ~ N(0, Phi*) and chi ~ N(0, Xi*) per date, R = Omega f + chi, and
/// prices P = P0 exp(cumulated R). Dates are consecutive weekdays; M returns
/// need M + 1 price dates.
inline SynthMarket generate_market(const SynthSpec& spec) {
  validate(spec);
  const std::size_t N = spec.N, K = spec.K, M = spec.M;
  const Matrix L = detail::psd_cholesky(spec.phi_star);
  const auto& tickers = spec.omega_star.tickers;

  // chronological index c = 0..M-1 maps to recent-first row M-1-c
  Matrix f(M, K);
  const NormalStream fs(spec.seed, "#factors");
  for (std::size_t c = 0; c < M; ++c) {
    Vector z(K);
    for (std::size_t a = 0; a < K; ++a) z[a] = fs.normal(c, a);
    for (std::size_t a = 0; a < K; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b <= a; ++b) s += L(a, b) * z[b];
      f(M - 1 - c, a) = s;
    }
  }

  SynthMarket out;
  auto& h = out.history;
  const auto chrono_dates = detail::business_days(spec.start_date, M + 1);
  h.dates.assign(chrono_dates.rbegin(), chrono_dates.rend());
  h.tickers = tickers;
  h.close = Matrix(M + 1, N);
  h.volume = Matrix(M + 1, N);
  h.high = Matrix(M + 1, N);
  h.low = Matrix(M + 1, N);
  h.cap = Matrix(M + 1, N);
  h.is_adr.assign(N, false);

  out.returns.dates.assign(h.dates.begin(), h.dates.end() - 1);
  out.returns.tickers = tickers;
  out.returns.returns = Matrix(M, N);
  Matrix chi(M, N);

  for (std::size_t i = 0; i < N; ++i) {
    const NormalStream s(spec.seed, tickers[i]);
    const double shares = std::exp(spec.log_shares_mean + spec.log_shares_sd * s.normal(0, 1u << 20));
    const double vol_level = spec.log_volume_mean + spec.log_volume_sd * s.normal(0, (1u << 20) + 1);
    double log_price = std::log(spec.price_level);
    for (std::size_t c = 0; c <= M; ++c) {
      // c = 0 is the initial price date; returns start at c = 1
      const auto q = s.quad(c, 0);
      if (c > 0) {
        const std::size_t row = M - c;
        double r = spec.xi_star[i] * q[0];
        chi(row, i) = r;
        for (std::size_t a = 0; a < K; ++a) r += spec.omega_star.omega(i, a) * f(row, a);
        out.returns.returns(row, i) = r;
        log_price += r;
      }
      const std::size_t prow = M - c;
      const double close = std::exp(log_price);
      h.close(prow, i) = close;
      h.high(prow, i) = close * std::exp(spec.range_scale * std::abs(q[1]));
      h.low(prow, i) = close * std::exp(-spec.range_scale * std::abs(q[2]));
      h.volume(prow, i) = std::round(std::exp(vol_level + 0.25 * q[3]));
      h.cap(prow, i) = shares * close;
    }
  }
  h.adjusted_close = h.close;

  out.truth = {spec.phi_star, spec.xi_star, spec.omega_star, std::move(f), std::move(chi)};
  return out;
}

struct RandomSpecOptions {
  double factor_vol = 0.015;
  std::optional<double> market_vol;  // volatility of the market column, factor_vol if unset
  double factor_corr = 0.2;  // off-diagonal correlation between factor returns
  double xi_low = 0.01, xi_high = 0.02;
  bool market_column = true;  // first column all ones
};

/// A reproducible random specification: tickers T0000.., a market column plus
/// standard-normal style columns, equicorrelated factor returns and uniform
/// idiosyncratic volatilities.
inline SynthSpec random_spec(std::size_t N, std::size_t K, std::size_t M, std::uint64_t seed,
                             const RandomSpecOptions& o = {}) {
  if (N == 0 || M == 0) throw InvalidSpec("N and M must be positive");
  SynthSpec s;
  s.N = N;
  s.K = K;
  s.M = M;
  s.seed = seed;
  const NormalStream gen(seed, "#spec");
  s.omega_star.omega = Matrix(N, K);
  for (std::size_t i = 0; i < N; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "T%04zu", i);
    s.omega_star.tickers.emplace_back(buf);
    for (std::size_t a = 0; a < K; ++a)
      s.omega_star.omega(i, a) = (o.market_column && a == 0) ? 1.0 : gen.normal(i, a);
    s.xi_star.push_back(o.xi_low + (o.xi_high - o.xi_low) * gen.uniform(i));
  }
  for (std::size_t a = 0; a < K; ++a) {
    ColumnMeta c;
    c.name = (o.market_column && a == 0) ? "market" : "style" + std::to_string(a);
    c.kind = (o.market_column && a == 0) ? ColumnKind::intercept : ColumnKind::style;
    s.omega_star.columns.push_back(c);
  }
  Vector vol(K, o.factor_vol);
  if (o.market_column && K > 0 && o.market_vol) vol[0] = *o.market_vol;
  Matrix phi(K, K);
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = 0; b < K; ++b) phi(a, b) = vol[a] * vol[b] * (a == b ? 1.0 : o.factor_corr);
  s.phi_star = SymMatrix(std::move(phi));
  return s;
}

/// Deterministic tree: ticker i falls in one of `sectors` sectors, two
/// sub-sectors each and two industries per sub-sector, cycling by index.
inline ClassificationTree synthetic_classification(const std::vector<std::string>& tickers, std::size_t sectors = 4) {
  if (sectors == 0) throw InvalidSpec("sectors must be positive");
  ClassificationTree tree;
  for (std::size_t i = 0; i < tickers.size(); ++i) {
    const std::size_t leaf = i % (sectors * 4);
    const std::string sec = "Sec" + std::to_string(leaf / 4);
    const std::string sub = sec + "Sub" + std::to_string((leaf / 2) % 2);
    const std::string ind = sub + "Ind" + std::to_string(leaf % 2);
    tree.assignment[tickers[i]] = {Membership{sec, sub, ind, 1.0}};
  }
  return tree;
}

/// Writes a fixture directory readable by load_history / load_classification:
/// price panels, classification.csv, returns_panel.csv, signal.csv (most
/// recent return), candidate_noise.csv (pure noise column) and the truth
/// (phi_star.csv, xi_star.csv, omega_star.csv).
inline void write_fixture(const SynthMarket& mkt, const ClassificationTree& tree, std::uint64_t seed,
                          const std::filesystem::path& dir) {
  save_history(mkt.history, dir);
  save_classification(tree, dir / "classification.csv");
  save_returns(mkt.returns, dir / "returns_panel.csv");

  const auto& tk = mkt.returns.tickers;
  std::string sig = "ticker,value\n", cand = "ticker,value\n", xi = "ticker,value\n";
  const NormalStream noise(seed, "#candidate");
  for (std::size_t i = 0; i < tk.size(); ++i) {
    sig += tk[i] + "," + io::format_number(mkt.returns.returns(0, i)) + "\n";
    cand += tk[i] + "," + io::format_number(noise.normal(fnv1a64(tk[i]))) + "\n";
    xi += tk[i] + "," + io::format_number(mkt.truth.xi_star[i]) + "\n";
  }
  io::write_file_atomic(dir / "signal.csv", sig);
  io::write_file_atomic(dir / "candidate_noise.csv", cand);
  io::write_file_atomic(dir / "xi_star.csv", xi);

  const auto names = mkt.truth.omega_star.names();
  std::string phi = "factor";
  for (const auto& n : names) phi += "," + n;
  phi += "\n";
  for (std::size_t a = 0; a < names.size(); ++a) {
    phi += names[a];
    for (std::size_t b = 0; b < names.size(); ++b) phi += "," + io::format_number(mkt.truth.phi_star(a, b));
    phi += "\n";
  }
  io::write_file_atomic(dir / "phi_star.csv", phi);
  save_loadings(mkt.truth.omega_star, dir, mkt.history.dates.front(), "omega_star");
}

}  // namespace crm
