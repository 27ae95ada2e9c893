#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "crm/error.hpp"
#include "crm/factors.hpp"
#include "crm/io.hpp"
#include "crm/matquad.hpp"
#include "crm/matrix.hpp"
#include "crm/regression.hpp"
#include "crm/stats.hpp"
#include "crm/universe.hpp"

namespace crm {

enum class ReturnKind { close_to_close, overnight };

/// Per-period log returns; rows are dates (row 0 most recent), columns
/// tickers. Missing prices give missing returns.
struct ReturnsPanel {
  std::vector<std::string> dates;
  std::vector<std::string> tickers;
  Matrix returns;

  std::size_t periods() const noexcept { return dates.size(); }
  std::size_t size() const noexcept { return tickers.size(); }

  /// Most recent `window` periods (all when window is 0 or too large).
  ReturnsPanel recent(std::size_t window) const {
    if (window == 0 || window >= periods()) return *this;
    ReturnsPanel out{{dates.begin(), dates.begin() + static_cast<long>(window)}, tickers,
                     Matrix(window, size())};
    for (std::size_t t = 0; t < window; ++t)
      for (std::size_t i = 0; i < size(); ++i) out.returns(t, i) = returns(t, i);
    return out;
  }

  /// Columns reordered to `order`; every name must be present.
  ReturnsPanel aligned(const std::vector<std::string>& order) const {
    if (order == tickers) return *this;
    ReturnsPanel out{dates, order, Matrix(periods(), order.size())};
    for (std::size_t k = 0; k < order.size(); ++k) {
      auto it = std::find(tickers.begin(), tickers.end(), order[k]);
      if (it == tickers.end()) throw AlignmentError("returns panel has no column for " + order[k]);
      const auto j = static_cast<std::size_t>(it - tickers.begin());
      for (std::size_t t = 0; t < periods(); ++t) out.returns(t, k) = returns(t, j);
    }
    return out;
  }
};

/// close_to_close: ln(P_t / P_{t-1}) on adjusted closes.
/// overnight: ln(open_t / adjusted close_{t-1}); needs the open panel.
inline ReturnsPanel compute_returns(const MarketHistory& h, const Universe& u,
                                    ReturnKind kind = ReturnKind::close_to_close) {
  if (h.depth() < 2) throw InsufficientHistory("returns need at least 2 dates");
  if (kind == ReturnKind::overnight && !h.has_open())
    throw InsufficientHistory("overnight returns need an open-price panel");
  const auto idx = universe_columns(h, u);
  ReturnsPanel p{{h.dates.begin(), h.dates.end() - 1}, u.tickers, Matrix(h.depth() - 1, idx.size())};
  for (std::size_t t = 0; t + 1 < h.depth(); ++t)
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double now = kind == ReturnKind::overnight ? h.open(t, idx[k]) : h.adjusted_close(t, idx[k]);
      const double prev = h.adjusted_close(t + 1, idx[k]);
      p.returns(t, k) = (now > 0.0 && prev > 0.0) ? std::log(now / prev) : kMissing;
    }
  return p;
}

inline void save_returns(const ReturnsPanel& p, const std::filesystem::path& path) {
  std::string out = "date";
  for (const auto& t : p.tickers) out += "," + t;
  out += "\n";
  for (std::size_t r = p.periods(); r-- > 0;) {
    out += p.dates[r];
    for (std::size_t i = 0; i < p.size(); ++i) out += "," + io::format_number(p.returns(r, i));
    out += "\n";
  }
  io::write_file_atomic(path, out);
}

inline ReturnsPanel load_returns(const std::filesystem::path& path) {
  auto raw = detail::read_panel(path);
  ReturnsPanel p;
  p.tickers = raw.tickers;
  p.dates.assign(raw.dates.rbegin(), raw.dates.rend());
  p.returns = detail::to_recent_first(raw, raw, path.filename().string());
  return p;
}

struct FactorReturnFit {
  Matrix factor_returns;                 // periods x K, missing rows at singular dates
  Matrix residuals;                      // periods x N
  std::vector<std::size_t> singular_dates;
};

/// Per-date weighted cross-sectional regression of returns on the loadings.
/// Stocks with a missing return sit out that date; a date whose Q = Omega^T Z
/// Omega is singular gets missing factor returns and is recorded.
/// Empty `weights` means unit weights.
inline FactorReturnFit estimate_factor_returns(const ReturnsPanel& panel, const FactorLoadings& omega,
                                               std::span<const double> weights = {}) {
  if (panel.tickers != omega.tickers) throw AlignmentError("returns panel and loadings tickers differ");
  if (!weights.empty() && weights.size() != omega.n()) throw DimensionMismatch("weights length");
  for (double w : weights)
    if (!(w > 0.0)) throw NonPositiveWeight("regression weights must be positive");
  const std::size_t T = panel.periods(), N = omega.n(), K = omega.k();
  FactorReturnFit fit{Matrix(T, K, kMissing), Matrix(T, N, kMissing), {}};
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < N; ++i)
      if (!is_missing(panel.returns(t, i))) rows.push_back(i);
    Matrix x(rows.size(), K);
    Vector y(rows.size()), z;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t a = 0; a < K; ++a) x(r, a) = omega.omega(rows[r], a);
      y[r] = panel.returns(t, rows[r]);
      if (!weights.empty()) z.push_back(weights[rows[r]]);
    }
    try {
      if (rows.size() < K) throw NotPositiveDefinite("fewer stocks than factors");
      const WeightedFit f = weighted_least_squares(x, z, y);
      for (std::size_t a = 0; a < K; ++a) fit.factor_returns(t, a) = f.coef[a];
      for (std::size_t r = 0; r < rows.size(); ++r) fit.residuals(t, rows[r]) = f.residuals[r];
    } catch (const NotPositiveDefinite&) {
      fit.singular_dates.push_back(t);
    }
  }
  return fit;
}

struct ModelMeta {
  std::string as_of;          // most recent return date in the window
  std::size_t periods = 0;    // dates in the estimation window
  std::size_t usable_periods = 0;
  std::string frequency = "native";
  double floor_fraction = 0.05;
  double shrink_q = 1.0;      // Phi = q * sample FCM
  double diag_loading = 0.0;  // added to the sample FCM diagonal, 0 if none
  std::string method = "sample-fcm+scalar-shrink+variance-floor";
};

/// Factor risk model: loadings Omega, factor covariance Phi (per period) and
/// specific risk xi (per-period volatility). Gamma = diag(xi^2) + Omega Phi Omega^T
/// is never materialized.
struct RiskModel {
  Universe universe;
  FactorLoadings omega;
  SymMatrix phi;
  Vector xi;
  Vector raw_isr;  // residual variances before the self-consistency repair
  ModelMeta meta;

  std::size_t n() const noexcept { return omega.n(); }
  std::size_t k() const noexcept { return omega.k(); }

  /// Gamma_ii = xi_i^2 + (Omega Phi Omega^T)_ii.
  double total_variance(std::size_t i) const {
    double s = xi[i] * xi[i];
    const auto r = omega.omega.row(i);
    for (std::size_t a = 0; a < k(); ++a)
      for (std::size_t b = 0; b < k(); ++b) s += r[a] * phi(a, b) * r[b];
    return s;
  }
};

/// Checks Phi SPD, xi > 0, K < N and every Gamma_ii > 0.
inline void validate(const RiskModel& m) {
  if (m.xi.size() != m.n()) throw DimensionMismatch("xi length vs loadings rows");
  if (m.phi.size() != m.k()) throw DimensionMismatch("phi size vs loadings columns");
  if (m.k() >= m.n() && m.k() > 0) throw ValidationError("risk model needs K < N");
  for (std::size_t i = 0; i < m.n(); ++i)
    if (!(m.xi[i] > 0.0) || !std::isfinite(m.xi[i]))
      throw ValidationError("specific risk of " + m.omega.tickers[i] + " is not positive");
  if (m.k() > 0) spd_invert(m.phi);
  for (std::size_t i = 0; i < m.n(); ++i)
    if (!(m.total_variance(i) > 0.0)) throw ValidationError("non-positive model variance");
}

struct EstimationOptions {
  double floor_fraction = 0.05;
  double diag_loading = 1e-6;  // relative to tr(Phi) / K, used only if needed
};

/// Self-consistent factor covariance and specific risk:
///  1. unit-weight factor-return regressions per date;
///  2. Phi0 = sample covariance of the factor returns (diagonally loaded by
///     1e-6 tr(Phi0)/K if singular);
///  3. per stock, d_i = var(R_i) - (Omega Phi0 Omega^T)_ii;
///  4. Phi = q Phi0 with the largest q in (0, 1] keeping every d_i at or above
///     floor_fraction * var(R_i);
///  5. xi_i^2 = var(R_i) - q (Omega Phi0 Omega^T)_ii.
/// Model variance therefore reproduces each stock's sample variance.
inline RiskModel estimate_fcm_isr(const ReturnsPanel& panel, const FactorLoadings& omega,
                                  const EstimationOptions& opt = {}) {
  if (panel.tickers != omega.tickers) throw AlignmentError("returns panel and loadings tickers differ");
  const std::size_t T = panel.periods(), N = omega.n(), K = omega.k();
  if (K > 0 && K >= N) throw RankDeficientOmega(std::to_string(K) + " factors for " + std::to_string(N) + " stocks");
  if (K > 0) {
    try {
      weighted_least_squares(omega.omega, {}, Vector(N, 0.0));
    } catch (const NotPositiveDefinite&) {
      throw RankDeficientOmega("loadings are not of full column rank");
    }
  }

  const FactorReturnFit fit = estimate_factor_returns(panel, omega);
  std::vector<bool> usable(T, true);
  for (auto t : fit.singular_dates) usable[t] = false;
  std::vector<std::size_t> dates;
  for (std::size_t t = 0; t < T; ++t)
    if (usable[t]) dates.push_back(t);
  const std::size_t min_obs = K + 2;
  if (dates.size() < std::max<std::size_t>(min_obs, 2))
    throw WindowTooShort(std::to_string(dates.size()) + " usable dates, need " + std::to_string(min_obs));

  RiskModel m;
  m.omega = omega;
  m.universe.tickers = omega.tickers;
  m.universe.selection_date = panel.dates.empty() ? std::string{} : panel.dates.front();
  m.meta.as_of = m.universe.selection_date;
  m.meta.periods = T;
  m.meta.usable_periods = dates.size();
  m.meta.floor_fraction = opt.floor_fraction;

  Matrix phi0(K, K);
  if (K > 0) {
    Vector mu(K, 0.0);
    for (auto t : dates)
      for (std::size_t a = 0; a < K; ++a) mu[a] += fit.factor_returns(t, a);
    for (auto& v : mu) v /= static_cast<double>(dates.size());
    for (std::size_t a = 0; a < K; ++a)
      for (std::size_t b = a; b < K; ++b) {
        double s = 0.0;
        for (auto t : dates) s += (fit.factor_returns(t, a) - mu[a]) * (fit.factor_returns(t, b) - mu[b]);
        phi0(a, b) = phi0(b, a) = s / static_cast<double>(dates.size() - 1);
      }
    try {
      spd_invert(SymMatrix(phi0));
    } catch (const NotPositiveDefinite&) {
      double tr = 0.0;
      for (std::size_t a = 0; a < K; ++a) tr += phi0(a, a);
      if (!(tr > 0.0)) throw NotPositiveDefinite("factor returns have zero variance");
      m.meta.diag_loading = opt.diag_loading * tr / static_cast<double>(K);
      for (std::size_t a = 0; a < K; ++a) phi0(a, a) += m.meta.diag_loading;
      spd_invert(SymMatrix(phi0));
    }
  }

  Vector var(N), factor_var(N);
  m.raw_isr.assign(N, kMissing);
  for (std::size_t i = 0; i < N; ++i) {
    Vector r, e;
    for (auto t : dates)
      if (!is_missing(panel.returns(t, i))) {
        r.push_back(panel.returns(t, i));
        e.push_back(fit.residuals(t, i));
      }
    if (r.size() < std::max<std::size_t>(min_obs, 2))
      throw WindowTooShort(omega.tickers[i] + " has " + std::to_string(r.size()) + " observations, need " +
                           std::to_string(min_obs));
    var[i] = variance(r);
    m.raw_isr[i] = variance(e);
    double ms = 0.0;
    for (double v : r) ms += v * v;
    if (!(var[i] > 1e-24 * ms / static_cast<double>(r.size()))) throw DegenerateReturns(omega.tickers[i] + " has zero return variance");
    const auto w = omega.omega.row(i);
    double g = 0.0;
    for (std::size_t a = 0; a < K; ++a)
      for (std::size_t b = 0; b < K; ++b) g += w[a] * phi0(a, b) * w[b];
    factor_var[i] = g;
  }

  double q = 1.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double floor = opt.floor_fraction * var[i];
    if (factor_var[i] > 0.0 && var[i] - factor_var[i] < floor) q = std::min(q, (var[i] - floor) / factor_var[i]);
  }
  m.meta.shrink_q = q;
  Matrix phi = phi0;
  if (q != 1.0)
    for (auto& v : phi.data()) v *= q;
  m.phi = SymMatrix(std::move(phi));
  m.xi.resize(N);
  for (std::size_t i = 0; i < N; ++i) m.xi[i] = std::sqrt(var[i] - q * factor_var[i]);
  return m;
}

/// Re-estimates from scratch on the named subset of loadings columns.
inline RiskModel subset_factors(const ReturnsPanel& panel, const FactorLoadings& omega,
                                const std::set<std::string>& keep, const EstimationOptions& opt = {}) {
  return estimate_fcm_isr(panel, omega.select(keep), opt);
}

/// What to build: style factors with their lookbacks, industry pruning,
/// intercept, return kind and estimation window.
struct ModelRecipe {
  bool momentum = true;
  bool liquidity = true;
  bool size = true;
  bool intraday_vol = true;
  bool industries = true;
  bool intercept = false;
  MomentumParams momentum_params{};
  std::size_t d_addv = 20;
  std::size_t style_days = 252;
  std::size_t min_industry_size = 10;
  ReturnKind returns = ReturnKind::close_to_close;
  std::size_t window = 0;  // most recent periods used for estimation, 0 = all
  EstimationOptions estimation{};

  io::KeyValues describe() const {
    io::KeyValues kv;
    std::string f;
    for (auto [on, name] : {std::pair{momentum, "momentum"}, {liquidity, "liquidity"}, {size, "size"},
                            {intraday_vol, "intraday_vol"}})
      if (on) f += (f.empty() ? "" : ",") + std::string(name);
    kv["recipe.factors"] = f;
    kv["recipe.industries"] = industries ? "true" : "false";
    kv["recipe.intercept"] = intercept ? "true" : "false";
    kv["recipe.d_r"] = std::to_string(momentum_params.d_r);
    kv["recipe.momentum_days"] = std::to_string(momentum_params.days);
    kv["recipe.back"] = std::to_string(momentum_params.back);
    kv["recipe.d_addv"] = std::to_string(d_addv);
    kv["recipe.days"] = std::to_string(style_days);
    kv["recipe.min_industry_size"] = std::to_string(min_industry_size);
    kv["recipe.returns"] = returns == ReturnKind::overnight ? "overnight" : "close_to_close";
    kv["recipe.window"] = std::to_string(window);
    return kv;
  }
};

/// Builds loadings on `u` (style factors normalized over u, industries pruned
/// over u) and estimates FCM/ISR on u's returns.
inline RiskModel build_model(const MarketHistory& h, const ClassificationTree& tree, const ModelRecipe& recipe,
                             const Universe& u) {
  std::vector<StyleColumn> styles;
  if (recipe.momentum) styles.push_back(momentum_factor(h, u, recipe.momentum_params));
  if (recipe.liquidity) styles.push_back(liquidity_factor(h, u, recipe.d_addv));
  if (recipe.size) styles.push_back(size_factor(h, u, recipe.style_days));
  if (recipe.intraday_vol) styles.push_back(intraday_vol_factor(h, u, recipe.style_days));
  FactorLoadings industry;
  if (recipe.industries) {
    industry = build_industry_loadings(tree, u, recipe.min_industry_size);
  } else {
    industry.tickers = u.tickers;
    industry.omega = Matrix(u.size(), 0);
  }
  const FactorLoadings flm = assemble_flm(styles, industry, recipe.intercept);
  const ReturnsPanel panel = compute_returns(h, u, recipe.returns).recent(recipe.window);
  RiskModel m = estimate_fcm_isr(panel, flm, recipe.estimation);
  m.universe = u;
  return m;
}

/// Custom model for a sub-universe: everything is rebuilt on `sub`.
inline RiskModel restrict_universe(const MarketHistory& h, const ClassificationTree& tree,
                                   const ModelRecipe& recipe, const Universe& sub) {
  universe_columns(h, sub);
  return build_model(h, tree, recipe, sub);
}

/// sqrt(D^T Gamma D) via sum xi^2 D^2 + (Omega^T D)^T Phi (Omega^T D).
inline double total_risk(const RiskModel& m, std::span<const double> holdings) {
  if (holdings.size() != m.n())
    throw DimensionMismatch("holdings length " + std::to_string(holdings.size()) + " vs N " +
                            std::to_string(m.n()));
  double s = 0.0;
  for (std::size_t i = 0; i < m.n(); ++i) s += m.xi[i] * m.xi[i] * holdings[i] * holdings[i];
  if (m.k() > 0) {
    const Vector e = transpose_times(m.omega.omega, holdings);
    const Vector pe = m.phi.matrix() * e;
    s += dot(e, pe);
  }
  return std::sqrt(s);
}

/// Model directory: omega.csv/.meta, phi.csv, xi.csv, meta.txt.
inline void save_model(const RiskModel& m, const std::filesystem::path& dir, const io::KeyValues& extra = {}) {
  save_loadings(m.omega, dir, m.meta.as_of);
  std::string phi = "factor";
  for (const auto& c : m.omega.columns) phi += "," + c.name;
  phi += "\n";
  for (std::size_t a = 0; a < m.k(); ++a) {
    phi += m.omega.columns[a].name;
    for (std::size_t b = 0; b < m.k(); ++b) phi += "," + io::format_number(m.phi(a, b));
    phi += "\n";
  }
  io::write_file_atomic(dir / "phi.csv", phi);
  std::string xi = "ticker,value\n";
  for (std::size_t i = 0; i < m.n(); ++i) xi += m.omega.tickers[i] + "," + io::format_number(m.xi[i]) + "\n";
  io::write_file_atomic(dir / "xi.csv", xi);

  io::KeyValues kv = extra;
  kv["as_of"] = m.meta.as_of;
  kv["periods"] = std::to_string(m.meta.periods);
  kv["usable_periods"] = std::to_string(m.meta.usable_periods);
  kv["frequency"] = m.meta.frequency;
  kv["floor_fraction"] = io::format_number(m.meta.floor_fraction);
  kv["shrink_q"] = io::format_number(m.meta.shrink_q);
  kv["diag_loading"] = io::format_number(m.meta.diag_loading);
  kv["method"] = m.meta.method;
  kv["universe_date"] = m.universe.selection_date;
  kv["n"] = std::to_string(m.n());
  kv["k"] = std::to_string(m.k());
  io::write_file_atomic(dir / "meta.txt", io::format_key_values(kv));
}

inline RiskModel load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("model directory " + dir.string() + " does not exist");
  RiskModel m;
  m.omega = load_loadings(dir / "omega.csv");
  m.universe.tickers = m.omega.tickers;

  io::CsvTable p = io::read_csv(dir / "phi.csv");
  const std::size_t K = m.omega.k();
  if (p.header.size() != K + 1 || p.rows.size() != K) throw SchemaError("phi.csv is not " + std::to_string(K) + "x" + std::to_string(K));
  Matrix phi(K, K);
  for (std::size_t a = 0; a < K; ++a) {
    if (p.header[a + 1] != m.omega.columns[a].name || p.rows[a][0] != m.omega.columns[a].name)
      throw SchemaError("phi.csv factor names differ from omega.csv");
    for (std::size_t b = 0; b < K; ++b) phi(a, b) = io::parse_number(p.rows[a][b + 1], "phi.csv");
  }
  m.phi = SymMatrix(std::move(phi));

  io::CsvTable x = io::read_csv(dir / "xi.csv");
  if (x.rows.size() != m.n()) throw SchemaError("xi.csv row count differs from omega.csv");
  m.xi.resize(m.n());
  for (std::size_t i = 0; i < m.n(); ++i) {
    if (x.rows[i][0] != m.omega.tickers[i]) throw SchemaError("xi.csv tickers differ from omega.csv");
    m.xi[i] = io::parse_number(x.rows[i][1], "xi.csv");
  }

  if (std::filesystem::exists(dir / "meta.txt")) {
    auto kv = io::parse_key_values(io::read_text(dir / "meta.txt"), "meta.txt");
    m.meta.as_of = kv["as_of"];
    m.universe.selection_date = kv["universe_date"];
    if (kv.count("shrink_q")) m.meta.shrink_q = io::parse_number(kv["shrink_q"], "meta.txt");
    if (kv.count("floor_fraction")) m.meta.floor_fraction = io::parse_number(kv["floor_fraction"], "meta.txt");
    if (kv.count("diag_loading")) m.meta.diag_loading = io::parse_number(kv["diag_loading"], "meta.txt");
    if (kv.count("frequency")) m.meta.frequency = kv["frequency"];
  }
  validate(m);
  return m;
}

}  // namespace crm
