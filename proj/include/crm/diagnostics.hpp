#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crm/error.hpp"
#include "crm/factors.hpp"
#include "crm/io.hpp"
#include "crm/matrix.hpp"
#include "crm/regression.hpp"
#include "crm/riskmodel.hpp"
#include "crm/stats.hpp"
#include "crm/universe.hpp"

namespace crm {

// ---------------------------------------------------------------------------
// Horizon decoupling

/// Window of M periods whose pairwise return correlations are
/// eta_s = eta_tilde_s * lambda^s at lag s.
struct DecouplingSpec {
  std::size_t M = 1;
  double lambda = 0.0;
  Vector eta_tilde;  // lags 1..M-1; empty means all ones

  Vector weights() const { return eta_tilde.empty() ? Vector(M > 0 ? M - 1 : 0, 1.0) : eta_tilde; }
};

inline void validate(const DecouplingSpec& s) {
  if (s.M < 1) throw ValidationError("decoupling window M must be >= 1");
  if (!(s.lambda >= 0.0 && s.lambda < 1.0)) throw ValidationError("lambda must lie in [0, 1)");
  if (!s.eta_tilde.empty() && s.eta_tilde.size() != s.M - 1)
    throw DimensionMismatch("eta_tilde needs M - 1 = " + std::to_string(s.M - 1) + " entries");
  for (double e : s.eta_tilde)
    if (!(std::abs(e) <= 1.0)) throw ValidationError("|eta_tilde| must be <= 1");
}

struct DecouplingResult {
  double rho_M = 0.0;
  double bound = 0.0;        // 1 / ((1 - lambda) sqrt(M))
  double f = 0.0;            // sum_s eta_tilde_s lambda^s
  double f_prime = 0.0;      // df / dlambda
  double variance_term = 0.0;  // M (1 + 2 f) - 2 lambda f'
};

/// Correlation between the last period's return and the M-period return:
/// rho_M = (1 + f) / sqrt(M (1 + 2f) - 2 lambda f'). A non-positive variance
/// term signals an essentially deterministic process and is raised, not clamped.
inline DecouplingResult decoupling_analytic(const DecouplingSpec& spec) {
  validate(spec);
  const Vector eta = spec.weights();
  const double lam = spec.lambda;
  DecouplingResult r;
  for (std::size_t s = 1; s < spec.M; ++s) {
    r.f += eta[s - 1] * std::pow(lam, static_cast<double>(s));
    r.f_prime += static_cast<double>(s) * eta[s - 1] * std::pow(lam, static_cast<double>(s - 1));
  }
  const double M = static_cast<double>(spec.M);
  r.variance_term = M * (1.0 + 2.0 * r.f) - 2.0 * lam * r.f_prime;
  if (!(r.variance_term > 0.0))
    throw NonPositiveVariance("M(1 + 2f) - 2 lambda f' = " + io::format_number(r.variance_term));
  r.rho_M = (1.0 + r.f) / std::sqrt(r.variance_term);
  r.bound = 1.0 / ((1.0 - lam) * std::sqrt(M));
  return r;
}

struct EmpiricalDecoupling {
  double rho = 0.0;
  std::size_t p = 0;            // rolling windows
  double effective_n = 0.0;     // p / M, overlap-adjusted
  double fisher_se = 0.0;       // standard error of atanh(rho)
  bool enough_windows = false;  // p >= 30 M

  /// |atanh(rho) - atanh(reference)| <= k * fisher_se.
  bool consistent_with(double reference, double k = 3.0) const {
    return std::abs(std::atanh(rho) - std::atanh(reference)) <= k * fisher_se;
  }
};

/// Sample correlation, over all p = L - M + 1 overlapping windows, between
/// the last return of each window and the window's summed return.
/// `series` is in chronological order.
inline EmpiricalDecoupling decoupling_empirical(std::span<const double> series, std::size_t M) {
  if (M < 1) throw ValidationError("M must be >= 1");
  if (series.size() < M + 30)
    throw InsufficientHistory("series of " + std::to_string(series.size()) + " needs at least M + 30 = " +
                              std::to_string(M + 30));
  for (double v : series)
    if (!std::isfinite(v)) throw ValidationError("series must be finite");
  const std::size_t p = series.size() - M + 1;
  Vector last(p), total(p);
  double window = 0.0;
  for (std::size_t r = 0; r < M; ++r) window += series[r];
  for (std::size_t a = 0; a < p; ++a) {
    if (a > 0) window += series[a + M - 1] - series[a - 1];
    last[a] = series[a + M - 1];
    total[a] = window;
  }
  if (M == 1) total = last;  // identical series, exact
  EmpiricalDecoupling e;
  e.rho = correlation(last, total);
  e.p = p;
  e.effective_n = static_cast<double>(p) / static_cast<double>(M);
  e.fisher_se = e.effective_n > 3.0 ? 1.0 / std::sqrt(e.effective_n - 3.0) : INFINITY;
  e.enough_windows = p >= 30 * M;
  return e;
}

// ---------------------------------------------------------------------------
// Factor value-add testing

struct RegressionSummary {
  double f_statistic = 0.0;
  Vector coef;
  Vector t_values;
  std::size_t n_obs = 0;
};

struct FactorTestOptions {
  std::string candidate_name = "candidate";
  bool winsorize = false;
  double winsor_mads = 5.0;
  double annualization = 252.0;
};

struct FactorTestReport {
  std::vector<std::string> benchmark_names;
  std::string candidate_name;

  RegressionSummary pooled_benchmark;
  RegressionSummary pooled_augmented;

  double median_f_benchmark = kMissing;
  double median_f_augmented = kMissing;
  Vector median_t_benchmark;
  Vector median_t_augmented;
  std::size_t usable_dates = 0;
  std::size_t dropped_dates = 0;

  // Annualized mean/sd of each per-date coefficient series; nullopt when the
  // series has zero dispersion and nonzero mean.
  std::vector<std::optional<double>> fm_t_benchmark;
  std::vector<std::optional<double>> fm_t_augmented;

  bool candidate_improves_pooled_f() const {
    return pooled_augmented.f_statistic > pooled_benchmark.f_statistic;
  }
  std::optional<double> candidate_fm_t() const { return fm_t_augmented.back(); }
};

namespace detail {

inline std::optional<double> fama_macbeth_t(std::span<const double> series, double annualization) {
  const double m = mean(series);
  if (m == 0.0) return 0.0;
  const double v = variance(series);
  if (is_missing(v) || !(v > 0.0)) return std::nullopt;
  return m / std::sqrt(v) * std::sqrt(annualization);
}

inline RegressionSummary summarize(const OlsResult& r) {
  return {r.f_statistic, r.coef, r.t_values, r.n_obs};
}

}  // namespace detail

/// Tests whether a candidate column adds explanatory power over benchmark
/// loadings, three ways: pooled (s, i) regressions, per-date regressions
/// summarized by medians, and per-date coefficient series t-statistics.
/// Both regressions use the same observations (returns and candidate present).
/// `candidate` is periods x N, or 1 x N for a time-invariant column.
inline FactorTestReport factor_value_test(const ReturnsPanel& panel, const FactorLoadings& benchmark,
                                          const Matrix& candidate, const FactorTestOptions& opt = {}) {
  if (panel.tickers != benchmark.tickers) throw AlignmentError("returns panel and benchmark tickers differ");
  const std::size_t T = panel.periods(), N = benchmark.n(), K = benchmark.k();
  if (candidate.cols() != N || (candidate.rows() != 1 && candidate.rows() != T))
    throw AlignmentError("candidate must be 1 x N or periods x N");
  if (K == 0) throw ValidationError("benchmark needs at least one column");
  auto cand = [&](std::size_t t, std::size_t i) { return candidate(candidate.rows() == 1 ? 0 : t, i); };

  Matrix R = panel.returns;
  if (opt.winsorize)
    for (std::size_t t = 0; t < T; ++t) {
      const double med = median(R.row(t)), s = mad(R.row(t));
      if (is_missing(med) || is_missing(s)) continue;
      for (auto& v : R.row(t))
        if (!is_missing(v)) v = std::clamp(v, med - opt.winsor_mads * s, med + opt.winsor_mads * s);
    }

  FactorTestReport rep;
  rep.benchmark_names = benchmark.names();
  rep.candidate_name = opt.candidate_name;

  auto design = [&](const std::vector<std::pair<std::size_t, std::size_t>>& obs, bool augmented) {
    Matrix x(obs.size(), K + (augmented ? 1 : 0));
    Vector y(obs.size());
    for (std::size_t r = 0; r < obs.size(); ++r) {
      const auto [t, i] = obs[r];
      for (std::size_t a = 0; a < K; ++a) x(r, a) = benchmark.omega(i, a);
      if (augmented) x(r, K) = cand(t, i);
      y[r] = R(t, i);
    }
    return std::pair{std::move(x), std::move(y)};
  };

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> per_date(T);
  std::vector<std::pair<std::size_t, std::size_t>> pooled;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < N; ++i)
      if (!is_missing(R(t, i)) && !is_missing(cand(t, i))) {
        per_date[t].push_back({t, i});
        pooled.push_back({t, i});
      }

  {
    auto [xb, yb] = design(pooled, false);
    rep.pooled_benchmark = detail::summarize(ols_no_intercept(xb, yb));
    auto [xa, ya] = design(pooled, true);
    try {
      rep.pooled_augmented = detail::summarize(ols_no_intercept(xa, ya));
    } catch (const SingularDesign& e) {
      throw SingularDesign("candidate '" + opt.candidate_name + "' is collinear with the benchmark (" + e.what() + ")");
    }
  }

  Vector fb, fa;
  std::vector<Vector> tb(K), ta(K + 1), cb(K), ca(K + 1);
  for (std::size_t t = 0; t < T; ++t) {
    try {
      auto [xb, yb] = design(per_date[t], false);
      auto [xa, ya] = design(per_date[t], true);
      const OlsResult rb = ols_no_intercept(xb, yb);
      const OlsResult ra = ols_no_intercept(xa, ya);
      fb.push_back(rb.f_statistic);
      fa.push_back(ra.f_statistic);
      for (std::size_t a = 0; a < K; ++a) {
        tb[a].push_back(rb.t_values[a]);
        cb[a].push_back(rb.coef[a]);
      }
      for (std::size_t a = 0; a <= K; ++a) {
        ta[a].push_back(ra.t_values[a]);
        ca[a].push_back(ra.coef[a]);
      }
    } catch (const SingularDesign&) {
      ++rep.dropped_dates;
    }
  }
  rep.usable_dates = fb.size();
  if (!fb.empty()) {
    rep.median_f_benchmark = median(fb);
    rep.median_f_augmented = median(fa);
  }
  for (std::size_t a = 0; a < K; ++a) {
    rep.median_t_benchmark.push_back(median(tb[a]));
    rep.fm_t_benchmark.push_back(detail::fama_macbeth_t(cb[a], opt.annualization));
  }
  for (std::size_t a = 0; a <= K; ++a) {
    rep.median_t_augmented.push_back(median(ta[a]));
    rep.fm_t_augmented.push_back(detail::fama_macbeth_t(ca[a], opt.annualization));
  }
  return rep;
}

inline FactorTestReport factor_value_test(const ReturnsPanel& panel, const FactorLoadings& benchmark,
                                          std::span<const double> candidate, const FactorTestOptions& opt = {}) {
  Matrix c(1, candidate.size());
  for (std::size_t i = 0; i < candidate.size(); ++i) c(0, i) = candidate[i];
  return factor_value_test(panel, benchmark, c, opt);
}

namespace detail {

inline std::string fixed(double v, int prec = 2) {
  if (is_missing(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

inline std::string opt_fixed(const std::optional<double>& v) { return v ? fixed(*v) : "undef"; }

inline std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

}  // namespace detail

/// Aligned plain-text table: one column per regression, rows F then t per factor.
inline std::string format_text(const FactorTestReport& r) {
  using detail::fixed;
  using detail::pad;
  const std::size_t K = r.benchmark_names.size();
  std::vector<std::string> labels{"F", "n_obs"};
  for (const auto& n : r.benchmark_names) labels.push_back("t:" + n);
  labels.push_back("t:" + r.candidate_name);
  std::size_t w = 8;
  for (const auto& l : labels) w = std::max(w, l.size() + 2);
  const std::size_t cw = 14;

  std::string out;
  auto header = [&](const std::string& title) {
    out += title + "\n" + pad("Reg:", w) + pad("benchmark", cw) + pad("+" + r.candidate_name, cw) + "\n";
  };
  auto row = [&](const std::string& label, const std::string& b, const std::string& a) {
    out += pad(label, w) + pad(b, cw) + pad(a, cw) + "\n";
  };

  header("Pooled regressions");
  row("F", fixed(r.pooled_benchmark.f_statistic), fixed(r.pooled_augmented.f_statistic));
  row("n_obs", std::to_string(r.pooled_benchmark.n_obs), std::to_string(r.pooled_augmented.n_obs));
  for (std::size_t a = 0; a < K; ++a)
    row("t:" + r.benchmark_names[a], fixed(r.pooled_benchmark.t_values[a]), fixed(r.pooled_augmented.t_values[a]));
  row("t:" + r.candidate_name, "---", fixed(r.pooled_augmented.t_values[K]));
  out += "\n";

  header("Per-date regressions (medians over " + std::to_string(r.usable_dates) + " dates, " +
         std::to_string(r.dropped_dates) + " dropped)");
  row("F", fixed(r.median_f_benchmark), fixed(r.median_f_augmented));
  for (std::size_t a = 0; a < K; ++a)
    row("t:" + r.benchmark_names[a], fixed(r.median_t_benchmark[a]), fixed(r.median_t_augmented[a]));
  row("t:" + r.candidate_name, "---", fixed(r.median_t_augmented[K]));
  out += "\n";

  header("Factor-return series t-statistics (annualized)");
  for (std::size_t a = 0; a < K; ++a)
    row("t:" + r.benchmark_names[a], detail::opt_fixed(r.fm_t_benchmark[a]), detail::opt_fixed(r.fm_t_augmented[a]));
  row("t:" + r.candidate_name, "---", detail::opt_fixed(r.fm_t_augmented[K]));
  out += "\n";
  out += std::string("candidate_improves_pooled_F=") + (r.candidate_improves_pooled_f() ? "yes" : "no") + "\n";
  return out;
}

/// Long-format CSV: section,statistic,factor,benchmark,augmented.
inline std::string format_csv(const FactorTestReport& r) {
  const std::size_t K = r.benchmark_names.size();
  auto num = [](double v) { return io::format_number(v); };
  auto onum = [](const std::optional<double>& v) { return v ? io::format_number(*v) : std::string{}; };
  std::string out = "section,statistic,factor,benchmark,augmented\n";
  out += "pooled,F,," + num(r.pooled_benchmark.f_statistic) + "," + num(r.pooled_augmented.f_statistic) + "\n";
  out += "pooled,n_obs,," + std::to_string(r.pooled_benchmark.n_obs) + "," + std::to_string(r.pooled_augmented.n_obs) + "\n";
  for (std::size_t a = 0; a < K; ++a)
    out += "pooled,t," + r.benchmark_names[a] + "," + num(r.pooled_benchmark.t_values[a]) + "," +
           num(r.pooled_augmented.t_values[a]) + "\n";
  out += "pooled,t," + r.candidate_name + ",," + num(r.pooled_augmented.t_values[K]) + "\n";
  out += "per_date,median_F,," + num(r.median_f_benchmark) + "," + num(r.median_f_augmented) + "\n";
  out += "per_date,usable_dates,," + std::to_string(r.usable_dates) + "," + std::to_string(r.usable_dates) + "\n";
  out += "per_date,dropped_dates,," + std::to_string(r.dropped_dates) + "," + std::to_string(r.dropped_dates) + "\n";
  for (std::size_t a = 0; a < K; ++a)
    out += "per_date,median_t," + r.benchmark_names[a] + "," + num(r.median_t_benchmark[a]) + "," +
           num(r.median_t_augmented[a]) + "\n";
  out += "per_date,median_t," + r.candidate_name + ",," + num(r.median_t_augmented[K]) + "\n";
  for (std::size_t a = 0; a < K; ++a)
    out += "fama_macbeth,t," + r.benchmark_names[a] + "," + onum(r.fm_t_benchmark[a]) + "," +
           onum(r.fm_t_augmented[a]) + "\n";
  out += "fama_macbeth,t," + r.candidate_name + ",," + onum(r.fm_t_augmented[K]) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Empty-industry audit

struct AuditFinding {
  std::string column;
  std::size_t members = 0;
};

struct AuditReport {
  std::size_t threshold = 0;
  std::vector<AuditFinding> findings;
  std::optional<double> max_relative_gamma_gap;  // max_i |Gamma'_ii - Gamma^_ii| / Gamma^_ii
  std::string recommendation;

  std::string format_text() const {
    std::string out = "industry columns with fewer than " + std::to_string(threshold) + " members: " +
                      std::to_string(findings.size()) + "\n";
    for (const auto& f : findings) out += "  " + f.column + " members=" + std::to_string(f.members) + "\n";
    if (max_relative_gamma_gap)
      out += "max_relative_gamma_gap=" + io::format_number(*max_relative_gamma_gap) + "\n";
    out += "recommendation: " + recommendation + "\n";
    return out;
  }
};

/// Lists industry columns with no, or fewer than `threshold`, members in `u`.
/// Columns not marked industry are ignored.
inline AuditReport empty_industry_audit(const FactorLoadings& omega, const Universe& u, std::size_t threshold = 1) {
  AuditReport rep;
  rep.threshold = threshold;
  std::vector<std::size_t> rows;
  for (const auto& t : u.tickers) {
    auto it = std::find(omega.tickers.begin(), omega.tickers.end(), t);
    if (it != omega.tickers.end()) rows.push_back(static_cast<std::size_t>(it - omega.tickers.begin()));
  }
  for (std::size_t a = 0; a < omega.k(); ++a) {
    if (omega.columns[a].kind != ColumnKind::industry) continue;
    std::size_t members = 0;
    for (auto i : rows) members += omega.omega(i, a) != 0.0 ? 1 : 0;
    if (members == 0 || members < threshold) rep.findings.push_back({omega.columns[a].name, members});
  }
  rep.recommendation = rep.findings.empty()
                           ? "none; every industry column is populated"
                           : "drop these columns and re-estimate (subset_factors), or rebuild the model on this "
                             "universe (restrict_universe)";
  return rep;
}

/// Compares Gamma'_ii (reference xi with the reference Phi sliced to the
/// subset's columns) against Gamma^_ii of a model re-estimated on the subset.
inline double max_relative_gamma_gap(const RiskModel& reference, const RiskModel& subset) {
  std::vector<std::size_t> cols;
  for (const auto& c : subset.omega.columns) cols.push_back(reference.omega.column_index(c.name));
  double worst = 0.0;
  for (std::size_t j = 0; j < subset.n(); ++j) {
    const auto it = std::find(reference.omega.tickers.begin(), reference.omega.tickers.end(), subset.omega.tickers[j]);
    if (it == reference.omega.tickers.end()) throw AlignmentError("reference model lacks " + subset.omega.tickers[j]);
    const auto i = static_cast<std::size_t>(it - reference.omega.tickers.begin());
    double g = reference.xi[i] * reference.xi[i];
    for (std::size_t a = 0; a < cols.size(); ++a)
      for (std::size_t b = 0; b < cols.size(); ++b)
        g += reference.omega.omega(i, cols[a]) * reference.omega.omega(i, cols[b]) * reference.phi(cols[a], cols[b]);
    const double hat = subset.total_variance(j);
    worst = std::max(worst, std::abs(g - hat) / hat);
  }
  return worst;
}

inline AuditReport empty_industry_audit(const FactorLoadings& omega, const Universe& u, std::size_t threshold,
                                        const RiskModel& reference, const RiskModel& subset) {
  AuditReport rep = empty_industry_audit(omega, u, threshold);
  rep.max_relative_gamma_gap = max_relative_gamma_gap(reference, subset);
  return rep;
}

}  // namespace crm
