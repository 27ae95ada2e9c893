#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crm/error.hpp"
#include "crm/factors.hpp"
#include "crm/io.hpp"
#include "crm/matquad.hpp"
#include "crm/matrix.hpp"
#include "crm/regression.hpp"
#include "crm/riskmodel.hpp"

namespace crm {

/// Desired dollar holdings, normalized so that sum |D_i| = investment_level.
struct Holdings {
  std::vector<std::string> tickers;
  Vector dollars;
  double investment_level = 0.0;
  std::string method;                       // "regression", "mean-reversion" or "optimization"
  std::map<std::string, std::string> params;
};

struct ExposureReport {
  std::vector<std::string> factors;
  Vector exposures;        // sum_i D_i Omega_iA
  double dollar_imbalance = 0.0;

  double max_abs_exposure() const {
    double m = 0.0;
    for (double e : exposures) m = std::max(m, std::abs(e));
    return m;
  }
};

struct Neutralized {
  Vector residuals;  // epsilon = R - Omega Q^-1 Omega^T Z R
  Vector regressed;  // R~ = Z epsilon, exactly Omega-neutral
};

/// Weighted cross-sectional regression of R on the loadings (no intercept
/// unless Omega carries one). Empty `weights` means unit weights.
inline Neutralized neutralize(std::span<const double> returns, const Matrix& omega,
                              std::span<const double> weights = {}) {
  const std::size_t n = omega.rows();
  if (returns.size() != n) throw DimensionMismatch("returns length vs loadings rows");
  if (!weights.empty() && weights.size() != n) throw DimensionMismatch("weights length vs loadings rows");
  for (double w : weights)
    if (!(w > 0.0)) throw NonPositiveWeight("regression weights must be positive");
  for (double r : returns)
    if (!std::isfinite(r)) throw ValidationError("returns must be finite");
  WeightedFit fit;
  try {
    fit = weighted_least_squares(omega, weights, returns);
  } catch (const NotPositiveDefinite& e) {
    throw SingularQ(e.what());
  }
  Neutralized out;
  out.residuals = std::move(fit.residuals);
  out.regressed = out.residuals;
  if (!weights.empty())
    for (std::size_t i = 0; i < n; ++i) out.regressed[i] *= weights[i];
  return out;
}

namespace detail {

inline Holdings scaled_holdings(std::span<const double> signal, double sign, double investment,
                                const char* method) {
  if (!(investment > 0.0)) throw ValidationError("investment level must be positive");
  double gross = 0.0;
  for (double v : signal) gross += std::abs(v);
  if (!(gross > 0.0)) throw DegenerateSignal("signal is identically zero");
  const double scale = sign * investment / gross;
  Holdings h;
  h.dollars.resize(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) h.dollars[i] = scale * signal[i];
  h.investment_level = investment;
  h.method = method;
  return h;
}

}  // namespace detail

/// Mean reversion: D = -gamma R~ with gamma fixed by sum |D_i| = I.
inline Holdings mean_reversion_holdings(std::span<const double> regressed, double investment) {
  return detail::scaled_holdings(regressed, -1.0, investment, "mean-reversion");
}

/// Regression holdings for expected returns: D = +gamma R~, sum |D_i| = I.
/// This is the limit of optimize_holdings as factor risk dominates.
inline Holdings regression_holdings(std::span<const double> regressed, double investment) {
  return detail::scaled_holdings(regressed, 1.0, investment, "regression");
}

/// Sharpe-maximizing holdings D = zeta Gamma^-1 R with zeta fixed by
/// sum |D_i| = I; Gamma^-1 is applied through the K x K factored form.
inline Holdings optimize_holdings(std::span<const double> returns, const RiskModel& model, double investment) {
  const Vector y = gamma_inverse_apply(model.xi, model.omega.omega, model.phi, returns);
  Holdings h = detail::scaled_holdings(y, 1.0, investment, "optimization");
  h.tickers = model.omega.tickers;
  return h;
}

inline ExposureReport exposures(const Holdings& h, const FactorLoadings& omega) {
  if (h.dollars.size() != omega.n())
    throw DimensionMismatch("holdings length " + std::to_string(h.dollars.size()) + " vs N " +
                            std::to_string(omega.n()));
  ExposureReport r;
  r.factors = omega.names();
  r.exposures = transpose_times(omega.omega, h.dollars);
  for (double d : h.dollars) r.dollar_imbalance += d;
  return r;
}

/// holdings.csv (ticker,dollars) and summary.txt (investment, exposures,
/// dollar imbalance).
inline void save_holdings(const Holdings& h, const ExposureReport& e, const std::filesystem::path& dir) {
  std::string csv = "ticker,dollars\n";
  for (std::size_t i = 0; i < h.dollars.size(); ++i)
    csv += h.tickers[i] + "," + io::format_number(h.dollars[i]) + "\n";
  io::write_file_atomic(dir / "holdings.csv", csv);

  std::string s;
  s += "method=" + h.method + "\n";
  for (const auto& [k, v] : h.params) s += "param." + k + "=" + v + "\n";
  s += "investment_level=" + io::format_number(h.investment_level) + "\n";
  double gross = 0.0;
  for (double d : h.dollars) gross += std::abs(d);
  s += "gross=" + io::format_number(gross) + "\n";
  s += "dollar_imbalance=" + io::format_number(e.dollar_imbalance) + "\n";
  s += "max_abs_exposure=" + io::format_number(e.max_abs_exposure()) + "\n";
  s += "max_abs_exposure_over_I=" + io::format_number(e.max_abs_exposure() / h.investment_level) + "\n";
  for (std::size_t a = 0; a < e.factors.size(); ++a)
    s += "exposure." + e.factors[a] + "=" + io::format_number(e.exposures[a]) + "\n";
  io::write_file_atomic(dir / "summary.txt", s);
}

/// ticker,value file of per-stock expected returns, reordered to `order`.
inline Vector load_signal(const std::filesystem::path& path, const std::vector<std::string>& order) {
  io::CsvTable t = io::read_csv(path);
  if (t.header.size() != 2 || t.header[0] != "ticker")
    throw SchemaError(path.filename().string() + ": header must be ticker,value");
  std::map<std::string, double> by;
  for (const auto& row : t.rows) {
    const double v = io::parse_number(row[1], path.filename().string());
    if (!by.emplace(row[0], v).second) throw DuplicateName("ticker " + row[0] + " in " + path.filename().string());
  }
  Vector out;
  for (const auto& tk : order) {
    auto it = by.find(tk);
    if (it == by.end()) throw AlignmentError(path.filename().string() + " has no value for " + tk);
    if (is_missing(it->second)) throw AlignmentError(path.filename().string() + " value for " + tk + " is missing");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace crm
