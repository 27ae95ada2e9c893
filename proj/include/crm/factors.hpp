#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "crm/error.hpp"
#include "crm/io.hpp"
#include "crm/matrix.hpp"
#include "crm/stats.hpp"
#include "crm/universe.hpp"

namespace crm {

enum class ColumnKind { style, industry, intercept };

inline std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::style: return "style";
    case ColumnKind::industry: return "industry";
    case ColumnKind::intercept: return "intercept";
  }
  return "style";
}

inline ColumnKind parse_column_kind(const std::string& s) {
  if (s == "style") return ColumnKind::style;
  if (s == "industry") return ColumnKind::industry;
  if (s == "intercept") return ColumnKind::intercept;
  throw SchemaError("unknown column kind '" + s + "'");
}

/// Per-column metadata. `center_assigned` lists tickers whose raw value was
/// missing and that were given the normalization center instead.
struct ColumnMeta {
  std::string name;
  ColumnKind kind = ColumnKind::style;
  double center = 0.0;
  double sdev = 0.0;
  std::string lookback;
  std::vector<std::string> center_assigned;
};

/// Factor loadings matrix (N stocks x K factors) with column metadata.
struct FactorLoadings {
  std::vector<std::string> tickers;
  Matrix omega;
  std::vector<ColumnMeta> columns;
  std::vector<std::string> warnings;

  std::size_t n() const noexcept { return tickers.size(); }
  std::size_t k() const noexcept { return columns.size(); }

  std::size_t column_index(const std::string& name) const {
    for (std::size_t a = 0; a < columns.size(); ++a)
      if (columns[a].name == name) return a;
    throw UnknownColumn(name);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& c : columns) out.push_back(c.name);
    return out;
  }

  /// Columns whose name is in `keep`, in their original order.
  FactorLoadings select(const std::set<std::string>& keep) const {
    if (keep.empty()) throw ValidationError("factor subset must be nonempty");
    for (const auto& name : keep) column_index(name);
    FactorLoadings out;
    out.tickers = tickers;
    std::vector<std::size_t> idx;
    for (std::size_t a = 0; a < columns.size(); ++a)
      if (keep.count(columns[a].name)) {
        idx.push_back(a);
        out.columns.push_back(columns[a]);
      }
    out.omega = Matrix(n(), idx.size());
    for (std::size_t i = 0; i < n(); ++i)
      for (std::size_t b = 0; b < idx.size(); ++b) out.omega(i, b) = omega(i, idx[b]);
    return out;
  }
};

/// A single style column ready for assembly into loadings.
struct StyleColumn {
  ColumnMeta meta;
  Vector values;
};

/// Conforms x to a normal distribution: each value is replaced by the
/// normal quantile (mean `center`, s.d. `sdev`) of its rank's plotting
/// position. Ties rank by input position. sdev == 0 maps everything to center.
inline Vector rank_normal_transform(std::span<const double> x, double center, double sdev) {
  const std::size_t n = x.size();
  if (n == 0) throw DegenerateInput("rank_normal_transform of an empty vector");
  for (double v : x)
    if (is_missing(v)) throw DegenerateInput("rank_normal_transform input has missing values");
  if (is_missing(sdev) || sdev < 0.0) throw DegenerateInput("rank_normal_transform sdev must be >= 0");
  if (sdev == 0.0) return Vector(n, center);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  const Vector pp = plotting_positions(n);
  Vector out(n);
  for (std::size_t r = 0; r < n; ++r) out[order[r]] = normal_quantile(pp[r], center, sdev);
  return out;
}

namespace detail {

/// Normalizes the present entries, then gives missing entries `center`.
/// Returns indices that were center-assigned.
inline std::vector<std::size_t> normalize_present(Vector& v, double center, double sdev) {
  std::vector<std::size_t> have, missing;
  for (std::size_t i = 0; i < v.size(); ++i) (is_missing(v[i]) ? missing : have).push_back(i);
  if (!have.empty()) {
    Vector x;
    for (auto i : have) x.push_back(v[i]);
    if (is_missing(sdev)) sdev = 0.0;
    const Vector y = rank_normal_transform(x, center, sdev);
    for (std::size_t k = 0; k < have.size(); ++k) v[have[k]] = y[k];
  }
  for (auto i : missing) v[i] = center;
  return missing;
}

inline std::vector<std::string> names_at(const Universe& u, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(u.tickers[i]);
  return out;
}

/// Two-stage normalization: ADR values are first conformed against the
/// non-ADR MAD, then the whole vector is conformed with the same scale.
inline StyleColumn normalize_with_adrs(Vector raw, const std::vector<bool>& adr, const Universe& u,
                                       std::string name, std::string lookback) {
  Vector non_adr;
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (!adr[i] && !is_missing(raw[i])) non_adr.push_back(raw[i]);
  double s = non_adr.empty() ? 0.0 : mad(non_adr);

  std::vector<std::size_t> adr_idx;
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (adr[i] && !is_missing(raw[i])) adr_idx.push_back(i);
  if (!adr_idx.empty()) {
    Vector sub;
    for (auto i : adr_idx) sub.push_back(raw[i]);
    sub = rank_normal_transform(sub, 0.0, s);
    for (std::size_t k = 0; k < adr_idx.size(); ++k) raw[adr_idx[k]] = sub[k];
  }
  const auto missing = normalize_present(raw, 0.0, s);
  StyleColumn col;
  col.meta = {std::move(name), ColumnKind::style, 0.0, s, std::move(lookback), names_at(u, missing)};
  col.values = std::move(raw);
  return col;
}

}  // namespace detail

struct MomentumParams {
  std::size_t d_r = 5;    // moving-average length
  std::size_t days = 252; // lookback
  std::size_t back = 0;   // offset for out-of-sample backtests
};

/// Moving-average returns P(t) / mean(P(t+1..t+d_r)) - 1 for the days + 1
/// rows t = back .. back + days, one column per price column.
inline Matrix moving_average_returns(const Matrix& prices, const MomentumParams& p) {
  if (p.d_r == 0) throw ValidationError("momentum d_r must be >= 1");
  const std::size_t need = p.back + p.days + p.d_r + 1;
  if (prices.rows() < need)
    throw InsufficientHistory("momentum needs " + std::to_string(need) + " dates, have " +
                              std::to_string(prices.rows()));
  Matrix ret(p.days + 1, prices.cols());
  for (std::size_t t = 0; t <= p.days; ++t)
    for (std::size_t i = 0; i < prices.cols(); ++i) {
      const std::size_t r0 = p.back + t;
      double yest = 0.0;
      for (std::size_t k = 1; k <= p.d_r; ++k) yest += prices(r0 + k, i);
      yest /= static_cast<double>(p.d_r);
      ret(t, i) = prices(r0, i) / yest - 1.0;  // NaN propagates missing
    }
  return ret;
}

/// Outlier-cleaned, row-demeaned moving-average returns. A cell is an outlier
/// when it is further than 5 * max(row MAD, column MAD) from its row median;
/// outliers take the row mean of the remaining cells, then each row is demeaned.
inline Matrix cleaned_moving_average_returns(const Matrix& prices, const MomentumParams& p) {
  Matrix ret = moving_average_returns(prices, p);
  const std::size_t rows = ret.rows(), cols = ret.cols();
  Vector row_mad(rows), row_med(rows), col_mad(cols);
  for (std::size_t t = 0; t < rows; ++t) {
    row_mad[t] = mad(ret.row(t));
    row_med[t] = median(ret.row(t));
  }
  for (std::size_t i = 0; i < cols; ++i) col_mad[i] = mad(ret.col(i));

  std::vector<std::vector<bool>> bad(rows, std::vector<bool>(cols, false));
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t i = 0; i < cols; ++i) {
      const double eff = 5.0 * std::max(row_mad[t], col_mad[i]);
      const double x = ret(t, i);
      if (!is_missing(x) && !is_missing(eff) && std::abs(x - row_med[t]) > eff) {
        bad[t][i] = true;
        ret(t, i) = kMissing;
      }
    }
  for (std::size_t t = 0; t < rows; ++t) {
    const double avg = mean(ret.row(t));
    for (std::size_t i = 0; i < cols; ++i) {
      if (bad[t][i]) ret(t, i) = avg;
      ret(t, i) -= avg;
    }
  }
  return ret;
}

/// Momentum: time-average of cleaned moving-average returns on adjusted
/// prices, conformed to a normal with center 0 and s.d. = MAD of the averages.
inline StyleColumn momentum_factor(const MarketHistory& h, const Universe& u,
                                   const MomentumParams& p = {}) {
  const auto idx = universe_columns(h, u);
  Matrix prices(h.depth(), idx.size());
  for (std::size_t t = 0; t < h.depth(); ++t)
    for (std::size_t k = 0; k < idx.size(); ++k) prices(t, k) = h.adjusted_close(t, idx[k]);
  const Matrix ret = cleaned_moving_average_returns(prices, p);
  Vector mom(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) mom[k] = mean(ret.col(k));
  const double s = mad(mom);
  const auto missing = detail::normalize_present(mom, 0.0, s);
  StyleColumn col;
  col.meta = {"momentum", ColumnKind::style, 0.0, is_missing(s) ? 0.0 : s,
              "d_r=" + std::to_string(p.d_r) + ";days=" + std::to_string(p.days) +
                  ";back=" + std::to_string(p.back),
              detail::names_at(u, missing)};
  col.values = std::move(mom);
  return col;
}

/// Liquidity: mean of log dollar volume over the last d_addv dates, zero
/// volume treated as missing; ADRs normalized against the non-ADR MAD.
inline StyleColumn liquidity_factor(const MarketHistory& h, const Universe& u, std::size_t d_addv = 20) {
  if (d_addv == 0) throw ValidationError("d_addv must be >= 1");
  if (h.depth() < d_addv)
    throw InsufficientHistory("liquidity needs " + std::to_string(d_addv) + " dates, have " +
                              std::to_string(h.depth()));
  const auto idx = universe_columns(h, u);
  Vector raw(idx.size());
  std::vector<bool> adr(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    Vector logs;
    for (std::size_t t = 0; t < d_addv; ++t) {
      const double dv = h.close(t, idx[k]) * h.volume(t, idx[k]);
      if (!is_missing(dv) && dv > 0.0) logs.push_back(std::log(dv));
    }
    raw[k] = mean(logs);
    adr[k] = h.is_adr[idx[k]];
  }
  return detail::normalize_with_adrs(std::move(raw), adr, u, "liquidity",
                                     "d_addv=" + std::to_string(d_addv));
}

/// Size: mean of log market cap over the last `days` dates, zero caps missing;
/// ADRs normalized against the non-ADR MAD.
inline StyleColumn size_factor(const MarketHistory& h, const Universe& u, std::size_t days = 252) {
  if (days == 0) throw ValidationError("size lookback must be >= 1");
  if (h.depth() < days)
    throw InsufficientHistory("size needs " + std::to_string(days) + " dates, have " +
                              std::to_string(h.depth()));
  const auto idx = universe_columns(h, u);
  Vector raw(idx.size());
  std::vector<bool> adr(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    Vector logs;
    for (std::size_t t = 0; t < days; ++t) {
      const double c = h.cap(t, idx[k]);
      if (!is_missing(c) && c > 0.0) logs.push_back(std::log(c));
    }
    raw[k] = mean(logs);
    adr[k] = h.is_adr[idx[k]];
  }
  return detail::normalize_with_adrs(std::move(raw), adr, u, "size", "days=" + std::to_string(days));
}

/// Intraday volatility: tv = mean(((high - low) / close)^2); the log of
/// sqrt(tv) is conformed around its median with its MAD and re-exponentiated,
/// so values are positive.
inline StyleColumn intraday_vol_factor(const MarketHistory& h, const Universe& u, std::size_t days = 252) {
  if (days == 0) throw ValidationError("intraday volatility lookback must be >= 1");
  if (h.depth() < days)
    throw InsufficientHistory("intraday volatility needs " + std::to_string(days) +
                              " dates, have " + std::to_string(h.depth()));
  const auto idx = universe_columns(h, u);
  Vector sr(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    Vector sq;
    for (std::size_t t = 0; t < days; ++t) {
      const std::size_t i = idx[k];
      const double hl = std::abs(h.high(t, i) - h.low(t, i)) / h.close(t, i);
      if (!is_missing(hl)) sq.push_back(hl * hl);
    }
    const double tv = mean(sq);
    sr[k] = (!is_missing(tv) && tv > 0.0) ? std::log(std::sqrt(tv)) : kMissing;
  }
  const double c = median(sr), s = mad(sr);
  if (is_missing(c)) throw DegenerateInput("intraday volatility undefined for every stock");
  const auto missing = detail::normalize_present(sr, c, s);
  for (auto& v : sr) v = std::exp(v);
  StyleColumn col;
  col.meta = {"intraday_vol", ColumnKind::style, c, s, "days=" + std::to_string(days),
              detail::names_at(u, missing)};
  col.values = std::move(sr);
  return col;
}

namespace detail {

struct IndustryEntry {
  std::size_t row;
  const Membership* m;
};

struct IndustryGroup {
  std::string name;
  std::string sector;
  std::string subsector;  // empty for sector-level groups
  std::vector<IndustryEntry> entries;

  std::size_t count() const {
    std::set<std::size_t> rows;
    for (const auto& e : entries) rows.insert(e.row);
    return rows.size();
  }
};

}  // namespace detail

/// Industry loadings with pruning. Terminal industries with at least
/// `min_industry_size` member stocks become columns; members of smaller ones
/// are pooled at the sub-sector level, then at the sector level. Groups still
/// too small are merged into the largest column of the same sector (else the
/// largest column overall; ties by name). Columns are sorted by name and
/// each row sums to one.
inline FactorLoadings build_industry_loadings(const ClassificationTree& tree, const Universe& u,
                                              std::size_t min_industry_size = 10) {
  if (u.size() < min_industry_size)
    throw ImpossiblePruning("universe of " + std::to_string(u.size()) + " stocks cannot fill an industry of " +
                            std::to_string(min_industry_size));
  using detail::IndustryEntry;
  using detail::IndustryGroup;

  std::map<std::string, IndustryGroup> level;
  for (std::size_t r = 0; r < u.size(); ++r)
    for (const auto& m : tree.memberships(u.tickers[r])) {
      const std::string name = m.sector + "/" + m.subsector + "/" + m.industry;
      auto& g = level[name];
      g.name = name;
      g.sector = m.sector;
      g.subsector = m.subsector;
      g.entries.push_back({r, &m});
    }

  std::map<std::string, IndustryGroup> columns;
  auto promote = [&](std::map<std::string, IndustryGroup>& groups, bool to_sector) {
    std::map<std::string, IndustryGroup> next;
    for (auto& [name, g] : groups) {
      if (g.count() >= min_industry_size) {
        columns[name] = std::move(g);
        continue;
      }
      const std::string up = to_sector ? g.sector : g.sector + "/" + g.subsector;
      auto& ng = next[up];
      ng.name = up;
      ng.sector = g.sector;
      ng.subsector = to_sector ? std::string{} : g.subsector;
      ng.entries.insert(ng.entries.end(), g.entries.begin(), g.entries.end());
    }
    return next;
  };
  auto subsectors = promote(level, false);
  auto sectors = promote(subsectors, true);
  std::map<std::string, IndustryGroup> leftovers;
  for (auto& [name, g] : sectors) {
    if (g.count() >= min_industry_size) columns[name] = std::move(g);
    else leftovers[name] = std::move(g);
  }

  if (columns.empty()) {
    IndustryGroup all{"ALL", "", "", {}};
    for (auto& [name, g] : leftovers) all.entries.insert(all.entries.end(), g.entries.begin(), g.entries.end());
    columns["ALL"] = std::move(all);
  } else {
    for (auto& [name, g] : leftovers) {
      IndustryGroup* target = nullptr;
      std::size_t best = 0;
      for (bool same_sector : {true, false}) {
        for (auto& [cname, c] : columns) {
          if (same_sector && c.sector != g.sector) continue;
          const std::size_t cnt = c.count();
          if (!target || cnt > best) {
            target = &c;
            best = cnt;
          }
        }
        if (target) break;
      }
      target->entries.insert(target->entries.end(), g.entries.begin(), g.entries.end());
    }
  }

  FactorLoadings fl;
  fl.tickers = u.tickers;
  fl.omega = Matrix(u.size(), columns.size());
  std::size_t a = 0;
  for (const auto& [name, g] : columns) {
    ColumnMeta meta;
    meta.name = name;
    meta.kind = ColumnKind::industry;
    fl.columns.push_back(meta);
    for (const auto& e : g.entries) fl.omega(e.row, a) += e.m->weight;
    ++a;
  }
  return fl;
}

/// Concatenates [intercept] + style columns + industry columns.
/// Emits a RankDeficient warning when an intercept accompanies industry
/// columns that partition every stock (their sum is the unit vector).
inline FactorLoadings assemble_flm(const std::vector<StyleColumn>& styles, const FactorLoadings& industry,
                                   bool include_intercept) {
  const std::size_t n = industry.n();
  std::set<std::string> names;
  FactorLoadings out;
  out.tickers = industry.tickers;
  std::vector<Vector> cols;

  auto add = [&](ColumnMeta meta, Vector v) {
    if (v.size() != n)
      throw DimensionMismatch("column " + meta.name + " has length " + std::to_string(v.size()) +
                              ", expected " + std::to_string(n));
    if (!names.insert(meta.name).second) throw DuplicateName("factor column " + meta.name);
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }))
      throw DegenerateColumn("factor column " + meta.name + " is all zero");
    out.columns.push_back(std::move(meta));
    cols.push_back(std::move(v));
  };

  if (include_intercept) {
    ColumnMeta m;
    m.name = "intercept";
    m.kind = ColumnKind::intercept;
    add(m, Vector(n, 1.0));
  }
  for (const auto& s : styles) {
    for (double v : s.values)
      if (is_missing(v)) throw DegenerateInput("style column " + s.meta.name + " has missing values");
    add(s.meta, s.values);
  }
  for (std::size_t a = 0; a < industry.k(); ++a) add(industry.columns[a], industry.omega.col(a));

  out.omega = Matrix(n, cols.size());
  for (std::size_t a = 0; a < cols.size(); ++a) out.omega.set_col(a, cols[a]);

  if (include_intercept && industry.k() > 0) {
    bool partition = true;
    for (std::size_t i = 0; i < n && partition; ++i) {
      double s = 0.0;
      for (std::size_t a = 0; a < industry.k(); ++a) s += industry.omega(i, a);
      partition = std::abs(s - 1.0) <= 1e-12;
    }
    if (partition)
      out.warnings.push_back(
          "RankDeficient: intercept is the sum of the industry columns; drop one of them");
  }
  return out;
}

/// Writes `<stem>.csv` (ticker,<col>...) and `<stem>.meta` (key=value).
inline void save_loadings(const FactorLoadings& fl, const std::filesystem::path& dir,
                          const std::string& generated, const std::string& stem = "omega") {
  std::string csv = "ticker";
  for (const auto& c : fl.columns) csv += "," + c.name;
  csv += "\n";
  for (std::size_t i = 0; i < fl.n(); ++i) {
    csv += fl.tickers[i];
    for (std::size_t a = 0; a < fl.k(); ++a) csv += "," + io::format_number(fl.omega(i, a));
    csv += "\n";
  }
  io::KeyValues kv;
  kv["generated"] = generated;
  kv["columns"] = std::to_string(fl.k());
  for (std::size_t a = 0; a < fl.k(); ++a) {
    const auto& c = fl.columns[a];
    const std::string p = "column." + std::to_string(a) + ".";
    kv[p + "name"] = c.name;
    kv[p + "kind"] = to_string(c.kind);
    kv[p + "center"] = io::format_number(c.center);
    kv[p + "sdev"] = io::format_number(c.sdev);
    kv[p + "lookback"] = c.lookback;
    std::string ca;
    for (const auto& t : c.center_assigned) ca += (ca.empty() ? "" : ";") + t;
    kv[p + "center_assigned"] = ca;
  }
  io::write_file_atomic(dir / (stem + ".csv"), csv);
  io::write_file_atomic(dir / (stem + ".meta"), io::format_key_values(kv));
}

/// Reads loadings written by save_loadings. Without a sidecar, 0/1-valued
/// columns are taken as industries and everything else as style.
inline FactorLoadings load_loadings(const std::filesystem::path& csv_path) {
  io::CsvTable t = io::read_csv(csv_path);
  if (t.header.empty() || t.header[0] != "ticker")
    throw SchemaError(csv_path.filename().string() + ": first column must be 'ticker'");
  FactorLoadings fl;
  const std::size_t k = t.header.size() - 1;
  fl.omega = Matrix(t.rows.size(), k);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    fl.tickers.push_back(t.rows[i][0]);
    for (std::size_t a = 0; a < k; ++a) {
      fl.omega(i, a) = io::parse_number(t.rows[i][a + 1], csv_path.filename().string());
      if (is_missing(fl.omega(i, a))) throw SchemaError("missing loading for " + t.rows[i][0]);
    }
  }
  std::set<std::string> seen;
  for (const auto& tk : fl.tickers)
    if (!seen.insert(tk).second) throw DuplicateName("ticker " + tk);
  auto meta_path = csv_path;
  meta_path.replace_extension(".meta");
  io::KeyValues kv;
  if (std::filesystem::exists(meta_path)) kv = io::parse_key_values(io::read_text(meta_path), meta_path.string());
  for (std::size_t a = 0; a < k; ++a) {
    ColumnMeta c;
    c.name = t.header[a + 1];
    const std::string p = "column." + std::to_string(a) + ".";
    if (kv.count(p + "kind")) {
      if (kv[p + "name"] != c.name) throw SchemaError("loadings sidecar column " + std::to_string(a) + " name mismatch");
      c.kind = parse_column_kind(kv[p + "kind"]);
      c.center = io::parse_number(kv[p + "center"], meta_path.string());
      c.sdev = io::parse_number(kv[p + "sdev"], meta_path.string());
      c.lookback = kv[p + "lookback"];
      for (auto& s : io::split(kv[p + "center_assigned"], ';'))
        if (!s.empty()) c.center_assigned.push_back(s);
    } else {
      bool binary = true;
      for (std::size_t i = 0; i < fl.n(); ++i) binary = binary && (fl.omega(i, a) == 0.0 || fl.omega(i, a) == 1.0);
      c.kind = binary ? ColumnKind::industry : ColumnKind::style;
    }
    fl.columns.push_back(std::move(c));
  }
  std::set<std::string> cn;
  for (const auto& c : fl.columns)
    if (!cn.insert(c.name).second) throw DuplicateName("factor column " + c.name);
  return fl;
}

}  // namespace crm
