#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "crm/error.hpp"
#include "crm/io.hpp"
#include "crm/matrix.hpp"
#include "crm/stats.hpp"

namespace crm {

/// Dated market panels. Every panel is dates x tickers with row 0 the most
/// recent date, so a lookback of L days is rows [0, L).
struct MarketHistory {
  std::vector<std::string> dates;
  std::vector<std::string> tickers;
  Matrix close;
  Matrix volume;
  Matrix high;
  Matrix low;
  Matrix cap;
  Matrix adjusted_close;
  Matrix open;  // optional; empty when no open panel was supplied
  std::vector<bool> is_adr;

  std::size_t depth() const noexcept { return dates.size(); }
  std::size_t size() const noexcept { return tickers.size(); }
  bool has_open() const noexcept { return !open.empty(); }

  std::size_t index_of(const std::string& ticker) const {
    auto it = std::find(tickers.begin(), tickers.end(), ticker);
    if (it == tickers.end()) throw UnknownTicker(ticker);
    return static_cast<std::size_t>(it - tickers.begin());
  }
};

struct Membership {
  std::string sector;
  std::string subsector;
  std::string industry;
  double weight = 1.0;
};

/// sector -> sub-sector -> industry hierarchy; each ticker carries one or
/// more terminal memberships whose weights sum to one (conglomerates).
struct ClassificationTree {
  std::map<std::string, std::vector<Membership>> assignment;

  const std::vector<Membership>& memberships(const std::string& ticker) const {
    auto it = assignment.find(ticker);
    if (it == assignment.end()) throw UnclassifiedTicker(ticker);
    return it->second;
  }
};

struct Universe {
  std::vector<std::string> tickers;
  std::string selection_date;

  std::size_t size() const noexcept { return tickers.size(); }
};

namespace detail {

inline bool is_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  const int m = std::stoi(s.substr(5, 2));
  const int d = std::stoi(s.substr(8, 2));
  return m >= 1 && m <= 12 && d >= 1 && d <= 31;
}

inline void check_panel(const Matrix& m, const MarketHistory& h, const char* name) {
  if (m.rows() != h.depth() || m.cols() != h.size())
    throw AxisError(std::string(name) + " panel is " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + ", expected " + std::to_string(h.depth()) + "x" +
                    std::to_string(h.size()));
}

}  // namespace detail

/// Checks every MarketHistory invariant, naming the first offending cell.
inline void validate(const MarketHistory& h) {
  std::set<std::string> seen;
  for (const auto& t : h.tickers)
    if (!seen.insert(t).second) throw DuplicateName("ticker " + t);
  for (std::size_t r = 0; r < h.depth(); ++r) {
    if (!detail::is_iso_date(h.dates[r])) throw SchemaError("bad date '" + h.dates[r] + "'");
    // most recent first: strictly decreasing
    if (r > 0 && !(h.dates[r] < h.dates[r - 1]))
      throw DateOrderError("dates not strictly ordered at " + h.dates[r]);
  }
  detail::check_panel(h.close, h, "close");
  detail::check_panel(h.volume, h, "volume");
  detail::check_panel(h.high, h, "high");
  detail::check_panel(h.low, h, "low");
  detail::check_panel(h.cap, h, "cap");
  detail::check_panel(h.adjusted_close, h, "adjclose");
  if (h.has_open()) detail::check_panel(h.open, h, "open");
  if (h.is_adr.size() != h.size()) throw AxisError("adr flags length differs from tickers");
  for (std::size_t r = 0; r < h.depth(); ++r)
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double hi = h.high(r, i), lo = h.low(r, i);
      if (!is_missing(hi) && !is_missing(lo) && hi < lo)
        throw AxisError("high < low for " + h.tickers[i] + " on " + h.dates[r]);
      const double v = h.volume(r, i);
      if (!is_missing(v) && v < 0)
        throw AxisError("negative volume for " + h.tickers[i] + " on " + h.dates[r]);
      const double c = h.cap(r, i);
      if (!is_missing(c) && c < 0)
        throw AxisError("negative cap for " + h.tickers[i] + " on " + h.dates[r]);
    }
}

/// File names of the panel set. Panels are dates x tickers CSVs with a
/// leading `date` column, written oldest date first.
struct PanelSchema {
  std::string close = "close.csv";
  std::string volume = "volume.csv";
  std::string high = "high.csv";
  std::string low = "low.csv";
  std::string cap = "cap.csv";
  std::string adjusted_close = "adjclose.csv";
  std::string open = "open.csv";  // optional
  std::string adr = "adr.csv";    // optional; absent means no ADRs
};

namespace detail {

struct RawPanel {
  std::vector<std::string> dates;  // file order (oldest first)
  std::vector<std::string> tickers;
  Matrix values;                   // file order
};

inline RawPanel read_panel(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw SchemaError("missing panel file " + path.string());
  io::CsvTable t = io::read_csv(path);
  const std::string fname = path.filename().string();
  if (t.header.empty() || t.header[0] != "date")
    throw SchemaError(fname + ": first column must be 'date'");
  RawPanel p;
  p.tickers.assign(t.header.begin() + 1, t.header.end());
  if (p.tickers.empty()) throw SchemaError(fname + ": no ticker columns");
  p.values = Matrix(t.rows.size(), p.tickers.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (!is_iso_date(row[0])) throw SchemaError(fname + ": bad date '" + row[0] + "'");
    if (!p.dates.empty() && !(p.dates.back() < row[0]))
      throw DateOrderError(fname + ": date " + row[0] + " does not follow " + p.dates.back());
    p.dates.push_back(row[0]);
    for (std::size_t c = 0; c < p.tickers.size(); ++c)
      p.values(r, c) = io::parse_number(row[c + 1], fname + ":" + row[0] + ":" + p.tickers[c]);
  }
  return p;
}

inline Matrix to_recent_first(const RawPanel& p, const RawPanel& axis, const std::string& name) {
  if (p.tickers != axis.tickers) throw AxisError(name + " ticker columns differ from close panel");
  if (p.dates != axis.dates) throw AxisError(name + " dates differ from close panel");
  const std::size_t d = p.values.rows();
  Matrix m(d, p.values.cols());
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = p.values(d - 1 - r, c);
  return m;
}

inline std::string panel_text(const MarketHistory& h, const Matrix& m) {
  std::string out = "date";
  for (const auto& t : h.tickers) out += "," + t;
  out += "\n";
  for (std::size_t r = h.depth(); r-- > 0;) {
    out += h.dates[r];
    for (std::size_t c = 0; c < h.size(); ++c) out += "," + io::format_number(m(r, c));
    out += "\n";
  }
  return out;
}

}  // namespace detail

/// Loads and validates a panel directory. Missing cells stay missing.
inline MarketHistory load_history(const std::filesystem::path& dir, const PanelSchema& schema = {}) {
  const auto close = detail::read_panel(dir / schema.close);
  MarketHistory h;
  h.tickers = close.tickers;
  h.dates.assign(close.dates.rbegin(), close.dates.rend());
  h.close = detail::to_recent_first(close, close, schema.close);
  h.volume = detail::to_recent_first(detail::read_panel(dir / schema.volume), close, schema.volume);
  h.high = detail::to_recent_first(detail::read_panel(dir / schema.high), close, schema.high);
  h.low = detail::to_recent_first(detail::read_panel(dir / schema.low), close, schema.low);
  h.cap = detail::to_recent_first(detail::read_panel(dir / schema.cap), close, schema.cap);
  h.adjusted_close = detail::to_recent_first(detail::read_panel(dir / schema.adjusted_close), close,
                                             schema.adjusted_close);
  if (std::filesystem::exists(dir / schema.open))
    h.open = detail::to_recent_first(detail::read_panel(dir / schema.open), close, schema.open);

  h.is_adr.assign(h.size(), false);
  if (std::filesystem::exists(dir / schema.adr)) {
    io::CsvTable t = io::read_csv(dir / schema.adr);
    if (t.header.size() != 2 || t.header[0] != "ticker" || t.header[1] != "flag")
      throw SchemaError(schema.adr + ": header must be ticker,flag");
    for (const auto& row : t.rows) {
      if (row[1] != "0" && row[1] != "1") throw SchemaError(schema.adr + ": flag must be 0 or 1");
      h.is_adr[h.index_of(row[0])] = row[1] == "1";
    }
  }
  validate(h);
  return h;
}

/// Writes the panel set in the canonical format read by load_history:
/// oldest date first, numbers in shortest round-trip form, empty = missing.
inline void save_history(const MarketHistory& h, const std::filesystem::path& dir,
                         const PanelSchema& schema = {}) {
  io::write_file_atomic(dir / schema.close, detail::panel_text(h, h.close));
  io::write_file_atomic(dir / schema.volume, detail::panel_text(h, h.volume));
  io::write_file_atomic(dir / schema.high, detail::panel_text(h, h.high));
  io::write_file_atomic(dir / schema.low, detail::panel_text(h, h.low));
  io::write_file_atomic(dir / schema.cap, detail::panel_text(h, h.cap));
  io::write_file_atomic(dir / schema.adjusted_close, detail::panel_text(h, h.adjusted_close));
  if (h.has_open()) io::write_file_atomic(dir / schema.open, detail::panel_text(h, h.open));
  std::string adr = "ticker,flag\n";
  for (std::size_t i = 0; i < h.size(); ++i) adr += h.tickers[i] + (h.is_adr[i] ? ",1\n" : ",0\n");
  io::write_file_atomic(dir / schema.adr, adr);
}

/// classification.csv: ticker,sector,subsector,industry,weight. Repeated
/// ticker rows describe conglomerates; weights per ticker must sum to one.
inline ClassificationTree load_classification(const std::filesystem::path& path) {
  io::CsvTable t = io::read_csv(path);
  const std::vector<std::string> expected{"ticker", "sector", "subsector", "industry", "weight"};
  if (t.header != expected)
    throw SchemaError(path.filename().string() + ": header must be " +
                      "ticker,sector,subsector,industry,weight");
  ClassificationTree tree;
  for (const auto& row : t.rows) {
    Membership m{row[1], row[2], row[3], io::parse_number(row[4], "classification:" + row[0])};
    if (row[0].empty() || m.sector.empty() || m.subsector.empty() || m.industry.empty())
      throw SchemaError("classification row for '" + row[0] + "' has an empty field");
    if (!(m.weight > 0.0)) throw SchemaError("classification weight must be positive for " + row[0]);
    tree.assignment[row[0]].push_back(std::move(m));
  }
  for (const auto& [ticker, ms] : tree.assignment) {
    double s = 0.0;
    for (const auto& m : ms) s += m.weight;
    if (std::abs(s - 1.0) > 1e-9)
      throw SchemaError("classification weights for " + ticker + " sum to " + io::format_number(s));
  }
  return tree;
}

inline void save_classification(const ClassificationTree& tree, const std::filesystem::path& path) {
  std::string out = "ticker,sector,subsector,industry,weight\n";
  for (const auto& [ticker, ms] : tree.assignment)
    for (const auto& m : ms)
      out += ticker + "," + m.sector + "," + m.subsector + "," + m.industry + "," +
             io::format_number(m.weight) + "\n";
  io::write_file_atomic(path, out);
}

struct AllTickers {};
struct TopByCap {
  std::size_t count;
};
struct TopByAddv {
  std::size_t count;
  std::size_t days = 20;
};
struct ExplicitList {
  std::vector<std::string> tickers;
};
using SelectionRule = std::variant<AllTickers, TopByCap, TopByAddv, ExplicitList>;

/// Parses "all", "top-cap:N", "top-addv:N" or "list:A;B;C".
inline SelectionRule parse_selection_rule(const std::string& text) {
  if (text.empty() || text == "all") return AllTickers{};
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("unknown universe rule '" + text + "'");
  const std::string kind = text.substr(0, colon), arg = text.substr(colon + 1);
  auto count = [&] {
    try {
      std::size_t pos = 0;
      const long v = std::stol(arg, &pos);
      if (pos != arg.size() || v <= 0) throw std::invalid_argument(arg);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("universe rule needs a positive count: '" + text + "'");
    }
  };
  if (kind == "top-cap") return TopByCap{count()};
  if (kind == "top-addv") return TopByAddv{count()};
  if (kind == "list") {
    ExplicitList l;
    for (auto& t : io::split(arg, ';'))
      if (!io::trim(t).empty()) l.tickers.push_back(io::trim(t));
    return l;
  }
  throw ConfigError("unknown universe rule '" + text + "'");
}

namespace detail {

inline Universe top_by(const MarketHistory& h, const std::vector<double>& score, std::size_t count) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (!is_missing(score[i])) idx.push_back(i);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return h.tickers[a] < h.tickers[b];
  });
  idx.resize(std::min(idx.size(), count));
  Universe u;
  for (auto i : idx) u.tickers.push_back(h.tickers[i]);
  return u;
}

}  // namespace detail

/// Selects the trading universe as of the most recent date. Rankings are
/// descending with ties broken by ticker; a count larger than the
/// population selects everything with a defined score.
inline Universe select_universe(const MarketHistory& h, const SelectionRule& rule) {
  Universe u = std::visit(
      [&](const auto& r) -> Universe {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, AllTickers>) {
          return Universe{h.tickers, {}};
        } else if constexpr (std::is_same_v<R, TopByCap>) {
          std::vector<double> score(h.size(), kMissing);
          if (h.depth() > 0)
            for (std::size_t i = 0; i < h.size(); ++i) {
              const double c = h.cap(0, i);
              if (!is_missing(c) && c > 0) score[i] = c;
            }
          return detail::top_by(h, score, r.count);
        } else if constexpr (std::is_same_v<R, TopByAddv>) {
          std::vector<double> score(h.size(), kMissing);
          const std::size_t days = std::min(r.days, h.depth());
          for (std::size_t i = 0; i < h.size(); ++i) {
            std::vector<double> dv;
            for (std::size_t t = 0; t < days; ++t) dv.push_back(h.close(t, i) * h.volume(t, i));
            score[i] = mean(dv);
          }
          return detail::top_by(h, score, r.count);
        } else {
          std::set<std::string> seen;
          for (const auto& t : r.tickers) {
            h.index_of(t);
            if (!seen.insert(t).second) throw DuplicateName("ticker " + t + " listed twice");
          }
          return Universe{r.tickers, {}};
        }
      },
      rule);
  if (u.tickers.empty()) throw EmptyUniverse("selection rule selected no tickers");
  u.selection_date = h.depth() ? h.dates.front() : std::string{};
  return u;
}

/// Drops tickers with any membership in one of the named sectors.
inline Universe exclude_sectors(const Universe& u, const ClassificationTree& tree,
                                const std::set<std::string>& sectors) {
  Universe out{{}, u.selection_date};
  for (const auto& t : u.tickers) {
    bool drop = false;
    for (const auto& m : tree.memberships(t)) drop = drop || sectors.count(m.sector) > 0;
    if (!drop) out.tickers.push_back(t);
  }
  if (out.tickers.empty()) throw EmptyUniverse("sector exclusion removed every ticker");
  return out;
}

/// Column index in h of every universe ticker, in universe order.
inline std::vector<std::size_t> universe_columns(const MarketHistory& h, const Universe& u) {
  std::vector<std::size_t> idx;
  idx.reserve(u.size());
  for (const auto& t : u.tickers) idx.push_back(h.index_of(t));
  return idx;
}

}  // namespace crm
