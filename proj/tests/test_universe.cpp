#include <gtest/gtest.h>

#include <fstream>

#include "crm/stats.hpp"
#include "crm/universe.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace crm;
namespace fs = std::filesystem;

namespace {

void write(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

void write_fixture(const fs::path& dir) {
  const std::string dates[] = {"2020-01-02", "2020-01-03", "2020-01-06"};
  auto panel = [&](double a0, double b0) {
    std::string out = "date,AAA,BBB\n";
    for (int r = 0; r < 3; ++r)
      out += dates[r] + "," + io::format_number(a0 + r) + "," + io::format_number(b0 + 0.5 * r) + "\n";
    return out;
  };
  write(dir / "close.csv", panel(10, 20));
  write(dir / "adjclose.csv", panel(10, 20));
  write(dir / "high.csv", panel(11, 21));
  write(dir / "low.csv", panel(9, 19));
  write(dir / "volume.csv", panel(1000, 2000));
  write(dir / "cap.csv", panel(1e9, 3e9));
}

}  // namespace

TEST(Io, NumberFormatRoundTrips) {
  for (double v : {0.1, 1e-300, 123456789.125, -2.5, 1.0 / 3.0}) EXPECT_EQ(io::parse_number(io::format_number(v), "t"), v);
  EXPECT_EQ(io::format_number(kMissing), "");
  EXPECT_TRUE(is_missing(io::parse_number("", "t")));
  EXPECT_TRUE(is_missing(io::parse_number("NA", "t")));
  EXPECT_THROW(io::parse_number("1.2x", "t"), SchemaError);
}

TEST(Io, KeyValues) {
  const auto kv = io::parse_key_values("# comment\na = 1\n\nb=two\n", "x");
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "two");
  EXPECT_THROW(io::parse_key_values("novalue\n", "x"), ConfigError);
}

TEST(Stats, MedianMadSkipMissing) {
  EXPECT_DOUBLE_EQ(median(Vector{3, 1, kMissing, 2}), 2.0);
  EXPECT_DOUBLE_EQ(median(Vector{4, 1, 3, 2}), 2.5);
  EXPECT_NEAR(mad(Vector{1, 2, 3, 4, 100}), 1.4826, 1e-15);
  EXPECT_TRUE(is_missing(median(Vector{kMissing})));
  EXPECT_DOUBLE_EQ(mean(Vector{1, kMissing, 3}), 2.0);
}

TEST(Stats, PlottingPositions) {
  const Vector p3 = plotting_positions(3);
  EXPECT_NEAR(p3[0], 0.625 / 3.25, 1e-15);
  EXPECT_NEAR(p3[1], 0.5, 1e-15);
  const Vector p12 = plotting_positions(12);
  EXPECT_NEAR(p12[0], 0.5 / 12.0, 1e-15);
  const auto o = oracle::r_ppoints(11);
  const Vector p11 = plotting_positions(11);
  for (std::size_t i = 0; i < 11; ++i) EXPECT_NEAR(p11[i], o[i], 1e-15);
}

TEST(Stats, NormalQuantileMatchesAs241) {
  for (double p : {1e-10, 0.001, 0.025, 0.3, 0.5, 0.77, 0.975, 0.999999})
    EXPECT_NEAR(normal_quantile(p), oracle::qnorm_as241(p), 1e-13 * std::max(1.0, std::abs(oracle::qnorm_as241(p))));
}

TEST(LoadHistory, WellFormedFixture) {
  support::TempDir tmp("hist");
  write_fixture(tmp.path);
  const MarketHistory h = load_history(tmp.path);
  EXPECT_EQ(h.depth(), 3u);
  EXPECT_EQ(h.size(), 2u);
  EXPECT_EQ(h.dates.front(), "2020-01-06");
  EXPECT_DOUBLE_EQ(h.close(0, 0), 12.0);
  EXPECT_DOUBLE_EQ(h.close(2, 1), 20.0);
  EXPECT_FALSE(h.has_open());
  EXPECT_EQ(h.is_adr, std::vector<bool>({false, false}));
}

TEST(LoadHistory, HighBelowLowNamesTickerAndDate) {
  support::TempDir tmp("hist");
  write_fixture(tmp.path);
  write(tmp.path / "low.csv", "date,AAA,BBB\n2020-01-02,9,19\n2020-01-03,9,25\n2020-01-06,11,20\n");
  try {
    load_history(tmp.path);
    FAIL() << "expected AxisError";
  } catch (const AxisError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("BBB"), std::string::npos);
    EXPECT_NE(msg.find("2020-01-03"), std::string::npos);
  }
}

TEST(LoadHistory, MissingVolumeFileIsSchemaError) {
  support::TempDir tmp("hist");
  write_fixture(tmp.path);
  fs::remove(tmp.path / "volume.csv");
  EXPECT_THROW(load_history(tmp.path), SchemaError);
}

TEST(LoadHistory, OtherSchemaFailures) {
  support::TempDir tmp("hist");
  write_fixture(tmp.path);
  write(tmp.path / "cap.csv", "date,AAA,CCC\n2020-01-02,1,1\n2020-01-03,1,1\n2020-01-06,1,1\n");
  EXPECT_THROW(load_history(tmp.path), AxisError);
  write_fixture(tmp.path);
  write(tmp.path / "cap.csv", "date,AAA,BBB\n2020-01-03,1,1\n2020-01-02,1,1\n2020-01-06,1,1\n");
  EXPECT_THROW(load_history(tmp.path), DateOrderError);
  write_fixture(tmp.path);
  write(tmp.path / "cap.csv", "date,AAA,BBB\n2020-01-02,1\n2020-01-03,1,1\n2020-01-06,1,1\n");
  EXPECT_THROW(load_history(tmp.path), SchemaError);
}

TEST(LoadHistory, MissingCellsStayMissing) {
  support::TempDir tmp("hist");
  write_fixture(tmp.path);
  write(tmp.path / "volume.csv", "date,AAA,BBB\n2020-01-02,1000,\n2020-01-03,1001,2000\n2020-01-06,1002,2001\n");
  const MarketHistory h = load_history(tmp.path);
  EXPECT_TRUE(is_missing(h.volume(2, 1)));
}

TEST(LoadHistory, ReserializationIsByteIdentical) {
  support::TempDir a("hist"), b("hist");
  write_fixture(a.path);
  write(a.path / "adr.csv", "ticker,flag\nAAA,0\nBBB,1\n");
  const MarketHistory h = load_history(a.path);
  EXPECT_TRUE(h.is_adr[1]);
  save_history(h, b.path);
  for (const char* f : {"close.csv", "adjclose.csv", "high.csv", "low.csv", "volume.csv", "cap.csv", "adr.csv"})
    EXPECT_EQ(io::read_text(a.path / f), io::read_text(b.path / f)) << f;
}

TEST(Classification, LoadValidatesWeights) {
  support::TempDir tmp("cls");
  write(tmp.path / "c.csv",
        "ticker,sector,subsector,industry,weight\nAAA,S,SS,I1,1\nBBB,S,SS,I1,0.6\nBBB,S,SS,I2,0.4\n");
  const ClassificationTree t = load_classification(tmp.path / "c.csv");
  EXPECT_EQ(t.memberships("BBB").size(), 2u);
  EXPECT_THROW(t.memberships("ZZZ"), UnclassifiedTicker);
  write(tmp.path / "d.csv", "ticker,sector,subsector,industry,weight\nAAA,S,SS,I1,0.5\n");
  EXPECT_THROW(load_classification(tmp.path / "d.csv"), ValidationError);
  write(tmp.path / "e.csv", "ticker,sector,industry,weight\nAAA,S,I1,1\n");
  EXPECT_THROW(load_classification(tmp.path / "e.csv"), SchemaError);
}

TEST(SelectUniverse, TopByCapRanksDescending) {
  Matrix close{{1, 1, 1}};
  MarketHistory h = support::history_from_close(close, {"A", "B", "C"});
  h.cap = Matrix{{5, 9, 7}};
  const Universe u = select_universe(h, TopByCap{2});
  EXPECT_EQ(u.tickers, (std::vector<std::string>{"B", "C"}));
}

TEST(SelectUniverse, TiesBrokenByTicker) {
  MarketHistory h = support::history_from_close(Matrix{{1, 1, 1}}, {"C", "A", "B"});
  h.cap = Matrix{{7, 7, 7}};
  EXPECT_EQ(select_universe(h, TopByCap{2}).tickers, (std::vector<std::string>{"A", "B"}));
}

TEST(SelectUniverse, ClampsAndErrors) {
  MarketHistory h = support::history_from_close(Matrix{{1, 2, 3}}, {"A", "B", "C"});
  EXPECT_EQ(select_universe(h, TopByCap{10}).size(), 3u);
  try {
    select_universe(h, ExplicitList{{"A", "QQQ"}});
    FAIL();
  } catch (const UnknownTicker& e) {
    EXPECT_NE(std::string(e.what()).find("QQQ"), std::string::npos);
  }
  EXPECT_THROW(select_universe(h, TopByCap{0}), EmptyUniverse);
  EXPECT_THROW(select_universe(h, ExplicitList{{"A", "A"}}), DuplicateName);
}

TEST(SelectUniverse, TopByAddvAndParsing) {
  MarketHistory h = support::history_from_close(Matrix{{10, 20, 30}}, {"A", "B", "C"});
  h.volume = Matrix{{100, 10, 20}};  // dollar volume 1000, 200, 600
  EXPECT_EQ(select_universe(h, TopByAddv{2, 1}).tickers, (std::vector<std::string>{"A", "C"}));
  EXPECT_EQ(select_universe(h, parse_selection_rule("list:C;A")).tickers, (std::vector<std::string>{"C", "A"}));
  EXPECT_EQ(select_universe(h, parse_selection_rule("top-cap:1")).tickers, (std::vector<std::string>{"C"}));
  EXPECT_THROW(parse_selection_rule("bogus:1"), ConfigError);
}

TEST(SelectUniverse, PureFunction) {
  std::mt19937_64 rng(3);
  Matrix close = support::random_matrix(rng, 25, 12);
  for (auto& v : close.data()) v = std::exp(v);
  const MarketHistory h = support::history_from_close(close);
  for (const SelectionRule& r : {SelectionRule{TopByCap{5}}, SelectionRule{TopByAddv{7}}})
    EXPECT_EQ(select_universe(h, r).tickers, select_universe(h, r).tickers);
}

TEST(SelectUniverse, ExcludeSectors) {
  MarketHistory h = support::history_from_close(Matrix{{1, 2, 3}}, {"A", "B", "C"});
  ClassificationTree t;
  t.assignment["A"] = {{"Tech", "X", "Y", 1}};
  t.assignment["B"] = {{"Energy", "X", "Y", 1}};
  t.assignment["C"] = {{"Tech", "X", "Y", 1}};
  const Universe u = exclude_sectors(support::all_of(h), t, {"Tech"});
  EXPECT_EQ(u.tickers, (std::vector<std::string>{"B"}));
  EXPECT_THROW(exclude_sectors(support::all_of(h), t, {"Tech", "Energy"}), EmptyUniverse);
}
