#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crm/crm.hpp"

namespace fs = std::filesystem;
using namespace crm;

namespace {

std::set<std::string> split_set(const std::string& s) {
  std::set<std::string> out;
  for (const auto& part : io::split(s, ';'))
    if (const auto t = io::trim(part); !t.empty()) out.insert(t);
  return out;
}

Vector split_numbers(const std::string& s) {
  Vector out;
  for (const auto& part : io::split(s, ';'))
    if (const auto t = io::trim(part); !t.empty()) out.push_back(io::parse_number(t, "list"));
  return out;
}

struct UniverseArgs {
  std::string data_dir;
  std::string classification;
  std::string rule = "all";
  std::string exclude;

  void add(CLI::App* c, bool data_required) {
    auto* d = c->add_option("--data-dir", data_dir, "directory of price panels");
    if (data_required) d->required();
    c->add_option("--classification", classification, "classification.csv (default: <data-dir>/classification.csv)");
    c->add_option("--universe", rule, "all | top-cap:N | top-addv:N | list:A;B;...");
    c->add_option("--exclude-sectors", exclude, "semicolon-separated sectors to drop");
  }

  fs::path classification_path() const {
    return classification.empty() ? fs::path(data_dir) / "classification.csv" : fs::path(classification);
  }

  Universe select(const MarketHistory& h, const ClassificationTree& tree) const {
    Universe u = select_universe(h, parse_selection_rule(rule));
    if (!exclude.empty()) u = exclude_sectors(u, tree, split_set(exclude));
    return u;
  }
};

void emit_holdings(Holdings h, const FactorLoadings& omega, const std::string& out) {
  h.tickers = omega.tickers;
  const ExposureReport e = exposures(h, omega);
  save_holdings(h, e, out);
  std::printf("gross=%s max_abs_exposure_over_I=%s dollar_imbalance=%s\n",
              io::format_number(h.investment_level).c_str(),
              io::format_number(e.max_abs_exposure() / h.investment_level).c_str(),
              io::format_number(e.dollar_imbalance).c_str());
}

// Flat key=value config: each key becomes --key=value placed before the
// command-line arguments, so explicit flags win.
std::vector<std::string> expand_config(std::vector<std::string> args, const CLI::App& app) {
  std::string path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty()) return rest;
  const io::KeyValues kv = io::parse_key_values(io::read_text(path), path);
  if (rest.empty()) throw ConfigError("a command is required");
  const std::string command = rest.front();
  const CLI::App* sub = nullptr;
  for (const auto* s : app.get_subcommands([](const CLI::App*) { return true; }))
    if (s->get_name() == command) sub = s;
  if (!sub) return rest;
  std::vector<std::string> out{command};
  for (const auto& [key, value] : kv) {
    bool known = false;
    for (const auto* s : app.get_subcommands([](const CLI::App*) { return true; }))
      for (const auto* o : s->get_options())
        if (o->check_lname(key)) known = true;
    if (!known) throw ConfigError(path + ": unknown key '" + key + "'");
    for (const auto* o : sub->get_options())
      if (o->check_lname(key)) out.push_back("--" + key + "=" + value);
  }
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crm: custom multi-factor equity risk models"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--config", "flat key=value file; command-line flags override it");

  // build-model
  UniverseArgs bm_u;
  ModelRecipe recipe;
  std::string bm_out, bm_returns = "close";
  auto* bm = app.add_subcommand("build-model", "build loadings and estimate factor covariance and specific risk");
  bm_u.add(bm, true);
  bm->add_option("--out", bm_out, "model directory")->required();
  bm->add_option("--momentum", recipe.momentum);
  bm->add_option("--liquidity", recipe.liquidity);
  bm->add_option("--size", recipe.size);
  bm->add_option("--intraday-vol", recipe.intraday_vol);
  bm->add_option("--industries", recipe.industries);
  bm->add_option("--intercept", recipe.intercept);
  bm->add_option("--d-r", recipe.momentum_params.d_r)->check(CLI::PositiveNumber);
  bm->add_option("--momentum-days", recipe.momentum_params.days)->check(CLI::PositiveNumber);
  bm->add_option("--momentum-back", recipe.momentum_params.back);
  bm->add_option("--d-addv", recipe.d_addv)->check(CLI::PositiveNumber);
  bm->add_option("--days", recipe.style_days)->check(CLI::PositiveNumber);
  bm->add_option("--min-industry-size", recipe.min_industry_size)->check(CLI::PositiveNumber);
  bm->add_option("--window", recipe.window, "estimation window in periods, 0 = all");
  bm->add_option("--returns", bm_returns, "close | overnight")->check(CLI::IsMember({"close", "overnight"}));
  bm->add_option("--floor-fraction", recipe.estimation.floor_fraction);

  // neutralize
  std::string nz_signal, nz_model, nz_out, nz_method = "regression", nz_weights = "inverse-variance";
  double nz_investment = 1.0;
  auto* nz = app.add_subcommand("neutralize", "factor-neutral holdings by weighted regression");
  nz->add_option("--signal", nz_signal, "ticker,value expected returns")->required();
  nz->add_option("--model", nz_model)->required();
  nz->add_option("--out", nz_out)->required();
  nz->add_option("--investment", nz_investment);
  nz->add_option("--method", nz_method)->check(CLI::IsMember({"regression", "mean-reversion"}));
  nz->add_option("--weights", nz_weights)->check(CLI::IsMember({"unit", "inverse-variance"}));

  // optimize
  std::string op_signal, op_model, op_out;
  double op_investment = 1.0, op_phi_scale = 1.0;
  auto* op = app.add_subcommand("optimize", "Sharpe-maximizing holdings under the factor model");
  op->add_option("--signal", op_signal)->required();
  op->add_option("--model", op_model)->required();
  op->add_option("--out", op_out)->required();
  op->add_option("--investment", op_investment);
  op->add_option("--phi-scale", op_phi_scale, "multiply the factor covariance by this factor")
      ->check(CLI::PositiveNumber);

  // eval-factor
  std::string ef_panel, ef_model, ef_candidate, ef_name = "candidate", ef_out;
  bool ef_winsorize = false;
  auto* ef = app.add_subcommand("eval-factor", "test whether a candidate column adds explanatory power");
  ef->add_option("--returns-panel", ef_panel)->required();
  ef->add_option("--model", ef_model, "model directory whose loadings are the benchmark")->required();
  ef->add_option("--candidate", ef_candidate, "ticker,value file or date x ticker panel")->required();
  ef->add_option("--name", ef_name);
  ef->add_option("--winsorize", ef_winsorize);
  ef->add_option("--out", ef_out, "directory for report.txt and report.csv");

  // decouple
  double dc_lambda = 0.0;
  std::size_t dc_m = 1;
  std::string dc_eta, dc_series;
  auto* dc = app.add_subcommand("decouple", "correlation of the last return with the M-period return");
  dc->add_option("--lambda", dc_lambda);
  dc->add_option("--M", dc_m)->required();
  dc->add_option("--eta", dc_eta, "semicolon-separated eta_tilde for lags 1..M-1");
  dc->add_option("--series", dc_series, "one-column csv of returns, oldest first");

  // audit
  UniverseArgs au_u;
  std::string au_model, au_panel, au_out;
  std::size_t au_threshold = 1;
  auto* au = app.add_subcommand("audit", "find sparsely populated industry columns");
  au->add_option("--model", au_model)->required();
  au_u.add(au, false);
  au->add_option("--threshold", au_threshold);
  au->add_option("--returns-panel", au_panel, "re-estimate without flagged columns and compare total risk");
  au->add_option("--out", au_out);

  // synth
  std::uint64_t sy_seed = 0;
  std::size_t sy_n = 50, sy_k = 5, sy_m = 300, sy_sectors = 4;
  RandomSpecOptions sy_opt;
  std::string sy_out;
  auto* sy = app.add_subcommand("synth", "write a synthetic market fixture");
  sy->add_option("--seed", sy_seed);
  sy->add_option("--N", sy_n)->check(CLI::PositiveNumber);
  sy->add_option("--K", sy_k);
  sy->add_option("--M", sy_m)->check(CLI::PositiveNumber);
  sy->add_option("--sectors", sy_sectors)->check(CLI::PositiveNumber);
  sy->add_option("--factor-vol", sy_opt.factor_vol);
  sy->add_option("--xi-low", sy_opt.xi_low);
  sy->add_option("--xi-high", sy_opt.xi_high);
  sy->add_option("--out", sy_out)->required();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args), app);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }

    if (*bm) {
      recipe.returns = bm_returns == "overnight" ? ReturnKind::overnight : ReturnKind::close_to_close;
      const MarketHistory h = load_history(bm_u.data_dir);
      validate(h);
      const ClassificationTree tree = load_classification(bm_u.classification_path());
      const Universe u = bm_u.select(h, tree);
      const RiskModel m = build_model(h, tree, recipe, u);
      validate(m);
      io::KeyValues extra = recipe.describe();
      extra["universe.rule"] = bm_u.rule;
      extra["universe.exclude_sectors"] = bm_u.exclude;
      save_model(m, bm_out, extra);
      io::write_file_atomic(fs::path(bm_out) / "audit.txt", empty_industry_audit(m.omega, u, 1).format_text());
      std::printf("model: N=%zu K=%zu shrink_q=%s\n", m.n(), m.k(), io::format_number(m.meta.shrink_q).c_str());
    } else if (*nz) {
      const RiskModel m = load_model(nz_model);
      const Vector r = load_signal(nz_signal, m.omega.tickers);
      Vector w;
      if (nz_weights == "inverse-variance")
        for (double x : m.xi) w.push_back(1.0 / (x * x));
      const Neutralized n = neutralize(r, m.omega.omega, w);
      Holdings h = nz_method == "regression" ? regression_holdings(n.regressed, nz_investment)
                                             : mean_reversion_holdings(n.regressed, nz_investment);
      h.params["weights"] = nz_weights;
      emit_holdings(std::move(h), m.omega, nz_out);
    } else if (*op) {
      RiskModel m = load_model(op_model);
      m.phi = m.phi.scaled(op_phi_scale);
      const Vector r = load_signal(op_signal, m.omega.tickers);
      Holdings h = optimize_holdings(r, m, op_investment);
      h.params["phi_scale"] = io::format_number(op_phi_scale);
      emit_holdings(std::move(h), m.omega, op_out);
    } else if (*ef) {
      const RiskModel m = load_model(ef_model);
      const ReturnsPanel panel = load_returns(ef_panel).aligned(m.omega.tickers);
      FactorTestOptions opt;
      opt.candidate_name = ef_name;
      opt.winsorize = ef_winsorize;
      const io::CsvTable head = io::read_csv(ef_candidate);
      FactorTestReport rep;
      if (!head.header.empty() && head.header[0] == "ticker") {
        rep = factor_value_test(panel, m.omega, load_signal(ef_candidate, m.omega.tickers), opt);
      } else {
        const ReturnsPanel c = load_returns(ef_candidate).aligned(m.omega.tickers);
        if (c.dates != panel.dates) throw AlignmentError("candidate panel dates differ from the returns panel");
        rep = factor_value_test(panel, m.omega, c.returns, opt);
      }
      const std::string text = format_text(rep);
      std::fputs(text.c_str(), stdout);
      if (!ef_out.empty()) {
        io::write_file_atomic(fs::path(ef_out) / "report.txt", text);
        io::write_file_atomic(fs::path(ef_out) / "report.csv", format_csv(rep));
      }
    } else if (*dc) {
      DecouplingSpec spec{dc_m, dc_lambda, split_numbers(dc_eta)};
      const DecouplingResult r = decoupling_analytic(spec);
      std::printf("rho_M=%.4f, bound=%.4f\n", r.rho_M, r.bound);
      if (!dc_series.empty()) {
        const io::CsvTable t = io::read_csv(dc_series);
        Vector s;
        for (const auto& row : t.rows) s.push_back(io::parse_number(row.back(), dc_series));
        const EmpiricalDecoupling e = decoupling_empirical(s, dc_m);
        std::printf("empirical_rho=%.4f, windows=%zu, effective_n=%.1f, fisher_se=%.4f, consistent=%s\n", e.rho, e.p,
                    e.effective_n, e.fisher_se, e.consistent_with(r.rho_M) ? "yes" : "no");
        if (!e.enough_windows)
          std::printf("warning: %zu windows is below 30*M; the standard error is unreliable\n", e.p);
      }
    } else if (*au) {
      const RiskModel m = load_model(au_model);
      Universe u{m.omega.tickers, m.meta.as_of};
      if (!au_u.data_dir.empty()) {
        const MarketHistory h = load_history(au_u.data_dir);
        u = au_u.select(h, load_classification(au_u.classification_path()));
      }
      AuditReport rep = empty_industry_audit(m.omega, u, au_threshold);
      if (!au_panel.empty() && !rep.findings.empty()) {
        std::set<std::string> keep;
        for (const auto& n : m.omega.names()) keep.insert(n);
        for (const auto& f : rep.findings) keep.erase(f.column);
        const ReturnsPanel panel = load_returns(au_panel).aligned(m.omega.tickers);
        const RiskModel sub = subset_factors(panel, m.omega, keep);
        rep.max_relative_gamma_gap = max_relative_gamma_gap(m, sub);
        if (!au_out.empty()) save_model(sub, fs::path(au_out) / "subset_model");
      }
      const std::string text = rep.format_text();
      std::fputs(text.c_str(), stdout);
      if (!au_out.empty()) io::write_file_atomic(fs::path(au_out) / "audit.txt", text);
    } else if (*sy) {
      const SynthSpec spec = random_spec(sy_n, sy_k, sy_m, sy_seed, sy_opt);
      const SynthMarket mkt = generate_market(spec);
      write_fixture(mkt, synthetic_classification(spec.omega_star.tickers, sy_sectors), sy_seed, sy_out);
      std::printf("fixture: N=%zu K=%zu M=%zu seed=%llu\n", sy_n, sy_k, sy_m,
                  static_cast<unsigned long long>(sy_seed));
    }
    return 0;
  } catch (const crm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
