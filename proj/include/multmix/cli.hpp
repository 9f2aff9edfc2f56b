#ifndef MULTMIX_CLI_HPP
#define MULTMIX_CLI_HPP

#include <chrono>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "multmix/dataset.hpp"
#include "multmix/formula.hpp"
#include "multmix/inference.hpp"
#include "multmix/mam.hpp"
#include "multmix/methodcomp.hpp"
#include "multmix/optimize.hpp"
#include "multmix/profile.hpp"
#include "multmix/report.hpp"

namespace multmix::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kNotConverged = 2 };

struct RunConfig {
  std::string command;
  std::string data;
  std::string formula;
  std::string response;
  std::string out = "text";
  std::string init;
  std::uint64_t seed = 0;
  double level = 0.95;
  bool time = false;
  bool sort_levels = false;
  std::vector<std::string> combine;
  bool uncentered = false;
  bool mixture = false;
  int max_iter = 1000;
  double grad_tol = 1e-6;
  std::vector<std::string> contrasts;
  std::vector<double> components;
  int points = 200;
  std::vector<double> range{0.1, 12.0};
  int patients = 120;
  int reps = 100;
  std::string spacing = "even";
};

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(std::string(detail::trim(cur)));
  return out;
}

/// "sigma=1.2,rho=0.3" -> {sigma: 1.2, rho: 0.3}.
inline std::map<std::string, double> parse_init(const std::string& text) {
  std::map<std::string, double> m;
  if (detail::trim(text).empty()) return m;
  for (const auto& kv : split(text, ',')) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::InvalidArgument, "--init expects key=value pairs, got '" + kv + "'");
    const auto v = detail::parse_real(kv.substr(eq + 1));
    if (!v) throw Error(ErrorKind::InvalidArgument, "--init value for '" + kv.substr(0, eq) + "' is not a number");
    m[kv.substr(0, eq)] = *v;
  }
  return m;
}

/// "Product=TVset:Picture" -> combined factor Product.
inline CombineSpec parse_combine(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(ErrorKind::InvalidArgument, "--combine expects NAME=COL1:COL2, got '" + text + "'");
  CombineSpec c{text.substr(0, eq), split(text.substr(eq + 1), ':')};
  if (c.parts.size() < 2) throw Error(ErrorKind::InvalidArgument, "--combine needs at least two columns");
  return c;
}

/// Formula plus the data it refers to; --response replaces the left side.
struct Problem {
  ModelSpec spec;
  Dataset data;
};

inline Problem load_problem(const RunConfig& rc) {
  if (rc.formula.empty()) throw Error(ErrorKind::InvalidArgument, "--formula is required");
  ModelSpec ms = parse_formula(rc.formula);
  if (!rc.response.empty()) ms.response = rc.response;
  if (rc.data.empty()) throw Error(ErrorKind::InvalidArgument, "--data is required");
  ReadOptions ro;
  ro.sort_levels = rc.sort_levels;
  for (const auto& c : rc.combine) ro.combine.push_back(parse_combine(c));
  Dataset ds = read_csv(rc.data, ms.response, ms.referenced_factors(), ro);
  validate_against(ms, ds);
  return {std::move(ms), std::move(ds)};
}

inline FitOptions fit_options(const RunConfig& rc) {
  FitOptions fo;
  fo.max_iter = rc.max_iter;
  fo.grad_tol = rc.grad_tol;
  fo.center_covariate = !rc.uncentered;
  fo.init = parse_init(rc.init);
  return fo;
}

inline void emit(std::ostream& out, const RunConfig& rc, const Json& j, const std::string& text,
                 const std::string& csv) {
  if (rc.out == "json")
    out << j.dump(2) << "\n";
  else if (rc.out == "csv")
    out << csv;
  else
    out << text;
}

inline std::string fit_csv(const Json& j) {
  std::ostringstream os;
  os.precision(17);
  os << "parameter,value\n";
  for (const auto& f : j["fixed"]) os << "beta[" << f["level"].get<std::string>() << "]," << f["estimate"].get<double>() << "\n";
  for (const auto& [k, v] : j["covariance"].items())
    if (v.is_number()) os << k << ',' << v.get<double>() << "\n";
  for (const auto& [k, v] : j["covariance"]["sd"].items()) os << "sd(" << k << ")," << v.get<double>() << "\n";
  os << "nll," << j["nll"].get<double>() << "\n";
  return os.str();
}

inline int cmd_fit(const RunConfig& rc, std::ostream& out) {
  const Problem pb = load_problem(rc);
  const FitResult fr = fit(pb.spec, pb.data, std::nullopt, fit_options(rc));
  const Json j = fit_json(fr, pb.data.dropped());
  emit(out, rc, j, fit_text(j), fit_csv(j));
  return fr.converged ? kOk : kNotConverged;
}

/// The grouping factor paired with the fixed factor in the F-tests.
inline std::optional<std::string> grouping_of(const ModelSpec& ms) {
  if (ms.mult_term) return ms.mult_term->random;
  if (!ms.random_intercepts.empty()) return ms.random_intercepts.front();
  return std::nullopt;
}

inline int cmd_test(const RunConfig& rc, std::ostream& out) {
  const Problem pb = load_problem(rc);
  LrtTableOptions lo;
  lo.fit = fit_options(rc);
  lo.method = rc.mixture ? TailMethod::Mixture : TailMethod::Fractional;
  const LrtTable t = lrt_table(pb.spec, pb.data, lo);

  Json j;
  j["formula"] = to_string(pb.spec);
  j["tail"] = rc.mixture ? "mixture" : "fractional-df";
  j["nll_full"] = t.full.nll;
  j["converged"] = t.full.converged;
  Json rows = Json::array();
  bool all_converged = t.full.converged;
  for (const auto& r : t.rows) {
    rows.push_back(lrt_json(r));
    all_converged = all_converged && r.converged;
  }
  j["lrt"] = rows;
  Json notes = t.notes;

  const auto group = grouping_of(pb.spec);
  if (!pb.spec.fixed_factors.empty() && group) {
    const std::string fixed = pb.spec.fixed_factors.front();
    Json pt = Json::array();
    try {
      const MamSummary m = mam_fit(pb.data, *group, fixed);
      pt.push_back(ftest_json("2-way ANOVA", anova_ftest(m)));
      pt.push_back(ftest_json("MAM", mam_ftest(m)));
    } catch (const Error& e) {
      notes.push_back(std::string("F-tests omitted: ") + e.what());
    }
    for (const auto& r : t.rows)
      if (r.effect == fixed) {
        Json l = {{"method", pb.spec.mult_term ? "MMM (LRT)" : "LMM (LRT)"},
                  {"statistic", "Chi2"},
                  {"value", r.chi2},
                  {"df", r.df.value()},
                  {"df_text", to_string(r.df)},
                  {"p_value", r.p_value}};
        pt.push_back(l);
      }
    j["product_tests"] = pt;
  }
  j["notes"] = notes;

  std::ostringstream csv;
  csv.precision(17);
  csv << "effect,chi2,df,p_value\n";
  for (const auto& r : t.rows) csv << r.effect << ',' << r.chi2 << ',' << r.df.value() << ',' << r.p_value << "\n";
  emit(out, rc, j, test_text(j), csv.str());
  return all_converged ? kOk : kNotConverged;
}

inline int cmd_lines(const RunConfig& rc, std::ostream& out) {
  const Problem pb = load_problem(rc);
  if (!pb.spec.mult_term) throw Error(ErrorKind::UnsupportedModel, "lines needs a model with an mp(...) term");
  const FitResult fr = fit(pb.spec, pb.data, std::nullopt, fit_options(rc));
  const Json j = lines_json(group_lines(fr));
  emit(out, rc, j, lines_text(j), lines_csv(j));
  return fr.converged ? kOk : kNotConverged;
}

/// Components from --components or from a fit of --data/--formula.
inline LoaComponents components_of(const RunConfig& rc, std::optional<FitResult>& fr) {
  if (!rc.components.empty()) {
    if (rc.components.size() != 4)
      throw Error(ErrorKind::InvalidArgument, "--components expects sigma,sigma_a,sigma_b,rho");
    return {rc.components[0], rc.components[1], rc.components[2], rc.components[3]};
  }
  const Problem pb = load_problem(rc);
  if (!pb.spec.mult_term) throw Error(ErrorKind::UnsupportedModel, "limits of agreement need an mp(...) term");
  fr = fit(pb.spec, pb.data, std::nullopt, fit_options(rc));
  return LoaComponents::from_fit(*fr);
}

inline int cmd_loa(const RunConfig& rc, std::ostream& out) {
  std::optional<FitResult> fr;
  const LoaComponents c = components_of(rc, fr);
  if (rc.range.size() != 2) throw Error(ErrorKind::InvalidArgument, "--range expects lo,hi");
  const auto grid = fr ? loa_grid(*fr, rc.points, rc.level) : loa_grid(c, rc.range[0], rc.range[1], rc.points, rc.level);
  const Json j = loa_json(c, rc.level, grid);
  std::ostringstream csv;
  write_loa_csv(csv, grid);
  emit(out, rc, j, loa_text(j), csv.str());
  return !fr || fr->converged ? kOk : kNotConverged;
}

inline int cmd_simulate(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  std::optional<FitResult> fr;
  const LoaComponents c = components_of(rc, fr);
  if (rc.range.size() != 2) throw Error(ErrorKind::InvalidArgument, "--range expects lo,hi");
  LoaStudyOptions o;
  o.n_patients = rc.patients;
  o.n_reps = rc.reps;
  o.lo = rc.range[0];
  o.hi = rc.range[1];
  o.seed = rc.seed;
  if (rc.spacing == "random")
    o.spacing = Spacing::Random;
  else if (rc.spacing != "even")
    throw Error(ErrorKind::InvalidArgument, "--spacing must be even or random");
  if (fr) o.covariate_offset = fr->layout.center_covariate ? fr->mu() : 0.0;
  const auto rows = simulate_loa_study(c, o);
  err << "seed: " << rc.seed << "\n";
  std::ostringstream csv;
  write_study_csv(csv, rows);
  Json j;
  j["seed"] = rc.seed;
  Json a = Json::array();
  for (const auto& r : rows)
    a.push_back({{"patient", r.patient}, {"true_value", r.true_value}, {"method1_value", r.method1},
                 {"method2_value", r.method2}, {"difference", r.difference}});
  j["rows"] = a;
  emit(out, rc, j, csv.str(), csv.str());
  return !fr || fr->converged ? kOk : kNotConverged;
}

inline int cmd_ci(const RunConfig& rc, std::ostream& out) {
  const Problem pb = load_problem(rc);
  if (pb.spec.fixed_factors.empty()) throw Error(ErrorKind::UnsupportedModel, "contrasts need a fixed factor");
  const FitResult fr = fit(pb.spec, pb.data, std::nullopt, fit_options(rc));
  const auto& levels = fr.layout.fixed_levels;
  auto index_of = [&](const std::string& l) {
    for (std::size_t k = 0; k < levels.size(); ++k)
      if (levels[k] == l) return static_cast<int>(k);
    throw Error(ErrorKind::InvalidArgument, "unknown level '" + l + "' in --contrast");
  };
  std::vector<std::pair<int, int>> pairs;
  for (const auto& c : rc.contrasts) {
    const auto parts = split(c, ',');
    if (parts.size() != 2) throw Error(ErrorKind::InvalidArgument, "--contrast expects LEVEL1,LEVEL2");
    pairs.emplace_back(index_of(parts[0]), index_of(parts[1]));
  }
  if (pairs.empty())
    for (int a = 0; a < fr.layout.p; ++a)
      for (int b = a + 1; b < fr.layout.p; ++b) pairs.emplace_back(a, b);

  ProfileOptions po;
  po.fit = fit_options(rc);
  Json intervals = Json::array();
  for (auto [a, b] : pairs) {
    const ProfileCi ci = profile_ci(fr, level_contrast(fr.layout.p, a, b), rc.level, po);
    double var = std::numeric_limits<double>::quiet_NaN();
    if (grouping_of(pb.spec)) var = contrast_variance_mmm(fr, a, b).variance;
    intervals.push_back(ci_json(ci, levels[a] + " - " + levels[b], var));
  }
  Json j;
  j["formula"] = to_string(pb.spec);
  j["level"] = rc.level;
  j["converged"] = fr.converged;
  j["intervals"] = intervals;
  std::ostringstream csv;
  csv.precision(17);
  csv << "contrast,estimate,lower,upper,asymmetric\n";
  for (const auto& r : intervals)
    csv << r["contrast"].get<std::string>() << ',' << r["estimate"].get<double>() << ','
        << r["lower"].get<double>() << ',' << r["upper"].get<double>() << ','
        << (r["asymmetric"].get<bool>() ? 1 : 0) << "\n";
  emit(out, rc, j, ci_text(j), csv.str());
  return fr.converged ? kOk : kNotConverged;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig rc;
  CLI::App app{"Multiplicative mixed models: fitting, tests, intervals and limits of agreement"};
  app.set_config("--config", "", "TOML/INI file with the same keys as the flags; flags win");
  app.add_option("--data", rc.data, "CSV file with a header row");
  app.add_option("--formula", rc.formula, "e.g. 'y ~ 1 + F + (1|G) + (1|G:F) + mp(G,F)'");
  app.add_option("--response", rc.response, "response column (replaces the formula's left side)");
  app.add_option("--out", rc.out, "output format")->check(CLI::IsMember({"text", "json", "csv"}));
  app.add_option("--init", rc.init, "start values, e.g. sigma=1,rho=0.2,sd:G=2");
  app.add_option("--seed", rc.seed, "simulation seed");
  app.add_option("--level", rc.level, "coverage level for intervals")->check(CLI::Range(0.0, 1.0));
  app.add_flag("--time", rc.time, "print wall-clock time to stderr");
  app.add_flag("--sort-levels", rc.sort_levels, "lexicographic instead of first-appearance level order");
  app.add_option("--combine", rc.combine, "derived factor NAME=COL1:COL2 (labels joined with ':')");
  app.add_flag("--uncentered", rc.uncentered, "use the cell mean itself as the mp covariate");
  app.add_flag("--mixture", rc.mixture, "p-values from the 50:50 chi-square mixture");
  app.add_option("--max-iter", rc.max_iter, "optimizer iteration limit");
  app.add_option("--grad-tol", rc.grad_tol, "optimizer gradient tolerance");
  app.add_option("--contrast", rc.contrasts, "LEVEL1,LEVEL2 (ci); default all pairs");
  app.add_option("--components", rc.components, "sigma,sigma_a,sigma_b,rho instead of a fit (loa, simulate)")
      ->delimiter(',');
  app.add_option("--points", rc.points, "grid points for loa");
  app.add_option("--range", rc.range, "lo,hi: true-value range (simulate) or grid range (loa)")->delimiter(',');
  app.add_option("--patients", rc.patients, "patients in the simulation study");
  app.add_option("--reps", rc.reps, "replicates per patient");
  app.add_option("--spacing", rc.spacing, "true values: even or random");
  app.fallthrough();
  app.require_subcommand(1, 1);
  for (const char* name : {"fit", "test", "lines", "loa", "simulate", "ci"}) {
    static const std::map<std::string, std::string> help = {
        {"fit", "fit a model and print estimates"},
        {"test", "likelihood ratio tests of every term, plus F-tests"},
        {"lines", "per-group regression lines (slope b+1, intercept a-mu b)"},
        {"loa", "additive and multiplicative limits of agreement"},
        {"simulate", "limits-of-agreement simulation study"},
        {"ci", "profile likelihood intervals for level differences"}};
    app.add_subcommand(name, help.at(name))->callback([&rc, name] { rc.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  const auto t0 = std::chrono::steady_clock::now();
  int code = kOk;
  try {
    if (rc.command == "fit") code = cmd_fit(rc, out);
    else if (rc.command == "test") code = cmd_test(rc, out);
    else if (rc.command == "lines") code = cmd_lines(rc, out);
    else if (rc.command == "loa") code = cmd_loa(rc, out);
    else if (rc.command == "simulate") code = cmd_simulate(rc, out, err);
    else if (rc.command == "ci") code = cmd_ci(rc, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return kInputError;
  }
  if (rc.time) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    err << "time: " << s << " s\n";
  }
  if (code == kNotConverged) err << "warning: optimizer did not converge; results printed anyway\n";
  return code;
}

}  // namespace multmix::cli

#endif  // MULTMIX_CLI_HPP
