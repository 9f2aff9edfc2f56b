#ifndef MULTMIX_REPORT_HPP
#define MULTMIX_REPORT_HPP

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "multmix/inference.hpp"
#include "multmix/mam.hpp"
#include "multmix/methodcomp.hpp"
#include "multmix/optimize.hpp"
#include "multmix/profile.hpp"

// JSON is the source of truth; the text renderers read only the JSON.

namespace multmix {

using Json = nlohmann::ordered_json;

inline std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::string fmt_p(double p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2E", p);
  return buf;
}

/// Left-aligned columns separated by two spaces.
inline std::string aligned(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      line += r[c];
      if (c + 1 < r.size()) line += std::string(width[c] - r[c].size() + 2, ' ');
    }
    out += line + "\n";
  }
  return out;
}

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json fit_json(const FitResult& fr, std::size_t dropped = 0) {
  const DesignLayout& lay = fr.layout;
  Json j;
  j["formula"] = to_string(fr.model);
  j["n_obs"] = lay.n;
  j["dropped"] = dropped;
  j["converged"] = fr.converged;
  j["stop_reason"] = fr.stop_reason;
  j["n_iter"] = fr.n_iter;
  j["grad_norm"] = fr.grad_norm;
  j["nll"] = fr.nll;
  j["centered_covariate"] = lay.center_covariate;
  j["diagnostics"] = fr.diagnostics;

  Json fixed = Json::array();
  for (int k = 0; k < lay.p; ++k)
    fixed.push_back({{"level", lay.fixed_levels[k]}, {"estimate", fr.natural.beta[k]}});
  j["fixed"] = fixed;
  j["mu"] = fr.mu();

  Json random = Json::array();
  for (std::size_t t = 0; t < lay.terms.size(); ++t) {
    const RandomTerm& term = lay.terms[t];
    Json levels = Json::array();
    for (int l = 0; l < term.n_levels; ++l)
      levels.push_back({{"level", term.level_labels[l]}, {"mode", fr.mode(static_cast<int>(t), l)}});
    random.push_back({{"term", term.label}, {"sd", fr.natural.sd[t]}, {"modes", levels}});
  }
  j["random"] = random;
  if (lay.slope) {
    Json slopes = Json::array();
    for (int i = 0; i < lay.slope->n_groups; ++i)
      slopes.push_back({{"group", lay.slope->levels[i]}, {"b", fr.slope_mode(i)}});
    j["slopes"] = slopes;
  }

  Json cov;
  cov["sigma"] = fr.natural.sigma;
  cov["sigma_a"] = optional_json(fr.sigma_a());
  cov["sigma_b"] = optional_json(fr.natural.sigma_b);
  cov["sigma_d"] = optional_json(fr.sigma_d());
  cov["rho"] = optional_json(fr.rho_reported());
  Json sd = Json::object();
  for (std::size_t t = 0; t < lay.terms.size(); ++t) sd[lay.terms[t].label] = fr.natural.sd[t];
  cov["sd"] = sd;
  j["covariance"] = cov;
  j["rho_at_boundary"] = fr.rho_at_boundary;
  return j;
}

inline std::string fit_text(const Json& j) {
  std::ostringstream os;
  os << "Model: " << j["formula"].get<std::string>() << "\n";
  os << "Observations: " << j["n_obs"].get<int>();
  if (j["dropped"].get<std::size_t>() > 0) os << " (" << j["dropped"].get<std::size_t>() << " rows dropped)";
  os << "  NLL: " << fmt4(j["nll"].get<double>()) << "  Iterations: " << j["n_iter"].get<int>()
     << "  Converged: " << (j["converged"].get<bool>() ? "yes" : "NO") << " ("
     << j["stop_reason"].get<std::string>() << ")\n\n";

  os << "Fixed effects (cell means mu + nu_j)\n";
  std::vector<std::vector<std::string>> rows{{"level", "estimate"}};
  for (const auto& f : j["fixed"]) rows.push_back({f["level"].get<std::string>(), fmt4(f["estimate"].get<double>())});
  os << aligned(rows) << "\n";

  // Random intercepts of grouping factors, with the slopes next to the mp group.
  for (const auto& t : j["random"]) {
    const std::string label = t["term"].get<std::string>();
    if (label.find(':') != std::string::npos) continue;
    const bool with_b = j.contains("slopes") && t["modes"].size() == j["slopes"].size() &&
                        t["modes"][0]["level"] == j["slopes"][0]["group"];
    os << "Random effect modes: " << label << "\n";
    rows = {{"level", "a"}};
    if (with_b) rows[0].push_back("b");
    for (std::size_t l = 0; l < t["modes"].size(); ++l) {
      rows.push_back({t["modes"][l]["level"].get<std::string>(), fmt4(t["modes"][l]["mode"].get<double>())});
      if (with_b) rows.back().push_back(fmt4(j["slopes"][l]["b"].get<double>()));
    }
    os << aligned(rows) << "\n";
  }
  if (j.contains("slopes") && !j["covariance"]["sigma_a"].is_number()) {
    os << "Random slopes b\n";
    rows = {{"group", "b"}};
    for (const auto& s : j["slopes"]) rows.push_back({s["group"].get<std::string>(), fmt4(s["b"].get<double>())});
    os << aligned(rows) << "\n";
  }

  os << "Covariance parameters\n";
  const Json& c = j["covariance"];
  std::vector<std::string> head{"sigma"}, vals{fmt4(c["sigma"].get<double>())};
  for (const auto& [label, v] : c["sd"].items()) {
    head.push_back("sd(" + label + ")");
    vals.push_back(fmt4(v.get<double>()));
  }
  if (c["sigma_b"].is_number()) {
    head.push_back("sigma_b");
    vals.push_back(fmt4(c["sigma_b"].get<double>()));
  }
  if (c["rho"].is_number()) {
    head.push_back("rho");
    vals.push_back(fmt4(c["rho"].get<double>()));
  }
  os << aligned({head, vals});
  for (const auto& d : j["diagnostics"]) os << "note: " << d.get<std::string>() << "\n";
  return os.str();
}

inline Json lrt_json(const LrtResult& r) {
  return {{"effect", r.effect},   {"chi2", r.chi2},         {"df", r.df.value()},
          {"df_text", to_string(r.df)}, {"p_value", r.p_value}, {"converged", r.converged},
          {"nll_null", r.nll_null}};
}

inline Json ftest_json(const std::string& method, const FTest& t) {
  return {{"method", method}, {"statistic", "F"}, {"value", t.f}, {"df1", t.df1}, {"df2", t.df2},
          {"p_value", t.p_value}};
}

inline std::string test_text(const Json& j) {
  std::ostringstream os;
  os << "Model: " << j["formula"].get<std::string>() << "  (p-values: " << j["tail"].get<std::string>()
     << ")\n\nLikelihood ratio tests\n";
  std::vector<std::vector<std::string>> rows{{"Effect", "Chi2", "DF", "p-value"}};
  for (const auto& r : j["lrt"])
    rows.push_back({r["effect"].get<std::string>() + (r["converged"].get<bool>() ? "" : " (not converged)"),
                    fmt4(r["chi2"].get<double>()), r["df_text"].get<std::string>(),
                    fmt_p(r["p_value"].get<double>())});
  os << aligned(rows);
  if (j.contains("product_tests")) {
    os << "\nProduct effect\n";
    rows = {{"Method", "Statistic", "Value", "DF", "p-value"}};
    for (const auto& r : j["product_tests"]) {
      const std::string df = r["statistic"] == "F"
                                 ? "(" + std::to_string(r["df1"].get<int>()) + ", " +
                                       std::to_string(r["df2"].get<int>()) + ")"
                                 : r["df_text"].get<std::string>();
      rows.push_back({r["method"].get<std::string>(), r["statistic"].get<std::string>(),
                      fmt4(r["value"].get<double>()), df, fmt_p(r["p_value"].get<double>())});
    }
    os << aligned(rows);
  }
  for (const auto& n : j["notes"]) os << "note: " << n.get<std::string>() << "\n";
  return os.str();
}

inline Json ci_json(const ProfileCi& ci, const std::string& label, double var_mmm) {
  return {{"contrast", label},
          {"level", ci.level},
          {"estimate", ci.estimate},
          {"lower", ci.lower},
          {"upper", ci.upper},
          {"lower_unbounded", ci.lower_unbounded},
          {"upper_unbounded", ci.upper_unbounded},
          {"asymmetric", ci.asymmetric},
          {"non_monotone", ci.non_monotone},
          {"se_wald", ci.se_wald},
          {"variance_mmm", var_mmm},
          {"n_fits", ci.n_fits}};
}

inline std::string ci_text(const Json& j) {
  std::ostringstream os;
  os << "Profile likelihood intervals (" << fmt4(j["level"].get<double>()) << ")\n";
  std::vector<std::vector<std::string>> rows{{"contrast", "estimate", "lower", "upper", "se(Wald)", "flags"}};
  for (const auto& r : j["intervals"]) {
    std::string flags;
    if (r["lower_unbounded"].get<bool>()) flags += "lower-open ";
    if (r["upper_unbounded"].get<bool>()) flags += "upper-open ";
    if (r["non_monotone"].get<bool>()) flags += "non-monotone ";
    if (r["asymmetric"].get<bool>()) flags += "asymmetric";
    rows.push_back({r["contrast"].get<std::string>(), fmt4(r["estimate"].get<double>()),
                    fmt4(r["lower"].get<double>()), fmt4(r["upper"].get<double>()),
                    fmt4(r["se_wald"].get<double>()), flags});
  }
  os << aligned(rows);
  return os.str();
}

inline Json lines_json(const std::vector<LabeledLine>& lines) {
  Json a = Json::array();
  for (const auto& l : lines) a.push_back({{"group", l.group}, {"slope", l.line.slope}, {"intercept", l.line.intercept}});
  return a;
}

inline std::string lines_text(const Json& j) {
  std::vector<std::vector<std::string>> rows{{"group", "slope", "intercept"}};
  for (const auto& l : j)
    rows.push_back({l["group"].get<std::string>(), fmt4(l["slope"].get<double>()), fmt4(l["intercept"].get<double>())});
  return aligned(rows);
}

inline std::string lines_csv(const Json& j) {
  std::ostringstream os;
  os.precision(17);
  os << "group,slope,intercept\n";
  for (const auto& l : j)
    os << l["group"].get<std::string>() << ',' << l["slope"].get<double>() << ',' << l["intercept"].get<double>()
       << '\n';
  return os.str();
}

inline Json loa_json(const LoaComponents& c, double level, const std::vector<LoaGridRow>& grid) {
  const LoaInterval add = loa_additive(c, level);
  const double v = loa_vertex(c);
  Json j;
  j["components"] = {{"sigma", c.sigma}, {"sigma_a", c.sigma_a}, {"sigma_b", c.sigma_b}, {"rho", c.rho}};
  j["level"] = level;
  j["z"] = add.z;
  j["additive"] = {{"lower", add.lower}, {"upper", add.upper}};
  j["narrowest"] = {{"item_effect", v}, {"upper", loa_multiplicative(c, v, level).upper}};
  Json g = Json::array();
  for (const auto& r : grid)
    g.push_back({{"item_effect", r.item_effect}, {"lower_add", r.lower_add}, {"upper_add", r.upper_add},
                 {"lower_mult", r.lower_mult}, {"upper_mult", r.upper_mult}});
  j["grid"] = g;
  return j;
}

inline std::string loa_text(const Json& j) {
  std::ostringstream os;
  const Json& c = j["components"];
  os << "Limits of agreement (level " << fmt4(j["level"].get<double>()) << ", z = " << fmt4(j["z"].get<double>())
     << ")\n";
  os << aligned({{"sigma", "sigma_a", "sigma_b", "rho"},
                 {fmt4(c["sigma"].get<double>()), fmt4(c["sigma_a"].get<double>()),
                  fmt4(c["sigma_b"].get<double>()), fmt4(c["rho"].get<double>())}});
  os << "additive: [" << fmt4(j["additive"]["lower"].get<double>()) << ", "
     << fmt4(j["additive"]["upper"].get<double>()) << "]\n";
  os << "multiplicative: narrowest at item effect " << fmt4(j["narrowest"]["item_effect"].get<double>())
     << ", half-width " << fmt4(j["narrowest"]["upper"].get<double>()) << "\n\n";
  std::vector<std::vector<std::string>> rows{{"item_effect", "lower_add", "upper_add", "lower_mult", "upper_mult"}};
  const auto& g = j["grid"];
  const std::size_t step = std::max<std::size_t>(1, g.size() / 10);
  for (std::size_t k = 0; k < g.size(); k += step)
    rows.push_back({fmt4(g[k]["item_effect"].get<double>()), fmt4(g[k]["lower_add"].get<double>()),
                    fmt4(g[k]["upper_add"].get<double>()), fmt4(g[k]["lower_mult"].get<double>()),
                    fmt4(g[k]["upper_mult"].get<double>())});
  os << aligned(rows);
  return os.str();
}

}  // namespace multmix

#endif  // MULTMIX_REPORT_HPP
