#ifndef MULTMIX_INFERENCE_HPP
#define MULTMIX_INFERENCE_HPP

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "multmix/error.hpp"
#include "multmix/optimize.hpp"

namespace multmix {

/// Degrees of freedom in half units: 1/2 per boundary variance, 1 per
/// covariance or mean parameter.
struct Df {
  int halves = 0;

  static Df from_value(double v) { return {static_cast<int>(std::lround(2 * v))}; }
  double value() const { return halves / 2.0; }
  bool is_half_integer() const { return halves % 2 != 0; }
  Df operator+(Df o) const { return {halves + o.halves}; }
  bool operator==(const Df&) const = default;
};

/// "0.5", "1.5", "12.5", "3".
inline std::string to_string(Df df) {
  std::string s = std::to_string(df.halves / 2);
  return df.is_half_integer() ? s + ".5" : s;
}

enum class TailMethod {
  Fractional,  // chi-square tail with the (possibly fractional) df
  Mixture,     // 1/2 chi2_k + 1/2 chi2_{k+1} for df = k + 1/2
};

/// Upper tail of the chi-square distribution with real df > 0, through the
/// regularized upper incomplete gamma function Q(df/2, x/2).
inline double chi2_tail(double x, double df) {
  if (!(df > 0)) throw Error(ErrorKind::InvalidArgument, "degrees of freedom must be positive");
  if (!(x > 0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(df / 2, x / 2);
}

/// Equal mixture of chi2_k and chi2_{k+1}; chi2_0 is a point mass at zero.
inline double chi2_mixture_tail(double x, int k) {
  if (k < 0) throw Error(ErrorKind::InvalidArgument, "mixture order must be non-negative");
  if (!(x > 0)) return 1.0;
  const double lo = k == 0 ? 0.0 : chi2_tail(x, k);
  return 0.5 * lo + 0.5 * chi2_tail(x, k + 1);
}

inline double lrt_p_value(double chi2, Df df, TailMethod method = TailMethod::Fractional) {
  if (method == TailMethod::Mixture && df.is_half_integer())
    return chi2_mixture_tail(chi2, df.halves / 2);
  return chi2_tail(chi2, df.value());
}

struct LrtResult {
  std::string effect;
  double chi2 = 0.0;
  Df df;
  double p_value = 1.0;
  bool clamped = false;    // small negative statistic set to 0
  bool converged = true;   // both fits met the gradient tolerance
  double nll_full = 0.0;
  double nll_null = 0.0;
};

inline constexpr double kNestingSlack = 1e-6;

/// Likelihood-ratio test of `null` against `full` (null nested in full).
inline LrtResult lrt(const FitResult& full, const FitResult& null, Df df,
                     TailMethod method = TailMethod::Fractional, std::string effect = {}) {
  LrtResult r;
  r.effect = std::move(effect);
  r.df = df;
  r.nll_full = full.nll;
  r.nll_null = null.nll;
  r.chi2 = 2 * (null.nll - full.nll);
  if (r.chi2 < -kNestingSlack)
    throw Error(ErrorKind::NestingViolation,
                "null model fits better than the full model (chi2 = " + std::to_string(r.chi2) +
                    "); the models are not nested or a fit did not reach its optimum");
  if (r.chi2 < 0) {
    r.chi2 = 0;
    r.clamped = true;
  }
  r.p_value = lrt_p_value(r.chi2, df, method);
  r.converged = full.converged && null.converged;
  return r;
}

/// Degrees of freedom separating two nested layouts: 1 per mean parameter,
/// 1/2 per variance, 1 per covariance.
inline Df df_between(const DesignLayout& full, const DesignLayout& null) {
  auto halves = [](const DesignLayout& l) {
    const int variances = static_cast<int>(l.terms.size()) + (l.slope ? 1 : 0);
    return 2 * l.p + variances + 2 * (l.has_rho() ? 1 : 0);
  };
  const int d = halves(full) - halves(null);
  if (d <= 0) throw Error(ErrorKind::InvalidArgument, "null model is not smaller than the full model");
  return {d};
}

/// Starting values for the full model taken from a nested null fit; dropped
/// variances restart small and a dropped correlation at 0.
inline ParamVector embed_start(const FitResult& null, const DesignLayout& full) {
  ParamVector pv = default_init(full);
  const DesignLayout& nl = null.layout;
  if (nl.p == full.p)
    pv.beta = null.params.beta;
  else if (nl.p == 1)
    pv.beta.setConstant(null.params.beta[0]);
  pv.log_sigma = null.params.log_sigma;
  for (std::size_t t = 0; t < full.terms.size(); ++t) {
    pv.log_sd[t] = std::log(0.05 * std::exp(null.params.log_sigma));
    for (std::size_t u = 0; u < nl.terms.size(); ++u)
      if (nl.terms[u].label == full.terms[t].label) pv.log_sd[t] = null.params.log_sd[u];
  }
  if (full.slope)
    pv.log_sigma_b = null.params.log_sigma_b ? *null.params.log_sigma_b : std::log(0.05);
  if (full.has_rho()) pv.z_rho = null.params.z_rho ? *null.params.z_rho : 0.0;
  return pv;
}

struct LrtTableOptions {
  FitOptions fit;
  TailMethod method = TailMethod::Fractional;
};

struct LrtTable {
  FitResult full;
  std::vector<LrtResult> rows;
  std::vector<std::string> notes;
};

/// Label of a droppable term as written in a formula.
inline std::string term_display(const ModelSpec& ms, const std::string& term) {
  if (term == "mp") return "mp(" + ms.mult_term->random + "," + ms.mult_term->fixed + ")";
  if (std::find(ms.fixed_factors.begin(), ms.fixed_factors.end(), term) != ms.fixed_factors.end())
    return term;
  return "(1|" + term + ")";
}

/// One test per model term: random interactions, the multiplicative term,
/// random intercepts and the fixed factor, each against the model without it.
/// Dropping the fixed factor of mp(...) drops mp(...) too.
inline LrtTable lrt_table(const ModelSpec& ms, const Dataset& ds, const LrtTableOptions& opts = {}) {
  LrtTable out;
  out.full = fit(ms, ds, std::nullopt, opts.fit);

  std::vector<std::string> terms;
  for (const auto& [a, b] : ms.random_interactions) terms.push_back(a + ":" + b);
  if (ms.mult_term) terms.push_back("mp");
  for (const auto& g : ms.random_intercepts) terms.push_back(g);
  for (const auto& f : ms.fixed_factors) terms.push_back(f);

  for (const auto& term : terms) {
    const ModelSpec reduced = without_term(ms, term);
    FitResult null = fit(reduced, ds, std::nullopt, opts.fit);
    if (null.nll < out.full.nll - kNestingSlack) {
      // The full fit missed the optimum the null model exposes: restart it there.
      FitResult again = fit_layout(out.full.layout, embed_start(null, out.full.layout), opts.fit);
      out.notes.push_back("full model refitted from the '" + term_display(ms, term) +
                          "' null fit (NLL " + std::to_string(out.full.nll) + " -> " +
                          std::to_string(again.nll) + ")");
      if (again.nll < out.full.nll) out.full = std::move(again);
    }
    const Df df = df_between(out.full.layout, null.layout);
    LrtResult row = lrt(out.full, null, df, opts.method, term_display(ms, term));
    if (row.clamped) out.notes.push_back("'" + row.effect + "': tiny negative statistic set to 0");
    if (!row.converged) out.notes.push_back("'" + row.effect + "': a fit did not converge");
    out.rows.push_back(std::move(row));
  }
  // Rows computed before a refit of the full model are recomputed against it.
  for (auto& row : out.rows) {
    row.chi2 = std::max(0.0, 2 * (row.nll_null - out.full.nll));
    row.nll_full = out.full.nll;
    row.p_value = lrt_p_value(row.chi2, row.df, opts.method);
  }
  return out;
}

struct ContrastVariance {
  double variance = 0.0;
  double k = 0.0;          // replicates per cell (harmonic mean if unbalanced)
  bool balanced = true;
  int n_groups = 0;
};

/// Variance of the difference of two observed level means under the fitted
/// multiplicative model:
/// sigma_b^2 (nu_1 - nu_2)^2 / I + 2 sigma_d^2 / I + 2 sigma^2 / (K I).
inline ContrastVariance contrast_variance_mmm(const FitResult& fr, int j1, int j2) {
  const DesignLayout& lay = fr.layout;
  if (j1 < 0 || j2 < 0 || j1 >= lay.p || j2 >= lay.p)
    throw Error(ErrorKind::InvalidArgument, "contrast level out of range");
  if (!lay.slope && lay.spec.random_intercepts.empty())
    throw Error(ErrorKind::InvalidArgument, "model has no grouping factor");
  const std::string group =
      lay.spec.mult_term ? lay.spec.mult_term->random : lay.spec.random_intercepts.front();

  // Group levels per observation, from whichever term carries them.
  std::vector<int> gl;
  int n_groups = 0;
  if (lay.slope) {
    gl = lay.slope->group;
    n_groups = lay.slope->n_groups;
  } else {
    for (const auto& t : lay.terms)
      if (t.label == group) {
        gl = t.level;
        n_groups = t.n_levels;
      }
  }
  std::map<std::pair<int, int>, int> cell;
  for (int k = 0; k < lay.n; ++k) ++cell[{gl[k], lay.fixed_level[k]}];
  double inv_sum = 0.0;
  int first = cell.begin()->second;
  ContrastVariance cv;
  for (const auto& [key, c] : cell) {
    inv_sum += 1.0 / c;
    if (c != first) cv.balanced = false;
  }
  cv.k = static_cast<double>(cell.size()) / inv_sum;
  cv.n_groups = n_groups;

  const Eigen::VectorXd nu = mult_covariate(fr.natural.beta).nu;
  const double sb = fr.natural.sigma_b.value_or(0.0);
  double sd = 0.0;
  for (const auto& [a, b] : lay.spec.random_interactions) {
    const std::string fixed = lay.fixed_name;
    if ((a == group && b == fixed) || (a == fixed && b == group))
      sd = fr.sd_of(a + ":" + b).value_or(0.0);
  }
  const double i = n_groups;
  const double dn = nu[j1] - nu[j2];
  cv.variance = sb * sb * dn * dn / i + 2 * sd * sd / i +
                2 * fr.natural.sigma * fr.natural.sigma / (cv.k * i);
  return cv;
}

}  // namespace multmix

#endif  // MULTMIX_INFERENCE_HPP
