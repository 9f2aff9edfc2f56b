#ifndef MULTMIX_OPTIMIZE_HPP
#define MULTMIX_OPTIMIZE_HPP

#include <algorithm>
#include <chrono>
#include <limits>
#include <tuple>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "multmix/bfgs.hpp"
#include "multmix/dataset.hpp"
#include "multmix/design.hpp"
#include "multmix/error.hpp"
#include "multmix/formula.hpp"
#include "multmix/likelihood.hpp"

namespace multmix {

inline constexpr double kVarianceFloor = 1e-6;  // natural-scale SD floor in line search
inline constexpr double kMaxAbsZRho = 12.0;
inline constexpr double kSmallSlopeSd = 1e-4;

struct FitOptions {
  int max_iter = 1000;
  double grad_tol = 1e-6;
  double rel_tol = 1e-10;
  SolverKind solver = SolverKind::Auto;
  bool center_covariate = true;  // false fits y = mu_j + a~_i + b_i mu_j + ...
  /// Natural-scale starting values by name: beta (all cell means), sigma,
  /// sigma_a, sigma_b, sigma_d, rho, or sd:<term label>.
  std::map<std::string, double> init;
};

struct FitResult {
  ParamVector params;
  NaturalParams natural;
  double nll = 0.0;
  InnerSolution w_modes;
  int n_iter = 0;
  double grad_norm = 0.0;
  bool converged = false;
  bool rho_at_boundary = false;
  std::string stop_reason;
  std::vector<std::string> diagnostics;
  ModelSpec model;
  DesignLayout layout;
  double seconds = 0.0;

  double mu() const { return natural.beta.mean(); }
  std::optional<double> sigma_a() const {
    return layout.a_term >= 0 ? std::optional(natural.sd[layout.a_term]) : std::nullopt;
  }
  std::optional<double> sigma_d() const {
    return layout.d_term >= 0 ? std::optional(natural.sd[layout.d_term]) : std::nullopt;
  }
  /// SD of the random term with the given label, e.g. "G" or "G:F".
  std::optional<double> sd_of(const std::string& label) const {
    for (std::size_t t = 0; t < layout.terms.size(); ++t)
      if (layout.terms[t].label == label) return natural.sd[t];
    return std::nullopt;
  }
  /// Correlation as reported: +-1 when the optimizer sits on the clamp.
  std::optional<double> rho_reported() const {
    if (!natural.rho) return std::nullopt;
    if (rho_at_boundary) return *natural.rho > 0 ? 1.0 : -1.0;
    return natural.rho;
  }
  /// Mode of the random intercept of level i of term t.
  double mode(int term, int level) const { return w_modes.w_tilde[layout.column(term, level)]; }
  /// Mode of the random slope b_i.
  double slope_mode(int group) const { return w_modes.w_tilde[layout.slope_column(group)]; }
};

/// Start values: observed cell means, pooled within-cell residual SD,
/// SD of group means for random intercepts, sigma/2 for interactions,
/// sigma_b = 0.1 and rho = 0.
inline ParamVector default_init(const DesignLayout& lay) {
  const int n = lay.n;
  ParamVector pv;
  pv.beta = Eigen::VectorXd::Zero(lay.p);
  Eigen::VectorXd cnt = Eigen::VectorXd::Zero(lay.p);
  double grand = 0.0;
  for (int k = 0; k < n; ++k) {
    pv.beta[lay.fixed_level[k]] += lay.y[k];
    cnt[lay.fixed_level[k]] += 1;
    grand += lay.y[k];
  }
  grand /= n;
  for (int j = 0; j < lay.p; ++j) pv.beta[j] = cnt[j] > 0 ? pv.beta[j] / cnt[j] : grand;

  std::vector<double> r(n);
  for (int k = 0; k < n; ++k) r[k] = lay.y[k] - pv.beta[lay.fixed_level[k]];

  // Cells: every combination of the fixed level and all random levels.
  std::map<std::vector<int>, std::pair<double, int>> cell;
  for (int k = 0; k < n; ++k) {
    std::vector<int> key{lay.fixed_level[k]};
    for (const auto& t : lay.terms) key.push_back(t.level[k]);
    if (lay.slope) key.push_back(lay.slope->group[k]);
    auto& c = cell[key];
    c.first += lay.y[k];
    c.second += 1;
  }
  double ss = 0.0;
  int df = 0;
  for (int k = 0; k < n; ++k) {
    std::vector<int> key{lay.fixed_level[k]};
    for (const auto& t : lay.terms) key.push_back(t.level[k]);
    if (lay.slope) key.push_back(lay.slope->group[k]);
    const auto& c = cell[key];
    const double e = lay.y[k] - c.first / c.second;
    ss += e * e;
  }
  for (const auto& [key, c] : cell) df += c.second - 1;
  double sigma;
  if (df > 0) {
    sigma = std::sqrt(ss / df);
  } else {
    double s2 = 0.0;
    for (double v : r) s2 += v * v;
    sigma = std::sqrt(s2 / std::max(1, n - 1));
  }
  sigma = std::max(sigma, 1e-3);
  pv.log_sigma = std::log(sigma);

  auto level_mean_sd = [&](const std::vector<int>& level, int n_levels) {
    std::vector<double> sum(n_levels, 0.0);
    std::vector<int> c(n_levels, 0);
    for (int k = 0; k < n; ++k) {
      sum[level[k]] += r[k];
      c[level[k]] += 1;
    }
    double m = 0.0, m2 = 0.0;
    int used = 0;
    for (int l = 0; l < n_levels; ++l) {
      if (!c[l]) continue;
      const double v = sum[l] / c[l];
      m += v;
      m2 += v * v;
      ++used;
    }
    if (used < 2) return 1e-3;
    m /= used;
    return std::max(std::sqrt(std::max(0.0, (m2 - used * m * m) / (used - 1))), 1e-3);
  };
  for (int t = 0; t < static_cast<int>(lay.terms.size()); ++t) {
    const auto& term = lay.terms[t];
    const double sd = term.kind == TermKind::Interaction ? sigma / 2
                                                          : level_mean_sd(term.level, term.n_levels);
    pv.log_sd.push_back(std::log(sd));
  }
  if (lay.slope) pv.log_sigma_b = std::log(0.1);
  if (lay.has_rho()) pv.z_rho = 0.0;
  return pv;
}

inline void apply_init_overrides(ParamVector& pv, const DesignLayout& lay,
                                 const std::map<std::string, double>& init) {
  auto positive = [](const std::string& k, double v) {
    if (!(v > 0))
      throw Error(ErrorKind::InvalidArgument, "start value '" + k + "' must be positive");
    return std::log(v);
  };
  for (const auto& [key, v] : init) {
    if (key == "beta" || key == "mu") {
      pv.beta.setConstant(v);
    } else if (key == "sigma") {
      pv.log_sigma = positive(key, v);
    } else if (key == "sigma_a") {
      if (lay.a_term < 0) continue;
      pv.log_sd[lay.a_term] = positive(key, v);
    } else if (key == "sigma_d") {
      if (lay.d_term < 0) continue;
      pv.log_sd[lay.d_term] = positive(key, v);
    } else if (key == "sigma_b") {
      if (!lay.slope) continue;
      pv.log_sigma_b = positive(key, v);
    } else if (key == "rho") {
      if (!lay.has_rho()) continue;
      if (!(std::abs(v) < 1))
        throw Error(ErrorKind::InvalidArgument, "start value for rho must lie in (-1, 1)");
      pv.z_rho = std::atanh(v);
    } else if (key.rfind("sd:", 0) == 0) {
      const std::string label = key.substr(3);
      bool found = false;
      for (std::size_t t = 0; t < lay.terms.size(); ++t)
        if (lay.terms[t].label == label) {
          pv.log_sd[t] = positive(key, v);
          found = true;
        }
      if (!found) throw Error(ErrorKind::InvalidArgument, "no random term '" + label + "'");
    } else {
      throw Error(ErrorKind::InvalidArgument, "unknown start value '" + key + "'");
    }
  }
}

namespace detail {

/// Box for the unconstrained vector: SDs at or above the floor, |z| <= 12.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> parameter_box(const DesignLayout& lay) {
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(lay.n_params(), -inf);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(lay.n_params(), inf);
  const double floor = std::log(kVarianceFloor);
  lo[lay.idx_log_sigma()] = floor;
  for (int t = 0; t < static_cast<int>(lay.terms.size()); ++t) lo[lay.idx_log_sd(t)] = floor;
  if (lay.slope) lo[lay.idx_log_sigma_b()] = floor;
  if (lay.has_rho()) {
    lo[lay.idx_z_rho()] = -kMaxAbsZRho;
    hi[lay.idx_z_rho()] = kMaxAbsZRho;
  }
  return {lo, hi};
}

inline ParamVector clamp_to_domain(const DesignLayout& lay, ParamVector pv) {
  const double floor = std::log(kVarianceFloor);
  pv.log_sigma = std::max(pv.log_sigma, floor);
  for (auto& s : pv.log_sd) s = std::max(s, floor);
  if (pv.log_sigma_b) pv.log_sigma_b = std::max(*pv.log_sigma_b, floor);
  if (pv.z_rho) pv.z_rho = std::clamp(*pv.z_rho, -kMaxAbsZRho, kMaxAbsZRho);
  (void)lay;
  return pv;
}

}  // namespace detail

/// Maximum-likelihood fit on a prepared layout.
inline FitResult fit_layout(const DesignLayout& lay, const std::optional<ParamVector>& init,
                            const FitOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  ParamVector start = init ? *init : default_init(lay);
  apply_init_overrides(start, lay, opts.init);
  start = detail::clamp_to_domain(lay, start);
  detail::check_shape(start, lay);

  LaplaceObjective obj(lay, opts.solver);
  {
    Eigen::VectorXd g;
    double f0;
    try {
      f0 = obj.value_and_gradient(start.flatten(), g);
    } catch (const Error& e) {
      throw Error(ErrorKind::BadStart, std::string("objective fails at the start: ") + e.what());
    }
    if (!std::isfinite(f0)) throw Error(ErrorKind::BadStart, "objective not finite at the start");
  }

  BfgsOptions bo;
  bo.max_iter = opts.max_iter;
  bo.grad_tol = opts.grad_tol;
  bo.rel_tol = opts.rel_tol;
  auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    return obj.value_and_gradient(x, g);
  };
  std::tie(bo.lower, bo.upper) = detail::parameter_box(lay);
  BfgsResult br = bfgs_minimize(fn, start.flatten(), bo);
  if (!br.converged && br.stop_reason != "iteration limit") br = newton_polish(fn, std::move(br), bo);

  FitResult fr;
  fr.params = ParamVector::unflatten(lay, br.x);
  fr.natural = NaturalParams::from(fr.params);
  auto ev = obj.evaluate(fr.params, false, false);
  fr.nll = ev.nll;
  fr.w_modes = std::move(ev.inner);
  fr.n_iter = br.iterations;
  fr.grad_norm = br.grad_norm;
  fr.converged = br.converged;
  fr.stop_reason = br.stop_reason;
  fr.model = lay.spec;
  fr.layout = lay;
  if (fr.params.z_rho && std::abs(*fr.params.z_rho) >= kMaxAbsZRho - 1e-6) {
    fr.rho_at_boundary = true;
    fr.diagnostics.push_back("correlation reached the boundary; reported as +-1");
  }
  if (fr.natural.sigma_b && *fr.natural.sigma_b < kSmallSlopeSd)
    fr.diagnostics.push_back(
        "scaling standard deviation is below 1e-4; the model without mp(...) may be adequate");
  if (!fr.converged)
    fr.diagnostics.push_back("optimizer stopped without meeting the gradient tolerance (" +
                             br.stop_reason + ")");
  fr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return fr;
}

inline FitResult fit(const ModelSpec& ms, const Dataset& ds,
                     const std::optional<ParamVector>& init = std::nullopt,
                     const FitOptions& opts = {}) {
  return fit_layout(build_layout(ms, ds, opts.center_covariate), init, opts);
}

/// Terms of the two-way multiplicative model that a null model can drop.
enum class DropTerm {
  None,
  Disagreement,  // d: the random interaction of the mp factors
  Scaling,       // b (and rho)
  Group,         // a (and rho)
  Fixed,         // nu (and b)
};

inline const char* to_string(DropTerm t) {
  switch (t) {
    case DropTerm::None: return "none";
    case DropTerm::Disagreement: return "d";
    case DropTerm::Scaling: return "b";
    case DropTerm::Group: return "a";
    case DropTerm::Fixed: return "nu";
  }
  return "?";
}

/// Model spec with one term removed. `term` is a random-intercept label, an
/// interaction label "g:h", "mp" for the multiplicative term, or a fixed
/// factor name (which also removes an mp term that uses it).
inline ModelSpec without_term(const ModelSpec& ms, const std::string& term) {
  ModelSpec out = ms;
  if (term == "mp") {
    if (!out.mult_term) throw Error(ErrorKind::InvalidArgument, "model has no mp(...) term");
    out.mult_term.reset();
    return out;
  }
  if (auto it = std::find(out.random_intercepts.begin(), out.random_intercepts.end(), term);
      it != out.random_intercepts.end()) {
    out.random_intercepts.erase(it);
    return out;
  }
  if (auto colon = term.find(':'); colon != std::string::npos) {
    const std::string a = term.substr(0, colon), b = term.substr(colon + 1);
    auto& v = out.random_interactions;
    auto it = std::find_if(v.begin(), v.end(), [&](const auto& t) {
      return (t.first == a && t.second == b) || (t.first == b && t.second == a);
    });
    if (it != v.end()) {
      v.erase(it);
      return out;
    }
  }
  if (auto it = std::find(out.fixed_factors.begin(), out.fixed_factors.end(), term);
      it != out.fixed_factors.end()) {
    out.fixed_factors.erase(it);
    if (out.mult_term && out.mult_term->fixed == term) out.mult_term.reset();
    return out;
  }
  throw Error(ErrorKind::InvalidArgument, "term '" + term + "' is not in the model");
}

/// Label of a multiplicative-model role in `ms`.
inline std::string term_label(const ModelSpec& ms, DropTerm t) {
  if (t == DropTerm::None) return {};
  if (!ms.mult_term)
    throw Error(ErrorKind::InvalidArgument, "model has no mp(...) term to define a/b/d/nu");
  const auto& m = *ms.mult_term;
  switch (t) {
    case DropTerm::Disagreement:
      for (const auto& [a, b] : ms.random_interactions)
        if ((a == m.random && b == m.fixed) || (a == m.fixed && b == m.random)) return a + ":" + b;
      throw Error(ErrorKind::InvalidArgument, "model has no disagreement term (1|" + m.random +
                                                  ":" + m.fixed + ")");
    case DropTerm::Scaling: return "mp";
    case DropTerm::Group:
      if (!ms.has_random_intercept(m.random))
        throw Error(ErrorKind::InvalidArgument, "model has no random intercept (1|" + m.random + ")");
      return m.random;
    case DropTerm::Fixed: return m.fixed;
    case DropTerm::None: break;
  }
  return {};
}

inline ModelSpec reduce_spec(const ModelSpec& ms, DropTerm t) {
  if (t == DropTerm::None) return ms;
  return without_term(ms, term_label(ms, t));
}

/// Fits the null model obtained by dropping one role of the multiplicative
/// model.
inline FitResult fit_reduced(const ModelSpec& ms, const Dataset& ds, DropTerm drop,
                             const FitOptions& opts = {}) {
  return fit(reduce_spec(ms, drop), ds, std::nullopt, opts);
}

}  // namespace multmix

#endif  // MULTMIX_OPTIMIZE_HPP
