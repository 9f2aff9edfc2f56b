#ifndef MULTMIX_DESIGN_HPP
#define MULTMIX_DESIGN_HPP

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "multmix/dataset.hpp"
#include "multmix/error.hpp"
#include "multmix/formula.hpp"

namespace multmix {

enum class TermKind { Intercept, Interaction };

/// One variance component with i.i.d. levels. For an interaction term every
/// cell of the two factors is instantiated, observed or not.
struct RandomTerm {
  std::string label;
  TermKind kind = TermKind::Intercept;
  int n_levels = 0;
  std::vector<int> level;       // per observation
  std::vector<std::string> level_labels;
  int offset = 0;               // first column in w
  bool paired = false;          // carries the mp slope next to each level
};

/// The random slope b of mp(random, fixed).
struct SlopeTerm {
  std::string random;
  std::string fixed;
  int n_groups = 0;
  std::vector<int> group;       // per observation
  std::vector<std::string> levels;
  int paired_term = -1;         // index of the intercept term it is paired with
  int offset = 0;               // first column when not paired
};

/// Numeric structure of y = X beta + Z(theta) w + e.
///
/// Columns of w: the (a_i, b_i) pairs of the mp grouping factor interleaved
/// (or b_i alone when the model drops its intercept), then remaining random
/// intercepts in formula order, then random interactions.
struct DesignLayout {
  int n = 0;
  int p = 1;                               // J cell means, or 1 (grand mean)
  int q = 0;
  std::vector<double> y;
  std::string fixed_name;                  // empty for an intercept-only mean
  std::vector<std::string> fixed_levels;
  std::vector<int> fixed_level;            // per observation, 0 when p == 1
  std::vector<RandomTerm> terms;
  std::optional<SlopeTerm> slope;
  int a_term = -1;                         // intercept of the mp grouping factor
  int d_term = -1;                         // interaction of mp random x fixed
  bool center_covariate = true;            // false: mp covariate is beta_j itself
  ModelSpec spec;

  bool has_rho() const { return slope && slope->paired_term >= 0; }

  int column(int term, int lev) const {
    const RandomTerm& t = terms[term];
    return t.paired ? t.offset + 2 * lev : t.offset + lev;
  }

  int slope_column(int group) const {
    if (slope->paired_term >= 0) return terms[slope->paired_term].offset + 2 * group + 1;
    return slope->offset + group;
  }

  /// Length of the unconstrained parameter vector.
  int n_params() const {
    return p + 1 + static_cast<int>(terms.size()) + (slope ? 1 : 0) + (has_rho() ? 1 : 0);
  }
  int idx_log_sigma() const { return p; }
  int idx_log_sd(int term) const { return p + 1 + term; }
  int idx_log_sigma_b() const { return p + 1 + static_cast<int>(terms.size()); }
  int idx_z_rho() const { return idx_log_sigma_b() + 1; }

  /// Group level i and fixed level j of an observation, for the two-way
  /// multiplicative layout.
  std::pair<int, int> obs_index(int obs) const {
    return {slope ? slope->group[obs] : -1, fixed_level[obs]};
  }
};

/// Unconstrained outer parameter vector: cell means, log standard
/// deviations and atanh of the (a, b) correlation.
struct ParamVector {
  Eigen::VectorXd beta;
  double log_sigma = 0.0;
  std::vector<double> log_sd;              // one per DesignLayout::terms entry
  std::optional<double> log_sigma_b;
  std::optional<double> z_rho;

  Eigen::VectorXd flatten() const {
    const int p = static_cast<int>(beta.size());
    Eigen::VectorXd v(p + 1 + static_cast<int>(log_sd.size()) + (log_sigma_b ? 1 : 0) +
                      (z_rho ? 1 : 0));
    v.head(p) = beta;
    int k = p;
    v[k++] = log_sigma;
    for (double s : log_sd) v[k++] = s;
    if (log_sigma_b) v[k++] = *log_sigma_b;
    if (z_rho) v[k++] = *z_rho;
    return v;
  }

  static ParamVector unflatten(const DesignLayout& lay, const Eigen::VectorXd& v) {
    if (v.size() != lay.n_params())
      throw Error(ErrorKind::InvalidArgument, "parameter vector has wrong length");
    ParamVector pv;
    pv.beta = v.head(lay.p);
    pv.log_sigma = v[lay.idx_log_sigma()];
    for (int t = 0; t < static_cast<int>(lay.terms.size()); ++t)
      pv.log_sd.push_back(v[lay.idx_log_sd(t)]);
    if (lay.slope) pv.log_sigma_b = v[lay.idx_log_sigma_b()];
    if (lay.has_rho()) pv.z_rho = v[lay.idx_z_rho()];
    return pv;
  }

  bool all_finite() const { return flatten().allFinite(); }
};

/// Natural-scale view of a ParamVector.
struct NaturalParams {
  Eigen::VectorXd beta;
  double sigma = 0.0;
  std::vector<double> sd;
  std::optional<double> sigma_b;
  std::optional<double> rho;

  static NaturalParams from(const ParamVector& pv) {
    NaturalParams n;
    n.beta = pv.beta;
    n.sigma = std::exp(pv.log_sigma);
    for (double s : pv.log_sd) n.sd.push_back(std::exp(s));
    if (pv.log_sigma_b) n.sigma_b = std::exp(*pv.log_sigma_b);
    if (pv.z_rho) n.rho = std::tanh(*pv.z_rho);
    return n;
  }

  ParamVector to_unconstrained() const {
    ParamVector pv;
    pv.beta = beta;
    pv.log_sigma = std::log(sigma);
    for (double s : sd) pv.log_sd.push_back(std::log(s));
    if (sigma_b) pv.log_sigma_b = std::log(*sigma_b);
    if (rho) pv.z_rho = std::atanh(*rho);
    return pv;
  }
};

/// Centered multiplicative covariate nu_j = beta_j - mean(beta); the grand
/// mean is the unweighted mean of the cell means.
struct MultCovariate {
  Eigen::VectorXd nu;
  double mu = 0.0;
};

inline MultCovariate mult_covariate(const Eigen::VectorXd& beta) {
  MultCovariate m;
  m.mu = beta.size() ? beta.mean() : 0.0;
  m.nu = beta.array() - m.mu;
  return m;
}

/// Covariate multiplying b_i: nu_j by default, or the raw cell means for the
/// uncentered form y = mu_j + a~_i + b_i mu_j + e.
inline Eigen::VectorXd slope_covariate(const DesignLayout& lay, const Eigen::VectorXd& beta) {
  return lay.center_covariate ? mult_covariate(beta).nu : beta;
}

inline DesignLayout build_layout(const ModelSpec& ms, const Dataset& ds, bool center_covariate = true) {
  validate_against(ms, ds);
  DesignLayout lay;
  lay.spec = ms;
  lay.center_covariate = center_covariate;
  lay.n = static_cast<int>(ds.n_obs());
  lay.y = ds.response();
  if (!ms.fixed_factors.empty()) {
    const Factor& f = ds.factor(ms.fixed_factors.front());
    lay.fixed_name = ms.fixed_factors.front();
    lay.p = f.n_levels();
    lay.fixed_levels = f.levels;
    lay.fixed_level = f.codes;
  } else {
    lay.p = 1;
    lay.fixed_levels = {"(Intercept)"};
    lay.fixed_level.assign(lay.n, 0);
  }

  auto intercept_term = [&](const std::string& g) {
    const Factor& f = ds.factor(g);
    RandomTerm t;
    t.label = g;
    t.kind = TermKind::Intercept;
    t.n_levels = f.n_levels();
    t.level = f.codes;
    t.level_labels = f.levels;
    return t;
  };

  int col = 0;
  if (ms.mult_term) {
    const Factor& g = ds.factor(ms.mult_term->random);
    SlopeTerm s;
    s.random = ms.mult_term->random;
    s.fixed = ms.mult_term->fixed;
    s.n_groups = g.n_levels();
    s.group = g.codes;
    s.levels = g.levels;
    if (ms.has_random_intercept(s.random)) {
      RandomTerm a = intercept_term(s.random);
      a.paired = true;
      a.offset = col;
      col += 2 * a.n_levels;
      s.paired_term = 0;
      lay.a_term = 0;
      lay.terms.push_back(std::move(a));
    } else {
      s.offset = col;
      col += s.n_groups;
    }
    lay.slope = std::move(s);
  }
  for (const auto& g : ms.random_intercepts) {
    if (lay.slope && g == lay.slope->random) continue;
    RandomTerm t = intercept_term(g);
    t.offset = col;
    col += t.n_levels;
    lay.terms.push_back(std::move(t));
  }
  for (const auto& [ga, gb] : ms.random_interactions) {
    const Factor& fa = ds.factor(ga);
    const Factor& fb = ds.factor(gb);
    RandomTerm t;
    t.label = ga + ":" + gb;
    t.kind = TermKind::Interaction;
    t.n_levels = fa.n_levels() * fb.n_levels();
    t.level.resize(lay.n);
    for (int k = 0; k < lay.n; ++k) t.level[k] = fa.codes[k] * fb.n_levels() + fb.codes[k];
    for (const auto& la : fa.levels)
      for (const auto& lb : fb.levels) t.level_labels.push_back(la + ":" + lb);
    t.offset = col;
    col += t.n_levels;
    if (ms.mult_term && ((ga == ms.mult_term->random && gb == ms.mult_term->fixed) ||
                         (gb == ms.mult_term->random && ga == ms.mult_term->fixed)))
      lay.d_term = static_cast<int>(lay.terms.size());
    lay.terms.push_back(std::move(t));
  }
  lay.q = col;
  return lay;
}

using SparseRow = std::vector<std::pair<int, double>>;

/// Row `obs` of Z(theta): 1 at each random level the observation belongs to,
/// nu_j at the slope column of its group.
inline void loading_row(const DesignLayout& lay, int obs, const Eigen::VectorXd& nu,
                        SparseRow& out) {
  out.clear();
  for (int t = 0; t < static_cast<int>(lay.terms.size()); ++t)
    out.emplace_back(lay.column(t, lay.terms[t].level[obs]), 1.0);
  if (lay.slope)
    out.emplace_back(lay.slope_column(lay.slope->group[obs]), nu[lay.fixed_level[obs]]);
}

inline SparseRow loading_row(const DesignLayout& lay, int obs, const Eigen::VectorXd& nu) {
  SparseRow r;
  loading_row(lay, obs, nu, r);
  return r;
}

/// Dense Z(theta), n x q.
inline Eigen::MatrixXd dense_loadings(const DesignLayout& lay, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd nu = slope_covariate(lay, beta);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(lay.n, lay.q);
  SparseRow row;
  for (int k = 0; k < lay.n; ++k) {
    loading_row(lay, k, nu, row);
    for (auto [c, v] : row) z(k, c) += v;
  }
  return z;
}

/// Dense cell-means incidence X, n x p.
inline Eigen::MatrixXd dense_fixed(const DesignLayout& lay) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(lay.n, lay.p);
  for (int k = 0; k < lay.n; ++k) x(k, lay.fixed_level[k]) = 1.0;
  return x;
}

/// Per-group line against the consensus value mu + nu_j: slope b_i + 1 and
/// intercept a_i - mu * b_i.
struct GroupLine {
  double slope = 1.0;
  double intercept = 0.0;
};

inline GroupLine group_line(double a, double b, double mu) { return {b + 1.0, a - mu * b}; }

}  // namespace multmix

#endif  // MULTMIX_DESIGN_HPP
