#ifndef MULTMIX_SIMULATE_HPP
#define MULTMIX_SIMULATE_HPP

#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "multmix/dataset.hpp"
#include "multmix/design.hpp"
#include "multmix/error.hpp"
#include "multmix/random.hpp"

namespace multmix {

/// Parameters of the two-way multiplicative mixed model
/// y_ijk = beta_j + a_i + nu_j b_i + d_ij + e_ijk.
struct TwoWayTruth {
  Eigen::VectorXd beta;
  double sigma = 1.0;
  double sigma_a = 0.0;
  double sigma_b = 0.0;
  double sigma_d = 0.0;
  double rho = 0.0;
};

/// Draws (a, b) from the bivariate normal by the Cholesky factor of its 2x2
/// covariance; sigma_b = 0 degenerates to a univariate draw.
inline std::pair<double, double> draw_pair(Rng& rng, double sa, double sb, double rho) {
  if (!(std::abs(rho) < 1.0))
    throw Error(ErrorKind::InvalidArgument, "correlation must lie strictly inside (-1, 1)");
  const double z1 = standard_normal(rng);
  if (sb == 0.0) return {sa * z1, 0.0};
  const double z2 = standard_normal(rng);
  return {sa * z1, sb * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2)};
}

/// New response for an existing two-way table whose factors are `group` and
/// `fixed`. Cells are visited in observation order.
inline std::vector<double> simulate_response(const Dataset& ds, const std::string& group,
                                             const std::string& fixed, const TwoWayTruth& t,
                                             Rng& rng) {
  const Factor& g = ds.factor(group);
  const Factor& f = ds.factor(fixed);
  if (t.beta.size() != f.n_levels())
    throw Error(ErrorKind::InvalidArgument, "beta length differs from the fixed factor levels");
  const Eigen::VectorXd nu = mult_covariate(t.beta).nu;
  std::vector<double> a(g.n_levels()), b(g.n_levels());
  for (int i = 0; i < g.n_levels(); ++i) std::tie(a[i], b[i]) = draw_pair(rng, t.sigma_a, t.sigma_b, t.rho);
  std::vector<double> d(static_cast<std::size_t>(g.n_levels()) * f.n_levels());
  for (auto& x : d) x = t.sigma_d * standard_normal(rng);
  std::vector<double> y(ds.n_obs());
  for (std::size_t k = 0; k < y.size(); ++k) {
    const int i = g.codes[k], j = f.codes[k];
    y[k] = t.beta[j] + a[i] + nu[j] * b[i] + d[static_cast<std::size_t>(i) * f.n_levels() + j] +
           t.sigma * standard_normal(rng);
  }
  return y;
}

/// Balanced I x J x K two-way table with factors "G" (levels G1..GI) and
/// "F" (levels F1..FJ), response "y".
inline Dataset simulate_two_way(int n_groups, int n_fixed, int n_rep, const TwoWayTruth& t,
                                Rng& rng) {
  std::vector<std::string> gl, fl;
  std::vector<double> y0;
  for (int i = 0; i < n_groups; ++i)
    for (int j = 0; j < n_fixed; ++j)
      for (int k = 0; k < n_rep; ++k) {
        gl.push_back("G" + std::to_string(i + 1));
        fl.push_back("F" + std::to_string(j + 1));
        y0.push_back(0.0);
      }
  Dataset shape = Dataset::from_labels("y", y0, {{"G", gl}, {"F", fl}});
  return shape.with_response(simulate_response(shape, "G", "F", t, rng));
}

}  // namespace multmix

#endif  // MULTMIX_SIMULATE_HPP
