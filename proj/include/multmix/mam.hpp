#ifndef MULTMIX_MAM_HPP
#define MULTMIX_MAM_HPP

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>

#include "multmix/dataset.hpp"
#include "multmix/error.hpp"

namespace multmix {

struct AnovaLine {
  double ss = 0.0;
  double df = 0.0;
  double ms() const { return df > 0 ? ss / df : 0.0; }
};

/// Mixed assessor model: the scaling covariate is the observed centered level
/// mean x_j instead of nu_j, which makes the decomposition closed form.
struct MamSummary {
  int n_groups = 0, n_levels = 0, n_rep = 0;
  std::vector<double> x;       // x_j = ybar_.j. - ybar_...
  std::vector<double> slope;   // per-group beta_i, summing to zero
  AnovaLine group, product, interaction, scaling, disagreement, error;
};

struct FTest {
  std::string effect;
  double f = 0.0;
  double df1 = 0.0, df2 = 0.0;
  double p_value = 1.0;
};

inline double f_tail(double f, double df1, double df2) {
  if (!(f > 0)) return 1.0;
  const boost::math::fisher_f_distribution<double> dist(df1, df2);
  return boost::math::cdf(boost::math::complement(dist, f));
}

/// Balanced two-way decomposition with the scaling part split off the
/// interaction. Requires K >= 2 replicates in every cell.
inline MamSummary mam_fit(const Dataset& ds, const std::string& grouping, const std::string& fixed) {
  const Factor& g = ds.factor(grouping);
  const Factor& f = ds.factor(fixed);
  const int ni = g.n_levels(), nj = f.n_levels();
  const auto& y = ds.response();
  std::vector<int> count(static_cast<std::size_t>(ni) * nj, 0);
  std::vector<double> cell(count.size(), 0.0);
  for (std::size_t k = 0; k < y.size(); ++k) {
    const std::size_t c = static_cast<std::size_t>(g.codes[k]) * nj + f.codes[k];
    ++count[c];
    cell[c] += y[k];
  }
  const int kr = count[0];
  for (int c : count)
    if (c != kr)
      throw Error(ErrorKind::InvalidArgument,
                  "the mixed assessor model needs the same number of replicates in every cell");
  if (kr < 2)
    throw Error(ErrorKind::RequiresReplicates,
                "the mixed assessor model needs replicates (K >= 2) to estimate the error");

  MamSummary m;
  m.n_groups = ni;
  m.n_levels = nj;
  m.n_rep = kr;
  for (auto& c : cell) c /= kr;
  std::vector<double> gm(ni, 0.0), fm(nj, 0.0);
  double grand = 0.0;
  for (int i = 0; i < ni; ++i)
    for (int j = 0; j < nj; ++j) {
      const double v = cell[static_cast<std::size_t>(i) * nj + j];
      gm[i] += v / nj;
      fm[j] += v / ni;
      grand += v / (ni * nj);
    }
  m.x.resize(nj);
  double sxx = 0.0;
  for (int j = 0; j < nj; ++j) {
    m.x[j] = fm[j] - grand;
    sxx += m.x[j] * m.x[j];
  }
  m.slope.assign(ni, 0.0);
  double ss_int = 0.0;
  for (int i = 0; i < ni; ++i) {
    double sxe = 0.0;
    for (int j = 0; j < nj; ++j) {
      const double e = cell[static_cast<std::size_t>(i) * nj + j] - gm[i] - fm[j] + grand;
      ss_int += e * e;
      sxe += e * m.x[j];
    }
    m.slope[i] = sxx > 0 ? sxe / sxx : 0.0;
  }
  double ss_err = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double r = y[k] - cell[static_cast<std::size_t>(g.codes[k]) * nj + f.codes[k]];
    ss_err += r * r;
  }
  double sbb = 0.0, ss_g = 0.0;
  for (int i = 0; i < ni; ++i) {
    sbb += m.slope[i] * m.slope[i];
    ss_g += (gm[i] - grand) * (gm[i] - grand);
  }
  m.group = {static_cast<double>(nj) * kr * ss_g, static_cast<double>(ni - 1)};
  m.product = {static_cast<double>(ni) * kr * sxx, static_cast<double>(nj - 1)};
  m.interaction = {kr * ss_int, static_cast<double>((ni - 1) * (nj - 1))};
  m.scaling = {kr * sbb * sxx, static_cast<double>(ni - 1)};
  m.disagreement = {m.interaction.ss - m.scaling.ss, static_cast<double>((ni - 1) * (nj - 2))};
  m.error = {ss_err, static_cast<double>(ni * nj * (kr - 1))};
  return m;
}

/// F = MS_product / MS_disagreement on (J-1, (I-1)(J-2)) degrees of freedom.
inline FTest mam_ftest(const MamSummary& m) {
  if (m.disagreement.df <= 0)
    throw Error(ErrorKind::InsufficientDf,
                "(I-1)(J-2) must be positive for the mixed assessor model F-test");
  FTest t{"product (MAM)", m.product.ms() / m.disagreement.ms(), m.product.df, m.disagreement.df};
  t.p_value = f_tail(t.f, t.df1, t.df2);
  return t;
}

/// Scaling test of the mixed assessor model: MS_scaling / MS_error.
inline FTest mam_scaling_ftest(const MamSummary& m) {
  FTest t{"scaling (MAM)", m.scaling.ms() / m.error.ms(), m.scaling.df, m.error.df};
  t.p_value = f_tail(t.f, t.df1, t.df2);
  return t;
}

/// Mixed two-way ANOVA: F = MS_product / MS_interaction on (J-1, (I-1)(J-1)).
inline FTest anova_ftest(const MamSummary& m) {
  if (m.interaction.df <= 0)
    throw Error(ErrorKind::InsufficientDf, "(I-1)(J-1) must be positive for the ANOVA F-test");
  FTest t{"product (2-way ANOVA)", m.product.ms() / m.interaction.ms(), m.product.df,
          m.interaction.df};
  t.p_value = f_tail(t.f, t.df1, t.df2);
  return t;
}

}  // namespace multmix

#endif  // MULTMIX_MAM_HPP
