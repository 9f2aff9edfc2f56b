#ifndef MULTMIX_METHODCOMP_HPP
#define MULTMIX_METHODCOMP_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "multmix/error.hpp"
#include "multmix/optimize.hpp"
#include "multmix/random.hpp"
#include "multmix/simulate.hpp"

namespace multmix {

enum class LoaModel { Additive, Multiplicative };

inline const char* to_string(LoaModel m) {
  return m == LoaModel::Additive ? "additive" : "multiplicative";
}

/// Limits of agreement for the difference of two random methods on one item.
struct LoaInterval {
  double item_effect = 0.0;
  double lower = 0.0, upper = 0.0;
  LoaModel model = LoaModel::Additive;
  double z = 0.0;
};

/// Variance components driving the limits: method effect SD, slope SD, their
/// correlation and the residual SD.
struct LoaComponents {
  double sigma = 0.0;
  double sigma_a = 0.0;
  double sigma_b = 0.0;
  double rho = 0.0;

  /// Reads a fitted random-methods model: sigma_a from the paired intercept
  /// (absent terms count as 0).
  static LoaComponents from_fit(const FitResult& fr) {
    LoaComponents c;
    c.sigma = fr.natural.sigma;
    c.sigma_a = fr.sigma_a().value_or(0.0);
    c.sigma_b = fr.natural.sigma_b.value_or(0.0);
    c.rho = fr.natural.rho.value_or(0.0);
    return c;
  }
};

/// Two-sided normal quantile for a coverage level in (0, 1).
inline double level_quantile(double level) {
  if (!(level > 0 && level < 1)) throw Error(ErrorKind::InvalidArgument, "level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + level / 2);
}

/// 0 +- z sqrt(2 (sigma_a^2 + sigma^2)); constant in the item effect.
inline LoaInterval loa_additive(const LoaComponents& c, double level = 0.95) {
  LoaInterval r;
  r.model = LoaModel::Additive;
  r.z = level_quantile(level);
  const double half = r.z * std::sqrt(2 * (c.sigma_a * c.sigma_a + c.sigma * c.sigma));
  r.lower = -half;
  r.upper = half;
  return r;
}

/// 0 +- z sqrt(2 (sigma_a^2 + nu^2 sigma_b^2 + 2 nu rho sigma_a sigma_b + sigma^2)).
inline LoaInterval loa_multiplicative(const LoaComponents& c, double nu, double level = 0.95) {
  LoaInterval r;
  r.model = LoaModel::Multiplicative;
  r.item_effect = nu;
  r.z = level_quantile(level);
  const double rad = c.sigma_a * c.sigma_a + nu * nu * c.sigma_b * c.sigma_b +
                     2 * nu * c.rho * c.sigma_a * c.sigma_b + c.sigma * c.sigma;
  if (rad < 0)
    throw Error(ErrorKind::CovarianceInconsistency,
                "negative variance of the method difference at item effect " + std::to_string(nu) +
                    "; check |rho| <= 1");
  const double half = r.z * std::sqrt(2 * rad);
  r.lower = -half;
  r.upper = half;
  return r;
}

inline LoaInterval loa_additive(const FitResult& fr, double level = 0.95) {
  return loa_additive(LoaComponents::from_fit(fr), level);
}
inline LoaInterval loa_multiplicative(const FitResult& fr, double nu, double level = 0.95) {
  return loa_multiplicative(LoaComponents::from_fit(fr), nu, level);
}

/// Item effect where the multiplicative band is narrowest.
inline double loa_vertex(const LoaComponents& c) {
  if (c.sigma_b == 0) return 0.0;
  return -c.rho * c.sigma_a / c.sigma_b;
}

struct LoaGridRow {
  double item_effect;
  double lower_add, upper_add;
  double lower_mult, upper_mult;
};

/// Both bands at `points` evenly spaced item effects over [lo, hi].
inline std::vector<LoaGridRow> loa_grid(const LoaComponents& c, double lo, double hi, int points = 200,
                                        double level = 0.95) {
  if (points < 2 || !(hi > lo)) throw Error(ErrorKind::InvalidArgument, "grid needs lo < hi and 2+ points");
  const LoaInterval add = loa_additive(c, level);
  std::vector<LoaGridRow> rows;
  rows.reserve(points);
  for (int k = 0; k < points; ++k) {
    const double nu = lo + (hi - lo) * k / (points - 1);
    const LoaInterval m = loa_multiplicative(c, nu, level);
    rows.push_back({nu, add.lower, add.upper, m.lower, m.upper});
  }
  return rows;
}

/// Grid over the fitted item-effect range (the slope covariate of the fit).
inline std::vector<LoaGridRow> loa_grid(const FitResult& fr, int points = 200, double level = 0.95) {
  const Eigen::VectorXd x = slope_covariate(fr.layout, fr.natural.beta);
  double lo = x.minCoeff(), hi = x.maxCoeff();
  if (!(hi > lo)) {
    lo -= 1;
    hi += 1;
  }
  return loa_grid(LoaComponents::from_fit(fr), lo, hi, points, level);
}

inline void write_loa_csv(std::ostream& os, const std::vector<LoaGridRow>& rows) {
  os << "item_effect,lower_add,upper_add,lower_mult,upper_mult\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.item_effect << ',' << r.lower_add << ',' << r.upper_add << ',' << r.lower_mult << ','
       << r.upper_mult << '\n';
}

enum class Spacing { Even, Random };

struct LoaStudyOptions {
  int n_patients = 120;
  int n_reps = 100;
  double lo = 0.1, hi = 12.0;
  std::uint64_t seed = 0;
  Spacing spacing = Spacing::Even;
  /// Subtracted from the true value to get the slope covariate: the fitted
  /// mean for a centered fit, 0 when the covariate is the true value itself.
  double covariate_offset = 0.0;
};

struct LoaStudyRow {
  int patient;
  int rep;
  double true_value;
  double method1, method2;
  double difference;
};

/// Two random methods per patient and replicate:
/// y_m = t + a_m + b_m (t - offset) + eps_m, with (a_m, b_m) bivariate normal.
/// Patient p draws from stream p of the seed; random true values come from
/// stream n_patients. Rows are ordered by (patient, replicate).
inline std::vector<LoaStudyRow> simulate_loa_study(const LoaComponents& c, const LoaStudyOptions& o = {}) {
  if (!(std::abs(c.rho) < 1)) throw Error(ErrorKind::InvalidArgument, "|rho| must be below 1");
  if (c.sigma < 0 || c.sigma_a < 0 || c.sigma_b < 0)
    throw Error(ErrorKind::InvalidArgument, "standard deviations must be non-negative");
  if (o.n_patients < 1 || o.n_reps < 1) throw Error(ErrorKind::InvalidArgument, "need patients and replicates");
  if (!(o.hi >= o.lo)) throw Error(ErrorKind::InvalidArgument, "range must satisfy lo <= hi");

  std::vector<double> truth(o.n_patients);
  if (o.spacing == Spacing::Even) {
    for (int p = 0; p < o.n_patients; ++p)
      truth[p] = o.n_patients == 1 ? o.lo : o.lo + (o.hi - o.lo) * p / (o.n_patients - 1);
  } else {
    Rng vr = make_stream(o.seed, static_cast<std::uint64_t>(o.n_patients));
    for (auto& t : truth) t = uniform(vr, o.lo, o.hi);
  }

  std::vector<LoaStudyRow> rows;
  rows.reserve(static_cast<std::size_t>(o.n_patients) * o.n_reps);
  for (int p = 0; p < o.n_patients; ++p) {
    Rng rng = make_stream(o.seed, static_cast<std::uint64_t>(p));
    const double t = truth[p], x = t - o.covariate_offset;
    for (int r = 0; r < o.n_reps; ++r) {
      double y[2];
      for (double& v : y) {
        const auto [a, b] = draw_pair(rng, c.sigma_a, c.sigma_b, c.rho);
        v = t + a + b * x + c.sigma * standard_normal(rng);
      }
      rows.push_back({p + 1, r + 1, t, y[0], y[1], y[0] - y[1]});
    }
  }
  return rows;
}

/// Study driven by a fit: its components, and the fitted mean as covariate
/// offset when the fit used the centered covariate.
inline std::vector<LoaStudyRow> simulate_loa_study(const FitResult& fr, LoaStudyOptions o = {}) {
  o.covariate_offset = fr.layout.center_covariate ? fr.mu() : 0.0;
  return simulate_loa_study(LoaComponents::from_fit(fr), o);
}

inline void write_study_csv(std::ostream& os, const std::vector<LoaStudyRow>& rows) {
  os << "patient,true_value,method1_value,method2_value,difference\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.patient << ',' << r.true_value << ',' << r.method1 << ',' << r.method2 << ',' << r.difference
       << '\n';
}

struct LabeledLine {
  std::string group;
  GroupLine line;
};

/// Per-group regression lines of the consensus plot, one per level of the
/// mp grouping factor.
inline std::vector<LabeledLine> group_lines(const FitResult& fr) {
  const DesignLayout& lay = fr.layout;
  if (!lay.slope) throw Error(ErrorKind::UnsupportedModel, "regression lines need an mp(...) term");
  std::vector<LabeledLine> out;
  for (int i = 0; i < lay.slope->n_groups; ++i) {
    const double a = lay.a_term >= 0 ? fr.mode(lay.a_term, i) : 0.0;
    out.push_back({lay.slope->levels[i], group_line(a, fr.slope_mode(i), fr.mu())});
  }
  return out;
}

}  // namespace multmix

#endif  // MULTMIX_METHODCOMP_HPP
