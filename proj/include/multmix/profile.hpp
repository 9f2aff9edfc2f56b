#ifndef MULTMIX_PROFILE_HPP
#define MULTMIX_PROFILE_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "multmix/bfgs.hpp"
#include "multmix/error.hpp"
#include "multmix/likelihood.hpp"
#include "multmix/optimize.hpp"

namespace multmix {

/// Coefficient vector for beta_{j1} - beta_{j2}.
inline Eigen::VectorXd level_contrast(int p, int j1, int j2) {
  if (j1 < 0 || j2 < 0 || j1 >= p || j2 >= p)
    throw Error(ErrorKind::InvalidArgument, "contrast level out of range");
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
  c[j1] += 1;
  c[j2] -= 1;
  return c;
}

/// Hessian of `obj` at x by central differences of its analytic gradient,
/// restricted to the components listed in `free`.
inline Eigen::MatrixXd numeric_hessian(const LaplaceObjective& obj, const Eigen::VectorXd& x,
                                       const std::vector<int>& free, double step = 1e-5) {
  const int nf = static_cast<int>(free.size());
  Eigen::MatrixXd h(nf, nf);
  Eigen::VectorXd gp, gm;
  for (int a = 0; a < nf; ++a) {
    Eigen::VectorXd xp = x, xm = x;
    xp[free[a]] += step;
    xm[free[a]] -= step;
    obj.value_and_gradient(xp, gp);
    obj.value_and_gradient(xm, gm);
    for (int b = 0; b < nf; ++b) h(b, a) = (gp[free[b]] - gm[free[b]]) / (2 * step);
  }
  return 0.5 * (h + h.transpose());
}

struct ProfileOptions {
  double se_cap = 10.0;    // give up bracketing beyond this many Wald SEs
  double tol_se = 1e-3;    // root tolerance in Wald SEs
  int grid_points = 41;    // fallback grid per side on a non-monotone profile
  FitOptions fit;
};

struct ProfileCi {
  Eigen::VectorXd contrast;
  double level = 0.95;
  double estimate = 0.0;
  double se_wald = 0.0;
  double lower = 0.0, upper = 0.0;
  bool lower_unbounded = false, upper_unbounded = false;
  bool asymmetric = false;    // distances to the estimate differ by more than 1%
  bool non_monotone = false;  // the grid fallback was used on some side
  int n_fits = 0;
};

namespace detail {

/// Minimizer of the NLL on the hyperplane c'beta = delta, parameterized as
/// beta = c delta / c'c + N gamma with N an orthonormal basis of c's complement.
class ContrastProfile {
 public:
  ContrastProfile(const DesignLayout& lay, const Eigen::VectorXd& c, const FitOptions& fo)
      : lay_(lay), obj_(lay, fo.solver), c_(c), fo_(fo) {
    const int p = lay.p;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(c);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
    n_ = q.rightCols(p - 1);
    c0_ = c / c.squaredNorm();
    auto [lo, hi] = parameter_box(lay);
    const int rest = lay.n_params() - p;
    lo_.resize(p - 1 + rest);
    hi_.resize(p - 1 + rest);
    lo_.head(p - 1).setConstant(-std::numeric_limits<double>::infinity());
    hi_.head(p - 1).setConstant(std::numeric_limits<double>::infinity());
    lo_.tail(rest) = lo.tail(rest);
    hi_.tail(rest) = hi.tail(rest);
  }

  Eigen::VectorXd reduce(const Eigen::VectorXd& x) const {
    const int p = lay_.p;
    Eigen::VectorXd r(x.size() - 1);
    r.head(p - 1) = n_.transpose() * x.head(p);
    r.tail(x.size() - p) = x.tail(x.size() - p);
    return r;
  }

  Eigen::VectorXd expand(double delta, const Eigen::VectorXd& r) const {
    const int p = lay_.p;
    Eigen::VectorXd x(r.size() + 1);
    x.head(p) = c0_ * delta + n_ * r.head(p - 1);
    x.tail(r.size() - (p - 1)) = r.tail(r.size() - (p - 1));
    return x;
  }

  /// Constrained minimum at delta, warm-started from (and updating) `warm`.
  double minimize(double delta, Eigen::VectorXd& warm) const {
    const int p = lay_.p;
    auto fn = [&](const Eigen::VectorXd& r, Eigen::VectorXd& g) {
      Eigen::VectorXd gx;
      const double f = obj_.value_and_gradient(expand(delta, r), gx);
      g.resize(r.size());
      g.head(p - 1) = n_.transpose() * gx.head(p);
      g.tail(r.size() - (p - 1)) = gx.tail(r.size() - (p - 1));
      return f;
    };
    BfgsOptions bo;
    bo.max_iter = fo_.max_iter;
    bo.grad_tol = fo_.grad_tol;
    bo.rel_tol = fo_.rel_tol;
    bo.lower = lo_;
    bo.upper = hi_;
    BfgsResult br = bfgs_minimize(fn, warm, bo);
    if (!br.converged && br.stop_reason != "iteration limit") br = newton_polish(fn, std::move(br), bo);
    warm = br.x;
    return br.f;
  }

  const LaplaceObjective& objective() const { return obj_; }

 private:
  const DesignLayout& lay_;
  LaplaceObjective obj_;
  Eigen::VectorXd c_, c0_;
  Eigen::MatrixXd n_;
  Eigen::VectorXd lo_, hi_;
  FitOptions fo_;
};

}  // namespace detail

/// Wald standard error of c'beta from the numeric Hessian at the fit, with
/// parameters held on a bound left out.
inline double wald_se(const FitResult& fr, const Eigen::VectorXd& c) {
  const DesignLayout& lay = fr.layout;
  LaplaceObjective obj(lay);
  const Eigen::VectorXd x = fr.params.flatten();
  Eigen::VectorXd g;
  obj.value_and_gradient(x, g);
  auto [lo, hi] = detail::parameter_box(lay);
  const auto act = detail::active_set(x, g, lo, hi);
  std::vector<int> free;
  for (int i = 0; i < x.size(); ++i)
    if (!act[i] && !(i >= lay.p && (x[i] <= lo[i] + 1e-8 || x[i] >= hi[i] - 1e-8))) free.push_back(i);
  const Eigen::MatrixXd h = numeric_hessian(obj, x, free);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double floor = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  Eigen::VectorXd cf = Eigen::VectorXd::Zero(static_cast<int>(free.size()));
  for (std::size_t a = 0; a < free.size(); ++a)
    if (free[a] < lay.p) cf[static_cast<int>(a)] = c[free[a]];
  const Eigen::VectorXd proj = es.eigenvectors().transpose() * cf;
  double var = 0.0;
  for (int a = 0; a < proj.size(); ++a) var += proj[a] * proj[a] / std::max(ev[a], floor);
  return std::sqrt(var);
}

/// Profile-likelihood interval for delta = c'beta: the set where
/// 2 (NLL(delta) - NLL_min) stays below the chi-square(1) quantile, with all
/// other parameters re-optimized at each delta.
inline ProfileCi profile_ci(const FitResult& fr, const Eigen::VectorXd& contrast, double level = 0.95,
                            const ProfileOptions& opts = {}) {
  const DesignLayout& lay = fr.layout;
  if (contrast.size() != lay.p)
    throw Error(ErrorKind::InvalidArgument, "contrast length differs from the number of cell means");
  if (!(level > 0 && level < 1)) throw Error(ErrorKind::InvalidArgument, "level must lie in (0, 1)");
  if (contrast.squaredNorm() == 0) throw Error(ErrorKind::InvalidArgument, "contrast is zero");
  if (lay.p < 2) throw Error(ErrorKind::InvalidArgument, "profile needs at least two cell means");

  ProfileCi ci;
  ci.contrast = contrast;
  ci.level = level;
  ci.estimate = contrast.dot(fr.params.beta);
  const boost::math::normal_distribution<double> nd;
  const double z = boost::math::quantile(nd, 0.5 + level / 2);
  ci.se_wald = wald_se(fr, contrast);
  if (!(ci.se_wald > 0) || !std::isfinite(ci.se_wald))
    ci.se_wald = 0.1 * std::max(1.0, std::abs(ci.estimate));
  const double se = ci.se_wald;

  detail::ContrastProfile prof(lay, contrast, opts.fit);
  const Eigen::VectorXd opt_r = prof.reduce(fr.params.flatten());
  const double nll_min = fr.nll;

  auto signed_root_excess = [&](double delta, Eigen::VectorXd& warm) {
    const double f = prof.minimize(delta, warm);
    ++ci.n_fits;
    return std::sqrt(std::max(0.0, 2 * (f - nll_min))) - z;
  };

  for (int side : {-1, +1}) {
    Eigen::VectorXd warm = opt_r;
    double inside = ci.estimate, inside_val = -z;
    double outside = std::numeric_limits<double>::quiet_NaN(), outside_val = 0.0;
    Eigen::VectorXd warm_inside = warm;
    bool unbounded = false, monotone = true;
    for (double h = se;; h *= 2) {
      const double step = std::min(h, opts.se_cap * se);
      const double delta = ci.estimate + side * step;
      const double v = signed_root_excess(delta, warm);
      if (v >= 0) {
        outside = delta;
        outside_val = v;
        break;
      }
      if (v < inside_val - 1e-9) monotone = false;
      inside = delta;
      inside_val = v;
      warm_inside = warm;
      if (step >= opts.se_cap * se) {
        unbounded = true;
        break;
      }
    }
    if (!monotone && !unbounded) {
      // Grid from the estimate outward; the first crossing wins.
      ci.non_monotone = true;
      Eigen::VectorXd wg = opt_r;
      inside = ci.estimate;
      inside_val = -z;
      warm_inside = wg;
      outside = std::numeric_limits<double>::quiet_NaN();
      for (int k = 1; k < opts.grid_points; ++k) {
        const double delta =
            ci.estimate + side * opts.se_cap * se * k / (opts.grid_points - 1);
        const double v = signed_root_excess(delta, wg);
        if (v >= 0) {
          outside = delta;
          outside_val = v;
          break;
        }
        inside = delta;
        inside_val = v;
        warm_inside = wg;
      }
      if (std::isnan(outside)) unbounded = true;
    }

    double bound;
    if (unbounded) {
      bound = inside;
    } else {
      Eigen::VectorXd wr = warm_inside;
      auto f = [&](double delta) { return signed_root_excess(delta, wr); };
      const double tol = opts.tol_se * se;
      auto stop = [tol](double a, double b) { return std::abs(b - a) <= tol; };
      std::uintmax_t iters = 60;
      double a = inside, b = outside, fa = inside_val, fb = outside_val;
      if (a > b) {
        std::swap(a, b);
        std::swap(fa, fb);
      }
      if (fb == 0 || fa == 0) {
        bound = fb == 0 ? b : a;
      } else {
        auto [r1, r2] = boost::math::tools::toms748_solve(f, a, b, fa, fb, stop, iters);
        bound = 0.5 * (r1 + r2);
      }
    }
    if (side < 0) {
      ci.lower = bound;
      ci.lower_unbounded = unbounded;
    } else {
      ci.upper = bound;
      ci.upper_unbounded = unbounded;
    }
  }
  const double dl = ci.estimate - ci.lower, du = ci.upper - ci.estimate;
  ci.asymmetric = std::abs(du - dl) > 0.01 * (du + dl);
  return ci;
}

}  // namespace multmix

#endif  // MULTMIX_PROFILE_HPP
