#ifndef MULTMIX_BFGS_HPP
#define MULTMIX_BFGS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "multmix/error.hpp"

namespace multmix {

struct BfgsOptions {
  int max_iter = 1000;
  double grad_tol = 1e-6;   // stop when the projected gradient max-norm falls below
  double rel_tol = 1e-10;   // stop when f drops by <= rel_tol * max(1, |f|) over the window
  int stall_iters = 10;     // window over which the relative change is measured
  double max_step = 2.0;    // cap on the max-norm of a trial step
  int max_backtracks = 60;
  Eigen::VectorXd lower;    // optional box; empty means unbounded
  Eigen::VectorXd upper;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd g;
  int iterations = 0;
  double grad_norm = 0.0;   // max-norm of the projected gradient
  bool converged = false;
  std::string stop_reason;
  std::vector<int> at_bound;  // indices held on a bound at the end
};

/// Objective returning f(x) and filling the gradient. Infeasible points may
/// throw multmix::Error or return a non-finite value; the line search then
/// shrinks the step.
using ObjectiveFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;
using FeasibleFn = std::function<bool(const Eigen::VectorXd&)>;

namespace detail {

// Components on a bound whose gradient points out of the box.
inline std::vector<bool> active_set(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                    const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  std::vector<bool> act(x.size(), false);
  if (lo.size() == 0) return act;
  for (int i = 0; i < x.size(); ++i) {
    const double tol = 1e-10 * std::max(1.0, std::abs(x[i]));
    act[i] = (x[i] <= lo[i] + tol && g[i] > 0) || (x[i] >= hi[i] - tol && g[i] < 0);
  }
  return act;
}

inline double projected_norm(const Eigen::VectorXd& g, const std::vector<bool>& act) {
  double m = 0.0;
  for (int i = 0; i < g.size(); ++i)
    if (!act[i]) m = std::max(m, std::abs(g[i]));
  return m;
}

}  // namespace detail

/// BFGS on the inverse Hessian with Armijo backtracking along the projected
/// path when bounds are given. Components pinned on a bound with an outward
/// gradient are frozen for the step and excluded from the stopping test.
inline BfgsResult bfgs_minimize(const ObjectiveFn& fn, Eigen::VectorXd x,
                                const BfgsOptions& opts, const FeasibleFn& feasible = {}) {
  const int dim = static_cast<int>(x.size());
  const bool boxed = opts.lower.size() == dim && opts.upper.size() == dim && dim > 0;
  const Eigen::VectorXd lo = boxed ? opts.lower : Eigen::VectorXd();
  const Eigen::VectorXd hi = boxed ? opts.upper : Eigen::VectorXd();
  auto project = [&](Eigen::VectorXd v) {
    if (boxed) v = v.cwiseMax(lo).cwiseMin(hi);
    return v;
  };
  x = project(std::move(x));

  BfgsResult res;
  Eigen::VectorXd g(dim);
  double f = fn(x, g);
  if (!std::isfinite(f) || !g.allFinite())
    throw Error(ErrorKind::BadStart, "objective is not finite at the starting point");

  auto try_eval = [&](const Eigen::VectorXd& xt, Eigen::VectorXd& gt) -> double {
    if (feasible && !feasible(xt)) return std::numeric_limits<double>::infinity();
    try {
      const double ft = fn(xt, gt);
      return gt.allFinite() ? ft : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(dim, dim);
  bool fresh = true;
  std::vector<double> history{f};
  std::vector<bool> act = detail::active_set(x, g, lo, hi);
  int it = 0;
  res.stop_reason = "iteration limit";
  for (; it < opts.max_iter; ++it) {
    act = detail::active_set(x, g, lo, hi);
    if (dim == 0 || detail::projected_norm(g, act) < opts.grad_tol) {
      res.stop_reason = "gradient tolerance";
      break;
    }
    Eigen::VectorXd gf = g;
    for (int i = 0; i < dim; ++i)
      if (act[i]) gf[i] = 0.0;
    Eigen::VectorXd d = -hinv * gf;
    for (int i = 0; i < dim; ++i)
      if (act[i]) d[i] = 0.0;
    if (!(g.dot(d) < 0.0)) {
      hinv.setIdentity();
      fresh = true;
      d = -gf;
    }
    double alpha = 1.0;
    const double dmax = d.cwiseAbs().maxCoeff();
    if (dmax * alpha > opts.max_step) alpha = opts.max_step / dmax;

    Eigen::VectorXd xt(dim), gt(dim);
    double ft = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      xt = project(x + alpha * d);
      ft = try_eval(xt, gt);
      if (std::isfinite(ft) && ft <= f + 1e-4 * g.dot(xt - x)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!fresh) {
        hinv.setIdentity();
        fresh = true;
        continue;
      }
      res.stop_reason = "line search failed";
      break;
    }

    const Eigen::VectorXd s = xt - x;
    const Eigen::VectorXd yv = gt - g;
    x = xt;
    g = gt;
    const double fprev = f;
    f = ft;

    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (fresh) {
        hinv *= sy / yv.squaredNorm();
        fresh = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = hinv * yv;
      hinv += ((sy + yv.dot(hy)) * rho * rho) * (s * s.transpose()) -
              rho * (hy * s.transpose() + s * hy.transpose());
    }
    // Single tiny decreases are common in curved valleys, so the relative
    // rule compares against the value a window of iterations back.
    history.push_back(f);
    const std::size_t win = static_cast<std::size_t>(std::max(1, opts.stall_iters));
    if (history.size() > win &&
        history[history.size() - 1 - win] - f <= opts.rel_tol * std::max(1.0, std::abs(fprev))) {
      ++it;
      res.stop_reason = "relative change tolerance";
      break;
    }
  }
  act = detail::active_set(x, g, lo, hi);
  res.grad_norm = dim ? detail::projected_norm(g, act) : 0.0;
  for (int i = 0; i < dim; ++i)
    if (act[i]) res.at_bound.push_back(i);
  res.x = std::move(x);
  res.f = f;
  res.g = std::move(g);
  res.iterations = it;
  res.converged = res.grad_norm < opts.grad_tol;
  return res;
}

/// Newton refinement with a Hessian from central differences of the
/// gradient. Meant for the last digits after a quasi-Newton stall on a flat,
/// ill-conditioned valley. Negative or tiny curvature is lifted by an
/// eigenvalue floor; bound-active components stay frozen.
inline BfgsResult newton_polish(const ObjectiveFn& fn, BfgsResult start, const BfgsOptions& opts,
                                int max_iter = 20, double fd_step = 1e-5) {
  const int dim = static_cast<int>(start.x.size());
  const bool boxed = opts.lower.size() == dim && opts.upper.size() == dim && dim > 0;
  auto project = [&](Eigen::VectorXd v) {
    if (boxed) v = v.cwiseMax(opts.lower).cwiseMin(opts.upper);
    return v;
  };
  auto safe_eval = [&](const Eigen::VectorXd& xt, Eigen::VectorXd& gt) -> double {
    try {
      const double ft = fn(xt, gt);
      return gt.allFinite() ? ft : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const Eigen::VectorXd lo = boxed ? opts.lower : Eigen::VectorXd();
  const Eigen::VectorXd hi = boxed ? opts.upper : Eigen::VectorXd();

  BfgsResult res = std::move(start);
  Eigen::VectorXd& x = res.x;
  Eigen::VectorXd& g = res.g;
  for (int it = 0; it < max_iter; ++it) {
    const auto act = detail::active_set(x, g, lo, hi);
    if (detail::projected_norm(g, act) < opts.grad_tol) break;
    std::vector<int> free;
    for (int i = 0; i < dim; ++i)
      if (!act[i]) free.push_back(i);
    const int nf = static_cast<int>(free.size());
    Eigen::MatrixXd h(nf, nf);
    bool ok = true;
    for (int a = 0; a < nf && ok; ++a) {
      Eigen::VectorXd xp = x, xm = x, gp(dim), gm(dim);
      xp[free[a]] += fd_step;
      xm[free[a]] -= fd_step;
      ok = std::isfinite(safe_eval(xp, gp)) && std::isfinite(safe_eval(xm, gm));
      for (int b = 0; b < nf && ok; ++b) h(b, a) = (gp[free[b]] - gm[free[b]]) / (2 * fd_step);
    }
    if (!ok) break;
    h = 0.5 * (h + h.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    const Eigen::VectorXd ev = es.eigenvalues();
    const double floor = 1e-8 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    Eigen::VectorXd gf(nf);
    for (int a = 0; a < nf; ++a) gf[a] = g[free[a]];
    Eigen::VectorXd coef = es.eigenvectors().transpose() * gf;
    for (int a = 0; a < nf; ++a) coef[a] /= std::max(std::abs(ev[a]), floor);
    const Eigen::VectorXd step = -(es.eigenvectors() * coef);
    Eigen::VectorXd d = Eigen::VectorXd::Zero(dim);
    for (int a = 0; a < nf; ++a) d[free[a]] = step[a];

    bool accepted = false;
    double alpha = 1.0;
    Eigen::VectorXd gt(dim);
    for (int bt = 0; bt < 30; ++bt, alpha *= 0.5) {
      const Eigen::VectorXd xt = project(x + alpha * d);
      const double ft = safe_eval(xt, gt);
      if (!std::isfinite(ft)) continue;
      // Near the optimum f is flat to rounding, so a smaller gradient with f
      // no worse than rounding also counts as progress.
      const auto act_t = detail::active_set(xt, gt, lo, hi);
      const bool decrease = ft <= res.f + 1e-4 * g.dot(xt - x);
      const bool flat_better = ft <= res.f + 1e-13 * std::max(1.0, std::abs(res.f)) &&
                               detail::projected_norm(gt, act_t) < detail::projected_norm(g, act);
      if (decrease || flat_better) {
        x = xt;
        g = gt;
        res.f = ft;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++res.iterations;
  }
  const auto act = detail::active_set(x, g, lo, hi);
  res.grad_norm = detail::projected_norm(g, act);
  res.at_bound.clear();
  for (int i = 0; i < dim; ++i)
    if (act[i]) res.at_bound.push_back(i);
  res.converged = res.grad_norm < opts.grad_tol;
  if (res.converged) res.stop_reason = "gradient tolerance after Newton refinement";
  return res;
}

}  // namespace multmix

#endif  // MULTMIX_BFGS_HPP
