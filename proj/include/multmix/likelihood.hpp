#ifndef MULTMIX_LIKELIHOOD_HPP
#define MULTMIX_LIKELIHOOD_HPP

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "multmix/design.hpp"
#include "multmix/error.hpp"

// Sign convention: every objective here is a negative log-likelihood and is
// minimized. h denotes the joint negative log-likelihood of (y, w) and w~ is
// its minimizer in w for fixed parameters.

namespace multmix {

/// Random-effect modes and the curvature of h in w at the mode.
struct InnerSolution {
  Eigen::VectorXd w_tilde;
  Eigen::MatrixXd hessian;  // Z'Z / sigma^2 + G^-1; empty unless requested
  double log_det = 0.0;     // log |Z'Z / sigma^2 + G^-1|, computed as log|C~| - log|G|
};

enum class SolverKind {
  Auto,   // eliminate the largest diagonal-structured term by Schur complement
  Dense,  // factor the whole q x q curvature matrix
};

struct EvalResult {
  double nll = 0.0;
  Eigen::VectorXd gradient;  // empty unless requested
  InnerSolution inner;
  double rss = 0.0;
};

namespace detail {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Lower Cholesky factor L of the (a_i, b_i) covariance and its derivatives
/// w.r.t. (log sd_a, log sd_b, atanh rho). sqrt(1 - rho^2) = sech(z) is
/// formed directly, so L stays accurate as |rho| approaches 1.
struct PairFactor {
  Eigen::Matrix2d lam, d_sa, d_sb, d_z;
  Eigen::Matrix2d inv_cov;  // only used for the w-space curvature
  double log_det_cov = 0.0;

  PairFactor(double sa, double sb, double z) {
    const double rho = std::tanh(z);
    const double az = std::abs(z);
    const double log_cosh = az + std::log1p(std::exp(-2 * az)) - std::log(2.0);
    const double s = std::exp(-log_cosh);
    lam << sa, 0, rho * sb, s * sb;
    d_sa << sa, 0, 0, 0;
    d_sb << 0, 0, rho * sb, s * sb;
    d_z << 0, 0, s * s * sb, -s * rho * sb;
    const double f = std::exp(2 * log_cosh);
    inv_cov << f / (sa * sa), -f * rho / (sa * sb), -f * rho / (sa * sb), f / (sb * sb);
    log_det_cov = 2 * std::log(sa) + 2 * std::log(sb) - 2 * log_cosh;
  }
};

/// Laplace objective in spherical coordinates: w = Lambda u with G =
/// Lambda Lambda' block diagonal, so the curvature is
/// C~ = Lambda' Z' Z Lambda / sigma^2 + I and
/// nll = n/2 log 2pi + n log sigma + RSS / 2sigma^2 + |u~|^2 / 2 + log|C~| / 2.
/// C~ >= I stays well conditioned when a variance or 1 - rho^2 goes to zero.
class LaplaceEngine {
 public:
  LaplaceEngine(const DesignLayout& lay, SolverKind kind) : lay_(lay) {
    if (kind == SolverKind::Auto) {
      int best = -1;
      for (int t = 0; t < static_cast<int>(lay.terms.size()); ++t) {
        if (lay.terms[t].paired) continue;
        if (best < 0 || lay.terms[t].n_levels > lay.terms[best].n_levels) best = t;
      }
      if (best >= 0 && lay.terms[best].n_levels >= 2) {
        q_off_ = lay.terms[best].offset;
        n_q_ = lay.terms[best].n_levels;
      }
    }
    m_ = lay.q - n_q_;

    // Block skeleton and, per column, its block and position inside the block.
    for (int t = 0; t < static_cast<int>(lay.terms.size()); ++t) {
      Block b;
      b.term = t;
      b.levels = lay.terms[t].n_levels;
      b.dim = lay.terms[t].paired ? 2 : 1;
      b.param_sd = lay.idx_log_sd(t);
      if (b.dim == 2) {
        b.param_sb = lay.idx_log_sigma_b();
        b.param_z = lay.idx_z_rho();
      }
      skeleton_.push_back(b);
    }
    if (lay.slope && !lay.has_rho()) {
      Block b;
      b.levels = lay.slope->n_groups;
      b.param_sd = lay.idx_log_sigma_b();
      skeleton_.push_back(b);
    }
    col_block_.assign(lay.q, -1);
    col_local_.assign(lay.q, 0);
    col_level_.assign(lay.q, 0);
    for (int bi = 0; bi < static_cast<int>(skeleton_.size()); ++bi) {
      const Block& b = skeleton_[bi];
      for (int l = 0; l < b.levels; ++l)
        for (int which = 0; which < b.dim; ++which) {
          const int c = b.col(lay, l, which);
          col_block_[c] = bi;
          col_local_[c] = which;
          col_level_[c] = l;
        }
    }
  }

  EvalResult evaluate(const ParamVector& pv, bool want_gradient, bool want_hessian) const {
    const DesignLayout& lay = lay_;
    const int n = lay.n, q = lay.q, m = m_, nq = n_q_;
    const double sigma = std::exp(pv.log_sigma);
    const double s2 = sigma * sigma;
    const bool has_slope = lay.slope.has_value();
    const Eigen::VectorXd nu =
        has_slope ? slope_covariate(lay, pv.beta) : Eigen::VectorXd::Zero(lay.p);
    const auto blocks = fill_blocks(pv);

    Eigen::VectorXd r0(n);
    for (int k = 0; k < n; ++k) r0[k] = lay.y[k] - pv.beta[lay.fixed_level[k]];

    Eigen::MatrixXd cpp = Eigen::MatrixXd::Identity(m, m);
    Eigen::VectorXd dq = Eigen::VectorXd::Ones(nq);
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q);

    SparseRow zrow, arow;
    for (int k = 0; k < n; ++k) {
      loading_row(lay, k, nu, zrow);
      spherical_row(blocks, zrow, arow);
      for (auto [c1, v1] : arow) {
        rhs[c1] += v1 * r0[k] / s2;
        for (auto [c2, v2] : arow) {
          const double val = v1 * v2 / s2;
          const bool q1 = in_q(c1), q2 = in_q(c2);
          if (!q1 && !q2) {
            cpp(p_index(c1), p_index(c2)) += val;
          } else if (!q1 && q2) {
            trip.emplace_back(p_index(c1), c2 - q_off_, val);
          } else if (q1 && q2) {
            dq[c1 - q_off_] += val;  // a row hits one level of the Q term
          }
        }
      }
    }

    Eigen::SparseMatrix<double> cpq(m, nq);
    cpq.setFromTriplets(trip.begin(), trip.end());
    const Eigen::VectorXd dinv = dq.cwiseInverse();
    const Eigen::SparseMatrix<double> wmat = cpq * dinv.asDiagonal();

    Eigen::MatrixXd schur = cpp;
    if (nq > 0) schur -= Eigen::MatrixXd(wmat * cpq.transpose());

    Eigen::VectorXd rp(m), rq(nq);
    for (int c = 0; c < q; ++c) {
      if (in_q(c))
        rq[c - q_off_] = rhs[c];
      else
        rp[p_index(c)] = rhs[c];
    }

    Eigen::LLT<Eigen::MatrixXd> llt(schur);
    if (llt.info() != Eigen::Success || !dq.allFinite())
      throw Error(ErrorKind::IndefiniteCurvature,
                  "curvature of the joint likelihood in the random effects is not positive "
                  "definite");
    const Eigen::VectorXd up = llt.solve(rp - wmat * rq);
    const Eigen::VectorXd uq = dinv.cwiseProduct(rq - cpq.transpose() * up);

    Eigen::VectorXd u(q);
    for (int c = 0; c < q; ++c) u[c] = in_q(c) ? uq[c - q_off_] : up[p_index(c)];

    EvalResult res;
    Eigen::VectorXd& w = res.inner.w_tilde;
    w.resize(q);
    double log_det_g = 0.0;
    for (const auto& b : blocks) {
      for (int l = 0; l < b.levels; ++l) {
        if (b.dim == 2) {
          const int ca = b.col(lay, l, 0), cb = b.col(lay, l, 1);
          const Eigen::Vector2d wl = b.pair->lam * Eigen::Vector2d(u[ca], u[cb]);
          w[ca] = wl[0];
          w[cb] = wl[1];
          log_det_g += b.pair->log_det_cov;
        } else {
          const int c = b.col(lay, l, 0);
          w[c] = b.lam * u[c];
          log_det_g += 2 * std::log(b.lam);
        }
      }
    }

    const Eigen::MatrixXd& lmat = llt.matrixLLT();
    double log_det_ct = 0.0;
    for (int i = 0; i < m; ++i) log_det_ct += 2.0 * std::log(lmat(i, i));
    for (int j = 0; j < nq; ++j) log_det_ct += std::log(dq[j]);
    res.inner.log_det = log_det_ct - log_det_g;

    Eigen::VectorXd r = r0;
    for (int k = 0; k < n; ++k) {
      loading_row(lay, k, nu, zrow);
      for (auto [c, v] : zrow) r[k] -= v * w[c];
    }
    const double rss = r.squaredNorm();
    res.rss = rss;

    res.nll = 0.5 * n * kLog2Pi + n * pv.log_sigma + rss / (2 * s2) + 0.5 * u.squaredNorm() +
              0.5 * log_det_ct;
    if (!std::isfinite(res.nll))
      throw Error(ErrorKind::ParameterOverflow, "negative log-likelihood is not finite");

    if (want_hessian) res.inner.hessian = w_space_curvature(blocks, nu, s2);

    if (!want_gradient) return res;

    // Gradient by the envelope theorem: the u-gradient vanishes at u~, so
    // only explicit partials of the objective and of 0.5 log|C~| remain.
    const Eigen::MatrixXd sinv = llt.solve(Eigen::MatrixXd::Identity(m, m));
    const Eigen::MatrixXd fmat = nq > 0 ? Eigen::MatrixXd(sinv * wmat) : Eigen::MatrixXd(m, 0);
    Eigen::VectorXd qdiag(nq);
    for (int j = 0; j < nq; ++j) {
      double acc = dinv[j];
      for (Eigen::SparseMatrix<double>::InnerIterator it(wmat, j); it; ++it)
        acc += it.value() * fmat(it.row(), j);
      qdiag[j] = acc;
    }
    auto cinv = [&](int c1, int c2) -> double {
      const bool q1 = in_q(c1), q2 = in_q(c2);
      if (!q1 && !q2) return sinv(p_index(c1), p_index(c2));
      if (!q1) return -fmat(p_index(c1), c2 - q_off_);
      if (!q2) return -fmat(p_index(c2), c1 - q_off_);
      if (c1 == c2) return qdiag[c1 - q_off_];
      double acc = 0.0;
      for (Eigen::SparseMatrix<double>::InnerIterator it(wmat, c1 - q_off_); it; ++it)
        acc += it.value() * fmat(it.row(), c2 - q_off_);
      return acc;
    };

    Eigen::VectorXd g = Eigen::VectorXd::Zero(lay.n_params());
    double tr_cinv = qdiag.sum();
    for (int i = 0; i < m; ++i) tr_cinv += sinv(i, i);
    g[lay.idx_log_sigma()] = n - rss / s2 - (q - tr_cinv);

    for (int k = 0; k < n; ++k) g[lay.fixed_level[k]] -= r[k] / s2;

    Eigen::VectorXd e = Eigen::VectorXd::Zero(lay.p);
    std::vector<double> t;
    for (int k = 0; k < n; ++k) {
      loading_row(lay, k, nu, zrow);
      spherical_row(blocks, zrow, arow);
      // t = C~^-1 a_k, needed only on the columns of a_k.
      t.assign(arow.size(), 0.0);
      for (std::size_t i = 0; i < arow.size(); ++i)
        for (auto [c2, v2] : arow) t[i] += cinv(arow[i].first, c2) * v2;
      auto t_at = [&](int c) {
        for (std::size_t i = 0; i < arow.size(); ++i)
          if (arow[i].first == c) return t[i];
        return 0.0;
      };

      for (auto [c, v] : zrow) {
        const Block& b = blocks[col_block_[c]];
        if (b.dim == 1) {
          g[b.param_sd] += v * b.lam * (t_at(c) - r[k] * u[c]) / s2;
          continue;
        }
        // z_k restricted to the pair: one loading per call, at position col_local_.
        const int l = col_level_[c];
        const int ca = b.col(lay, l, 0), cb = b.col(lay, l, 1);
        const Eigen::Vector2d x(t_at(ca) - r[k] * u[ca], t_at(cb) - r[k] * u[cb]);
        const int row = col_local_[c];
        g[b.param_sd] += v * b.pair->d_sa.row(row).dot(x) / s2;
        g[b.param_sb] += v * b.pair->d_sb.row(row).dot(x) / s2;
        g[b.param_z] += v * b.pair->d_z.row(row).dot(x) / s2;
      }

      if (has_slope) {
        const int bcol = lay.slope_column(lay.slope->group[k]);
        const Block& b = blocks[col_block_[bcol]];
        double lt;
        if (b.dim == 2) {
          const int l = col_level_[bcol];
          const int ca = b.col(lay, l, 0);
          lt = b.pair->lam(1, 0) * t_at(ca) + b.pair->lam(1, 1) * t_at(bcol);
        } else {
          lt = b.lam * t_at(bcol);
        }
        e[lay.fixed_level[k]] += (lt - r[k] * w[bcol]) / s2;
      }
    }
    if (has_slope) {
      const double mean_e = lay.center_covariate ? e.mean() : 0.0;
      for (int j = 0; j < lay.p; ++j) g[j] += e[j] - mean_e;
    }

    if (!g.allFinite())
      throw Error(ErrorKind::GradientOverflow, "gradient has a non-finite component");
    res.gradient = std::move(g);
    return res;
  }

 private:
  struct Block {
    int dim = 1;
    int levels = 0;
    int term = -1;          // -1: the unpaired slope block
    double lam = 1.0;       // standard deviation of a scalar block
    std::optional<PairFactor> pair;
    int param_sd = -1, param_sb = -1, param_z = -1;

    int col(const DesignLayout& lay, int l, int which) const {
      if (term < 0) return lay.slope_column(l);
      if (dim == 2) return which == 0 ? lay.column(term, l) : lay.slope_column(l);
      return lay.column(term, l);
    }
  };

  std::vector<Block> fill_blocks(const ParamVector& pv) const {
    std::vector<Block> out = skeleton_;
    for (auto& b : out) {
      if (b.term >= 0) {
        b.lam = std::exp(pv.log_sd[b.term]);
        if (b.dim == 2) b.pair.emplace(b.lam, std::exp(*pv.log_sigma_b), *pv.z_rho);
      } else {
        b.lam = std::exp(*pv.log_sigma_b);
      }
    }
    return out;
  }

  /// Row of Z Lambda from the row of Z; pair loadings mix through L.
  void spherical_row(const std::vector<Block>& blocks, const SparseRow& zrow,
                     SparseRow& out) const {
    out.clear();
    auto add = [&](int c, double v) {
      for (auto& [oc, ov] : out)
        if (oc == c) {
          ov += v;
          return;
        }
      out.emplace_back(c, v);
    };
    for (auto [c, v] : zrow) {
      const Block& b = blocks[col_block_[c]];
      if (b.dim == 1) {
        add(c, v * b.lam);
        continue;
      }
      const int l = col_level_[c];
      const int row = col_local_[c];
      add(b.col(lay_, l, 0), v * b.pair->lam(row, 0));
      if (row == 1) add(b.col(lay_, l, 1), v * b.pair->lam(1, 1));
    }
  }

  /// Z'Z / sigma^2 + G^-1 as a dense matrix.
  Eigen::MatrixXd w_space_curvature(const std::vector<Block>& blocks, const Eigen::VectorXd& nu,
                                    double s2) const {
    const DesignLayout& lay = lay_;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(lay.q, lay.q);
    SparseRow zrow;
    for (int k = 0; k < lay.n; ++k) {
      loading_row(lay, k, nu, zrow);
      for (auto [c1, v1] : zrow)
        for (auto [c2, v2] : zrow) h(c1, c2) += v1 * v2 / s2;
    }
    for (const auto& b : blocks)
      for (int l = 0; l < b.levels; ++l) {
        if (b.dim == 2) {
          const int ca = b.col(lay, l, 0), cb = b.col(lay, l, 1);
          const Eigen::Matrix2d& inv = b.pair->inv_cov;
          h(ca, ca) += inv(0, 0);
          h(ca, cb) += inv(0, 1);
          h(cb, ca) += inv(1, 0);
          h(cb, cb) += inv(1, 1);
        } else {
          const int c = b.col(lay, l, 0);
          h(c, c) += 1.0 / (b.lam * b.lam);
        }
      }
    return h;
  }

  bool in_q(int c) const { return c >= q_off_ && c < q_off_ + n_q_; }
  int p_index(int c) const { return c < q_off_ ? c : c - n_q_; }

  const DesignLayout& lay_;
  int q_off_ = 0;
  int n_q_ = 0;
  int m_ = 0;
  std::vector<Block> skeleton_;
  std::vector<int> col_block_, col_local_, col_level_;
};

inline void check_shape(const ParamVector& pv, const DesignLayout& lay) {
  if (pv.beta.size() != lay.p || pv.log_sd.size() != lay.terms.size() ||
      pv.log_sigma_b.has_value() != lay.slope.has_value() ||
      pv.z_rho.has_value() != lay.has_rho())
    throw Error(ErrorKind::InvalidArgument, "parameter vector does not match the layout");
}

}  // namespace detail

/// Laplace objective and its gradient over the flat unconstrained vector.
class LaplaceObjective {
 public:
  explicit LaplaceObjective(const DesignLayout& lay, SolverKind kind = SolverKind::Auto)
      : lay_(lay), engine_(lay, kind) {}

  const DesignLayout& layout() const { return lay_; }

  EvalResult evaluate(const ParamVector& pv, bool gradient = false,
                      bool hessian = false) const {
    detail::check_shape(pv, lay_);
    return engine_.evaluate(pv, gradient, hessian);
  }

  double value(const Eigen::VectorXd& theta) const {
    return evaluate(ParamVector::unflatten(lay_, theta)).nll;
  }

  double value_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
    auto r = evaluate(ParamVector::unflatten(lay_, theta), true);
    grad = std::move(r.gradient);
    return r.nll;
  }

 private:
  const DesignLayout& lay_;
  detail::LaplaceEngine engine_;
};

/// Dense prior covariance G (q x q).
inline Eigen::MatrixXd dense_prior_covariance(const ParamVector& pv, const DesignLayout& lay) {
  detail::check_shape(pv, lay);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(lay.q, lay.q);
  for (int t = 0; t < static_cast<int>(lay.terms.size()); ++t) {
    const double sd = std::exp(pv.log_sd[t]);
    for (int l = 0; l < lay.terms[t].n_levels; ++l) {
      const int c = lay.column(t, l);
      g(c, c) = sd * sd;
      if (lay.terms[t].paired) {
        const double sb = std::exp(*pv.log_sigma_b);
        const double cov = std::tanh(*pv.z_rho) * sd * sb;
        const int cb = lay.slope_column(l);
        g(cb, cb) = sb * sb;
        g(c, cb) = g(cb, c) = cov;
      }
    }
  }
  if (lay.slope && !lay.has_rho()) {
    const double sb = std::exp(*pv.log_sigma_b);
    for (int l = 0; l < lay.slope->n_groups; ++l) {
      const int c = lay.slope_column(l);
      g(c, c) = sb * sb;
    }
  }
  return g;
}

/// Joint negative log-likelihood h(w) = -log p(y | w) - log p(w).
inline double joint_nll(const ParamVector& pv, const Eigen::VectorXd& w,
                        const DesignLayout& lay) {
  detail::check_shape(pv, lay);
  if (w.size() != lay.q)
    throw Error(ErrorKind::InvalidArgument, "random-effect vector has wrong length");
  const double s2 = std::exp(2 * pv.log_sigma);
  const Eigen::VectorXd nu = slope_covariate(lay, pv.beta);
  double val = 0.0;
  SparseRow row;
  for (int k = 0; k < lay.n; ++k) {
    double r = lay.y[k] - pv.beta[lay.fixed_level[k]];
    loading_row(lay, k, nu, row);
    for (auto [c, v] : row) r -= v * w[c];
    val += 0.5 * (detail::kLog2Pi + std::log(s2)) + r * r / (2 * s2);
  }
  if (lay.q > 0) {
    const Eigen::MatrixXd g = dense_prior_covariance(pv, lay);
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorKind::ParameterOverflow, "prior covariance is not positive definite");
    double log_det = 0.0;
    for (int i = 0; i < lay.q; ++i) log_det += 2 * std::log(llt.matrixLLT()(i, i));
    val += 0.5 * (lay.q * detail::kLog2Pi + log_det) + 0.5 * w.dot(llt.solve(w));
  }
  if (!std::isfinite(val))
    throw Error(ErrorKind::ParameterOverflow, "joint negative log-likelihood is not finite");
  return val;
}

/// Gradient of h in w: -Z' r / sigma^2 + G^-1 w.
inline Eigen::VectorXd joint_gradient_w(const ParamVector& pv, const Eigen::VectorXd& w,
                                        const DesignLayout& lay) {
  detail::check_shape(pv, lay);
  const double s2 = std::exp(2 * pv.log_sigma);
  const Eigen::MatrixXd z = dense_loadings(lay, pv.beta);
  const Eigen::MatrixXd x = dense_fixed(lay);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(lay.y.data(), lay.n);
  const Eigen::VectorXd r = y - x * pv.beta - z * w;
  const Eigen::MatrixXd g = dense_prior_covariance(pv, lay);
  return -z.transpose() * r / s2 + g.ldlt().solve(w);
}

/// Modes of the random effects. h is quadratic in w, so one Newton step from
/// w = 0 lands exactly on the minimizer.
inline InnerSolution inner_solve(const ParamVector& pv, const DesignLayout& lay,
                                 SolverKind kind = SolverKind::Auto,
                                 bool keep_hessian = true) {
  detail::check_shape(pv, lay);
  return detail::LaplaceEngine(lay, kind).evaluate(pv, false, keep_hessian).inner;
}

/// Laplace-approximate marginal negative log-likelihood:
/// h(w~) + 0.5 log|C| - (q/2) log(2 pi).
inline double laplace_nll(const ParamVector& pv, const DesignLayout& lay,
                          SolverKind kind = SolverKind::Auto) {
  return LaplaceObjective(lay, kind).evaluate(pv).nll;
}

/// Gradient of laplace_nll over the flat unconstrained parameter vector.
inline Eigen::VectorXd nll_gradient(const ParamVector& pv, const DesignLayout& lay,
                                    SolverKind kind = SolverKind::Auto) {
  return LaplaceObjective(lay, kind).evaluate(pv, true).gradient;
}

struct OracleOptions {
  int max_n = 2000;
};

/// Exact marginal negative log-likelihood through the dense n x n covariance
/// V = Z G Z' + sigma^2 I.
inline double direct_marginal_nll(const ParamVector& pv, const DesignLayout& lay,
                                  const OracleOptions& opts = {}) {
  detail::check_shape(pv, lay);
  if (lay.n > opts.max_n)
    throw Error(ErrorKind::OracleSize, "direct likelihood limited to n <= " +
                                           std::to_string(opts.max_n) + " observations");
  const Eigen::MatrixXd z = dense_loadings(lay, pv.beta);
  const Eigen::MatrixXd g = dense_prior_covariance(pv, lay);
  Eigen::MatrixXd v = z * g * z.transpose();
  v.diagonal().array() += std::exp(2 * pv.log_sigma);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(lay.y.data(), lay.n);
  const Eigen::VectorXd r = y - dense_fixed(lay) * pv.beta;
  Eigen::LLT<Eigen::MatrixXd> llt(v);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::CovarianceDegenerate, "marginal covariance is not positive definite");
  double log_det = 0.0;
  for (int i = 0; i < lay.n; ++i) log_det += 2 * std::log(llt.matrixLLT()(i, i));
  const double val = 0.5 * lay.n * detail::kLog2Pi + 0.5 * log_det + 0.5 * r.dot(llt.solve(r));
  if (!std::isfinite(val))
    throw Error(ErrorKind::CovarianceDegenerate, "marginal likelihood is not finite");
  return val;
}

}  // namespace multmix

#endif  // MULTMIX_LIKELIHOOD_HPP
