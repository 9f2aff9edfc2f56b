// Acceptance runner: one PASS/FAIL/SKIP line per criterion. Exits non-zero
// when any criterion fails. Criteria 4 and 5 need external data files named
// by environment variables and are skipped without them.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "multmix/cli.hpp"
#include "multmix/inference.hpp"
#include "multmix/likelihood.hpp"
#include "multmix/mam.hpp"
#include "multmix/methodcomp.hpp"
#include "multmix/optimize.hpp"
#include "multmix/profile.hpp"
#include "multmix/simulate.hpp"
#include "test_support.hpp"

using namespace multmix;

namespace {

enum class Status { Pass, Fail, Skip };

struct Verdict {
  Status status;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Verdict verdict(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

double rel_err(double x, double ref) { return std::abs(x - ref) / std::abs(ref); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const char* getenv_or(const char* name, const char* fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

// 1. Laplace value against the dense marginal likelihood.
Verdict laplace_exactness() {
  Rng rng = make_stream(101, 0);
  const int n = 240;
  double worst = 0.0;
  for (int rep = 0; rep < n; ++rep) {
    auto inst = testing::random_instance(rng);
    const double la = laplace_nll(inst.params, inst.layout);
    const double direct = direct_marginal_nll(inst.params, inst.layout);
    worst = std::max(worst, std::abs(la - direct) / std::max(1.0, std::abs(direct)));
  }
  return verdict(worst < 1e-8, std::to_string(n) + " instances, max scaled error " + fmt("%.2e", worst) +
                                   " (tol 1e-8)");
}

// 2. Analytic gradient against central differences.
Verdict gradient_check() {
  Rng rng = make_stream(102, 0);
  int bad = 0, checked = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    auto inst = testing::random_instance(rng);
    LaplaceObjective obj(inst.layout);
    const Eigen::VectorXd x = inst.params.flatten();
    Eigen::VectorXd g;
    obj.value_and_gradient(x, g);
    const Eigen::VectorXd fd =
        testing::central_difference([&](const Eigen::VectorXd& v) { return obj.value(v); }, x, 1e-5);
    for (int i = 0; i < x.size(); ++i, ++checked) {
      const double err = std::abs(g[i] - fd[i]);
      if (!(err <= 1e-6 || err <= 1e-4 * std::abs(fd[i]))) ++bad;
      worst = std::max(worst, err / std::max(1.0, std::abs(fd[i])));
    }
  }
  return verdict(bad == 0, "50 points, " + std::to_string(checked) + " components, " + std::to_string(bad) +
                               " outside 1e-4 rel / 1e-6 abs, max scaled error " + fmt("%.2e", worst));
}

// 3. Gamma tails with fractional degrees of freedom.
Verdict fractional_tails() {
  const double p1 = chi2_tail(28.23, 1.5), p2 = chi2_tail(50.86, 1.5);
  const double e1 = rel_err(p1, 3.07e-7), e2 = rel_err(p2, 3.25e-12);
  return verdict(e1 < 0.02 && e2 < 0.02, "p(28.23; 1.5) = " + fmt("%.3e", p1) + ", p(50.86; 1.5) = " +
                                             fmt("%.3e", p2) + ", max rel error " +
                                             fmt("%.2e", std::max(e1, e2)) + " (tol 2e-2)");
}

struct Check {
  bool ok = true;
  std::string failures;
  void near(const std::string& what, double got, double want, double tol) {
    if (std::abs(got - want) <= tol) return;
    ok = false;
    failures += " " + what + "=" + fmt("%.4f", got) + " (want " + fmt("%.4f", want) + ")";
  }
  void rel(const std::string& what, double got, double want, double tol) {
    if (rel_err(got, want) <= tol) return;
    ok = false;
    failures += " " + what + "=" + fmt("%.3e", got) + " (want " + fmt("%.3e", want) + ")";
  }
};

cli::Problem load(const std::string& path, const std::string& formula, std::vector<std::string> combine = {}) {
  cli::RunConfig rc;
  rc.data = path;
  rc.formula = formula;
  rc.combine = std::move(combine);
  return cli::load_problem(rc);
}

void check_lrt(Check& c, const LrtTable& t, const std::vector<double>& want, double tol) {
  for (std::size_t r = 0; r < want.size() && r < t.rows.size(); ++r)
    c.near("chi2[" + t.rows[r].effect + "]", t.rows[r].chi2, want[r], tol);
  if (t.rows.size() != want.size()) {
    c.ok = false;
    c.failures += " wrong number of LRT rows";
  }
}

// 4. Sensory panel reproduction on the public TV data.
Verdict sensory_reproduction() {
  const char* path = std::getenv("MULTMIX_TVBO_CSV");
  if (!path || !*path) return {Status::Skip, "external data: set MULTMIX_TVBO_CSV; criterion 6 stands in"};
  const std::vector<std::string> combine{"Product=TVset:Picture"};
  const std::string cutting = getenv_or("MULTMIX_TVBO_CUTTING", "Cutting");
  const std::string sharpness = getenv_or("MULTMIX_TVBO_SHARPNESS", "Sharpnessofmovement");
  const std::string rhs = " ~ 1 + Product + (1|Assessor) + (1|Assessor:Product) + mp(Assessor,Product)";
  Check c;

  const cli::Problem pb = load(path, cutting + rhs, combine);
  const LrtTable t = lrt_table(pb.spec, pb.data);
  const FitResult& fr = t.full;
  c.near("sigma", fr.natural.sigma, 1.2100, 1e-2);
  c.near("sigma_a", fr.sigma_a().value_or(NAN), 2.0096, 1e-2);
  c.near("sigma_b", fr.natural.sigma_b.value_or(NAN), 0.4692, 1e-2);
  c.near("sigma_d", fr.sigma_d().value_or(NAN), 0.2428, 1e-2);
  c.near("rho", fr.rho_reported().value_or(NAN), 0.4188, 1e-2);
  check_lrt(c, t, {0.13, 28.23, 133.77, 120.29}, 0.05);

  const cli::Problem sp = load(path, sharpness + rhs, combine);
  const MamSummary m = mam_fit(sp.data, "Assessor", "Product");
  c.rel("p[2-way ANOVA]", anova_ftest(m).p_value, 2.67e-4, 0.05);
  c.rel("p[MAM]", mam_ftest(m).p_value, 2.28e-4, 0.05);
  const LrtTable st = lrt_table(sp.spec, sp.data);
  c.rel("p[LRT]", st.rows.back().p_value, 1.70e-4, 0.05);
  return verdict(c.ok, c.ok ? "covariance within 1e-2, LRT chi2 within 0.05, product p-values within 5%"
                            : "mismatch:" + c.failures);
}

struct MethodCase {
  const char* env;
  const char* formula_env;
  double sigma, sigma_a, sigma_b, rho;
  std::vector<double> chi2;
};

// 5. Method comparison reproduction on the hepatitis and glucose data.
Verdict method_reproduction() {
  const std::vector<MethodCase> cases = {
      {"MULTMIX_HEPATITIS_CSV", "MULTMIX_HEPATITIS_FORMULA", 0.2092, 0.1248, 0.0275, -0.5349, {11.01, 62.01, 1100.04}},
      {"MULTMIX_GLUCOSE_CSV", "MULTMIX_GLUCOSE_FORMULA", 0.4363, 0.4698, 0.1156, 0.7381, {29.02, 113.49, 951.91}},
  };
  Check c;
  std::vector<std::string> missing, done;
  for (const auto& mc : cases) {
    const char* path = std::getenv(mc.env);
    if (!path || !*path) {
      missing.push_back(mc.env);
      continue;
    }
    const cli::Problem pb = load(path, getenv_or(mc.formula_env, "y ~ 1 + item + (1|meth) + mp(meth,item)"));
    const LrtTable t = lrt_table(pb.spec, pb.data);
    const std::string tag = std::string(mc.env) + ":";
    c.near(tag + "sigma", t.full.natural.sigma, mc.sigma, 1e-2);
    c.near(tag + "sigma_a", t.full.sigma_a().value_or(NAN), mc.sigma_a, 1e-2);
    c.near(tag + "sigma_b", t.full.natural.sigma_b.value_or(NAN), mc.sigma_b, 1e-2);
    c.near(tag + "rho", t.full.rho_reported().value_or(NAN), mc.rho, 1e-2);
    check_lrt(c, t, mc.chi2, 0.5);
    done.push_back(mc.env);
  }
  if (!c.ok) return {Status::Fail, "mismatch:" + c.failures};
  if (!missing.empty()) {
    std::string d = "external data: set";
    for (const auto& m : missing) d += " " + m;
    for (const auto& m : done) d += "; " + m + " matched";
    return {Status::Skip, d};
  }
  return {Status::Pass, "both datasets: covariance within 1e-2, LRT chi2 within 0.5"};
}

TwoWayTruth recovery_truth(int n_fixed) {
  TwoWayTruth t;
  t.beta = Eigen::VectorXd::LinSpaced(n_fixed, 4.0, 8.2);
  t.sigma = 1.0;
  t.sigma_a = 1.5;
  t.sigma_b = 0.4;
  t.sigma_d = 0.5;
  t.rho = 0.4;
  return t;
}

const char* const kFull = "y ~ 1 + F + (1|G) + (1|G:F) + mp(G,F)";

// 6. Simulate from the full model and recover it; profile-interval coverage.
Verdict simulate_and_recover() {
  const ModelSpec ms = parse_formula(kFull);
  const TwoWayTruth t = recovery_truth(15);
  std::vector<std::string> names{"sigma", "sigma_a", "sigma_b", "sigma_d", "rho"};
  std::vector<double> truth{t.sigma, t.sigma_a, t.sigma_b, t.sigma_d, t.rho};
  for (int j = 0; j < t.beta.size(); ++j) {
    names.push_back("beta" + std::to_string(j + 1));
    truth.push_back(t.beta[j]);
  }
  const int reps = 100;
  Eigen::MatrixXd est(reps, static_cast<int>(truth.size()));
  int not_converged = 0;
  for (int r = 0; r < reps; ++r) {
    Rng rng = make_stream(106, r);
    const FitResult fr = fit(ms, simulate_two_way(20, 15, 2, t, rng));
    if (!fr.converged) ++not_converged;
    est(r, 0) = fr.natural.sigma;
    est(r, 1) = *fr.sigma_a();
    est(r, 2) = *fr.natural.sigma_b;
    est(r, 3) = *fr.sigma_d();
    est(r, 4) = *fr.rho_reported();
    for (int j = 0; j < t.beta.size(); ++j) est(r, 5 + j) = fr.natural.beta[j];
  }
  double worst_z = 0.0;
  std::string worst_name;
  for (int k = 0; k < est.cols(); ++k) {
    const Eigen::VectorXd col = est.col(k);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / (reps - 1));
    const double z = std::abs(mean - truth[k]) / (sd / std::sqrt(reps));
    if (z > worst_z) worst_z = z, worst_name = names[k];
  }
  // ML divides the G:F stratum sum of squares by I(J-1) rather than its
  // residual degrees of freedom, which lowers E[sigma_d^2] by about
  // (sigma^2 + K sigma_d^2) / (I K).
  const double d2_mean = est.col(3).array().square().mean();
  const double d2_ml = t.sigma_d * t.sigma_d - (t.sigma * t.sigma + 2 * t.sigma_d * t.sigma_d) / (20 * 2);

  const TwoWayTruth tc = recovery_truth(8);
  const Eigen::VectorXd contrast = level_contrast(8, 4, 2);
  const double target = contrast.dot(tc.beta);
  const int ci_reps = 500;
  int covered = 0;
  for (int r = 0; r < ci_reps; ++r) {
    Rng rng = make_stream(206, r);
    const FitResult fr = fit(ms, simulate_two_way(20, 8, 2, tc, rng));
    const ProfileCi ci = profile_ci(fr, contrast);
    if (ci.lower <= target && target <= ci.upper) ++covered;
  }
  const double coverage = static_cast<double>(covered) / ci_reps;
  const bool ok = worst_z <= 3.0 && coverage >= 0.92 && coverage <= 0.98;
  return verdict(ok, "100 fits: worst |mean - truth| = " + fmt("%.2f", worst_z) + " MC SE (" + worst_name +
                         ", limit 3), mean sigma_d^2 " + fmt("%.4f", d2_mean) + " vs ML expectation " +
                         fmt("%.4f", d2_ml) + ", " + std::to_string(not_converged) + " not converged; coverage of beta5 - beta3 = " +
                         fmt("%.3f", coverage) + " over 500 (limits 0.92-0.98)");
}

double empirical_quantile(std::vector<double>& x, double q) {
  const auto k = static_cast<std::size_t>(std::floor(q * (x.size() - 1)));
  std::nth_element(x.begin(), x.begin() + k, x.end());
  return x[k];
}

// 7. Limits of agreement against simulated differences.
Verdict loa_monte_carlo() {
  const LoaComponents c{0.4363, 0.4698, 0.1156, 0.7381};
  const std::vector<double> grid{-4.0, -2.0, 0.0, 2.0, 4.0};
  const int n = 100000;
  Rng rng = make_stream(107, 0);
  double worst = 0.0, additive_coverage = 0.0;
  for (double nu : grid) {
    std::vector<double> d(n);
    for (auto& x : d) {
      const auto [a1, b1] = draw_pair(rng, c.sigma_a, c.sigma_b, c.rho);
      const auto [a2, b2] = draw_pair(rng, c.sigma_a, c.sigma_b, c.rho);
      x = (a1 - a2) + nu * (b1 - b2) + c.sigma * (standard_normal(rng) - standard_normal(rng));
    }
    const LoaInterval mult = loa_multiplicative(c, nu);
    if (nu == grid.back()) {
      const LoaInterval add = loa_additive(c);
      additive_coverage = static_cast<double>(std::count_if(d.begin(), d.end(), [&](double x) {
                            return add.lower <= x && x <= add.upper;
                          })) / n;
    }
    const double lo = empirical_quantile(d, 0.025), hi = empirical_quantile(d, 0.975);
    worst = std::max({worst, rel_err(lo, mult.lower), rel_err(hi, mult.upper)});
  }
  const LoaInterval a0 = loa_additive(c), m0 = loa_multiplicative(c, 0.0);
  const bool coincide = a0.lower == m0.lower && a0.upper == m0.upper;
  const bool ok = worst < 0.02 && coincide && additive_coverage < 0.95;
  return verdict(ok, "5 item effects x 1e5 differences, max rel error " + fmt("%.2e", worst) +
                         " (tol 2e-2); bounds at 0 " + (coincide ? "identical" : "differ") +
                         "; additive band covers " + fmt("%.3f", additive_coverage) + " at item effect 4");
}

// 8. Wall-clock time of single fits at two problem sizes.
Verdict timing() {
  TwoWayTruth t = recovery_truth(12);
  Rng rng = make_stream(108, 0);
  const Dataset small = simulate_two_way(8, 12, 2, t, rng);
  auto t0 = std::chrono::steady_clock::now();
  const FitResult a = fit(parse_formula(kFull), small);
  const double s_small = seconds_since(t0);

  t = recovery_truth(45);
  t.sigma_d = 0.0;
  const Dataset large = simulate_two_way(50, 45, 1, t, rng);
  t0 = std::chrono::steady_clock::now();
  const FitResult b = fit(parse_formula("y ~ 1 + F + (1|G) + mp(G,F)"), large);
  const double s_large = seconds_since(t0);
  const bool ok = a.converged && b.converged && s_small < 2.0 && s_large < 30.0;
  return verdict(ok, "8x12x2 full model " + fmt("%.3f", s_small) + " s (limit 2), 50x45x1 without d " +
                         fmt("%.3f", s_large) + " s (limit 30)");
}

// 9. Fit without the scaling term against the closed-form optimum of the
// dense marginal likelihood.
Verdict reduced_model() {
  const ModelSpec ms = parse_formula("y ~ 1 + F + (1|G) + (1|G:F)");
  TwoWayTruth t = recovery_truth(6);
  t.sigma_b = 0.0;
  int used = 0;
  double worst = 0.0;
  for (int r = 0; used < 20 && r < 100; ++r) {
    Rng rng = make_stream(109, r);
    const Dataset ds = simulate_two_way(8, 6, 3, t, rng);
    const auto s = testing::balanced_strata_mle(ds, 8, 6, 3);
    if (s.sigma_d2 <= 0 || s.sigma_a2 <= 0) continue;
    const FitResult fr = fit(ms, ds);
    const DesignLayout& lay = fr.layout;
    ParamVector pv;
    pv.beta.resize(6);
    for (int j = 0; j < 6; ++j) pv.beta[j] = 0.0;
    for (int k = 0; k < lay.n; ++k) pv.beta[lay.fixed_level[k]] += lay.y[k] / (8 * 3);
    pv.log_sigma = 0.5 * std::log(s.sigma2);
    for (const auto& term : lay.terms)
      pv.log_sd.push_back(0.5 * std::log(term.label == "G" ? s.sigma_a2 : s.sigma_d2));
    worst = std::max(worst, std::abs(fr.nll - direct_marginal_nll(pv, lay)));
    ++used;
  }
  return verdict(used == 20 && worst < 1e-6, std::to_string(used) + " interior datasets, max |NLL - oracle optimum| = " +
                                                 fmt("%.2e", worst) + " (tol 1e-6)");
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "laplace-exactness", laplace_exactness},
      {2, "gradient-vs-finite-differences", gradient_check},
      {3, "fractional-df-tails", fractional_tails},
      {4, "sensory-panel-reproduction", sensory_reproduction},
      {5, "method-comparison-reproduction", method_reproduction},
      {6, "simulate-and-recover", simulate_and_recover},
      {7, "limits-of-agreement-monte-carlo", loa_monte_carlo},
      {8, "fit-timing", timing},
      {9, "reduced-model-oracle", reduced_model},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = v.status == Status::Pass ? "PASS" : v.status == Status::Fail ? "FAIL" : "SKIP";
    if (v.status == Status::Fail) ++failed;
    std::printf("%s  %d %-32s %s [%.1f s]\n", tag, c.id, c.name, v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
