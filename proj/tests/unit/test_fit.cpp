#include <catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include "ela/ela.hpp"
#include "ela/fit.hpp"
#include "ela/optimize.hpp"
#include "fixtures.hpp"

using namespace ela;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

bool has_warning(const FitResult& r, const std::string& needle) {
  for (const auto& w : r.warnings)
    if (w.find(needle) != std::string::npos) return true;
  return false;
}

} // namespace

TEST_CASE("BFGS finds the Rosenbrock optimum", "[optimize]") {
  const Objective f = [](const Eigen::VectorXd& x) {
    return -(100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2));
  };
  const OptimResult r = maximize(f, Eigen::Vector2d(-1.2, 1.0), {1e-8, 2000});
  CHECK(r.converged);
  CHECK((r.x - Eigen::Vector2d(1.0, 1.0)).cwiseAbs().maxCoeff() <= 1e-4);
  CHECK(r.trace.size() == static_cast<std::size_t>(r.iterations));
  for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k] >= r.trace[k - 1]);
}

TEST_CASE("Nelder-Mead finds a shifted quadratic optimum", "[optimize]") {
  const Objective f = [](const Eigen::VectorXd& x) {
    return -((x[0] - 2.0) * (x[0] - 2.0) + 3.0 * (x[1] + 1.0) * (x[1] + 1.0) + x[2] * x[2]);
  };
  const OptimResult r = maximize_nelder_mead(f, Eigen::Vector3d::Zero(), {1e-8, 5000});
  CHECK(r.converged);
  CHECK((r.x - Eigen::Vector3d(2.0, -1.0, 0.0)).cwiseAbs().maxCoeff() <= 1e-5);
  CHECK(r.method == "nelder-mead");
}

TEST_CASE("failed evaluations are treated as infeasible", "[optimize]") {
  const Objective f = [](const Eigen::VectorXd& x) {
    if (x[0] > 1.5) throw std::runtime_error("outside the domain");
    return -(x[0] - 1.0) * (x[0] - 1.0);
  };
  const OptimResult r = maximize(f, Eigen::VectorXd::Constant(1, -3.0));
  CHECK_THAT(r.x[0], WithinAbs(1.0, 1e-5));
}

TEST_CASE("finite-difference derivatives of a cubic", "[optimize]") {
  const Objective f = [](const Eigen::VectorXd& x) { return x[0] * x[0] * x[1] + std::pow(x[1], 3); };
  const Eigen::Vector2d x(0.7, -1.3);
  const Eigen::VectorXd g = fd_gradient(f, x);
  CHECK_THAT(g[0], WithinAbs(2 * 0.7 * -1.3, 1e-8));
  CHECK_THAT(g[1], WithinAbs(0.49 + 3 * 1.69, 1e-8));
  const Eigen::MatrixXd H = fd_hessian(f, x);
  CHECK(H == H.transpose());
  CHECK_THAT(H(0, 1), WithinAbs(1.4, 1e-5));
  CHECK_THAT(H(1, 1), WithinAbs(6 * -1.3, 1e-5));
}

TEST_CASE("derived seeds separate the draw streams", "[fit]") {
  CHECK(derive_seed(1, "point") != derive_seed(1, "se"));
  CHECK(derive_seed(1, "point") != derive_seed(2, "point"));
  CHECK(derive_seed(7, "tau") == derive_seed(7, "tau"));
}

TEST_CASE("normal ML fit reproduces the closed form for any B", "[fit]") {
  const Dataset d = fixture::normal_one_way(10, 6, 0.4, 0.8, 0.6, 44);
  auto m = build_model("normal_lmm", d);
  const auto exact = oracle::one_way_ml(d.y, 10, 6);
  REQUIRE(exact.su2 > 0.0);
  for (Eigen::Index B : {1, 50}) {
    FitOptions o;
    o.B_point = B;
    o.B_se = 200;
    o.tol = 1e-9;
    const FitResult r = fit_ml(*m, m->default_start(), o);
    CHECK(r.converged);
    CHECK_THAT(r.estimates[0], WithinAbs(exact.mu, 1e-5));
    CHECK_THAT(r.estimates[1], WithinAbs(std::sqrt(exact.su2), 1e-5));
    CHECK_THAT(r.estimates[2], WithinAbs(std::sqrt(exact.se2), 1e-5));
    REQUIRE(r.se.size() == 3);
    CHECK(r.cov.isApprox(r.cov.transpose(), 1e-14));
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(r.cov).eigenvalues().minCoeff() > 0);
  }
}

TEST_CASE("Bernoulli cluster ML fit agrees with the quadrature MLE", "[fit]") {
  const Dataset d = fixture::toy_clusters(20, 5, 0.2, 0.8, 2);
  auto m = build_model("bernoulli_cluster_toy", d);
  const auto f = [&](const Eigen::VectorXd& x) {
    return oracle::toy_marginal(d.y, d.X, d.column("group"), x.head(1), x[1]);
  };
  Eigen::VectorXd mle = Eigen::Vector2d(0.2, 0.8);
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd step = -oracle::hessian(f, mle, 1e-3).ldlt().solve(oracle::gradient(f, mle, 1e-4));
    mle += step;
    if (step.cwiseAbs().maxCoeff() < 1e-9) break;
  }
  FitOptions o;
  o.B_point = 10000;
  o.compute_se = false;
  const FitResult r = fit_ml(*m, m->default_start(), o);
  CHECK(r.converged);
  CHECK((r.estimates - mle).cwiseAbs().maxCoeff() <= 1e-2);

  // Stationarity of the fixed-draw objective at the reported optimum.
  const CrnDraws crn(m->latent_dim(), 10000, derive_seed(1, "point"));
  const Objective obj = [&](const Eigen::VectorXd& x) {
    return ela_marginal(*m, ParamVec::unpack(m->layout(), x), crn).loglik;
  };
  CHECK(fd_gradient(obj, r.unconstrained).cwiseAbs().maxCoeff() <=
        1e-4 * (1.0 + std::abs(r.loglik)));
}

TEST_CASE("ELA with one zero draw reproduces the LA fit", "[fit]") {
  const Dataset d = fixture::toy_clusters(12, 6, -0.3, 1.0, 8);
  auto m = build_model("bernoulli_cluster_toy", d);
  for (Estimand e : {Estimand::ml, Estimand::reml}) {
    FitOptions la;
    la.method = Method::la;
    la.estimand = e;
    la.compute_se = false;
    FitOptions ela = la;
    ela.method = Method::ela;
    ela.B_point = 1;
    ela.zero_draws = true;
    const FitResult a = fit(*m, m->default_start(), la);
    const FitResult b = fit(*m, m->default_start(), ela);
    CHECK(a.converged);
    CHECK(b.converged);
    CHECK((a.estimates - b.estimates).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("fits are deterministic under fixed draws", "[fit]") {
  const Dataset d = fixture::toy_clusters(10, 5, 0.1, 1.2, 4);
  auto m = build_model("bernoulli_cluster_toy", d);
  FitOptions o;
  o.B_point = 200;
  o.B_se = 500;
  o.seed = 99;
  const FitResult a = fit_ml(*m, m->default_start(), o);
  const FitResult b = fit_ml(*m, m->default_start(), o);
  CHECK(a.estimates == b.estimates);
  CHECK(a.cov == b.cov);
  CHECK(a.loglik == b.loglik);
  CHECK(a.seeds.at("se") == derive_seed(99, "se"));
}

TEST_CASE("normal REML fit reproduces the closed-form variance components", "[fit]") {
  const Dataset d = fixture::normal_one_way(10, 6, 0.4, 0.8, 0.6, 45);
  auto m = build_model("normal_lmm", d);
  const auto exact = oracle::one_way_reml(d.y, 10, 6);
  REQUIRE(exact.su2 > 0.0);
  for (Method method : {Method::la, Method::ela}) {
    FitOptions o;
    o.method = method;
    o.estimand = Estimand::reml;
    o.B_point = 50;
    o.B_se = 500;
    o.tol = 1e-10;
    const FitResult r = fit_reml(*m, m->default_start(), o);
    CHECK(r.converged);
    CHECK_THAT(r.estimates[1], WithinAbs(std::sqrt(exact.su2), 1e-6));
    CHECK_THAT(r.estimates[2], WithinAbs(std::sqrt(exact.se2), 1e-6));
    CHECK_THAT(r.estimates[0], WithinAbs(exact.mu, 1e-6));
    REQUIRE(r.cov.rows() == 3);
    CHECK(r.cov(0, 1) == 0.0);
    CHECK(r.cov(0, 2) == 0.0);
  }
}

TEST_CASE("likelihood ratio test bookkeeping", "[fit]") {
  FitResult full;
  full.loglik = -10.0;
  full.free_parameters = 3;
  full.B_point = 50;
  LrtResult same = lrt(full, full);
  CHECK(same.statistic == 0.0);
  CHECK(same.df == 0);
  CHECK(same.p_value == 1.0);

  FitResult null = full;
  null.free_parameters = 2;
  null.loglik = -10.0 - 0.5 * 3.841458820694124;
  const LrtResult t = lrt(full, null);
  CHECK(t.df == 1);
  CHECK_THAT(t.p_value, WithinAbs(0.05, 1e-9));

  null.loglik = -9.0;
  CHECK_THROWS_WITH(lrt(full, null), ContainsSubstring("negative"));
  full.estimand = null.estimand = Estimand::reml;
  CHECK(lrt(full, null).statistic == 0.0);
  CHECK(lrt(full, null).p_value == 1.0);
  null.loglik = -10.0 + 2e-7;
  CHECK(lrt(full, null).statistic == 0.0);
  null.seed = 2;
  CHECK_THROWS_AS(lrt(full, null), std::invalid_argument);
}

TEST_CASE("delta method transforms", "[fit]") {
  FitResult r;
  r.names = {"beta0", "phi", "alpha"};
  r.estimates = Eigen::Vector3d(1.983, -3.325, -2.489);
  Eigen::Matrix3d cov;
  cov << 0.0104, 0.001, -0.002, 0.001, 0.3, -0.2, -0.002, -0.2, 0.4;
  r.cov = cov;
  r.se = cov.diagonal().cwiseSqrt();

  const FitResult same = delta_transform(r, [](const Eigen::VectorXd& v) { return v; }, r.names);
  CHECK((same.estimates - r.estimates).cwiseAbs().maxCoeff() == 0.0);
  CHECK((same.cov - r.cov).cwiseAbs().maxCoeff() <= 1e-12);

  const FitResult lin =
      delta_transform(r, [](const Eigen::VectorXd& v) { return (-2.5 * v.array() + 1.0).matrix(); },
                      r.names);
  for (int k = 0; k < 3; ++k) CHECK_THAT(lin.se[k], WithinAbs(2.5 * r.se[k], 1e-9 * r.se[k]));

  const FitResult mt = matern_transform(r);
  REQUIRE(mt.names.back() == "xi");
  const double xi = 0.5 * (-std::log(2.0 * M_PI) + 2.489 + 3.325);
  CHECK_THAT(mt.estimates[3], WithinAbs(xi, 1e-12));
  const double var = 0.25 * (cov(1, 1) + cov(2, 2) + 2.0 * cov(1, 2));
  CHECK_THAT(mt.se[3], WithinAbs(std::sqrt(var), 1e-8));
  CHECK_FALSE(has_warning(mt, "singular"));

  const FitResult flat = delta_transform(
      r, [](const Eigen::VectorXd& v) { return Eigen::Vector3d(v[0], v[0], v[2]); }, r.names);
  CHECK(has_warning(flat, "singular"));
}

TEST_CASE("pooled fit near rho_m = 1 suggests the shared submodel", "[fit]") {
  Dataset d = salamander_design({1, 2, 3});
  auto m0 = build_model("pooled_glmm", d);
  Rng rng(6);
  d.y = m0->simulate(m0->default_start(), rng).y;
  auto m = build_model("pooled_glmm", d);
  FitOptions o;
  o.method = Method::la;
  o.compute_se = false;
  o.max_iter = 3;
  o.fixed["rho_m"] = 0.995;
  const FitResult r = fit_ml(*m, m->default_start(), o);
  CHECK(has_warning(r, "rho_m is near +-1"));
  CHECK(has_warning(r, "pooled_shared_glmm"));
  CHECK(r.free_parameters == static_cast<int>(m->layout()->size()) - 1);
}

TEST_CASE("non-convergence is reported without SEs", "[fit]") {
  const Dataset d = fixture::toy_clusters(10, 5, 0.1, 1.2, 4);
  auto m = build_model("bernoulli_cluster_toy", d);
  FitOptions o;
  o.B_point = 20;
  o.max_iter = 1;
  const FitResult r = fit_ml(*m, m->default_start(), o);
  CHECK_FALSE(r.converged);
  CHECK(r.se.size() == 0);
  CHECK(r.cov.size() == 0);
  CHECK(has_warning(r, "did not converge"));
  o.fixed["nope"] = 1.0;
  CHECK_THROWS_AS(fit_ml(*m, m->default_start(), o), std::invalid_argument);
}
