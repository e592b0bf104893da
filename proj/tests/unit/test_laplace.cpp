#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "ela/errors.hpp"
#include "ela/laplace.hpp"
#include "fixtures.hpp"

using namespace ela;
using Catch::Matchers::WithinAbs;

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

TEST_CASE("Gaussian predictive density at the mode and in one dimension", "[laplace]") {
  ModeResult m;
  m.mode = Eigen::VectorXd::Zero(1);
  m.chol = Eigen::MatrixXd::Identity(1, 1);
  CHECK_THAT(gaussian_predictive_logpdf(Eigen::VectorXd::Zero(1), m), WithinAbs(-0.5 * kLog2Pi, 1e-15));
  CHECK_THAT(gaussian_predictive_logpdf(Eigen::VectorXd::Ones(1), m),
             WithinAbs(-0.5 * kLog2Pi - 0.5, 1e-15));
}

TEST_CASE("Gaussian predictive density matches a dense evaluation", "[laplace]") {
  Rng rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(5, 5);
  for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] = normal(rng);
  const Eigen::MatrixXd omega = a * a.transpose() + Eigen::MatrixXd::Identity(5, 5);
  ModeResult m;
  m.mode = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  m.chol = Eigen::LLT<Eigen::MatrixXd>(omega).matrixL();
  Eigen::VectorXd z(5);
  for (Eigen::Index k = 0; k < 5; ++k) z[k] = normal(rng);
  const Eigen::MatrixXd cov = omega.inverse();
  const Eigen::VectorXd r = z - m.mode;
  const double dense = -2.5 * kLog2Pi - 0.5 * std::log(cov.determinant()) - 0.5 * r.dot(omega * r);
  CHECK_THAT(gaussian_predictive_logpdf(z, m), WithinAbs(dense, 1e-10));
  CHECK_THAT(gaussian_predictive_logpdf(m.mode, m),
             WithinAbs(m.half_log_det() - 2.5 * kLog2Pi, 1e-15));
}

TEST_CASE("Laplace is exact for the normal model", "[laplace]") {
  const Dataset d = fixture::normal_one_way(6, 4, 0.3, 1.0, 0.8, 31, 1);
  auto m = build_model("normal_lmm", d);
  const auto g = fixture::gaussian_oracle(d);
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const double su = std::exp(u(rng)), se = std::exp(0.5 * u(rng));
    Eigen::VectorXd beta(2);
    beta << u(rng), u(rng);
    const ParamVec theta = fixture::natural(*m, {beta[0], beta[1], su, se});
    CHECK_THAT(la_marginal(*m, theta), WithinAbs(g.marginal(beta, su, se), 1e-8));
    CHECK_THAT(la_restricted(*m, theta), WithinAbs(g.restricted(su, se), 1e-8));
  }
}

TEST_CASE("two forms of the Laplace value agree", "[laplace]") {
  const Dataset d = fixture::toy_clusters(4, 5, 0.1, 1.2, 7);
  auto m = build_model("bernoulli_cluster_toy", d);
  const ParamVec theta = fixture::natural(*m, {0.1, 1.2});
  const ModeResult mode = latent_mode(*m, theta);
  const double predictive = mode.h_at_mode - gaussian_predictive_logpdf(mode.mode, mode);
  CHECK_THAT(la_marginal(*m, theta), WithinAbs(predictive, 1e-10));
}

TEST_CASE("Laplace is close to quadrature on the Bernoulli cluster", "[laplace]") {
  const Dataset d = fixture::toy_single();
  auto m = build_model("bernoulli_cluster_toy", d);
  for (double sigma : {0.5, 1.0, 2.0}) {
    const ParamVec theta = fixture::natural(*m, {0.3, sigma});
    const double exact = oracle::toy_marginal(d.y, d.X, d.column("group"), theta.beta, sigma);
    CHECK_THAT(la_marginal(*m, theta), WithinAbs(exact, 0.05));
  }
}

TEST_CASE("restricted Laplace on summer data peaks near the grid optimum", "[laplace]") {
  Dataset d = salamander_design({1});
  auto m0 = build_model("summer_glmm", d);
  const ParamVec truth = fixture::natural(*m0, {1.06, -3.05, -0.72, 3.77, 1.22, 1.22});
  Rng rng(77);
  d.y = m0->simulate(truth, rng).y;
  auto m = build_model("summer_glmm", d);
  const double at_truth = la_restricted(*m, truth);
  CHECK(std::isfinite(at_truth));
  double best = -1e300;
  ParamVec t = truth;
  for (double a = -1.5; a <= 1.5; a += 0.25)
    for (double b = -1.5; b <= 1.5; b += 0.25) {
      t.tau << a, b;
      best = std::max(best, la_restricted(*m, t));
    }
  CHECK(at_truth <= best);
}

TEST_CASE("duplicated design column is reported, not crashed on", "[laplace]") {
  Dataset d = fixture::normal_one_way(4, 3, 0.0, 1.0, 1.0, 2);
  d.X.conservativeResize(Eigen::NoChange, 2);
  d.X.col(1) = d.X.col(0);
  d.x_names.push_back("dup");
  auto m = build_model("normal_lmm", d);
  CHECK_THROWS_AS(la_restricted(*m, fixture::natural(*m, {0.0, 0.0, 1.0, 1.0})), NumericalError);
}

TEST_CASE("quadrature oracle integrates a Gaussian exactly", "[laplace][oracle]") {
  for (double s : {0.2, 1.0, 7.0}) {
    const double exact = 0.5 * kLog2Pi + std::log(s);
    CHECK_THAT(oracle::adaptive_gh_log_integral([s](double z) { return -0.5 * z * z / (s * s); }),
               WithinAbs(exact, 1e-10));
  }
}
