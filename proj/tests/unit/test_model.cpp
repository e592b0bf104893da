#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <numbers>

#include "ela/errors.hpp"
#include "ela/families.hpp"
#include "ela/laplace.hpp"
#include "fixtures.hpp"

using namespace ela;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<ModelPtr> all_models() {
  std::vector<ModelPtr> out;
  out.push_back(build_model("normal_lmm", fixture::normal_one_way(4, 3, 0.2, 0.8, 0.6, 5, 1)));
  out.push_back(build_model("bernoulli_cluster_toy", fixture::toy_clusters(4, 5, 0.3, 1.0, 2)));
  Rng rng(11);
  Dataset summer = salamander_design({1});
  auto m = build_model("summer_glmm", summer);
  summer.y = m->simulate(fixture::natural(*m, {1.06, -3.05, -0.72, 3.77, 1.22, 1.22}), rng).y;
  out.push_back(build_model("summer_glmm", summer));
  Dataset pooled = salamander_design({1, 2, 3});
  out.push_back(build_model("pooled_glmm", pooled));
  out.push_back(build_model("pooled_shared_glmm", pooled));
  Dataset sp = spatial_design(12, 1.0, 4);
  for (Eigen::Index i = 0; i < sp.rows(); ++i) sp.y[i] = static_cast<double>(i % 5);
  sp.time.setConstant(2.0);
  out.push_back(build_model("spatial_poisson", sp));
  out.push_back(build_model("spatial_odp", sp));
  return out;
}

ParamVec random_theta(const Model& m, Rng& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  ParamVec t = m.default_start();
  for (Eigen::Index k = 0; k < t.beta.size(); ++k) t.beta[k] += u(rng);
  for (Eigen::Index k = 0; k < t.tau.size(); ++k) t.tau[k] += u(rng);
  return t;
}

} // namespace

TEST_CASE("h of a one-observation normal model at zero", "[model]") {
  Dataset d = fixture::grouped(Eigen::VectorXd::Zero(1), 1, 1);
  auto m = build_model("normal_lmm", d);
  const ParamVec theta = fixture::natural(*m, {0.0, 1.0, 1.0});
  CHECK_THAT(h_loglik(*m, theta, Eigen::VectorXd::Zero(1)),
             WithinAbs(-std::log(2 * std::numbers::pi), 1e-14));
}

TEST_CASE("h of the Bernoulli cluster by direct evaluation", "[model]") {
  auto m = build_model("bernoulli_cluster_toy", fixture::toy_single());
  const ParamVec theta = fixture::natural(*m, {0.5, 1.0});
  // eta = 0.5 + 1.0 * 0.3 = 0.8 for every member.
  const double p = 1.0 / (1.0 + std::exp(-0.8));
  const double expected = 3 * std::log(p) + 2 * std::log(1 - p) - 0.5 * 0.09 -
                          0.5 * std::log(2 * std::numbers::pi);
  CHECK_THAT(h_loglik(*m, theta, Eigen::VectorXd::Constant(1, 0.3)), WithinAbs(expected, 1e-13));
}

TEST_CASE("overdispersed kernel uses log Gamma for non-integer rates", "[model]") {
  Dataset d = spatial_design(2, 1.0, 1);
  d.y << 5.0, 0.0;
  d.time << 2.0, 1.0;
  auto m = build_model("spatial_odp", d);
  // eta_1 = log 2 with z = 0; c_1 = 2.5.
  ParamVec theta = fixture::natural(*m, {std::log(2.0), -1.0, 0.0});
  const double h = h_loglik(*m, theta, Eigen::VectorXd::Zero(2));
  const double first = 2.5 * std::log(2.0) - 2.0 - std::lgamma(3.5);
  const double second = 0.0 * std::log(2.0) - 2.0 - std::lgamma(1.0);
  CHECK_THAT(h, WithinAbs(first + second - std::log(2 * std::numbers::pi), 1e-12));
}

TEST_CASE("dz matches finite differences for every family", "[model]") {
  Rng rng(7);
  std::normal_distribution<double> normal(0.0, 0.7);
  for (const auto& m : all_models()) {
    INFO(m->family());
    for (int probe = 0; probe < 100 / 7 + 1; ++probe) {
      const ParamVec theta = random_theta(*m, rng);
      Eigen::VectorXd z(m->latent_dim());
      for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
      const Gradient g = dz(*m, theta, z);
      const Eigen::VectorXd fd = oracle::gradient(
          [&](const Eigen::VectorXd& v) { return h_loglik(*m, theta, v); }, z, 1e-5);
      CHECK((g.grad - fd).cwiseAbs().maxCoeff() <= 1e-5 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
      CHECK((g.hess - g.hess.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("Bernoulli cluster curvature matches the hand formula", "[model]") {
  auto m = build_model("bernoulli_cluster_toy", fixture::toy_single());
  const ParamVec theta = fixture::natural(*m, {0.4, 1.7});
  const double z = -0.35;
  const Gradient g = dz(*m, theta, Eigen::VectorXd::Constant(1, z));
  const double mu = 1.0 / (1.0 + std::exp(-(0.4 + 1.7 * z)));
  CHECK_THAT(g.hess(0, 0), WithinAbs(-1.7 * 1.7 * 5 * mu * (1 - mu) - 1.0, 1e-12));
}

TEST_CASE("dz vanishes at the normal conditional mode", "[model]") {
  const Dataset d = fixture::normal_one_way(5, 4, 1.0, 0.7, 0.5, 3);
  auto m = build_model("normal_lmm", d);
  const ParamVec theta = fixture::natural(*m, {0.9, 0.7, 0.5});
  const Eigen::VectorXd z = fixture::gaussian_oracle(d).blup(theta.beta, 0.7, 0.5);
  CHECK(dz(*m, theta, z).grad.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("dtheta of the normal model matches the Gaussian score", "[model]") {
  const Dataset d = fixture::normal_one_way(4, 5, 0.5, 0.9, 0.4, 8, 2);
  auto m = build_model("normal_lmm", d);
  const ParamVec theta = fixture::natural(*m, {0.4, 0.2, -0.1, 0.9, 0.4});
  Eigen::VectorXd z(4);
  z << 0.3, -1.1, 0.5, 0.8;
  Eigen::VectorXd eta = d.X * theta.beta;
  for (Eigen::Index i = 0; i < d.rows(); ++i) eta[i] += 0.9 * z[d.column("group")[i]];
  const Eigen::VectorXd score = d.X.transpose() * (d.y - eta) / (0.4 * 0.4);
  const Gradient analytic = dtheta(*m, theta, z);
  const Gradient numeric = dtheta(*m, theta, z, true);
  CHECK((analytic.grad.head(3) - score).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((numeric.grad - analytic.grad).cwiseAbs().maxCoeff() <=
        1e-6 * (1.0 + analytic.grad.cwiseAbs().maxCoeff()));
  CHECK((numeric.hess - analytic.hess).cwiseAbs().maxCoeff() <=
        1e-4 * (1.0 + analytic.hess.cwiseAbs().maxCoeff()));
  CHECK(numeric.hess == numeric.hess.transpose());
}

TEST_CASE("dtheta of the Bernoulli cluster matches the hand formula", "[model]") {
  auto m = build_model("bernoulli_cluster_toy", fixture::toy_single());
  const ParamVec theta = fixture::natural(*m, {0.2, 1.3});
  const double z = 0.6;
  const Gradient g = dtheta(*m, theta, Eigen::VectorXd::Constant(1, z));
  const double mu = 1.0 / (1.0 + std::exp(-(0.2 + 1.3 * z)));
  const double resid = 3.0 - 5.0 * mu;
  CHECK_THAT(g.grad[1], WithinAbs(z * resid, 1e-12));
  const Gradient fd = dtheta(*m, theta, Eigen::VectorXd::Constant(1, z), true);
  CHECK((fd.grad - g.grad).cwiseAbs().maxCoeff() <= 1e-7);
  CHECK((fd.hess - g.hess).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("finite-difference theta derivatives refuse underflowing steps", "[model]") {
  auto m = build_model("bernoulli_cluster_toy", fixture::toy_single());
  ParamVec theta = fixture::natural(*m, {0.2, 1.0});
  theta.tau[0] = std::numeric_limits<double>::max();
  CHECK_THROWS_AS(dtheta(*m, theta, Eigen::VectorXd::Zero(1), true), NumericalError);
}

TEST_CASE("build_model declares the published dimensions", "[model]") {
  auto summer = build_model("summer_glmm", salamander_design({1}));
  CHECK(summer->latent_dim() == 40);
  CHECK(summer->p() == 4);
  CHECK(summer->q() == 2);
  CHECK(summer->data().rows() == 120);
  auto pooled = build_model("pooled_glmm", salamander_design({1, 2, 3}));
  CHECK(pooled->q() == 6);
  CHECK(pooled->p() == 5);
  auto shared = build_model("pooled_shared_glmm", salamander_design({1, 2, 3}));
  CHECK(shared->q() == 5);
  auto spatial = build_model("spatial_poisson", spatial_design(157, 1.0, 1));
  CHECK(spatial->latent_dim() == 157);
  CHECK(spatial->q() == 2);
}

TEST_CASE("exponential covariance has exp(phi) on the diagonal", "[model]") {
  auto m = build_model("spatial_poisson", spatial_design(9, 1.0, 2));
  const auto& sp = dynamic_cast<const SpatialModel&>(*m);
  Eigen::VectorXd tau(2);
  tau << -0.7, 0.4;
  CHECK((sp.covariance(tau).diagonal().array() - std::exp(-0.7)).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("build_model rejects schema mismatches and unknown families", "[model]") {
  CHECK_THROWS_AS(build_model("summer_glmm", grouped_design(2, 2)), ModelError);
  CHECK_THROWS_AS(build_model("spatial_poisson", salamander_design({1})), ModelError);
  try {
    build_model("probit_lmm", grouped_design(2, 2));
    FAIL("expected an error");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("summer_glmm") != std::string::npos);
  }
}

TEST_CASE("non-finite h names the observation", "[model]") {
  Dataset d = spatial_design(3, 1.0, 1);
  d.y << 1.0, 2.0, 3.0;
  auto m = build_model("spatial_poisson", d);
  ParamVec theta = fixture::natural(*m, {800.0, -1.0, 0.0});
  try {
    h_loglik(*m, theta, Eigen::VectorXd::Zero(3));
    FAIL("expected an error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("observation 0") != std::string::npos);
  }
}

TEST_CASE("vanishing random effects give coin flips at beta = 0", "[model][simulate]") {
  auto m = build_model("summer_glmm", salamander_design({1}));
  ParamVec theta = fixture::natural(*m, {0.0, 0.0, 0.0, 0.0, 1.0, 1.0});
  theta.tau.setConstant(-800.0); // sigma = exp(-800) = 0
  Rng rng(99);
  double total = 0.0, count = 0.0;
  for (int r = 0; r < 1000; ++r) {
    const Dataset d = m->simulate(theta, rng);
    total += d.y.sum();
    count += static_cast<double>(d.rows());
  }
  CHECK(count >= 1e5);
  CHECK_THAT(total / count, WithinAbs(0.5, 0.005));
}

TEST_CASE("summer simulations at the published truth are plausible", "[model][simulate]") {
  auto m = build_model("summer_glmm", salamander_design({1}));
  const ParamVec theta = fixture::natural(*m, {1.06, -3.05, -0.72, 3.77, 1.22, 1.22});
  Rng rng(5);
  double mean = 0.0;
  for (int r = 0; r < 200; ++r) mean += m->simulate(theta, rng).y.mean() / 200.0;
  CHECK(mean > 0.3);
  CHECK(mean < 0.9);
}

TEST_CASE("vanishing spatial variance gives independent Poisson counts", "[model][simulate]") {
  Dataset d = spatial_design(16, 1.0, 3);
  auto m = build_model("spatial_poisson", d);
  const ParamVec theta = fixture::natural(*m, {1.2, -60.0, 0.0});
  Rng rng(8);
  double s = 0.0, s2 = 0.0, n = 0.0;
  for (int r = 0; r < 4000; ++r) {
    const Dataset sim = m->simulate(theta, rng);
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
      s += sim.y[i];
      s2 += sim.y[i] * sim.y[i];
      n += 1.0;
    }
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  CHECK_THAT(mean, WithinRel(std::exp(1.2), 0.01));
  CHECK_THAT(var, WithinRel(std::exp(1.2), 0.03));
}

TEST_CASE("simulation is reproducible from the seed", "[model][simulate]") {
  auto m = build_model("summer_glmm", salamander_design({1}));
  const ParamVec theta = fixture::natural(*m, {1.06, -3.05, -0.72, 3.77, 1.22, 1.22});
  Rng a(42), b(42);
  CHECK(m->simulate(theta, a).y == m->simulate(theta, b).y);
}

namespace {

// Same marginal model with the root rotated by a fixed orthogonal matrix.
class RotatedSpatial final : public SpatialModel {
public:
  RotatedSpatial(Dataset d, Eigen::MatrixXd q) : SpatialModel(std::move(d), false), q_(std::move(q)) {}
  Eigen::MatrixXd covariance_root(const Eigen::VectorXd& tau) const override {
    return SpatialModel::covariance_root(tau) * q_;
  }

private:
  Eigen::MatrixXd q_;
};

} // namespace

TEST_CASE("Laplace value does not depend on the choice of covariance root", "[model]") {
  Dataset d = spatial_design(10, 1.0, 6);
  for (Eigen::Index i = 0; i < d.rows(); ++i) d.y[i] = static_cast<double>((3 * i) % 7);
  Rng rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(10, 10);
  for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] = normal(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
  auto plain = build_model("spatial_poisson", d);
  RotatedSpatial rotated(d, q);
  const ParamVec theta = fixture::natural(*plain, {1.0, -0.5, 0.3});
  CHECK_THAT(la_marginal(rotated, theta), WithinAbs(la_marginal(*plain, theta), 1e-8));
}
