#include "ela/model.hpp"

#include <cmath>
#include <limits>

#include "ela/data_io.hpp"
#include "ela/errors.hpp"
#include "ela/families.hpp"

namespace ela {

Eigen::VectorXd LatentDensity::values(const Eigen::MatrixXd& points) const {
  Eigen::VectorXd out(points.cols());
  for (Eigen::Index b = 0; b < points.cols(); ++b) out[b] = value(points.col(b));
  return out;
}

double h_loglik(const Model& model, const ParamVec& theta, const Eigen::VectorXd& z) {
  if (z.size() != model.latent_dim())
    throw std::invalid_argument("latent vector has length " + std::to_string(z.size()) +
                                ", model declares " + std::to_string(model.latent_dim()));
  return model.conditional(theta)->value(z);
}

Gradient dz(const Model& model, const ParamVec& theta, const Eigen::VectorXd& z) {
  Gradient out;
  model.conditional(theta)->derivatives(z, out.grad, out.hess);
  return out;
}

double fd_gradient_step(double x) {
  static const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  return base * std::max(1.0, std::abs(x));
}

double fd_hessian_step(double x) {
  static const double base = std::sqrt(std::sqrt(std::numeric_limits<double>::epsilon()));
  return base * std::max(1.0, std::abs(x));
}

namespace {

void check_step(double x, double h) {
  volatile double moved = x + h;
  if (moved - x == 0.0 || !std::isfinite(moved))
    throw NumericalError("finite-difference step underflows at parameter value " +
                         std::to_string(x) + "; rescale the parameter");
}

} // namespace

ThetaDerivatives dtheta_batch(const Model& model, const ParamVec& theta,
                              const Eigen::MatrixXd& points, const Eigen::VectorXd& weights,
                              ThetaBlock block, bool force_fd) {
  if (weights.size() != points.cols())
    throw std::invalid_argument("one weight per latent draw is required");
  if (block == ThetaBlock::all && model.has_analytic_dtheta() && !force_fd)
    return model.analytic_dtheta(theta, points, weights);

  const Eigen::VectorXd x0 = theta.packed();
  const Eigen::Index first = block == ThetaBlock::all ? 0 : model.p();
  const Eigen::Index P = x0.size() - first;
  auto eval = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const ParamVec t = ParamVec::unpack(theta.layout, x);
    auto density = block == ThetaBlock::all ? model.conditional(t) : model.joint(t);
    return density->values(points);
  };
  auto shifted = [&](Eigen::Index k, double hk, Eigen::Index l = -1, double hl = 0.0) {
    Eigen::VectorXd x = x0;
    x[first + k] += hk;
    if (l >= 0) x[first + l] += hl;
    return eval(x);
  };

  ThetaDerivatives out;
  out.gradients.resize(P, points.cols());
  for (Eigen::Index k = 0; k < P; ++k) {
    const double h = fd_gradient_step(x0[first + k]);
    check_step(x0[first + k], h);
    out.gradients.row(k) = ((shifted(k, h) - shifted(k, -h)) / (2.0 * h)).transpose();
  }

  out.weighted_hessian.resize(P, P);
  const Eigen::VectorXd f0 = eval(x0);
  Eigen::VectorXd steps(P);
  for (Eigen::Index k = 0; k < P; ++k) {
    steps[k] = fd_hessian_step(x0[first + k]);
    check_step(x0[first + k], steps[k]);
  }
  for (Eigen::Index k = 0; k < P; ++k) {
    const double h = steps[k];
    const Eigen::VectorXd diag = (shifted(k, h) - 2.0 * f0 + shifted(k, -h)) / (h * h);
    out.weighted_hessian(k, k) = weights.dot(diag);
    for (Eigen::Index l = 0; l < k; ++l) {
      const double g = steps[l];
      const Eigen::VectorXd mixed =
          (shifted(k, h, l, g) - shifted(k, h, l, -g) - shifted(k, -h, l, g) +
           shifted(k, -h, l, -g)) /
          (4.0 * h * g);
      out.weighted_hessian(k, l) = weights.dot(mixed);
      out.weighted_hessian(l, k) = out.weighted_hessian(k, l);
    }
  }
  return out;
}

Gradient dtheta(const Model& model, const ParamVec& theta, const Eigen::VectorXd& z,
                bool force_fd) {
  const ThetaDerivatives d =
      dtheta_batch(model, theta, z, Eigen::VectorXd::Ones(1), ThetaBlock::all, force_fd);
  Gradient out;
  out.grad = d.gradients.col(0);
  out.hess = 0.5 * (d.weighted_hessian + d.weighted_hessian.transpose());
  return out;
}

std::vector<std::string> model_families() {
  return {"normal_lmm",      "summer_glmm", "pooled_glmm",          "pooled_shared_glmm",
          "spatial_poisson", "spatial_odp", "bernoulli_cluster_toy"};
}

ModelPtr build_model(std::string_view family, Dataset dataset, const ModelOptions& options) {
  auto expect = [&](const char* schema) {
    if (dataset.schema != schema)
      throw ModelError(std::string(family) + " expects a '" + schema + "' dataset, got '" +
                       dataset.schema + "'");
  };
  if (family == "normal_lmm" || family == "bernoulli_cluster_toy") {
    expect("grouped");
    dataset.validate();
    if (family == "normal_lmm") return std::make_shared<NormalLmm>(std::move(dataset));
    return std::make_shared<BernoulliClusterToy>(std::move(dataset));
  }
  if (family == "summer_glmm" || family == "pooled_glmm" || family == "pooled_shared_glmm") {
    expect("salamander");
    apply_salamander_design(dataset, family);
    dataset.validate();
    if (family == "summer_glmm") {
      for (int k : dataset.column("experiment"))
        if (k != dataset.column("experiment").front())
          throw ModelError("summer_glmm expects a single-experiment slice");
      return std::make_shared<SummerGlmm>(std::move(dataset));
    }
    return std::make_shared<PooledGlmm>(std::move(dataset), family == "pooled_shared_glmm");
  }
  if (family == "spatial_poisson" || family == "spatial_odp") {
    expect("rongelap");
    if (dataset.distances.rows() != dataset.rows()) dataset.compute_distances();
    dataset.validate();
    return std::make_shared<SpatialModel>(std::move(dataset), family == "spatial_odp", options);
  }
  std::string list;
  for (const auto& f : model_families()) list += (list.empty() ? "" : ", ") + f;
  throw ModelError("unknown model family '" + std::string(family) + "' (known: " + list + ")");
}

} // namespace ela
