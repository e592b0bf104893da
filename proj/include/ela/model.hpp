#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ela/dataset.hpp"
#include "ela/params.hpp"

namespace ela {

using Rng = std::mt19937_64;

/// Log of an unnormalized density over a latent block with all other
/// quantities held fixed: z -> h(theta, z) or (beta, z) -> h(beta, tau, z).
class LatentDensity {
public:
  virtual ~LatentDensity() = default;

  virtual Eigen::Index dim() const = 0;
  virtual double value(const Eigen::VectorXd& v) const = 0;
  virtual void derivatives(const Eigen::VectorXd& v, Eigen::VectorXd& grad,
                           Eigen::MatrixXd& hess) const = 0;
  /// One value per column of `points`.
  virtual Eigen::VectorXd values(const Eigen::MatrixXd& points) const;
};

/// Per-draw derivatives of h in theta at fixed latent draws. `gradients` is
/// (p+q) x B; `weighted_hessian` is sum_b w_b d2h/dtheta2 at draw b.
struct ThetaDerivatives {
  Eigen::MatrixXd gradients;
  Eigen::MatrixXd weighted_hessian;
};

/// A latent Gaussian model: h-likelihood h(theta, z) = log f(y|z) + log phi_d(z)
/// with z ~ N(0, I_d), plus a response simulator.
class Model {
public:
  virtual ~Model() = default;

  virtual std::string_view family() const = 0;
  virtual const LayoutPtr& layout() const = 0;
  virtual Eigen::Index latent_dim() const = 0;
  virtual const Dataset& data() const = 0;

  /// z -> h(theta, z).
  virtual std::unique_ptr<LatentDensity> conditional(const ParamVec& theta) const = 0;
  /// (beta, z) -> h(beta, tau, z); theta.beta is ignored.
  virtual std::unique_ptr<LatentDensity> joint(const ParamVec& theta) const = 0;

  /// Draws z ~ N(0, I) and a response vector; the returned dataset shares
  /// the design of data().
  virtual Dataset simulate(const ParamVec& theta, Rng& rng) const = 0;

  virtual ParamVec default_start() const = 0;

  virtual bool has_analytic_dtheta() const { return false; }
  /// Derivatives in theta (packed, unconstrained) for every column of `z`.
  virtual ThetaDerivatives analytic_dtheta(const ParamVec& theta, const Eigen::MatrixXd& z,
                                           const Eigen::VectorXd& weights) const;

  Eigen::Index p() const { return layout()->p(); }
  Eigen::Index q() const { return layout()->q(); }
};

using ModelPtr = std::shared_ptr<const Model>;

struct Gradient {
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

double h_loglik(const Model& model, const ParamVec& theta, const Eigen::VectorXd& z);
Gradient dz(const Model& model, const ParamVec& theta, const Eigen::VectorXd& z);

/// Which coordinates of the packed theta to differentiate.
enum class ThetaBlock { all, tau_only };

/// Derivatives of h in theta at a fixed z. Uses the model's analytic oracle
/// when registered (unless `force_fd`), central differences otherwise.
Gradient dtheta(const Model& model, const ParamVec& theta, const Eigen::VectorXd& z,
                bool force_fd = false);

/// Batched version over the columns of `points`. With block == tau_only the
/// columns are joint draws (beta, z) and only tau is differentiated.
ThetaDerivatives dtheta_batch(const Model& model, const ParamVec& theta,
                              const Eigen::MatrixXd& points, const Eigen::VectorXd& weights,
                              ThetaBlock block = ThetaBlock::all, bool force_fd = false);

/// Finite-difference steps used for theta derivatives.
double fd_gradient_step(double x);
double fd_hessian_step(double x);

struct ModelOptions {
  /// Retry a failed covariance factorization with diagonal jitter.
  bool jitter_retry = true;
};

std::vector<std::string> model_families();
ModelPtr build_model(std::string_view family, Dataset dataset, const ModelOptions& options = {});

} // namespace ela
