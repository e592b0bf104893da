#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ela/model.hpp"

namespace ela {

/// Loading matrix A(tau) mapping z ~ N(0, I) into the linear predictor.
/// Crossed designs are sparse; spatial covariance roots are dense.
class Loading {
public:
  Loading() = default;
  explicit Loading(Eigen::MatrixXd dense) : a_(std::move(dense)) {}
  explicit Loading(Eigen::SparseMatrix<double> sparse) : a_(std::move(sparse)) {}

  Eigen::Index rows() const;
  Eigen::Index cols() const;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& z) const;
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& s) const;
  /// A^T diag(w) A
  Eigen::MatrixXd weighted_gram(const Eigen::VectorXd& w) const;
  /// X^T diag(w) A
  Eigen::MatrixXd weighted_cross(const Eigen::MatrixXd& X, const Eigen::VectorXd& w) const;
  Eigen::MatrixXd to_dense() const;

private:
  std::variant<Eigen::MatrixXd, Eigen::SparseMatrix<double>> a_;
};

enum class Response { bernoulli_logit, poisson_log, gaussian };

/// Models with linear predictor eta = X beta + A(tau) z and an exponential
/// family response. Subclasses supply A(tau), the layout and the simulator
/// details.
class LinearLatentModel : public Model {
public:
  LinearLatentModel(std::string family, Dataset data, LayoutPtr layout, Eigen::Index latent_dim,
                    Response response);

  std::string_view family() const override { return family_; }
  const LayoutPtr& layout() const override { return layout_; }
  Eigen::Index latent_dim() const override { return d_; }
  const Dataset& data() const override { return data_; }

  std::unique_ptr<LatentDensity> conditional(const ParamVec& theta) const override;
  std::unique_ptr<LatentDensity> joint(const ParamVec& theta) const override;
  Dataset simulate(const ParamVec& theta, Rng& rng) const override;
  ParamVec default_start() const override;

  virtual Loading loading(const Eigen::VectorXd& tau) const = 0;
  /// Residual variance for Gaussian responses; unused otherwise.
  virtual double residual_variance(const Eigen::VectorXd& tau) const;

  Response response() const { return response_kind_; }
  /// Response value entering the likelihood kernel (y, or y/t for the
  /// overdispersed spatial model) and the additive offset on eta.
  const Eigen::VectorXd& kernel_response() const { return response_; }
  const Eigen::VectorXd& offset() const { return offset_; }

protected:
  virtual Eigen::VectorXd default_tau_natural() const = 0;
  /// Converts a simulated kernel response back into the dataset's y scale.
  virtual double response_to_y(Eigen::Index i, double kernel_value) const;
  void set_latent_dim(Eigen::Index d) { d_ = d; }

  Eigen::VectorXd response_;
  Eigen::VectorXd offset_;

private:
  std::string family_;
  Dataset data_;
  LayoutPtr layout_;
  Eigen::Index d_;
  Response response_kind_;
};

/// y_ij = x_ij' beta + sigma_u z_i + e_ij, e_ij ~ N(0, sigma_e^2).
class NormalLmm final : public LinearLatentModel {
public:
  explicit NormalLmm(Dataset data);
  Loading loading(const Eigen::VectorXd& tau) const override;
  double residual_variance(const Eigen::VectorXd& tau) const override;
  bool has_analytic_dtheta() const override { return true; }
  ThetaDerivatives analytic_dtheta(const ParamVec& theta, const Eigen::MatrixXd& z,
                                   const Eigen::VectorXd& weights) const override;

protected:
  Eigen::VectorXd default_tau_natural() const override;
};

/// Bernoulli-logit clusters: logit P(y_ij = 1) = x_ij' beta + sigma z_i.
/// sigma is left unconstrained; the marginal model is symmetric in its sign.
class BernoulliClusterToy final : public LinearLatentModel {
public:
  explicit BernoulliClusterToy(Dataset data);
  Loading loading(const Eigen::VectorXd& tau) const override;
  bool has_analytic_dtheta() const override { return true; }
  ThetaDerivatives analytic_dtheta(const ParamVec& theta, const Eigen::MatrixXd& z,
                                   const Eigen::VectorXd& weights) const override;

protected:
  Eigen::VectorXd default_tau_natural() const override;
};

/// Crossed female/male logistic model for a single salamander experiment.
class SummerGlmm final : public LinearLatentModel {
public:
  explicit SummerGlmm(Dataset data);
  Loading loading(const Eigen::VectorXd& tau) const override;

protected:
  Eigen::VectorXd default_tau_natural() const override;
};

/// Pooled three-experiment model with correlated season effects per animal.
/// With `shared` the male summer and fall effects share one latent variable
/// (z_m2 = gamma_m z_m1), which is the rho_m = 1 submodel.
class PooledGlmm final : public LinearLatentModel {
public:
  PooledGlmm(Dataset data, bool shared);
  Loading loading(const Eigen::VectorXd& tau) const override;

  /// Lower 3x3 roots of the female and male season covariance at tau.
  Eigen::Matrix3d female_root(const Eigen::VectorXd& tau) const;
  Eigen::Matrix3d male_root(const Eigen::VectorXd& tau) const;

protected:
  Eigen::VectorXd default_tau_natural() const override;

private:
  bool shared_;
  // Latent column of (animal, component), -1 when the component is unused.
  std::vector<std::array<int, 3>> female_cols_;
  std::vector<std::array<int, 3>> male_cols_;
};

/// Poisson log-linear spatial model with exponential covariance
/// Sigma_ij = exp(phi - exp(alpha) * ||s_i - s_j||). With `overdispersed`
/// the kernel uses c_i = y_i / t_i without offset.
class SpatialModel : public LinearLatentModel {
public:
  SpatialModel(Dataset data, bool overdispersed, ModelOptions options = {});
  Loading loading(const Eigen::VectorXd& tau) const override;

  Eigen::MatrixXd covariance(const Eigen::VectorXd& tau) const;
  /// Any root R with R R^T = Sigma. The default is the lower Cholesky factor.
  virtual Eigen::MatrixXd covariance_root(const Eigen::VectorXd& tau) const;

protected:
  Eigen::VectorXd default_tau_natural() const override;
  double response_to_y(Eigen::Index i, double kernel_value) const override;

private:
  bool overdispersed_;
  ModelOptions options_;
};

/// Maximum likelihood fit ignoring random effects (IRLS); used for starts.
Eigen::VectorXd glm_fit(Response response, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& offset);

} // namespace ela
