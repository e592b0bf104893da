#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "ela/inner_opt.hpp"
#include "ela/model.hpp"

namespace ela {

/// Fixed standard-normal draws u (dim x count), reproducible from the seed.
/// Mapping them through the mode makes ELA objectives smooth in theta.
class CrnDraws {
public:
  CrnDraws(Eigen::Index dim, Eigen::Index count, std::uint64_t seed);
  /// count copies of u = 0; with count 1 the ELA reduces to the LA.
  static CrnDraws zeros(Eigen::Index dim, Eigen::Index count = 1);

  Eigen::Index dim() const { return u_.rows(); }
  Eigen::Index count() const { return u_.cols(); }
  std::uint64_t seed() const { return seed_; }
  const Eigen::MatrixXd& u() const { return u_; }

private:
  CrnDraws(Eigen::MatrixXd u, std::uint64_t seed) : u_(std::move(u)), seed_(seed) {}
  Eigen::MatrixXd u_;
  std::uint64_t seed_;
};

/// Z_b = mode + L^{-T} u_b, one column per draw.
Eigen::MatrixXd sample_predictive(const ModeResult& mode, const Eigen::MatrixXd& u);
Eigen::MatrixXd sample_predictive(const ModeResult& mode, const CrnDraws& crn);

struct ElaEstimate {
  double loglik = 0.0;
  Eigen::VectorXd weights; ///< softmax of the log-ratios
  double ess = 0.0;
  double mc_se = 0.0;
  Eigen::Index B = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd log_ratios;
  double elbo = 0.0; ///< mean log-ratio
};

/// Log-mean-exp of the log-ratios plus weights, ESS and the delta-method SE.
ElaEstimate importance_estimate(const Eigen::VectorXd& log_ratios);

/// Enhanced Laplace estimate of the marginal log-likelihood.
ElaEstimate ela_marginal(const Model& model, const ParamVec& theta, const CrnDraws& crn,
                         WarmStart* warm = nullptr);

/// Enhanced Laplace estimate of the restricted log-likelihood; crn.dim()
/// must be p + d.
ElaEstimate ela_restricted(const Model& model, const ParamVec& theta, const CrnDraws& crn,
                           WarmStart* warm = nullptr);

struct Information {
  Eigen::MatrixXd matrix; ///< symmetric
  Eigen::VectorXd score;  ///< sum_b w_b dh/dtheta
  ElaEstimate estimate;
};

/// I_B(theta) over the packed unconstrained theta.
Information ela_information(const Model& model, const ParamVec& theta, const CrnDraws& crn,
                            bool force_fd = false);

/// J_B(tau), q x q, from joint draws psi_b.
Information ela_reml_information(const Model& model, const ParamVec& theta, const CrnDraws& crn);

/// Mean log-ratio; a lower bound on the ELA estimate for the same draws.
double elbo_estimate(const Model& model, const ParamVec& theta, const CrnDraws& crn);

/// Draws are processed in chunks of this many columns; chunk results are
/// merged in index order.
inline constexpr Eigen::Index kDrawChunk = 2048;

} // namespace ela
