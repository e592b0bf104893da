#pragma once

#include <optional>

#include <Eigen/Dense>

#include "ela/model.hpp"

namespace ela {

/// Maximizer of h over the latent block (z, or psi = (beta, z)) and the
/// Cholesky factor L of the negative Hessian there.
struct ModeResult {
  Eigen::VectorXd mode;
  Eigen::MatrixXd chol; ///< lower triangular, L L^T = Omega
  double h_at_mode = 0.0;
  int iterations = 0;
  bool converged = false;

  Eigen::Index dim() const { return mode.size(); }
  /// sum_i log L_ii = 0.5 log |Omega|.
  double half_log_det() const;
};

struct NewtonOptions {
  double tol = 1e-9; ///< gradient sup-norm, relative to 1 + |h|
  int max_iter = 200;
};

/// Damped Newton ascent with Armijo backtracking.
ModeResult maximize_newton(const LatentDensity& density, Eigen::VectorXd start,
                           const NewtonOptions& options = {});

/// z~(theta). `z0` warm-starts the iteration; zero otherwise.
ModeResult latent_mode(const Model& model, const ParamVec& theta,
                       const std::optional<Eigen::VectorXd>& z0 = std::nullopt,
                       const NewtonOptions& options = {});

/// psi~(tau) = argmax over (beta, z) at fixed tau; theta.beta is only used
/// as the start when `psi0` is empty. Throws NumericalError when X is rank
/// deficient.
ModeResult joint_mode(const Model& model, const ParamVec& theta,
                      const std::optional<Eigen::VectorXd>& psi0 = std::nullopt,
                      const NewtonOptions& options = {});

/// Last latent and joint modes seen by one optimizer; used as warm starts.
/// Not shared between optimizers.
class WarmStart {
public:
  std::optional<Eigen::VectorXd> latent;
  std::optional<Eigen::VectorXd> joint;
};

} // namespace ela
