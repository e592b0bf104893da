#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ela {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct OptimOptions {
  double tol = 1e-6; ///< sup-norm of the parameter change
  int max_iter = 500;
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string method; ///< "bfgs" or "nelder-mead"
  std::vector<double> trace; ///< objective after each iteration
};

/// Central-difference gradient, step eps^{1/3} max(1, |x_k|).
Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x);
/// Central-difference Hessian, step eps^{1/4} max(1, |x_k|); symmetric.
Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& x);

/// Maximizes f by BFGS with finite-difference gradients. Evaluation
/// failures (exceptions) count as -inf. Falls back to Nelder-Mead when the
/// line search stalls away from a stationary point.
OptimResult maximize(const Objective& f, const Eigen::VectorXd& x0, const OptimOptions& options = {});

OptimResult maximize_nelder_mead(const Objective& f, const Eigen::VectorXd& x0,
                                 const OptimOptions& options = {});

} // namespace ela
