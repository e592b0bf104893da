#pragma once

// Reference computations that share no code with the library: closed-form
// Gaussian results, adaptive Gauss-Hermite quadrature and plain finite
// differences.

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Nodes and weights of the n-point Gauss-Hermite rule (weight exp(-x^2)),
/// by Golub-Welsch. Weights are returned as logs.
void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& log_weights);

/// log of the integral of exp(g(z)) dz over the real line by adaptive
/// Gauss-Hermite: centred at the maximizer of g, scaled by its curvature.
double adaptive_gh_log_integral(const std::function<double(double)>& g, int nodes = 200);

/// Bernoulli-logit cluster model: logit P(y_i = 1) = x_i' beta + sigma z_g(i),
/// z_g ~ N(0, 1) independent. Exact marginal log-likelihood by quadrature.
double toy_marginal(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                    const std::vector<int>& group, const Eigen::VectorXd& beta, double sigma,
                    int nodes = 200);

/// Normal one-way random-intercept model y = X beta + sigma_u Z u + e.
struct Gaussian {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<int> group;
  int groups = 0;

  Eigen::MatrixXd Z() const;
  Eigen::MatrixXd V(double su, double se) const;
  /// log N(y; X beta, V).
  double marginal(const Eigen::VectorXd& beta, double su, double se) const;
  /// Patterson-Thompson restricted log-likelihood.
  double restricted(double su, double se) const;
  /// Conditional mode of the standardized effects given beta.
  Eigen::VectorXd blup(const Eigen::VectorXd& beta, double su, double se) const;
  /// Henderson mixed-model equations for (beta, z) with a flat beta prior.
  Eigen::VectorXd henderson(double su, double se) const;
};

/// Balanced one-way layout (intercept only): closed-form ML and REML
/// variance components and the ML intercept.
struct OneWayEstimates {
  double mu, su2, se2;
};
OneWayEstimates one_way_ml(const Eigen::VectorXd& y, int groups, int size);
OneWayEstimates one_way_reml(const Eigen::VectorXd& y, int groups, int size);

/// Central differences with a fixed absolute step.
Eigen::VectorXd gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                         const Eigen::VectorXd& x, double h = 1e-5);
Eigen::MatrixXd hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                        const Eigen::VectorXd& x, double h = 1e-4);

} // namespace oracle
