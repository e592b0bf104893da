#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ela/model.hpp"

namespace ela {

enum class Method { la, ela };
enum class Estimand { ml, reml };

std::string_view to_string(Method m);
std::string_view to_string(Estimand e);
Method method_from_string(std::string_view s);
Estimand estimand_from_string(std::string_view s);

struct FitOptions {
  Method method = Method::ela;
  Estimand estimand = Estimand::ml;
  Eigen::Index B_point = 50; ///< draws for ell_B (and beta under REML)
  Eigen::Index B_tau = 0;    ///< draws for r_B; 0 means B_point
  Eigen::Index B_se = 1000;  ///< fresh draws for I_B / J_B
  std::uint64_t seed = 1;
  double tol = 1e-6;
  int max_iter = 500;
  int max_cycles = 50; ///< REML block alternation
  bool compute_se = true;
  bool force_se = false; ///< report SEs even from an indefinite information
  bool zero_draws = false; ///< u = 0 in every draw (ELA with B = 1 is then the LA)
  /// Coordinates held at a natural-scale value during the fit.
  std::map<std::string, double> fixed;
};

struct FitResult {
  std::string family;
  Method method = Method::ela;
  Estimand estimand = Estimand::ml;
  std::vector<std::string> names;
  Eigen::VectorXd estimates;     ///< natural scale
  Eigen::VectorXd unconstrained; ///< packed optimizer coordinates
  Eigen::MatrixXd cov;           ///< natural scale; empty when withheld
  Eigen::VectorXd se;            ///< empty when withheld
  Eigen::Index B_point = 0;
  Eigen::Index B_tau = 0;
  Eigen::Index B_se = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::uint64_t> seeds; ///< per draw stream
  bool converged = false;
  double loglik = 0.0; ///< ell_B (or ell_LA) at the estimate
  double restricted_loglik = 0.0; ///< r_B at tau-hat under REML
  int iterations = 0;
  std::vector<double> trace;
  std::vector<std::string> warnings;
  Eigen::Index p = 0; ///< leading coordinates that are fixed effects
  int free_parameters = 0;

  /// theta at the estimate, rebuilt against a model's layout.
  ParamVec theta(const Model& model) const;
};

/// Seed of one named draw stream derived from the user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// theta-hat maximizing ell_B (ELA) or the Laplace ell (LA).
FitResult fit_ml(const Model& model, const ParamVec& theta0, const FitOptions& options = {});

/// tau-hat maximizing r_B and beta-hat maximizing ell_B(beta, tau-hat).
FitResult fit_reml(const Model& model, const ParamVec& theta0, const FitOptions& options = {});

/// Dispatches on options.estimand.
FitResult fit(const Model& model, const ParamVec& theta0, const FitOptions& options = {});

struct LrtResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

/// 2 (ell_full - ell_null) with the chi-square reference distribution.
/// A negative value throws for ML fits and is reported as 0 for REML fits.
LrtResult lrt(const FitResult& full, const FitResult& null);

/// Maps natural-scale estimates through `map` and the covariance through
/// its finite-difference Jacobian.
FitResult delta_transform(const FitResult& fit,
                          const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& map,
                          std::vector<std::string> names);

/// Appends xi = (-log 2 pi - alpha - phi) / 2 for the spatial models.
FitResult matern_transform(const FitResult& fit);

} // namespace ela
