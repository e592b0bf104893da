#pragma once

#include <Eigen/Dense>

#include "ela/inner_opt.hpp"
#include "ela/model.hpp"

namespace ela {

/// log N(z; mode, Omega^{-1}) using the stored factor of Omega.
double gaussian_predictive_logpdf(const Eigen::VectorXd& z, const ModeResult& mode);

/// h at the mode minus 0.5 log |Omega / 2 pi|.
double laplace_value(const ModeResult& mode);

/// First-order Laplace approximation to the marginal log-likelihood.
double la_marginal(const Model& model, const ParamVec& theta, WarmStart* warm = nullptr);

/// Extended restricted log-likelihood: Laplace over psi = (beta, z) with a
/// flat prior on beta. Depends on theta only through tau.
double la_restricted(const Model& model, const ParamVec& theta, WarmStart* warm = nullptr);

} // namespace ela
