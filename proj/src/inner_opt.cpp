#include "ela/inner_opt.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "ela/errors.hpp"

namespace ela {

double ModeResult::half_log_det() const { return chol.diagonal().array().log().sum(); }

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kStepFloor = 1e-12;

double safe_value(const LatentDensity& f, const Eigen::VectorXd& x) {
  try {
    return f.value(x);
  } catch (const NumericalError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

// Cholesky of omega, escalating Levenberg damping when it is not PD.
Eigen::LLT<Eigen::MatrixXd> damped_factor(const Eigen::MatrixXd& omega) {
  Eigen::LLT<Eigen::MatrixXd> llt(omega);
  if (llt.info() == Eigen::Success) return llt;
  double lambda = 1e-8 * std::max(omega.diagonal().cwiseAbs().mean(), 1e-300);
  for (int k = 0; k < 10; ++k, lambda *= 10.0) {
    Eigen::MatrixXd damped = omega;
    damped.diagonal().array() += lambda;
    llt.compute(damped);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NumericalError("negative Hessian stays indefinite after 10 damping escalations");
}

} // namespace

ModeResult maximize_newton(const LatentDensity& density, Eigen::VectorXd x,
                           const NewtonOptions& options) {
  if (x.size() != density.dim()) throw std::invalid_argument("start has wrong dimension");
  ModeResult out;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  double h = density.value(x);
  if (!std::isfinite(h)) throw NumericalError("h-likelihood is not finite at the start");

  int it = 0;
  bool done = false;
  for (; it < options.max_iter; ++it) {
    density.derivatives(x, grad, hess);
    if (grad.cwiseAbs().maxCoeff() <= options.tol * (1.0 + std::abs(h))) {
      done = true;
      break;
    }
    const Eigen::MatrixXd omega = -hess;
    const Eigen::VectorXd step = damped_factor(omega).solve(grad);
    const double slope = grad.dot(step);
    // Near the mode the predicted gain drops below the rounding of h; the
    // full Newton step is then taken if h holds within that rounding.
    const double flat = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(h));
    double t = 1.0;
    bool accepted = false;
    while (t >= kStepFloor) {
      Eigen::VectorXd trial = x + t * step;
      const double ht = safe_value(density, trial);
      if (ht >= h + kArmijo * t * slope || (t == 1.0 && slope <= flat && ht >= h - flat)) {
        x = std::move(trial);
        h = ht;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No further ascent is representable; accept if nearly stationary.
      done = grad.cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + std::abs(h));
      break;
    }
  }
  if (!done) {
    std::ostringstream msg;
    msg << "latent mode search did not converge after " << it << " iterations";
    throw ConvergenceError(msg.str(), x);
  }

  // One polishing step pins the mode to rounding level, which keeps outer
  // finite differences clean.
  density.derivatives(x, grad, hess);
  Eigen::LLT<Eigen::MatrixXd> llt(-hess);
  if (llt.info() == Eigen::Success) {
    Eigen::VectorXd polished = x + llt.solve(grad);
    const double hp = safe_value(density, polished);
    if (hp >= h) {
      x = std::move(polished);
      h = hp;
      density.derivatives(x, grad, hess);
      llt.compute(-hess);
    }
  }
  if (llt.info() != Eigen::Success)
    throw NumericalError("curvature at the latent mode is not positive definite");

  out.mode = std::move(x);
  out.chol = llt.matrixL();
  out.h_at_mode = h;
  out.iterations = it;
  out.converged = true;
  return out;
}

ModeResult latent_mode(const Model& model, const ParamVec& theta,
                       const std::optional<Eigen::VectorXd>& z0, const NewtonOptions& options) {
  auto density = model.conditional(theta);
  Eigen::VectorXd start =
      z0 && z0->size() == model.latent_dim() ? *z0 : Eigen::VectorXd::Zero(model.latent_dim());
  return maximize_newton(*density, std::move(start), options);
}

ModeResult joint_mode(const Model& model, const ParamVec& theta,
                      const std::optional<Eigen::VectorXd>& psi0, const NewtonOptions& options) {
  const auto& X = model.data().X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(X.transpose() * X);
  const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || pivots.minCoeff() <= 1e-12 * pivots.maxCoeff())
    throw NumericalError("design matrix is rank deficient; remove collinear columns");

  const Eigen::Index p = model.p(), d = model.latent_dim();
  Eigen::VectorXd start(p + d);
  if (psi0 && psi0->size() == p + d) {
    start = *psi0;
  } else {
    start.head(p) = theta.beta;
    start.tail(d).setZero();
  }
  auto density = model.joint(theta);
  return maximize_newton(*density, std::move(start), options);
}

} // namespace ela
