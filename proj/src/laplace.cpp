#include "ela/laplace.hpp"

#include <cmath>

namespace ela {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

double gaussian_predictive_logpdf(const Eigen::VectorXd& z, const ModeResult& mode) {
  if (z.size() != mode.dim()) throw std::invalid_argument("point has wrong dimension");
  const Eigen::VectorXd v = mode.chol.transpose() * (z - mode.mode);
  return mode.half_log_det() - 0.5 * static_cast<double>(mode.dim()) * kLog2Pi -
         0.5 * v.squaredNorm();
}

double laplace_value(const ModeResult& mode) {
  return mode.h_at_mode - mode.half_log_det() + 0.5 * static_cast<double>(mode.dim()) * kLog2Pi;
}

double la_marginal(const Model& model, const ParamVec& theta, WarmStart* warm) {
  ModeResult m = latent_mode(model, theta, warm ? warm->latent : std::nullopt);
  if (warm) warm->latent = m.mode;
  return laplace_value(m);
}

double la_restricted(const Model& model, const ParamVec& theta, WarmStart* warm) {
  ModeResult m = joint_mode(model, theta, warm ? warm->joint : std::nullopt);
  if (warm) warm->joint = m.mode;
  return laplace_value(m);
}

} // namespace ela
