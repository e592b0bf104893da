#include "ela/params.hpp"

#include <cmath>
#include <stdexcept>

namespace ela {

std::string_view to_string(Transform t) {
  switch (t) {
  case Transform::identity: return "identity";
  case Transform::log: return "log";
  case Transform::fisher_z: return "fisher_z";
  }
  return "identity";
}

Transform transform_from_string(std::string_view s) {
  if (s == "identity") return Transform::identity;
  if (s == "log") return Transform::log;
  if (s == "fisher_z") return Transform::fisher_z;
  throw std::invalid_argument("unknown transform '" + std::string(s) + "'");
}

double to_natural(Transform t, double x) {
  switch (t) {
  case Transform::identity: return x;
  case Transform::log: return std::exp(x);
  case Transform::fisher_z: return std::tanh(x);
  }
  return x;
}

double to_unconstrained(Transform t, double value) {
  switch (t) {
  case Transform::identity: return value;
  case Transform::log:
    if (!(value > 0.0))
      throw std::domain_error("log-transformed parameter must be positive");
    return std::log(value);
  case Transform::fisher_z:
    if (!(value > -1.0 && value < 1.0))
      throw std::domain_error("correlation parameter must lie in (-1, 1)");
    return std::atanh(value);
  }
  return value;
}

double natural_derivative(Transform t, double x) {
  switch (t) {
  case Transform::identity: return 1.0;
  case Transform::log: return std::exp(x);
  case Transform::fisher_z: {
    const double c = std::cosh(x);
    return 1.0 / (c * c);
  }
  }
  return 1.0;
}

ParamLayout::ParamLayout(std::vector<ParamSpec> beta, std::vector<ParamSpec> tau)
    : beta_(std::move(beta)), tau_(std::move(tau)) {}

const ParamSpec& ParamLayout::operator[](Eigen::Index k) const {
  if (k < p()) return beta_[static_cast<std::size_t>(k)];
  return tau_.at(static_cast<std::size_t>(k - p()));
}

std::vector<std::string> ParamLayout::names() const {
  std::vector<std::string> out;
  for (const auto& s : beta_) out.push_back(s.name);
  for (const auto& s : tau_) out.push_back(s.name);
  return out;
}

Eigen::Index ParamLayout::index_of(std::string_view name) const {
  for (Eigen::Index k = 0; k < size(); ++k)
    if ((*this)[k].name == name) return k;
  return -1;
}

ParamVec::ParamVec(LayoutPtr l, Eigen::VectorXd b, Eigen::VectorXd t)
    : beta(std::move(b)), tau(std::move(t)), layout(std::move(l)) {
  if (!layout) throw std::invalid_argument("ParamVec requires a layout");
  if (beta.size() != layout->p() || tau.size() != layout->q())
    throw std::invalid_argument("ParamVec dimensions do not match layout");
}

ParamVec ParamVec::from_natural(LayoutPtr layout, const Eigen::VectorXd& beta,
                                const Eigen::VectorXd& tau_natural) {
  if (tau_natural.size() != layout->q())
    throw std::invalid_argument("tau has wrong length for layout");
  Eigen::VectorXd tau(tau_natural.size());
  for (Eigen::Index k = 0; k < tau.size(); ++k)
    tau[k] = to_unconstrained(layout->tau()[static_cast<std::size_t>(k)].transform,
                              tau_natural[k]);
  Eigen::VectorXd b(layout->p());
  for (Eigen::Index k = 0; k < b.size(); ++k)
    b[k] = to_unconstrained(layout->beta()[static_cast<std::size_t>(k)].transform,
                            beta[k]);
  return ParamVec(std::move(layout), std::move(b), std::move(tau));
}

ParamVec ParamVec::unpack(LayoutPtr layout, const Eigen::VectorXd& packed) {
  if (packed.size() != layout->size())
    throw std::invalid_argument("packed parameter vector has wrong length");
  const Eigen::Index p = layout->p();
  return ParamVec(layout, packed.head(p), packed.tail(layout->q()));
}

Eigen::VectorXd ParamVec::packed() const {
  Eigen::VectorXd out(size());
  out << beta, tau;
  return out;
}

Eigen::VectorXd ParamVec::natural() const {
  Eigen::VectorXd out = packed();
  for (Eigen::Index k = 0; k < out.size(); ++k)
    out[k] = to_natural((*layout)[k].transform, out[k]);
  return out;
}

Eigen::VectorXd ParamVec::tau_natural() const { return natural().tail(tau.size()); }

Eigen::VectorXd ParamVec::natural_jacobian() const {
  Eigen::VectorXd x = packed();
  Eigen::VectorXd out(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k)
    out[k] = natural_derivative((*layout)[k].transform, x[k]);
  return out;
}

} // namespace ela
