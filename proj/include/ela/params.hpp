#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace ela {

/// Map between a coordinate's natural value and the unconstrained value the
/// optimizer sees.
enum class Transform {
  identity, ///< natural = x
  log,      ///< natural = exp(x), strictly positive
  fisher_z  ///< natural = tanh(x), in (-1, 1)
};

std::string_view to_string(Transform t);
Transform transform_from_string(std::string_view s);

double to_natural(Transform t, double x);
double to_unconstrained(Transform t, double value);
/// d natural / d x at unconstrained x.
double natural_derivative(Transform t, double x);

struct ParamSpec {
  std::string name;
  Transform transform = Transform::identity;
};

/// Names and transforms of the fixed effects (beta) and dispersion
/// parameters (tau). Packed order is beta first, then tau.
class ParamLayout {
public:
  ParamLayout(std::vector<ParamSpec> beta, std::vector<ParamSpec> tau);

  Eigen::Index p() const { return static_cast<Eigen::Index>(beta_.size()); }
  Eigen::Index q() const { return static_cast<Eigen::Index>(tau_.size()); }
  Eigen::Index size() const { return p() + q(); }

  const ParamSpec& operator[](Eigen::Index packed_index) const;
  const std::vector<ParamSpec>& beta() const { return beta_; }
  const std::vector<ParamSpec>& tau() const { return tau_; }

  std::vector<std::string> names() const;
  /// Packed index of a parameter, or -1.
  Eigen::Index index_of(std::string_view name) const;

private:
  std::vector<ParamSpec> beta_;
  std::vector<ParamSpec> tau_;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

/// theta = (beta, tau), both stored on the unconstrained scale.
struct ParamVec {
  Eigen::VectorXd beta;
  Eigen::VectorXd tau;
  LayoutPtr layout;

  ParamVec() = default;
  ParamVec(LayoutPtr layout, Eigen::VectorXd beta, Eigen::VectorXd tau);

  static ParamVec from_natural(LayoutPtr layout, const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& tau_natural);
  static ParamVec unpack(LayoutPtr layout, const Eigen::VectorXd& packed);

  Eigen::Index size() const { return beta.size() + tau.size(); }
  Eigen::VectorXd packed() const;
  Eigen::VectorXd natural() const;
  Eigen::VectorXd tau_natural() const;
  /// Diagonal of d natural / d packed.
  Eigen::VectorXd natural_jacobian() const;
};

} // namespace ela
