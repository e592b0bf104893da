#include "ela/families.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "ela/errors.hpp"

namespace ela {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// log(1 + exp(x)) without overflow.
inline double log1p_exp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Log-likelihood kernel of one observation without data-only constants.
inline double kernel(Response kind, double r, double eta, double sigma2) {
  switch (kind) {
  case Response::bernoulli_logit: return r * eta - log1p_exp(eta);
  case Response::poisson_log: return r * eta - std::exp(eta);
  case Response::gaussian: {
    const double e = r - eta;
    return -0.5 * e * e / sigma2;
  }
  }
  return 0.0;
}

// Score and negative second derivative of the kernel in eta.
inline void kernel_derivs(Response kind, double r, double eta, double sigma2, double& s,
                          double& w) {
  switch (kind) {
  case Response::bernoulli_logit: {
    const double mu = logistic(eta);
    s = r - mu;
    w = mu * (1.0 - mu);
    return;
  }
  case Response::poisson_log: {
    const double mu = std::exp(eta);
    s = r - mu;
    w = mu;
    return;
  }
  case Response::gaussian:
    s = (r - eta) / sigma2;
    w = 1.0 / sigma2;
    return;
  }
}

class LinearPredictorDensity final : public LatentDensity {
public:
  // With `beta` set the coordinates are z; otherwise they are (beta, z).
  LinearPredictorDensity(const LinearLatentModel& model, Loading a,
                         std::optional<Eigen::VectorXd> beta, double sigma2)
      : model_(model), a_(std::move(a)), fixed_beta_(beta.has_value()),
        p_(model.data().X.cols()), d_(model.latent_dim()), sigma2_(sigma2) {
    const auto& r = model.kernel_response();
    const Eigen::Index n = r.size();
    constant_ = 0.0;
    switch (model.response()) {
    case Response::bernoulli_logit: break;
    case Response::poisson_log:
      for (Eigen::Index i = 0; i < n; ++i) constant_ -= std::lgamma(r[i] + 1.0);
      break;
    case Response::gaussian:
      constant_ = -0.5 * static_cast<double>(n) * (kLog2Pi + std::log(sigma2_));
      break;
    }
    constant_ -= 0.5 * static_cast<double>(d_) * kLog2Pi;
    base_ = model.offset();
    if (fixed_beta_) base_ += model.data().X * *beta;
  }

  Eigen::Index dim() const override { return fixed_beta_ ? d_ : p_ + d_; }

  double value(const Eigen::VectorXd& v) const override {
    Eigen::MatrixXd m = v;
    return values(m)[0];
  }

  Eigen::VectorXd values(const Eigen::MatrixXd& points) const override {
    if (points.rows() != dim())
      throw std::invalid_argument("latent point has wrong dimension");
    const auto z = points.bottomRows(d_);
    Eigen::MatrixXd eta = a_.apply(z);
    if (!fixed_beta_) eta.noalias() += model_.data().X * points.topRows(p_);
    eta.colwise() += base_;

    const auto& r = model_.kernel_response();
    const Response kind = model_.response();
    Eigen::VectorXd out(points.cols());
    for (Eigen::Index b = 0; b < points.cols(); ++b) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < eta.rows(); ++i) total += kernel(kind, r[i], eta(i, b), sigma2_);
      total += constant_ - 0.5 * z.col(b).squaredNorm();
      if (!std::isfinite(total)) throw_non_finite(eta.col(b));
      out[b] = total;
    }
    return out;
  }

  void derivatives(const Eigen::VectorXd& v, Eigen::VectorXd& grad,
                   Eigen::MatrixXd& hess) const override {
    const auto z = v.tail(d_);
    Eigen::VectorXd eta = a_.apply(z);
    if (!fixed_beta_) eta.noalias() += model_.data().X * v.head(p_);
    eta += base_;

    const auto& r = model_.kernel_response();
    const Eigen::Index n = eta.size();
    Eigen::VectorXd s(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      kernel_derivs(model_.response(), r[i], eta[i], sigma2_, s[i], w[i]);
      if (!std::isfinite(s[i]) || !std::isfinite(w[i])) throw_non_finite(eta);
    }

    grad.resize(dim());
    hess.resize(dim(), dim());
    const Eigen::Index off = fixed_beta_ ? 0 : p_;
    grad.tail(d_) = a_.apply_transpose(s) - z;
    hess.bottomRightCorner(d_, d_) = -a_.weighted_gram(w);
    hess.bottomRightCorner(d_, d_).diagonal().array() -= 1.0;
    if (!fixed_beta_) {
      const auto& X = model_.data().X;
      grad.head(p_) = X.transpose() * s;
      hess.topLeftCorner(p_, p_) = -(X.transpose() * w.asDiagonal() * X);
      Eigen::MatrixXd cross = -a_.weighted_cross(X, w);
      hess.block(0, off, p_, d_) = cross;
      hess.block(off, 0, d_, p_) = cross.transpose();
    }
  }

private:
  [[noreturn]] void throw_non_finite(const Eigen::VectorXd& eta) const {
    const auto& r = model_.kernel_response();
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      if (!std::isfinite(kernel(model_.response(), r[i], eta[i], sigma2_)) ||
          !std::isfinite(eta[i])) {
        std::ostringstream msg;
        msg << "non-finite h-likelihood at observation " << i << " (y=" << r[i]
            << ", eta=" << eta[i] << ")";
        throw NumericalError(msg.str());
      }
    }
    throw NumericalError("non-finite h-likelihood (latent prior term)");
  }

  const LinearLatentModel& model_;
  Loading a_;
  bool fixed_beta_;
  Eigen::Index p_;
  Eigen::Index d_;
  double sigma2_;
  double constant_ = 0.0;
  Eigen::VectorXd base_;
};

Eigen::SparseMatrix<double> indicator_loading(const std::vector<int>& group, int levels,
                                              double scale) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(group.size());
  for (std::size_t i = 0; i < group.size(); ++i)
    t.emplace_back(static_cast<int>(i), group[i], scale);
  Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(group.size()), levels);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

std::vector<ParamSpec> beta_specs(const Dataset& data) {
  std::vector<ParamSpec> out;
  for (const auto& n : data.x_names) out.push_back({n, Transform::identity});
  return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Loading

Eigen::Index Loading::rows() const {
  return std::visit([](const auto& a) { return a.rows(); }, a_);
}

Eigen::Index Loading::cols() const {
  return std::visit([](const auto& a) { return a.cols(); }, a_);
}

Eigen::MatrixXd Loading::apply(const Eigen::MatrixXd& z) const {
  return std::visit([&](const auto& a) -> Eigen::MatrixXd { return a * z; }, a_);
}

Eigen::VectorXd Loading::apply_transpose(const Eigen::VectorXd& s) const {
  return std::visit([&](const auto& a) -> Eigen::VectorXd { return a.transpose() * s; }, a_);
}

Eigen::MatrixXd Loading::weighted_gram(const Eigen::VectorXd& w) const {
  if (const auto* dense = std::get_if<Eigen::MatrixXd>(&a_)) {
    Eigen::MatrixXd wa = w.asDiagonal() * *dense;
    return dense->transpose() * wa;
  }
  const auto& s = std::get<Eigen::SparseMatrix<double>>(a_);
  Eigen::SparseMatrix<double> ws = w.asDiagonal() * s;
  Eigen::SparseMatrix<double> g = s.transpose() * ws;
  return Eigen::MatrixXd(g);
}

Eigen::MatrixXd Loading::weighted_cross(const Eigen::MatrixXd& X, const Eigen::VectorXd& w) const {
  Eigen::MatrixXd wx = w.asDiagonal() * X;
  return std::visit([&](const auto& a) -> Eigen::MatrixXd { return (a.transpose() * wx).transpose(); },
                    a_);
}

Eigen::MatrixXd Loading::to_dense() const {
  return std::visit([](const auto& a) -> Eigen::MatrixXd { return Eigen::MatrixXd(a); }, a_);
}

// ---------------------------------------------------------------------------
// LinearLatentModel

LinearLatentModel::LinearLatentModel(std::string family, Dataset data, LayoutPtr layout,
                                     Eigen::Index latent_dim, Response response)
    : family_(std::move(family)), data_(std::move(data)), layout_(std::move(layout)),
      d_(latent_dim), response_kind_(response) {
  if (data_.X.cols() != layout_->p())
    throw ModelError("design matrix has " + std::to_string(data_.X.cols()) +
                     " columns but the layout declares " + std::to_string(layout_->p()));
  response_ = data_.y;
  offset_ = Eigen::VectorXd::Zero(data_.rows());
}

std::unique_ptr<LatentDensity> LinearLatentModel::conditional(const ParamVec& theta) const {
  return std::make_unique<LinearPredictorDensity>(*this, loading(theta.tau), theta.beta,
                                                  residual_variance(theta.tau));
}

std::unique_ptr<LatentDensity> LinearLatentModel::joint(const ParamVec& theta) const {
  return std::make_unique<LinearPredictorDensity>(*this, loading(theta.tau), std::nullopt,
                                                  residual_variance(theta.tau));
}

double LinearLatentModel::residual_variance(const Eigen::VectorXd&) const { return 1.0; }

double LinearLatentModel::response_to_y(Eigen::Index, double kernel_value) const {
  return kernel_value;
}

Dataset LinearLatentModel::simulate(const ParamVec& theta, Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(d_);
  for (Eigen::Index k = 0; k < d_; ++k) z[k] = normal(rng);
  const Eigen::VectorXd eta = data_.X * theta.beta + offset_ + loading(theta.tau).apply(z);

  Dataset out = data_;
  const double sd = std::sqrt(residual_variance(theta.tau));
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    double r = 0.0;
    switch (response_kind_) {
    case Response::bernoulli_logit:
      r = std::bernoulli_distribution(logistic(eta[i]))(rng) ? 1.0 : 0.0;
      break;
    case Response::poisson_log:
      r = static_cast<double>(std::poisson_distribution<long>(std::exp(eta[i]))(rng));
      break;
    case Response::gaussian: r = eta[i] + sd * normal(rng); break;
    }
    out.y[i] = response_to_y(i, r);
  }
  return out;
}

ParamVec LinearLatentModel::default_start() const {
  Eigen::VectorXd beta = glm_fit(response_kind_, data_.X, response_, offset_);
  return ParamVec::from_natural(layout_, beta, default_tau_natural());
}

ThetaDerivatives Model::analytic_dtheta(const ParamVec&, const Eigen::MatrixXd&,
                                        const Eigen::VectorXd&) const {
  throw ModelError(std::string(family()) + " has no analytic theta derivatives");
}

// ---------------------------------------------------------------------------
// normal_lmm

NormalLmm::NormalLmm(Dataset data)
    : LinearLatentModel("normal_lmm", data,
                        std::make_shared<ParamLayout>(
                            beta_specs(data),
                            std::vector<ParamSpec>{{"sigma_u", Transform::log},
                                                   {"sigma_e", Transform::log}}),
                        data.levels("group"), Response::gaussian) {}

Loading NormalLmm::loading(const Eigen::VectorXd& tau) const {
  return Loading(indicator_loading(data().column("group"), static_cast<int>(latent_dim()),
                                   std::exp(tau[0])));
}

double NormalLmm::residual_variance(const Eigen::VectorXd& tau) const {
  return std::exp(2.0 * tau[1]);
}

Eigen::VectorXd NormalLmm::default_tau_natural() const {
  const Eigen::VectorXd beta = glm_fit(Response::gaussian, data().X, data().y, offset_);
  const Eigen::VectorXd res = data().y - data().X * beta;
  const double dof = std::max<double>(1.0, static_cast<double>(res.size() - beta.size()));
  Eigen::VectorXd t(2);
  t << 0.5, std::max(1e-3, std::sqrt(res.squaredNorm() / dof));
  return t;
}

ThetaDerivatives NormalLmm::analytic_dtheta(const ParamVec& theta, const Eigen::MatrixXd& z,
                                            const Eigen::VectorXd& weights) const {
  const auto& X = data().X;
  const auto& g = data().column("group");
  const Eigen::Index p = X.cols(), P = p + 2, n = X.rows();
  const double su = std::exp(theta.tau[0]);
  const double s2 = std::exp(2.0 * theta.tau[1]);
  const Eigen::VectorXd xb = X * theta.beta;

  ThetaDerivatives out;
  out.gradients.resize(P, z.cols());
  out.weighted_hessian = Eigen::MatrixXd::Zero(P, P);
  const Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::VectorXd zg(n), r(n);
  for (Eigen::Index b = 0; b < z.cols(); ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      zg[i] = z(g[static_cast<std::size_t>(i)], b);
      r[i] = data().y[i] - xb[i] - su * zg[i];
    }
    const double rz = r.dot(zg), rr = r.squaredNorm(), zz = zg.squaredNorm();
    const Eigen::VectorXd xr = X.transpose() * r;
    out.gradients.col(b).head(p) = xr / s2;
    out.gradients(p, b) = su * rz / s2;
    out.gradients(p + 1, b) = -static_cast<double>(n) + rr / s2;

    Eigen::MatrixXd h(P, P);
    h.topLeftCorner(p, p) = -xtx / s2;
    h.block(0, p, p, 1) = -su * (X.transpose() * zg) / s2;
    h.block(0, p + 1, p, 1) = -2.0 * xr / s2;
    h(p, p) = su * rz / s2 - su * su * zz / s2;
    h(p, p + 1) = -2.0 * su * rz / s2;
    h(p + 1, p + 1) = -2.0 * rr / s2;
    h.bottomLeftCorner(2, p + 2) = h.topRightCorner(p + 2, 2).transpose();
    out.weighted_hessian += weights[b] * h;
  }
  return out;
}

// ---------------------------------------------------------------------------
// bernoulli_cluster_toy

BernoulliClusterToy::BernoulliClusterToy(Dataset data)
    : LinearLatentModel("bernoulli_cluster_toy", data,
                        std::make_shared<ParamLayout>(
                            beta_specs(data),
                            std::vector<ParamSpec>{{"sigma", Transform::identity}}),
                        data.levels("group"), Response::bernoulli_logit) {
  for (Eigen::Index i = 0; i < this->data().rows(); ++i) {
    const double y = this->data().y[i];
    if (y != 0.0 && y != 1.0)
      throw DataError("bernoulli_cluster_toy: row " + std::to_string(i) + " has y=" +
                       std::to_string(y) + ", expected 0 or 1");
  }
}

Loading BernoulliClusterToy::loading(const Eigen::VectorXd& tau) const {
  return Loading(
      indicator_loading(data().column("group"), static_cast<int>(latent_dim()), tau[0]));
}

Eigen::VectorXd BernoulliClusterToy::default_tau_natural() const {
  return Eigen::VectorXd::Constant(1, 0.5);
}

ThetaDerivatives BernoulliClusterToy::analytic_dtheta(const ParamVec& theta,
                                                      const Eigen::MatrixXd& z,
                                                      const Eigen::VectorXd& weights) const {
  const auto& X = data().X;
  const auto& g = data().column("group");
  const Eigen::Index p = X.cols(), P = p + 1, n = X.rows();
  const double sigma = theta.tau[0];
  const Eigen::VectorXd xb = X * theta.beta;

  ThetaDerivatives out;
  out.gradients.resize(P, z.cols());
  out.weighted_hessian = Eigen::MatrixXd::Zero(P, P);
  Eigen::VectorXd s(n), w(n), zg(n);
  for (Eigen::Index b = 0; b < z.cols(); ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      zg[i] = z(g[static_cast<std::size_t>(i)], b);
      const double mu = logistic(xb[i] + sigma * zg[i]);
      s[i] = data().y[i] - mu;
      w[i] = mu * (1.0 - mu);
    }
    out.gradients.col(b).head(p) = X.transpose() * s;
    out.gradients(p, b) = zg.dot(s);
    if (weights[b] == 0.0) continue;
    Eigen::MatrixXd h(P, P);
    h.topLeftCorner(p, p) = -(X.transpose() * w.asDiagonal() * X);
    h.block(0, p, p, 1) = -(X.transpose() * w.cwiseProduct(zg));
    h.block(p, 0, 1, p) = h.block(0, p, p, 1).transpose();
    h(p, p) = -w.dot(zg.cwiseProduct(zg));
    out.weighted_hessian += weights[b] * h;
  }
  return out;
}

// ---------------------------------------------------------------------------
// summer_glmm

SummerGlmm::SummerGlmm(Dataset data)
    : LinearLatentModel("summer_glmm", data,
                        std::make_shared<ParamLayout>(
                            beta_specs(data),
                            std::vector<ParamSpec>{{"sigma_f", Transform::log},
                                                   {"sigma_m", Transform::log}}),
                        data.levels("female") + data.levels("male"),
                        Response::bernoulli_logit) {}

Loading SummerGlmm::loading(const Eigen::VectorXd& tau) const {
  const auto& f = data().column("female");
  const auto& m = data().column("male");
  const int nf = data().levels("female");
  const double sf = std::exp(tau[0]), sm = std::exp(tau[1]);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    t.emplace_back(static_cast<int>(i), f[i], sf);
    t.emplace_back(static_cast<int>(i), nf + m[i], sm);
  }
  Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(f.size()), latent_dim());
  a.setFromTriplets(t.begin(), t.end());
  return Loading(std::move(a));
}

Eigen::VectorXd SummerGlmm::default_tau_natural() const {
  return Eigen::VectorXd::Constant(2, 0.5);
}

// ---------------------------------------------------------------------------
// pooled_glmm / pooled_shared_glmm

namespace {

std::shared_ptr<ParamLayout> pooled_layout(const Dataset& data, bool shared) {
  std::vector<ParamSpec> tau{{"sigma_f1", Transform::log},
                             {"sigma_f2", Transform::log},
                             {"rho_f", Transform::fisher_z}};
  if (shared) {
    tau.push_back({"sigma_m", Transform::log});
    tau.push_back({"gamma_m", Transform::identity});
  } else {
    tau.push_back({"sigma_m1", Transform::log});
    tau.push_back({"sigma_m2", Transform::log});
    tau.push_back({"rho_m", Transform::fisher_z});
  }
  return std::make_shared<ParamLayout>(beta_specs(data), std::move(tau));
}

Eigen::Matrix3d correlated_root(double log_s1, double log_s2, double z_rho) {
  const double s1 = std::exp(log_s1), s2 = std::exp(log_s2);
  const double c = std::cosh(z_rho);
  Eigen::Matrix3d l = Eigen::Matrix3d::Zero();
  l(0, 0) = s1;
  l(1, 0) = std::tanh(z_rho) * s2;
  l(1, 1) = s2 / c;
  l(2, 2) = s2;
  return l;
}

// Allocates latent columns for each animal: component c is used if some
// experiment the animal took part in has a structurally nonzero root entry.
std::vector<std::array<int, 3>> allocate_components(const std::vector<int>& animal,
                                                    const std::vector<int>& experiment,
                                                    int levels, const Eigen::Matrix3d& pattern,
                                                    int& next_col) {
  std::vector<std::array<bool, 3>> used(static_cast<std::size_t>(levels), {false, false, false});
  for (std::size_t i = 0; i < animal.size(); ++i) {
    const int k = experiment[i] - 1;
    for (int c = 0; c < 3; ++c)
      if (pattern(k, c) != 0.0) used[static_cast<std::size_t>(animal[i])][c] = true;
  }
  std::vector<std::array<int, 3>> cols(static_cast<std::size_t>(levels), {-1, -1, -1});
  for (int a = 0; a < levels; ++a)
    for (int c = 0; c < 3; ++c)
      if (used[static_cast<std::size_t>(a)][c]) cols[static_cast<std::size_t>(a)][c] = next_col++;
  return cols;
}

} // namespace

PooledGlmm::PooledGlmm(Dataset data, bool shared)
    : LinearLatentModel(shared ? "pooled_shared_glmm" : "pooled_glmm", data,
                        pooled_layout(data, shared), 0, Response::bernoulli_logit),
      shared_(shared) {
  const auto& exp = this->data().column("experiment");
  for (int k : exp)
    if (k < 1 || k > 3) throw ModelError("experiment codes must be 1, 2 or 3");
  // Generic interior point: every structurally nonzero entry is nonzero here.
  Eigen::VectorXd generic(layout()->q());
  if (shared_) generic << 0.1, 0.2, 0.3, 0.1, 1.3;
  else generic << 0.1, 0.2, 0.3, 0.1, 0.2, 0.3;
  int next = 0;
  female_cols_ = allocate_components(this->data().column("female"), exp,
                                     this->data().levels("female"), female_root(generic), next);
  male_cols_ = allocate_components(this->data().column("male"), exp, this->data().levels("male"),
                                   male_root(generic), next);
  set_latent_dim(next);
}

Eigen::Matrix3d PooledGlmm::female_root(const Eigen::VectorXd& tau) const {
  return correlated_root(tau[0], tau[1], tau[2]);
}

Eigen::Matrix3d PooledGlmm::male_root(const Eigen::VectorXd& tau) const {
  if (!shared_) return correlated_root(tau[3], tau[4], tau[5]);
  const double s = std::exp(tau[3]), g = tau[4];
  Eigen::Matrix3d l = Eigen::Matrix3d::Zero();
  l(0, 0) = s;
  l(1, 0) = g * s;
  l(2, 2) = g * s;
  return l;
}

Loading PooledGlmm::loading(const Eigen::VectorXd& tau) const {
  const auto& f = data().column("female");
  const auto& m = data().column("male");
  const auto& exp = data().column("experiment");
  const Eigen::Matrix3d lf = female_root(tau), lm = male_root(tau);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(4 * f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const int k = exp[i] - 1;
    for (int c = 0; c < 3; ++c) {
      const int fc = female_cols_[static_cast<std::size_t>(f[i])][c];
      if (fc >= 0 && c <= k) t.emplace_back(static_cast<int>(i), fc, lf(k, c));
      const int mc = male_cols_[static_cast<std::size_t>(m[i])][c];
      if (mc >= 0 && c <= k) t.emplace_back(static_cast<int>(i), mc, lm(k, c));
    }
  }
  Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(f.size()), latent_dim());
  a.setFromTriplets(t.begin(), t.end());
  return Loading(std::move(a));
}

Eigen::VectorXd PooledGlmm::default_tau_natural() const {
  Eigen::VectorXd t(layout()->q());
  if (shared_) t << 0.5, 0.5, 0.0, 0.5, 1.0;
  else t << 0.5, 0.5, 0.0, 0.5, 0.5, 0.0;
  return t;
}

// ---------------------------------------------------------------------------
// spatial_poisson / spatial_odp

SpatialModel::SpatialModel(Dataset data, bool overdispersed, ModelOptions options)
    : LinearLatentModel(overdispersed ? "spatial_odp" : "spatial_poisson", data,
                        std::make_shared<ParamLayout>(
                            beta_specs(data),
                            std::vector<ParamSpec>{{"phi", Transform::identity},
                                                   {"alpha", Transform::identity}}),
                        data.rows(), Response::poisson_log),
      overdispersed_(overdispersed), options_(options) {
  const auto& d = this->data();
  if (d.time.size() != d.rows()) throw ModelError("spatial models need exposure times");
  if (d.distances.rows() != d.rows()) throw ModelError("spatial models need cached distances");
  if (overdispersed_) {
    response_ = d.y.cwiseQuotient(d.time);
  } else {
    offset_ = d.time.array().log().matrix();
  }
}

Eigen::MatrixXd SpatialModel::covariance(const Eigen::VectorXd& tau) const {
  const double range = std::exp(tau[1]);
  return (tau[0] - range * data().distances.array()).exp().matrix();
}

Eigen::MatrixXd SpatialModel::covariance_root(const Eigen::VectorXd& tau) const {
  Eigen::MatrixXd sigma = covariance(tau);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  if (options_.jitter_retry) {
    double jitter = 1e-10 * std::exp(tau[0]);
    for (int k = 0; k < 6; ++k, jitter *= 10.0) {
      Eigen::MatrixXd s = sigma;
      s.diagonal().array() += jitter;
      llt.compute(s);
      if (llt.info() == Eigen::Success) return llt.matrixL();
    }
  }
  std::ostringstream msg;
  msg << "spatial covariance is not positive definite at phi=" << tau[0] << ", alpha=" << tau[1];
  throw NumericalError(msg.str());
}

Loading SpatialModel::loading(const Eigen::VectorXd& tau) const {
  return Loading(covariance_root(tau));
}

Eigen::VectorXd SpatialModel::default_tau_natural() const {
  std::vector<double> pos;
  const auto& dist = data().distances;
  for (Eigen::Index j = 0; j < dist.cols(); ++j)
    for (Eigen::Index i = j + 1; i < dist.rows(); ++i) pos.push_back(dist(i, j));
  double median = 1.0;
  if (!pos.empty()) {
    auto mid = pos.begin() + static_cast<std::ptrdiff_t>(pos.size() / 2);
    std::nth_element(pos.begin(), mid, pos.end());
    median = *mid;
  }
  Eigen::VectorXd t(2);
  t << std::log(0.5), -std::log(median);
  return t;
}

double SpatialModel::response_to_y(Eigen::Index i, double kernel_value) const {
  return overdispersed_ ? kernel_value * data().time[i] : kernel_value;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd glm_fit(Response response, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& offset) {
  const Eigen::Index p = X.cols(), n = X.rows();
  if (response == Response::gaussian)
    return X.colPivHouseholderQr().solve(y - offset);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (response == Response::poisson_log) {
    const double mean = std::max(1e-8, (y.array() / offset.array().exp()).mean());
    // Intercept-only start when the first column is constant.
    if (p > 0 && (X.col(0).array() == 1.0).all()) beta[0] = std::log(mean);
  }
  Eigen::VectorXd eta(n), w(n), work(n);
  for (int it = 0; it < 50; ++it) {
    eta = X * beta + offset;
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0, wi = 0.0;
      kernel_derivs(response, y[i], eta[i], 1.0, s, wi);
      wi = std::max(wi, 1e-10);
      w[i] = wi;
      work[i] = eta[i] - offset[i] + s / wi;
    }
    Eigen::MatrixXd xtwx = X.transpose() * w.asDiagonal() * X;
    xtwx.diagonal().array() += 1e-8;
    Eigen::VectorXd next = xtwx.ldlt().solve(X.transpose() * w.asDiagonal() * work);
    // Separation pushes coefficients off to infinity; keep the start sane.
    next = next.cwiseMax(-10.0).cwiseMin(10.0);
    const double change = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    if (change < 1e-10) break;
  }
  return beta;
}

} // namespace ela
