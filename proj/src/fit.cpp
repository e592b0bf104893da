#include "ela/fit.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

#include "ela/ela.hpp"
#include "ela/errors.hpp"
#include "ela/laplace.hpp"
#include "ela/optimize.hpp"

namespace ela {

std::string_view to_string(Method m) { return m == Method::la ? "la" : "ela"; }
std::string_view to_string(Estimand e) { return e == Estimand::ml ? "ml" : "reml"; }

Method method_from_string(std::string_view s) {
  if (s == "la") return Method::la;
  if (s == "ela") return Method::ela;
  throw std::invalid_argument("unknown method '" + std::string(s) + "' (expected la or ela)");
}

Estimand estimand_from_string(std::string_view s) {
  if (s == "ml") return Estimand::ml;
  if (s == "reml") return Estimand::reml;
  throw std::invalid_argument("unknown estimand '" + std::string(s) + "' (expected ml or reml)");
}

ParamVec FitResult::theta(const Model& model) const {
  return ParamVec::unpack(model.layout(), unconstrained);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  std::uint64_t h = 1469598103934665603ULL; // FNV-1a
  for (unsigned char c : stream) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t x = seed ^ h;
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

// Packed coordinates split into free and held-fixed sets.
struct Coordinates {
  Eigen::VectorXd full;
  std::vector<Eigen::Index> free;

  Eigen::VectorXd gather(const std::vector<Eigen::Index>& idx) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = full[idx[k]];
    return out;
  }
  void scatter(const std::vector<Eigen::Index>& idx, const Eigen::VectorXd& v) {
    for (std::size_t k = 0; k < idx.size(); ++k) full[idx[k]] = v[static_cast<Eigen::Index>(k)];
  }
};

Coordinates make_coordinates(const Model& model, const ParamVec& theta0,
                             const FitOptions& options) {
  const auto& layout = *model.layout();
  Coordinates c;
  c.full = theta0.packed();
  std::vector<bool> fixed(static_cast<std::size_t>(layout.size()), false);
  for (const auto& [name, value] : options.fixed) {
    const Eigen::Index k = layout.index_of(name);
    if (k < 0) throw std::invalid_argument("cannot fix unknown parameter '" + name + "'");
    c.full[k] = to_unconstrained(layout[k].transform, value);
    fixed[static_cast<std::size_t>(k)] = true;
  }
  for (Eigen::Index k = 0; k < layout.size(); ++k)
    if (!fixed[static_cast<std::size_t>(k)]) c.free.push_back(k);
  return c;
}

std::vector<Eigen::Index> subset(const std::vector<Eigen::Index>& free, Eigen::Index lo,
                                 Eigen::Index hi) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index k : free)
    if (k >= lo && k < hi) out.push_back(k);
  return out;
}

Eigen::MatrixXd restrict(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows,
                         Eigen::Index offset) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out(i, j) = m(rows[static_cast<std::size_t>(i)] - offset,
                    rows[static_cast<std::size_t>(j)] - offset);
  return out;
}

// Inverse of an information matrix, or nothing when it is not PD (unless
// forced, in which case the positive part is inverted).
bool invert_information(const Eigen::MatrixXd& info, bool force, Eigen::MatrixXd& cov) {
  if (info.size() == 0) {
    cov.resize(0, 0);
    return true;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() == Eigen::Success) {
    cov = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
    cov = (0.5 * (cov + cov.transpose())).eval();
    return true;
  }
  if (!force) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  Eigen::VectorXd inv = eig.eigenvalues();
  const double cut = 1e-12 * std::max(1.0, inv.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < inv.size(); ++k) inv[k] = inv[k] > cut ? 1.0 / inv[k] : 0.0;
  cov = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  return false;
}

// Withheld inverses are empty and leave dst untouched.
void place(Eigen::MatrixXd& dst, const Eigen::MatrixXd& src,
           const std::vector<Eigen::Index>& idx) {
  if (src.rows() != static_cast<Eigen::Index>(idx.size())) return;
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j)
      dst(idx[i], idx[j]) = src(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

FitResult start_result(const Model& model, const FitOptions& options) {
  FitResult r;
  r.family = std::string(model.family());
  r.method = options.method;
  r.estimand = options.estimand;
  r.names = model.layout()->names();
  r.B_point = options.method == Method::ela ? options.B_point : 0;
  r.B_tau = options.estimand == Estimand::reml && options.method == Method::ela
                ? (options.B_tau > 0 ? options.B_tau : options.B_point)
                : 0;
  r.B_se = options.method == Method::ela && options.compute_se ? options.B_se : 0;
  r.seed = options.seed;
  r.p = model.p();
  if (options.method == Method::ela) {
    for (const char* s : {"point", "tau", "se", "se_tau"})
      r.seeds[s] = derive_seed(options.seed, s);
  }
  return r;
}

CrnDraws draws(const FitOptions& options, Eigen::Index dim, Eigen::Index count,
               std::string_view stream) {
  if (options.zero_draws) return CrnDraws::zeros(dim, count);
  return CrnDraws(dim, count, derive_seed(options.seed, stream));
}

// Fills estimates, warnings, the natural-scale covariance and SEs.
void finish(const Model& model, FitResult& r, const Eigen::VectorXd& x,
            const Eigen::MatrixXd* cov_u, bool info_ok, const FitOptions& options) {
  const auto& layout = *model.layout();
  const ParamVec theta = ParamVec::unpack(model.layout(), x);
  r.unconstrained = x;
  r.estimates = theta.natural();
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (std::abs(x[k]) > 20.0)
      r.warnings.push_back("parameter " + layout[k].name +
                           " drifted towards the boundary of its range");
    if (layout[k].transform == Transform::fisher_z && std::abs(std::tanh(x[k])) > 0.99) {
      std::string msg = layout[k].name + " is near +-1";
      if (layout[k].name == "rho_m")
        msg += "; consider the shared random-effects submodel pooled_shared_glmm";
      r.warnings.push_back(msg);
    }
  }
  if (!r.converged) r.warnings.push_back("optimizer did not converge");
  if (!info_ok) r.warnings.push_back("information matrix is indefinite at the estimate");
  if (cov_u && r.converged && (info_ok || options.force_se)) {
    const Eigen::VectorXd jac = theta.natural_jacobian();
    r.cov = jac.asDiagonal() * *cov_u * jac.asDiagonal();
    r.se = r.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  }
}

void check_ess(FitResult& r, const ElaEstimate& e, const char* what) {
  if (e.ess < 0.05 * static_cast<double>(e.B)) {
    std::ostringstream msg;
    msg << "importance weights degenerate for " << what << " (ESS " << e.ess << " of " << e.B
        << ")";
    r.warnings.push_back(msg.str());
  }
}

} // namespace

FitResult fit_ml(const Model& model, const ParamVec& theta0, const FitOptions& options) {
  FitResult r = start_result(model, options);
  r.estimand = Estimand::ml;
  r.B_tau = 0;
  Coordinates c = make_coordinates(model, theta0, options);
  r.free_parameters = static_cast<int>(c.free.size());
  const Eigen::Index d = model.latent_dim();
  const CrnDraws crn = options.method == Method::ela
                           ? draws(options, d, options.B_point, "point")
                           : CrnDraws::zeros(d, 1);

  WarmStart warm;
  Objective objective = [&](const Eigen::VectorXd& v) {
    Coordinates local = c;
    local.scatter(c.free, v);
    const ParamVec t = ParamVec::unpack(model.layout(), local.full);
    if (options.method == Method::la) return la_marginal(model, t, &warm);
    return ela_marginal(model, t, crn, &warm).loglik;
  };
  const OptimResult opt = maximize(objective, c.gather(c.free), {options.tol, options.max_iter});
  c.scatter(c.free, opt.x);
  r.converged = opt.converged;
  r.iterations = opt.iterations;
  r.trace = opt.trace;
  r.loglik = opt.value;

  const ParamVec theta = ParamVec::unpack(model.layout(), c.full);
  if (options.method == Method::ela) check_ess(r, ela_marginal(model, theta, crn), "ell_B");

  Eigen::MatrixXd cov_u;
  bool info_ok = true;
  bool have_cov = false;
  if (options.compute_se && r.converged) {
    Eigen::MatrixXd info;
    if (options.method == Method::ela) {
      const Information I = ela_information(model, theta, draws(options, d, options.B_se, "se"));
      info = restrict(I.matrix, c.free, 0);
    } else {
      info = -fd_hessian(objective, opt.x);
    }
    Eigen::MatrixXd inv;
    info_ok = invert_information(info, options.force_se, inv);
    cov_u = Eigen::MatrixXd::Zero(c.full.size(), c.full.size());
    place(cov_u, inv, c.free);
    have_cov = info_ok || options.force_se;
  }
  finish(model, r, c.full, have_cov ? &cov_u : nullptr, info_ok, options);
  return r;
}

FitResult fit_reml(const Model& model, const ParamVec& theta0, const FitOptions& options) {
  FitResult r = start_result(model, options);
  r.estimand = Estimand::reml;
  Coordinates c = make_coordinates(model, theta0, options);
  r.free_parameters = static_cast<int>(c.free.size());
  const Eigen::Index p = model.p(), d = model.latent_dim(), P = c.full.size();
  const std::vector<Eigen::Index> free_beta = subset(c.free, 0, p);
  const std::vector<Eigen::Index> free_tau = subset(c.free, p, P);
  const bool ela = options.method == Method::ela;
  const CrnDraws crn_point = ela ? draws(options, d, options.B_point, "point") : CrnDraws::zeros(d);
  const CrnDraws crn_tau = ela ? draws(options, p + d, r.B_tau, "tau") : CrnDraws::zeros(p + d);

  WarmStart warm;
  Objective restricted = [&](const Eigen::VectorXd& v) {
    Coordinates local = c;
    local.scatter(free_tau, v);
    const ParamVec t = ParamVec::unpack(model.layout(), local.full);
    if (!ela) return la_restricted(model, t, &warm);
    return ela_restricted(model, t, crn_tau, &warm).loglik;
  };
  Objective marginal = [&](const Eigen::VectorXd& v) {
    Coordinates local = c;
    local.scatter(free_beta, v);
    const ParamVec t = ParamVec::unpack(model.layout(), local.full);
    if (!ela) return la_marginal(model, t, &warm);
    return ela_marginal(model, t, crn_point, &warm).loglik;
  };

  const OptimOptions oo{options.tol, options.max_iter};
  bool converged = false;
  for (int cycle = 0; cycle < options.max_cycles; ++cycle) {
    const Eigen::VectorXd before = c.full;
    const OptimResult tau_step = maximize(restricted, c.gather(free_tau), oo);
    c.scatter(free_tau, tau_step.x);
    r.restricted_loglik = tau_step.value;
    const OptimResult beta_step = maximize(marginal, c.gather(free_beta), oo);
    c.scatter(free_beta, beta_step.x);
    r.loglik = beta_step.value;
    r.iterations += tau_step.iterations + beta_step.iterations;
    r.trace.push_back(beta_step.value);
    const double change = (c.full - before).cwiseAbs().maxCoeff();
    if (tau_step.converged && beta_step.converged && change < options.tol) {
      converged = true;
      break;
    }
  }
  r.converged = converged;

  const ParamVec theta = ParamVec::unpack(model.layout(), c.full);
  if (ela) {
    check_ess(r, ela_marginal(model, theta, crn_point), "ell_B");
    check_ess(r, ela_restricted(model, theta, crn_tau), "r_B");
  }

  Eigen::MatrixXd cov_u;
  bool info_ok = true;
  bool have_cov = false;
  if (options.compute_se && r.converged) {
    Eigen::MatrixXd info_tau, info_all;
    if (ela) {
      const Information J =
          ela_reml_information(model, theta, draws(options, p + d, options.B_se, "se_tau"));
      info_tau = restrict(J.matrix, free_tau, p);
      const Information I = ela_information(model, theta, draws(options, d, options.B_se, "se"));
      info_all = restrict(I.matrix, c.free, 0);
    } else {
      info_tau = -fd_hessian(restricted, c.gather(free_tau));
      Objective all = [&](const Eigen::VectorXd& v) {
        Coordinates local = c;
        local.scatter(c.free, v);
        return la_marginal(model, ParamVec::unpack(model.layout(), local.full), &warm);
      };
      info_all = -fd_hessian(all, c.gather(c.free));
    }
    Eigen::MatrixXd inv_tau, inv_all;
    const bool ok_tau = invert_information(info_tau, options.force_se, inv_tau);
    const bool ok_all = invert_information(info_all, options.force_se, inv_all);
    info_ok = ok_tau && ok_all;
    // Block diagonal: beta from the beta block of I^{-1}, tau from J^{-1}.
    cov_u = Eigen::MatrixXd::Zero(P, P);
    const auto nb = static_cast<Eigen::Index>(free_beta.size());
    if (inv_all.size() > 0) place(cov_u, inv_all.topLeftCorner(nb, nb), free_beta);
    place(cov_u, inv_tau, free_tau);
    have_cov = info_ok || options.force_se;
  }
  finish(model, r, c.full, have_cov ? &cov_u : nullptr, info_ok, options);
  return r;
}

FitResult fit(const Model& model, const ParamVec& theta0, const FitOptions& options) {
  return options.estimand == Estimand::ml ? fit_ml(model, theta0, options)
                                          : fit_reml(model, theta0, options);
}

LrtResult lrt(const FitResult& full, const FitResult& null) {
  if (full.method != null.method || full.B_point != null.B_point || full.seed != null.seed)
    throw std::invalid_argument("likelihood ratio test needs both fits on the same method, B "
                                "and seed");
  LrtResult out;
  out.df = full.free_parameters - null.free_parameters;
  if (out.df < 0) throw std::invalid_argument("null model has more free parameters than full");
  const double stat = 2.0 * (full.loglik - null.loglik);
  // REML estimates maximize r_B, so ell_B at them need not be ordered.
  const bool reml = full.estimand == Estimand::reml && null.estimand == Estimand::reml;
  if (stat < -1e-6 && !reml) {
    std::ostringstream msg;
    msg << "negative likelihood ratio statistic " << stat
        << "; the full-model optimizer did not reach the null optimum";
    throw std::runtime_error(msg.str());
  }
  out.statistic = std::max(0.0, stat);
  out.p_value = out.df == 0 ? 1.0
                            : boost::math::gamma_q(0.5 * out.df, 0.5 * out.statistic);
  return out;
}

FitResult delta_transform(const FitResult& fit,
                          const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& map,
                          std::vector<std::string> names) {
  FitResult out = fit;
  const Eigen::VectorXd x = fit.estimates;
  out.estimates = map(x);
  if (static_cast<Eigen::Index>(names.size()) != out.estimates.size())
    throw std::invalid_argument("transform produced " + std::to_string(out.estimates.size()) +
                                " values for " + std::to_string(names.size()) + " names");
  out.names = std::move(names);
  Eigen::MatrixXd J(out.estimates.size(), x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = fd_gradient_step(x[k]);
    const double hi = x[k] + h, lo = x[k] - h;
    probe[k] = hi;
    const Eigen::VectorXd up = map(probe);
    probe[k] = lo;
    const Eigen::VectorXd down = map(probe);
    probe[k] = x[k];
    // Dividing by the representable step keeps linear maps exact.
    J.col(k) = (up - down) / (hi - lo);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
  if (lu.rank() < std::min(J.rows(), J.cols()))
    out.warnings.push_back("delta-method Jacobian is singular");
  if (fit.cov.size() > 0) {
    out.cov = J * fit.cov * J.transpose();
    out.cov = (0.5 * (out.cov + out.cov.transpose())).eval();
    out.se = out.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  }
  return out;
}

FitResult matern_transform(const FitResult& fit) {
  const auto find = [&](const char* name) {
    for (std::size_t k = 0; k < fit.names.size(); ++k)
      if (fit.names[k] == name) return static_cast<Eigen::Index>(k);
    throw std::invalid_argument(std::string("matern transform needs parameter ") + name);
  };
  const Eigen::Index iphi = find("phi"), ialpha = find("alpha");
  std::vector<std::string> names = fit.names;
  names.push_back("xi");
  constexpr double kLog2Pi = 1.8378770664093454836;
  return delta_transform(
      fit,
      [=](const Eigen::VectorXd& v) {
        Eigen::VectorXd out(v.size() + 1);
        out.head(v.size()) = v;
        out[v.size()] = 0.5 * (-kLog2Pi - v[ialpha] - v[iphi]);
        return out;
      },
      std::move(names));
}

} // namespace ela
