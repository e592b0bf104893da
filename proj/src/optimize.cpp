#include "ela/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ela/errors.hpp"
#include "ela/model.hpp"

namespace ela {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kArmijo = 1e-4;
constexpr double kMaxMove = 2.0; // largest step in any unconstrained coordinate

// Counts evaluations; failures and non-finite values become -inf.
class Guarded {
public:
  explicit Guarded(const Objective& f) : f_(f) {}
  double operator()(const Eigen::VectorXd& x) {
    ++count;
    try {
      const double v = f_(x);
      return std::isfinite(v) ? v : -kInf;
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      return -kInf;
    }
  }
  int count = 0;

private:
  const Objective& f_;
};

Eigen::VectorXd guarded_gradient(Guarded& f, const Eigen::VectorXd& x, double fx) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = fd_gradient_step(x[k]);
    probe[k] = x[k] + h;
    const double up = f(probe);
    probe[k] = x[k] - h;
    const double down = f(probe);
    probe[k] = x[k];
    if (std::isfinite(up) && std::isfinite(down)) g[k] = (up - down) / (2.0 * h);
    else if (std::isfinite(up)) g[k] = (up - fx) / h;
    else if (std::isfinite(down)) g[k] = (fx - down) / h;
    else throw NumericalError("objective is not finite around the current iterate");
  }
  return g;
}

} // namespace

Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = fd_gradient_step(x[k]);
    probe[k] = x[k] + h;
    const double up = f(probe);
    probe[k] = x[k] - h;
    const double down = f(probe);
    probe[k] = x[k];
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd h(n);
  for (Eigen::Index k = 0; k < n; ++k) h[k] = fd_hessian_step(x[k]);
  const double f0 = f(x);
  auto at = [&](Eigen::Index k, double dk, Eigen::Index l, double dl) {
    Eigen::VectorXd p = x;
    p[k] += dk;
    if (l >= 0) p[l] += dl;
    return f(p);
  };
  Eigen::MatrixXd H(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    H(k, k) = (at(k, h[k], -1, 0) - 2.0 * f0 + at(k, -h[k], -1, 0)) / (h[k] * h[k]);
    for (Eigen::Index l = 0; l < k; ++l) {
      H(k, l) = (at(k, h[k], l, h[l]) - at(k, h[k], l, -h[l]) - at(k, -h[k], l, h[l]) +
                 at(k, -h[k], l, -h[l])) /
                (4.0 * h[k] * h[l]);
      H(l, k) = H(k, l);
    }
  }
  return H;
}

OptimResult maximize(const Objective& objective, const Eigen::VectorXd& x0,
                     const OptimOptions& options) {
  Guarded f(objective);
  OptimResult out;
  out.method = "bfgs";
  Eigen::VectorXd x = x0;
  double fx = f(x);
  if (!std::isfinite(fx))
    throw ConvergenceError("objective cannot be evaluated at the starting point", x0);
  if (x.size() == 0) {
    out.x = x;
    out.value = fx;
    out.converged = true;
    out.evaluations = f.count;
    return out;
  }

  const Eigen::Index n = x.size();
  Eigen::VectorXd g = guarded_gradient(f, x, fx);
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
  bool fresh = true;
  bool stalled = false;
  for (int it = 0; it < options.max_iter; ++it) {
    out.iterations = it + 1;
    // Ascent direction for f; hinv approximates (-Hessian)^{-1}.
    Eigen::VectorXd dir = hinv * g;
    if (g.dot(dir) <= 0.0) {
      hinv.setIdentity();
      fresh = true;
      dir = g;
    }
    const double big = dir.cwiseAbs().maxCoeff();
    if (big > kMaxMove) dir *= kMaxMove / big;

    const double slope = g.dot(dir);
    double t = 1.0;
    double ft = -kInf;
    Eigen::VectorXd xt;
    while (t >= 1e-10) {
      xt = x + t * dir;
      ft = f(xt);
      if (std::isfinite(ft) && ft >= fx + kArmijo * t * slope) break;
      t *= 0.5;
    }
    if (!(t >= 1e-10)) {
      const bool stationary = g.cwiseAbs().maxCoeff() <= 1e-4 * (1.0 + std::abs(fx));
      if (stationary) {
        out.converged = true;
        break;
      }
      if (!fresh) {
        hinv.setIdentity();
        fresh = true;
        continue;
      }
      stalled = true;
      break;
    }

    const Eigen::VectorXd s = xt - x;
    const Eigen::VectorXd gt = guarded_gradient(f, xt, ft);
    const Eigen::VectorXd y = g - gt; // gradient change of -f
    x = xt;
    fx = ft;
    g = gt;
    out.trace.push_back(fx);

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) {
        hinv *= sy / y.squaredNorm();
        fresh = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      hinv = (I - rho * s * y.transpose()) * hinv * (I - rho * y * s.transpose()) +
             rho * s * s.transpose();
    }
    const double gnorm = g.cwiseAbs().maxCoeff();
    if (s.cwiseAbs().maxCoeff() < options.tol && gnorm <= 1e-4 * (1.0 + std::abs(fx))) {
      out.converged = true;
      break;
    }
  }

  out.x = x;
  out.value = fx;
  out.evaluations = f.count;
  if (stalled) {
    OptimResult nm = maximize_nelder_mead(objective, x, options);
    nm.evaluations += out.evaluations;
    nm.iterations += out.iterations;
    nm.trace.insert(nm.trace.begin(), out.trace.begin(), out.trace.end());
    if (nm.value >= out.value) return nm;
  }
  return out;
}

OptimResult maximize_nelder_mead(const Objective& objective, const Eigen::VectorXd& x0,
                                 const OptimOptions& options) {
  Guarded f(objective);
  OptimResult out;
  out.method = "nelder-mead";
  const Eigen::Index n = x0.size();
  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n + 1), x0);
  std::vector<double> vals(static_cast<std::size_t>(n + 1));
  vals[0] = f(x0);
  if (!std::isfinite(vals[0]))
    throw ConvergenceError("objective cannot be evaluated at the starting point", x0);
  for (Eigen::Index k = 0; k < n; ++k) {
    auto& p = pts[static_cast<std::size_t>(k + 1)];
    p[k] += 0.25 * std::max(1.0, std::abs(x0[k]));
    vals[static_cast<std::size_t>(k + 1)] = f(p);
  }

  std::vector<std::size_t> order(pts.size());
  const int budget = options.max_iter * static_cast<int>(std::max<Eigen::Index>(1, n)) * 4;
  for (int it = 0; it < budget; ++it) {
    std::iota(order.begin(), order.end(), 0);
    // Best first; ties broken by index for reproducibility.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
    out.iterations = it + 1;
    const double best = vals[order.front()], worst = vals[order.back()];
    out.trace.push_back(best);
    double diameter = 0.0;
    for (const auto& p : pts)
      diameter = std::max(diameter, (p - pts[order.front()]).cwiseAbs().maxCoeff());
    if (diameter < options.tol && best - worst <= 1e-10 * (1.0 + std::abs(best))) {
      out.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k + 1 < order.size(); ++k) centroid += pts[order[k]];
    centroid /= static_cast<double>(n);
    const std::size_t w = order.back();
    const double second_worst = vals[order[order.size() - 2]];

    const Eigen::VectorXd xr = centroid + (centroid - pts[w]);
    const double fr = f(xr);
    if (fr > best) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[w]);
      const double fe = f(xe);
      if (fe > fr) {
        pts[w] = xe;
        vals[w] = fe;
      } else {
        pts[w] = xr;
        vals[w] = fr;
      }
      continue;
    }
    if (fr > second_worst) {
      pts[w] = xr;
      vals[w] = fr;
      continue;
    }
    const bool outside = fr > vals[w];
    const Eigen::VectorXd xc =
        outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (pts[w] - centroid));
    const double fc = f(xc);
    if (fc > (outside ? fr : vals[w])) {
      pts[w] = xc;
      vals[w] = fc;
      continue;
    }
    const Eigen::VectorXd anchor = pts[order.front()];
    for (std::size_t k = 1; k < order.size(); ++k) {
      auto& p = pts[order[k]];
      p = anchor + 0.5 * (p - anchor);
      vals[order[k]] = f(p);
    }
  }
  const auto best =
      std::max_element(vals.begin(), vals.end()) - vals.begin();
  out.x = pts[static_cast<std::size_t>(best)];
  out.value = vals[static_cast<std::size_t>(best)];
  out.evaluations = f.count;
  return out;
}

} // namespace ela
