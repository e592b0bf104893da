#include "ela/ela.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "ela/errors.hpp"
#include "ela/parallel.hpp"

namespace ela {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::size_t chunk_count(Eigen::Index B) {
  return static_cast<std::size_t>((B + kDrawChunk - 1) / kDrawChunk);
}

int draw_workers(Eigen::Index B) { return chunk_count(B) > 1 ? worker_count() : 1; }

// h at every column of `points`, evaluated chunk by chunk.
Eigen::VectorXd evaluate_chunked(const LatentDensity& density, const Eigen::MatrixXd& points) {
  const Eigen::Index B = points.cols();
  Eigen::VectorXd out(B);
  parallel_for(chunk_count(B), draw_workers(B), [&](std::size_t c) {
    const Eigen::Index start = static_cast<Eigen::Index>(c) * kDrawChunk;
    const Eigen::Index len = std::min(kDrawChunk, B - start);
    out.segment(start, len) = density.values(points.middleCols(start, len));
  });
  return out;
}

// Everything derived from one mode and one draw set.
struct DrawSet {
  ModeResult mode;
  Eigen::MatrixXd points;
  ElaEstimate estimate;
};

DrawSet importance_draws(const LatentDensity& density, ModeResult mode, const CrnDraws& crn) {
  if (crn.dim() != mode.dim()) {
    std::ostringstream msg;
    msg << "draws have dimension " << crn.dim() << ", latent block has " << mode.dim();
    throw std::invalid_argument(msg.str());
  }
  if (crn.count() < 1) throw std::invalid_argument("at least one draw is required");
  DrawSet out;
  out.points = sample_predictive(mode, crn);
  const Eigen::VectorXd h = evaluate_chunked(density, out.points);

  // The Gaussian is centred at the maximizer of a log-concave h, so no draw
  // can beat the mode. A violation means the mode search went wrong.
  const double bound = mode.h_at_mode + 1e-8 * (1.0 + std::abs(mode.h_at_mode));
  for (Eigen::Index b = 0; b < h.size(); ++b) {
    if (h[b] > bound) {
      std::ostringstream msg;
      msg << "draw " << b << " exceeds h at the mode (" << h[b] << " > " << mode.h_at_mode
          << ")";
      throw NumericalError(msg.str());
    }
  }
  const double log_norm =
      mode.half_log_det() - 0.5 * static_cast<double>(mode.dim()) * kLog2Pi;
  Eigen::VectorXd r(h.size());
  for (Eigen::Index b = 0; b < h.size(); ++b)
    r[b] = h[b] - (log_norm - 0.5 * crn.u().col(b).squaredNorm());
  out.estimate = importance_estimate(r);
  out.estimate.seed = crn.seed();
  out.mode = std::move(mode);
  return out;
}

DrawSet marginal_draws(const Model& model, const ParamVec& theta, const CrnDraws& crn,
                       WarmStart* warm) {
  ModeResult m = latent_mode(model, theta, warm ? warm->latent : std::nullopt);
  if (warm) warm->latent = m.mode;
  auto density = model.conditional(theta);
  return importance_draws(*density, std::move(m), crn);
}

DrawSet restricted_draws(const Model& model, const ParamVec& theta, const CrnDraws& crn,
                         WarmStart* warm) {
  ModeResult m = joint_mode(model, theta, warm ? warm->joint : std::nullopt);
  if (warm) warm->joint = m.mode;
  auto density = model.joint(theta);
  return importance_draws(*density, std::move(m), crn);
}

// I = g g^T - sum_b w_b (g_b g_b^T + H_b), accumulated per chunk in order.
Information assemble_information(const Model& model, const ParamVec& theta, const DrawSet& set,
                                 ThetaBlock block, bool force_fd) {
  const Eigen::Index B = set.points.cols();
  const std::size_t chunks = chunk_count(B);
  std::vector<Eigen::VectorXd> scores(chunks);
  std::vector<Eigen::MatrixXd> second(chunks);
  const Eigen::VectorXd& w = set.estimate.weights;
  parallel_for(chunks, draw_workers(B), [&](std::size_t c) {
    const Eigen::Index start = static_cast<Eigen::Index>(c) * kDrawChunk;
    const Eigen::Index len = std::min(kDrawChunk, B - start);
    const Eigen::VectorXd wc = w.segment(start, len);
    const ThetaDerivatives d =
        dtheta_batch(model, theta, set.points.middleCols(start, len), wc, block, force_fd);
    scores[c] = d.gradients * wc;
    second[c] = d.weighted_hessian + d.gradients * wc.asDiagonal() * d.gradients.transpose();
  });
  Information out;
  out.score = scores[0];
  Eigen::MatrixXd s = second[0];
  for (std::size_t c = 1; c < chunks; ++c) {
    out.score += scores[c];
    s += second[c];
  }
  out.matrix = out.score * out.score.transpose() - s;
  out.matrix = (0.5 * (out.matrix + out.matrix.transpose())).eval();
  out.estimate = set.estimate;
  return out;
}

} // namespace

CrnDraws::CrnDraws(Eigen::Index dim, Eigen::Index count, std::uint64_t seed) : seed_(seed) {
  if (dim < 0 || count < 1) throw std::invalid_argument("CRN needs dim >= 0 and count >= 1");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  Rng rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  u_.resize(dim, count);
  for (Eigen::Index b = 0; b < count; ++b)
    for (Eigen::Index k = 0; k < dim; ++k) u_(k, b) = normal(rng);
}

CrnDraws CrnDraws::zeros(Eigen::Index dim, Eigen::Index count) {
  return CrnDraws(Eigen::MatrixXd::Zero(dim, count), 0);
}

Eigen::MatrixXd sample_predictive(const ModeResult& mode, const Eigen::MatrixXd& u) {
  if (u.rows() != mode.dim()) throw std::invalid_argument("draws have wrong dimension");
  Eigen::MatrixXd z = mode.chol.transpose().triangularView<Eigen::Upper>().solve(u);
  z.colwise() += mode.mode;
  return z;
}

Eigen::MatrixXd sample_predictive(const ModeResult& mode, const CrnDraws& crn) {
  return sample_predictive(mode, crn.u());
}

ElaEstimate importance_estimate(const Eigen::VectorXd& r) {
  const Eigen::Index B = r.size();
  if (B < 1) throw std::invalid_argument("no log-ratios");
  const double m = r.maxCoeff();
  if (!std::isfinite(m))
    throw NumericalError("every importance ratio vanishes; the model does not match the data");
  ElaEstimate out;
  out.B = B;
  out.log_ratios = r;
  out.weights = (r.array() - m).exp().matrix();
  const double s = out.weights.sum();
  out.weights /= s;
  out.loglik = m + std::log(s) - std::log(static_cast<double>(B));
  const double sum_sq = out.weights.squaredNorm();
  out.ess = 1.0 / sum_sq;
  out.mc_se = B == 1 ? 0.0
                     : std::sqrt(std::max(0.0, (static_cast<double>(B) * sum_sq - 1.0) /
                                                   static_cast<double>(B - 1)));
  out.elbo = r.mean();
  return out;
}

ElaEstimate ela_marginal(const Model& model, const ParamVec& theta, const CrnDraws& crn,
                         WarmStart* warm) {
  return marginal_draws(model, theta, crn, warm).estimate;
}

ElaEstimate ela_restricted(const Model& model, const ParamVec& theta, const CrnDraws& crn,
                           WarmStart* warm) {
  return restricted_draws(model, theta, crn, warm).estimate;
}

Information ela_information(const Model& model, const ParamVec& theta, const CrnDraws& crn,
                            bool force_fd) {
  const DrawSet set = marginal_draws(model, theta, crn, nullptr);
  return assemble_information(model, theta, set, ThetaBlock::all, force_fd);
}

Information ela_reml_information(const Model& model, const ParamVec& theta,
                                 const CrnDraws& crn) {
  const DrawSet set = restricted_draws(model, theta, crn, nullptr);
  return assemble_information(model, theta, set, ThetaBlock::tau_only, true);
}

double elbo_estimate(const Model& model, const ParamVec& theta, const CrnDraws& crn) {
  return ela_marginal(model, theta, crn).elbo;
}

} // namespace ela
