#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "ela/dataset.hpp"
#include "ela/fit.hpp"

namespace ela {

struct StudyConfig {
  std::string family;
  /// Natural-scale truth, packed (beta then tau) in the family's layout.
  std::vector<double> truth;
  int T = 2;
  Eigen::Index B_point = 50;
  Eigen::Index B_tau = 0;
  Eigen::Index B_se = 1000;
  std::vector<Method> methods{Method::ela};
  Estimand estimand = Estimand::reml;
  std::uint64_t base_seed = 1;
  int workers = 1;
  double tol = 1e-6;
  /// Design: empty uses the family default (reconstructed salamander
  /// layout, jittered grid, or grouped layout); otherwise a CSV whose
  /// responses are replaced by simulated ones.
  std::string data_path;
  int n = 157;         ///< spatial grid size
  double extent = 1.0; ///< spatial grid side length
  int groups = 10;     ///< grouped designs
  int group_size = 5;
};

StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudyConfig& c);

struct ReplicateResult {
  int index = 0;
  bool converged = false;
  Eigen::VectorXd estimates;
  Eigen::VectorXd se; ///< NaN where withheld
  std::string error;
};

struct SummaryTable {
  std::string method;
  std::vector<std::string> names;
  Eigen::VectorXd truth;
  Eigen::VectorXd est;
  Eigen::VectorXd se;
  Eigen::VectorXd sd;
  Eigen::MatrixXd estimates; ///< converged replicates x parameters
  Eigen::MatrixXd ses;
  std::vector<ReplicateResult> replicates; ///< every replicate, in index order
  int failures = 0;
};

/// Est = column mean, SE = column mean over finite entries, SD = sample
/// standard deviation with divisor T - 1. Needs at least two rows.
void summarize(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& ses, Eigen::VectorXd& est,
               Eigen::VectorXd& se, Eigen::VectorXd& sd);

struct StudyResult {
  StudyConfig config;
  std::vector<SummaryTable> tables; ///< one per method
};

/// More than 20% of replicates failed for some method.
class StudyError : public std::runtime_error {
public:
  StudyError(const std::string& what, StudyResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const StudyResult& partial() const noexcept { return partial_; }

private:
  StudyResult partial_;
};

/// The design a study simulates on.
Dataset study_design(const StudyConfig& config);

/// Replicate t draws its responses from Rng seeded with
/// seed_seq{low 32 bits of base_seed, high 32 bits, t} and fits with seed
/// base_seed + t. Throws StudyError carrying the partial result.
StudyResult run_study(const StudyConfig& config);

std::string summary_csv(const StudyResult& result);
nlohmann::json summary_json(const StudyResult& result);

} // namespace ela
