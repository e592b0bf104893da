#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ela {

/// Responses plus everything a model family needs to build its linear
/// predictor. Index columns are 0-based and contiguous, except
/// "experiment", which keeps its 1..3 codes.
struct Dataset {
  std::string schema; ///< "salamander", "rongelap" or "grouped"
  Eigen::VectorXd y;
  Eigen::VectorXd time; ///< exposures; empty when the schema has none
  Eigen::MatrixXd X;
  std::vector<std::string> x_names;
  std::map<std::string, std::vector<int>> index;
  std::map<std::string, Eigen::VectorXd> covariates; ///< raw covariate columns
  Eigen::MatrixXd coords;                            ///< n x 2, spatial schemas only
  Eigen::MatrixXd distances;                         ///< cached Euclidean distances

  Eigen::Index rows() const { return y.size(); }
  bool spatial() const { return coords.rows() > 0; }

  const std::vector<int>& column(const std::string& name) const;
  /// Number of levels of a 0-based index column.
  int levels(const std::string& name) const;

  void compute_distances();
  /// Throws DataError listing every violated invariant.
  void validate() const;
};

} // namespace ela
