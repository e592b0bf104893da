#include "ela/dataset.hpp"

#include <algorithm>

#include "ela/errors.hpp"

namespace ela {

DataError::DataError(std::vector<std::string> issues)
    : std::runtime_error([&] {
        std::string msg = "data error";
        for (const auto& s : issues) msg += "\n  " + s;
        return msg;
      }()),
      issues_(std::move(issues)) {}

const std::vector<int>& Dataset::column(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end()) throw DataError("dataset has no index column '" + name + "'");
  return it->second;
}

int Dataset::levels(const std::string& name) const {
  const auto& col = column(name);
  if (col.empty()) return 0;
  return *std::max_element(col.begin(), col.end()) + 1;
}

void Dataset::compute_distances() {
  const Eigen::Index n = coords.rows();
  distances.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    distances(i, i) = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d = (coords.row(i) - coords.row(j)).norm();
      distances(i, j) = d;
      distances(j, i) = d;
    }
  }
}

void Dataset::validate() const {
  std::vector<std::string> issues;
  const Eigen::Index n = rows();
  if (X.rows() != n)
    issues.push_back("design matrix has " + std::to_string(X.rows()) + " rows, expected " +
                     std::to_string(n));
  if (time.size() != 0) {
    if (time.size() != n) issues.push_back("exposure column has wrong length");
    for (Eigen::Index i = 0; i < time.size(); ++i)
      if (!(time[i] > 0.0))
        issues.push_back("row " + std::to_string(i) + ": exposure must be positive");
  }
  for (const auto& [name, col] : index) {
    if (static_cast<Eigen::Index>(col.size()) != n) {
      issues.push_back("index column '" + name + "' has wrong length");
      continue;
    }
    const int lo = name == "experiment" ? 1 : 0;
    for (std::size_t i = 0; i < col.size(); ++i)
      if (col[i] < lo) {
        issues.push_back("row " + std::to_string(i) + ": index '" + name + "' out of range");
        break;
      }
  }
  const bool wants_coords = schema == "rongelap";
  if (wants_coords != spatial())
    issues.push_back(wants_coords ? "spatial schema without coordinates"
                                  : "coordinates present for a non-spatial schema");
  if (spatial() && coords.rows() != n) issues.push_back("coordinate rows do not match responses");
  if (!issues.empty()) throw DataError(std::move(issues));
}

} // namespace ela
