#pragma once

#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ela/data_io.hpp"
#include "ela/dataset.hpp"
#include "ela/model.hpp"
#include "oracles.hpp"

namespace fixture {

/// Grouped dataset with the given responses and group sizes.
inline ela::Dataset grouped(const Eigen::VectorXd& y, int groups, int size, int covariates = 0,
                            std::uint64_t seed = 1) {
  ela::Dataset d = ela::grouped_design(groups, size, covariates, seed);
  d.y = y;
  return d;
}

/// Normal one-way data drawn at (mu, su, se).
inline ela::Dataset normal_one_way(int groups, int size, double mu, double su, double se,
                                   std::uint64_t seed, int covariates = 0) {
  ela::Dataset d = ela::grouped_design(groups, size, covariates, seed);
  std::mt19937_64 rng(seed + 17);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(static_cast<std::size_t>(groups));
  for (auto& v : u) v = normal(rng);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    double xb = mu;
    for (int k = 0; k < covariates; ++k) xb += 0.3 * d.X(i, 1 + k);
    d.y[i] = xb + su * u[static_cast<std::size_t>(d.column("group")[static_cast<std::size_t>(i)])] +
             se * normal(rng);
  }
  return d;
}

inline oracle::Gaussian gaussian_oracle(const ela::Dataset& d) {
  oracle::Gaussian g;
  g.y = d.y;
  g.X = d.X;
  g.group = d.column("group");
  g.groups = d.levels("group");
  return g;
}

/// The d = 1, n = 5 Bernoulli toy: y = (1, 0, 1, 1, 0).
inline ela::Dataset toy_single() {
  Eigen::VectorXd y(5);
  y << 1, 0, 1, 1, 0;
  return grouped(y, 1, 5);
}

/// Multi-cluster Bernoulli toy drawn at (beta0, sigma).
inline ela::Dataset toy_clusters(int groups, int size, double beta0, double sigma,
                                 std::uint64_t seed) {
  ela::Dataset d = ela::grouped_design(groups, size);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int g = 0; g < groups; ++g) {
    const double z = normal(rng);
    for (int j = 0; j < size; ++j) {
      const double p = 1.0 / (1.0 + std::exp(-(beta0 + sigma * z)));
      d.y[static_cast<Eigen::Index>(g) * size + j] = unif(rng) < p ? 1.0 : 0.0;
    }
  }
  return d;
}

inline ela::ParamVec natural(const ela::Model& m, std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index k = 0;
  for (double x : values) v[k++] = x;
  return ela::ParamVec::from_natural(m.layout(), v.head(m.p()), v.tail(m.q()));
}

/// Writes a dataset in its CSV schema, 17 significant digits for reals.
inline void write_csv(const ela::Dataset& d, const std::string& path) {
  std::ofstream out(path);
  char buf[64];
  const auto real = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  if (d.schema == "salamander") {
    out << "female_id,male_id,experiment,trtf,trtm,season,y\n";
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      const auto r = static_cast<std::size_t>(i);
      out << "F" << d.column("female")[r] << ",M" << d.column("male")[r] << ","
          << d.column("experiment")[r] << "," << d.covariates.at("trtf")[i] << ","
          << d.covariates.at("trtm")[i] << "," << d.covariates.at("season")[i] << "," << d.y[i]
          << "\n";
    }
  } else if (d.schema == "rongelap") {
    out << "x_coord,y_coord,count,time\n";
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      out << real(d.coords(i, 0)) << "," << real(d.coords(i, 1)) << "," << real(d.y[i]) << ","
          << real(d.time[i]) << "\n";
  } else {
    out << "group,y";
    for (Eigen::Index k = 1; k < d.X.cols(); ++k) out << ",x" << k;
    out << "\n";
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      out << "g" << d.column("group")[static_cast<std::size_t>(i)] << "," << real(d.y[i]);
      for (Eigen::Index k = 1; k < d.X.cols(); ++k) out << "," << real(d.X(i, k));
      out << "\n";
    }
  }
}

/// A fresh path under the system temporary directory.
inline std::string temp_path(const std::string& name) {
  static int counter = 0;
  return (std::filesystem::temp_directory_path() /
          ("ela_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + "_" + name))
      .string();
}

} // namespace fixture
