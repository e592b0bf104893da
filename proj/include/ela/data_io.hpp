#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "ela/dataset.hpp"
#include "ela/model.hpp"

namespace ela {

/// Reads a CSV with a header row. The schema follows from the model family:
/// salamander for summer_glmm/pooled_*, rongelap for spatial_*, grouped for
/// normal_lmm/bernoulli_cluster_toy. summer_glmm keeps experiment 1 only.
/// Throws DataError with one entry per offending line.
Dataset load_dataset(const std::string& path, std::string_view family);

/// Dataset schema expected by a model family.
std::string_view schema_for(std::string_view family);

/// Rebuilds X and x_names for a salamander-schema family:
/// summer (intercept, trtf, trtm, trtf_trtm),
/// pooled (intercept, season, trtf, trtm, trtf_trtm).
void apply_salamander_design(Dataset& data, std::string_view family);

/// Balanced crossed design: per experiment 20 females and 20 males, ten of
/// each species per sex, each animal paired with three partners of each
/// species (120 rows). Experiments 1 and 2 share animals; 3 uses new ones.
/// `experiments` lists the experiment codes to include.
Dataset salamander_design(const std::vector<int>& experiments);

/// Grouped one-way layout with `groups` x `size` rows and intercept only;
/// `covariates` extra standard-normal columns are drawn from `seed`.
Dataset grouped_design(int groups, int size, int covariates = 0, std::uint64_t seed = 1);

/// Spatial layout on a jittered square grid of n points over [0, extent]^2
/// with unit exposure.
Dataset spatial_design(int n, double extent, std::uint64_t seed = 1);

} // namespace ela
