#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nnmut/dataset.hpp"

namespace nnmut {

enum class SyntheticKind { blobs, two_moons, spirals };

std::string_view to_string(SyntheticKind kind);
SyntheticKind synthetic_kind_from_string(std::string_view name);

/// Fractions for (train, val, test).
using SplitFractions = std::array<double, 3>;

inline constexpr SplitFractions kDefaultSplit = {0.6, 0.2, 0.2};

/// Integer split sizes for n rows using largest-remainder rounding. Ties in
/// the remainder go to the earlier split. Fractions must be non-negative and
/// sum to one.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& fractions);

/// Re-tags every row: a seeded permutation of the rows is cut into
/// consecutive train/val/test blocks of split_sizes().
void assign_splits(Dataset& data, const SplitFractions& fractions, std::uint64_t seed);

/// Two-class 2-D toy problems. Rows alternate class 0 / class 1, so class
/// counts differ by at most one. Gaussian noise with standard deviation
/// `noise` is added to each coordinate.
Dataset generate_synthetic(SyntheticKind kind, std::size_t n, double noise, std::uint64_t seed,
                           const SplitFractions& fractions = kDefaultSplit);

/// Reads a headered CSV. `label_column` names the categorical target; every
/// other column must be numeric. Label values are re-indexed densely in
/// lexicographic order of their text.
Dataset load_csv(const std::filesystem::path& path, std::string_view label_column,
                 const SplitFractions& fractions, std::uint64_t seed);

struct FeatureRange {
  std::vector<double> lo;
  std::vector<double> hi;
};

/// Per-feature observed minimum and maximum over all rows.
FeatureRange feature_range(const Dataset& data);

enum class DataMutationKind { label_error, data_missing, data_repetition, noise_perturbation, data_shuffle };

inline constexpr std::array<DataMutationKind, 5> kAllDataMutationKinds = {
    DataMutationKind::label_error, DataMutationKind::data_missing, DataMutationKind::data_repetition,
    DataMutationKind::noise_perturbation, DataMutationKind::data_shuffle};

std::string_view to_string(DataMutationKind kind);
DataMutationKind data_mutation_kind_from_string(std::string_view name);

struct DataMutationSpec {
  DataMutationKind kind = DataMutationKind::label_error;
  double rate = 0.0;
  double sigma = 0.0;  // noise_perturbation only
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const DataMutationSpec&) const = default;
};

/// Positions (into the train-row list) chosen by a mutation: ceil(rate * n)
/// distinct positions, sorted ascending. Pure function of (seed, rate, n).
std::vector<std::size_t> select_positions(std::uint64_t seed, double rate, std::size_t n);

/// Applies a data mutation to the train split. Val and test rows are copied
/// through untouched.
Dataset mutate_data(const Dataset& data, const DataMutationSpec& spec);

}  // namespace nnmut
