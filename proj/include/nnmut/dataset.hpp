#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nnmut {

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

/// Feature matrix with class labels and a split tag per row.
///
/// Features are stored row-major, n rows of `dim` values. Labels lie in
/// [0, class_count). Every row carries exactly one split tag.
struct Dataset {
  std::size_t dim = 0;
  std::size_t class_count = 0;
  std::vector<double> features;
  std::vector<std::size_t> labels;
  std::vector<Split> splits;
  std::string provenance;
  /// Optional original label names, indexed by class id.
  std::vector<std::string> label_names;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
  [[nodiscard]] std::span<double> row(std::size_t i) { return {features.data() + i * dim, dim}; }

  /// Row indices carrying `split`, in storage order.
  [[nodiscard]] std::vector<std::size_t> indices(Split split) const;
  [[nodiscard]] std::size_t count(Split split) const;

  /// Throws DataError when an invariant does not hold.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

}  // namespace nnmut
