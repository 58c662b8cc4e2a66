#include "nnmut/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nnmut/error.hpp"

namespace nnmut {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val" || name == "validation") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == split) out.push_back(i);
  return out;
}

std::size_t Dataset::count(Split split) const {
  return static_cast<std::size_t>(std::count(splits.begin(), splits.end(), split));
}

void Dataset::validate() const {
  if (dim == 0) throw DataError("dataset has no feature columns");
  if (class_count < 2) throw DataError("dataset needs at least two classes");
  if (labels.empty()) throw DataError("empty dataset");
  if (features.size() != labels.size() * dim) throw DataError("feature matrix size does not match row count");
  if (splits.size() != labels.size()) throw DataError("split tag count does not match row count");
  for (auto label : labels)
    if (label >= class_count) throw DataError("label " + std::to_string(label) + " outside class range");
  for (std::size_t i = 0; i < features.size(); ++i)
    if (!std::isfinite(features[i]))
      throw DataError("non-finite feature at row " + std::to_string(i / dim) + ", column " +
                      std::to_string(i % dim));
  if (!label_names.empty() && label_names.size() != class_count)
    throw DataError("label_names length does not match class_count");
}

}  // namespace nnmut
