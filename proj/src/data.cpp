#include "nnmut/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

#include "nnmut/csv.hpp"
#include "nnmut/error.hpp"
#include "nnmut/rng.hpp"

namespace nnmut {

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::blobs: return "blobs";
    case SyntheticKind::two_moons: return "two_moons";
    case SyntheticKind::spirals: return "spirals";
  }
  return "unknown";
}

SyntheticKind synthetic_kind_from_string(std::string_view name) {
  if (name == "blobs") return SyntheticKind::blobs;
  if (name == "two_moons" || name == "moons") return SyntheticKind::two_moons;
  if (name == "spirals") return SyntheticKind::spirals;
  throw ConfigError("unknown synthetic dataset '" + std::string(name) + "'");
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = fractions[i] * static_cast<double>(n);
    // Absorb representation error such as 0.3 * 10 = 2.9999999999999996.
    const double whole = std::floor(quota + 1e-9);
    sizes[i] = static_cast<std::size_t>(whole);
    remainder[i] = std::max(0.0, quota - whole);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

void assign_splits(Dataset& data, const SplitFractions& fractions, std::uint64_t seed) {
  const auto sizes = split_sizes(data.size(), fractions);
  const auto order = Rng(seed).split("split").permutation(data.size());
  data.splits.assign(data.size(), Split::train);
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k < sizes[0]) data.splits[order[k]] = Split::train;
    else if (k < sizes[0] + sizes[1]) data.splits[order[k]] = Split::val;
    else data.splits[order[k]] = Split::test;
  }
}

Dataset generate_synthetic(SyntheticKind kind, std::size_t n, double noise, std::uint64_t seed,
                           const SplitFractions& fractions) {
  if (n < 4) throw ConfigError("synthetic dataset needs n >= 4");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("synthetic noise must be non-negative");

  Dataset data;
  data.dim = 2;
  data.class_count = 2;
  data.provenance = std::string(to_string(kind)) + " n=" + std::to_string(n) + " noise=" + csv::format_real(noise) +
                    " seed=" + std::to_string(seed);
  data.features.reserve(2 * n);
  data.labels.reserve(n);

  auto rng = Rng(seed).split("synthetic");
  const std::size_t per_class[2] = {n - n / 2, n / 2};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    const std::size_t j = i / 2;
    const double denom = per_class[label] > 1 ? static_cast<double>(per_class[label] - 1) : 1.0;
    const double t = static_cast<double>(j) / denom;  // in [0, 1]
    double x = 0.0;
    double y = 0.0;
    switch (kind) {
      case SyntheticKind::blobs:
        x = label == 0 ? -1.5 : 1.5;
        y = label == 0 ? -1.5 : 1.5;
        break;
      case SyntheticKind::two_moons: {
        const double a = std::numbers::pi * t;
        if (label == 0) {
          x = std::cos(a);
          y = std::sin(a);
        } else {
          x = 1.0 - std::cos(a);
          y = 0.5 - std::sin(a);
        }
        break;
      }
      case SyntheticKind::spirals: {
        const double r = 0.2 + 0.8 * t;
        const double a = 3.0 * std::numbers::pi * t + (label == 0 ? 0.0 : std::numbers::pi);
        x = r * std::cos(a);
        y = r * std::sin(a);
        break;
      }
    }
    x += noise * rng.normal();
    y += noise * rng.normal();
    data.features.push_back(x);
    data.features.push_back(y);
    data.labels.push_back(label);
  }
  data.splits.assign(n, Split::train);
  assign_splits(data, fractions, seed);
  return data;
}

Dataset load_csv(const std::filesystem::path& path, std::string_view label_column, const SplitFractions& fractions,
                 std::uint64_t seed) {
  const auto table = csv::read(path);
  if (table.header.empty()) throw DataError("empty dataset");
  const auto label_idx = table.column(label_column);
  if (label_idx == csv::Table::npos) throw DataError("unknown label column '" + std::string(label_column) + "'");
  if (table.header.size() < 2) throw DataError("csv has no feature columns");
  if (table.rows.empty()) throw DataError("empty dataset");

  std::map<std::string, std::size_t> label_ids;
  for (const auto& row : table.rows) label_ids.emplace(row[label_idx], 0);
  Dataset data;
  for (auto& [name, id] : label_ids) {
    id = data.label_names.size();
    data.label_names.push_back(name);
  }
  data.class_count = label_ids.size();
  data.dim = table.header.size() - 1;
  data.provenance = "csv " + path.filename().string();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == label_idx) continue;
      double value = 0.0;
      if (!csv::parse_real(row[c], value))
        throw DataError("csv data row " + std::to_string(r + 1) + ", column '" + table.header[c] +
                        "': non-numeric value '" + row[c] + "'");
      data.features.push_back(value);
    }
    data.labels.push_back(label_ids.at(row[label_idx]));
  }
  data.splits.assign(data.labels.size(), Split::train);
  assign_splits(data, fractions, seed);
  data.validate();
  return data;
}

FeatureRange feature_range(const Dataset& data) {
  if (data.size() == 0) throw DataError("empty dataset");
  FeatureRange range;
  range.lo.assign(data.row(0).begin(), data.row(0).end());
  range.hi = range.lo;
  for (std::size_t i = 1; i < data.size(); ++i) {
    const auto row = data.row(i);
    for (std::size_t c = 0; c < data.dim; ++c) {
      range.lo[c] = std::min(range.lo[c], row[c]);
      range.hi[c] = std::max(range.hi[c], row[c]);
    }
  }
  return range;
}

std::string_view to_string(DataMutationKind kind) {
  switch (kind) {
    case DataMutationKind::label_error: return "label_error";
    case DataMutationKind::data_missing: return "data_missing";
    case DataMutationKind::data_repetition: return "data_repetition";
    case DataMutationKind::noise_perturbation: return "noise_perturbation";
    case DataMutationKind::data_shuffle: return "data_shuffle";
  }
  return "unknown";
}

DataMutationKind data_mutation_kind_from_string(std::string_view name) {
  for (auto kind : kAllDataMutationKinds)
    if (to_string(kind) == name) return kind;
  throw ConfigError("unknown data mutation '" + std::string(name) + "'");
}

void DataMutationSpec::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("data mutation rate must lie in [0, 1]");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("data mutation sigma must be non-negative");
}

std::vector<std::size_t> select_positions(std::uint64_t seed, double rate, std::size_t n) {
  const auto k = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
  auto picked = Rng(seed).split("select").sample_without_replacement(n, std::min(k, n));
  std::sort(picked.begin(), picked.end());
  return picked;
}

Dataset mutate_data(const Dataset& data, const DataMutationSpec& spec) {
  spec.validate();
  data.validate();
  const auto train_rows = data.indices(Split::train);
  if (train_rows.empty()) throw DataError("train split is empty");
  const auto positions = select_positions(spec.seed, spec.rate, train_rows.size());
  std::vector<std::size_t> rows;
  rows.reserve(positions.size());
  for (auto p : positions) rows.push_back(train_rows[p]);

  Dataset out = data;
  if (rows.empty()) return out;
  const Rng base(spec.seed);

  switch (spec.kind) {
    case DataMutationKind::label_error: {
      auto rng = base.split("label");
      for (auto r : rows) {
        auto replacement = static_cast<std::size_t>(rng.below(data.class_count - 1));
        if (replacement >= data.labels[r]) ++replacement;
        out.labels[r] = replacement;
      }
      break;
    }
    case DataMutationKind::data_missing: {
      if (rows.size() == train_rows.size()) throw DataError("train split would be empty");
      std::vector<bool> drop(data.size(), false);
      for (auto r : rows) drop[r] = true;
      out.features.clear();
      out.labels.clear();
      out.splits.clear();
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (drop[i]) continue;
        const auto row = data.row(i);
        out.features.insert(out.features.end(), row.begin(), row.end());
        out.labels.push_back(data.labels[i]);
        out.splits.push_back(data.splits[i]);
      }
      break;
    }
    case DataMutationKind::data_repetition:
      for (auto r : rows) {
        const auto row = data.row(r);
        out.features.insert(out.features.end(), row.begin(), row.end());
        out.labels.push_back(data.labels[r]);
        out.splits.push_back(Split::train);
      }
      break;
    case DataMutationKind::noise_perturbation: {
      if (spec.sigma == 0.0) break;
      auto rng = base.split("noise");
      for (auto r : rows)
        for (auto& v : out.row(r)) v += spec.sigma * rng.normal();
      break;
    }
    case DataMutationKind::data_shuffle: {
      const auto perm = base.split("shuffle").permutation(rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto src = rows[perm[k]];
        const auto dst = rows[k];
        const auto from = data.row(src);
        std::copy(from.begin(), from.end(), out.row(dst).begin());
        out.labels[dst] = data.labels[src];
      }
      break;
    }
  }
  out.validate();
  return out;
}

}  // namespace nnmut
