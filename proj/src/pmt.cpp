#include "nnmut/pmt.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <type_traits>

#include "nnmut/error.hpp"
#include "nnmut/parallel.hpp"
#include "nnmut/rng.hpp"

namespace nnmut {

const std::array<std::string, MutantFeatures::kWidth>& MutantFeatures::column_names() {
  static const std::array<std::string, kWidth> names = [] {
    std::array<std::string, kWidth> out;
    std::size_t i = 0;
    for (auto op : kAllModelOperators) out[i++] = "op_" + std::string(to_string(op));
    for (auto kind : kAllDataMutationKinds) out[i++] = "op_" + std::string(to_string(kind));
    for (auto kind : kAllProgramMutationKinds) out[i++] = "op_" + std::string(to_string(kind));
    out[i++] = "layer_position";
    out[i++] = "perturbation_magnitude";
    out[i++] = "weight_delta_norm";
    out[i++] = "gate_accuracy_drop";
    return out;
  }();
  return names;
}

std::vector<double> MutantFeatures::as_vector(bool include_accuracy_drop) const {
  std::vector<double> out(operator_onehot.begin(), operator_onehot.end());
  out.push_back(layer_position);
  out.push_back(perturbation_magnitude);
  out.push_back(weight_delta_norm);
  out.push_back(include_accuracy_drop ? gate_accuracy_drop : 0.0);
  return out;
}

namespace {

std::size_t onehot_slot(const OperatorSpec& op) {
  return std::visit(
      [](const auto& spec) -> std::size_t {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, ModelMutationSpec>) return static_cast<std::size_t>(spec.kind);
        else if constexpr (std::is_same_v<T, DataMutationSpec>) return 4 + static_cast<std::size_t>(spec.kind);
        else return 9 + static_cast<std::size_t>(spec.kind);
      },
      op);
}

double magnitude(const OperatorSpec& op) {
  return std::visit(
      [](const auto& spec) -> double {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, ModelMutationSpec>) {
          return spec.kind == ModelOperator::GF ? spec.gamma * spec.sigma : spec.gamma;
        } else if constexpr (std::is_same_v<T, DataMutationSpec>) {
          return spec.rate;
        } else {
          if (spec.kind == ProgramMutationKind::init_skew || spec.kind == ProgramMutationKind::learning_rate_scale)
            return std::abs(std::log(spec.factor));
          return 1.0;
        }
      },
      op);
}

}  // namespace

MutantFeatures extract_features(const MutantRecord& record, const Network& original, double baseline_accuracy) {
  MutantFeatures f;
  f.operator_onehot[onehot_slot(record.op)] = 1.0;
  f.perturbation_magnitude = magnitude(record.op);
  f.gate_accuracy_drop = baseline_accuracy - record.accuracy;

  if (!record.network.same_architecture(original)) {
    if (record.origin == MutantOrigin::model_level)
      throw DataError("model-level mutant " + std::to_string(record.id) + " does not match the original architecture");
    f.weight_delta_norm = 1.0;
    return f;
  }

  const auto& mine = record.network.layers();
  const auto& base = original.layers();
  const double depth_scale = mine.size() > 1 ? 1.0 / static_cast<double>(mine.size() - 1) : 0.0;
  double delta_sq = 0.0;
  double base_sq = 0.0;
  double depth_sum = 0.0;
  std::size_t changed = 0;
  auto visit = [&](double a, double b, std::size_t layer) {
    base_sq += b * b;
    if (a != b) {
      delta_sq += (a - b) * (a - b);
      depth_sum += static_cast<double>(layer) * depth_scale;
      ++changed;
    }
  };
  for (std::size_t l = 0; l < mine.size(); ++l) {
    for (std::size_t j = 0; j < mine[l].weights.size(); ++j) visit(mine[l].weights[j], base[l].weights[j], l);
    for (std::size_t j = 0; j < mine[l].biases.size(); ++j) visit(mine[l].biases[j], base[l].biases[j], l);
  }
  if (changed > 0) {
    f.layer_position = record.origin == MutantOrigin::model_level ? depth_sum / static_cast<double>(changed) : 0.0;
    const double delta = std::sqrt(delta_sq);
    f.weight_delta_norm = base_sq > 0.0 ? delta / std::sqrt(base_sq) : delta;
  }
  return f;
}

std::vector<MutantFeatures> extract_all(std::span<const MutantRecord> pool, const Network& original,
                                        double baseline_accuracy) {
  std::vector<MutantFeatures> out(pool.size());
  std::vector<std::exception_ptr> failures(pool.size());
  const auto n = static_cast<std::ptrdiff_t>(pool.size());
  NNMUT_OMP_PRAGMA("omp parallel for")
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      out[idx] = extract_features(pool[idx], original, baseline_accuracy);
    } catch (...) {
      failures[idx] = std::current_exception();
    }
  }
  for (const auto& e : failures)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Numerically stable -[y log p + (1-y) log(1-p)] from the logit.
double logistic_loss(double z, bool y) {
  const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return softplus - (y ? z : 0.0);
}

double mean_loss(const std::vector<std::vector<double>>& x, std::span<const std::uint8_t> y,
                 const std::vector<double>& w, double b) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[i][j];
    total += logistic_loss(z, y[i] != 0);
  }
  return total / static_cast<double>(x.size());
}

}  // namespace

PmtModel train_predictor(std::span<const std::vector<double>> features, std::span<const std::uint8_t> killed,
                         const PmtTrainingOptions& options) {
  if (features.size() != killed.size()) throw DataError("feature and label counts differ");
  if (features.size() < 20) throw ConfigError("insufficient mutants: need at least 20 labeled mutants");
  const auto positives = static_cast<std::size_t>(std::count_if(killed.begin(), killed.end(), [](auto v) { return v != 0; }));
  if (positives == 0 || positives == killed.size()) throw DataError("degenerate training set");
  if (!(options.learning_rate > 0.0)) throw ConfigError("pmt learning rate must be positive");
  const auto width = features.front().size();
  for (const auto& f : features) {
    if (f.size() != width) throw DataError("feature rows have different widths");
    for (double v : f)
      if (!std::isfinite(v)) throw DataError("non-finite feature value");
  }

  const auto n = static_cast<double>(features.size());
  std::vector<double> mean(width, 0.0);
  std::vector<double> scale(width, 0.0);
  for (const auto& f : features)
    for (std::size_t j = 0; j < width; ++j) mean[j] += f[j] / n;
  for (const auto& f : features)
    for (std::size_t j = 0; j < width; ++j) scale[j] += (f[j] - mean[j]) * (f[j] - mean[j]) / n;
  for (auto& s : scale) s = s > 0.0 ? std::sqrt(s) : 0.0;

  std::vector<std::vector<double>> x;
  x.reserve(features.size());
  for (const auto& f : features) {
    std::vector<double> row(width, 0.0);
    for (std::size_t j = 0; j < width; ++j)
      if (scale[j] > 0.0) row[j] = (f[j] - mean[j]) / scale[j];
    x.push_back(std::move(row));
  }

  auto rng = Rng(options.seed).split("pmt-init");
  std::vector<double> w(width);
  for (std::size_t j = 0; j < width; ++j) w[j] = scale[j] > 0.0 ? rng.uniform(-0.01, 0.01) : 0.0;
  double b = 0.0;
  double step = options.learning_rate;
  double current = mean_loss(x, killed, w, b);

  PmtModel model;
  model.seed = options.seed;
  model.epochs = options.epochs;
  model.learning_rate = options.learning_rate;
  std::vector<double> gw(width);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = b;
      for (std::size_t j = 0; j < width; ++j) z += w[j] * x[i][j];
      const double err = sigmoid(z) - (killed[i] != 0 ? 1.0 : 0.0);
      for (std::size_t j = 0; j < width; ++j) gw[j] += err * x[i][j] / n;
      gb += err / n;
    }
    // Halve the step until the loss does not increase.
    for (int tries = 0; tries < 40; ++tries) {
      std::vector<double> w_next(width);
      for (std::size_t j = 0; j < width; ++j) w_next[j] = w[j] - step * gw[j];
      const double b_next = b - step * gb;
      const double next = mean_loss(x, killed, w_next, b_next);
      if (next <= current) {
        w = std::move(w_next);
        b = b_next;
        current = next;
        break;
      }
      step *= 0.5;
    }
    model.loss_history.push_back(current);
  }

  model.weights.assign(width, 0.0);
  model.bias = b;
  for (std::size_t j = 0; j < width; ++j) {
    if (scale[j] == 0.0) continue;
    model.weights[j] = w[j] / scale[j];
    model.bias -= w[j] * mean[j] / scale[j];
  }
  return model;
}

PmtPrediction predict_killed(const PmtModel& model, std::span<const double> features) {
  if (features.size() != model.weights.size())
    throw DataError("feature width " + std::to_string(features.size()) + " does not match model width " +
                    std::to_string(model.weights.size()));
  double z = model.bias;
  for (std::size_t j = 0; j < features.size(); ++j) z += model.weights[j] * features[j];
  PmtPrediction p;
  p.probability = sigmoid(z);
  p.killed = p.probability >= 0.5;
  return p;
}

PmtMetrics evaluate_pmt(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth,
                        std::size_t pool_size, double fraction_executed) {
  if (predicted.size() != truth.size()) throw DataError("prediction and ground-truth lengths differ");
  if (truth.empty()) throw DataError("no predictions to evaluate");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool t = truth[i] != 0;
    if (p && t) ++tp;
    else if (p && !t) ++fp;
    else if (!p && t) ++fn;
    else ++tn;
  }
  const auto total = static_cast<double>(truth.size());
  PmtMetrics m;
  m.accuracy = static_cast<double>(tp + tn) / total;
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.baseline_accuracy = static_cast<double>(std::max(tp + fn, tn + fp)) / total;
  m.executions_avoided = static_cast<double>(pool_size) * (1.0 - fraction_executed);
  return m;
}

namespace serial {

std::vector<MutantFeatures> extract_all(std::span<const MutantRecord> pool, const Network& original,
                                        double baseline_accuracy) {
  std::vector<MutantFeatures> out;
  out.reserve(pool.size());
  for (const auto& record : pool) out.push_back(extract_features(record, original, baseline_accuracy));
  return out;
}

}  // namespace serial

}  // namespace nnmut
