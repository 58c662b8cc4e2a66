#include "nnmut/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nnmut/error.hpp"
#include "nnmut/parallel.hpp"

namespace nnmut {

std::vector<Network> networks_of(std::span<const MutantRecord> pool) {
  std::vector<Network> out;
  out.reserve(pool.size());
  for (const auto& record : pool) out.push_back(record.network);
  return out;
}

std::vector<std::size_t> ids_of(std::span<const MutantRecord> pool) {
  std::vector<std::size_t> out;
  out.reserve(pool.size());
  for (const auto& record : pool) out.push_back(record.id);
  return out;
}

bool KillMatrix::any_kill(std::size_t m) const {
  const auto first = killed.begin() + static_cast<std::ptrdiff_t>(m * tests());
  return std::any_of(first, first + static_cast<std::ptrdiff_t>(tests()), [](auto v) { return v != 0; });
}

void KillMatrix::validate() const {
  if (killed.size() != mutants() * tests()) throw DataError("kill matrix size mismatch");
  if (pseudo_equivalent.size() != mutants()) throw DataError("pseudo-equivalence flags size mismatch");
  for (std::size_t m = 0; m < mutants(); ++m)
    if (pseudo_equivalent[m] != 0 && any_kill(m))
      throw DataError("mutant " + std::to_string(mutant_ids[m]) + " is flagged pseudo-equivalent but has a kill");
}

namespace {

void check_inputs(const Network& original, std::span<const Network> mutants, std::span<const std::size_t> ids,
                  const Dataset& data, const std::vector<std::size_t>& rows) {
  if (mutants.empty()) throw DataError("mutant pool is empty");
  if (ids.size() != mutants.size()) throw DataError("mutant id count does not match pool size");
  if (rows.empty()) throw DataError("test split is empty");
  if (original.input_dim() != data.dim) throw DataError("network input width does not match dataset");
  for (const auto& m : mutants)
    if (m.input_dim() != data.dim) throw DataError("mutant input width does not match dataset");
}

KillMatrix start_matrix(std::span<const std::size_t> ids, std::vector<std::size_t> rows) {
  KillMatrix km;
  km.mutant_ids.assign(ids.begin(), ids.end());
  km.test_indices = std::move(rows);
  km.killed.assign(km.mutants() * km.tests(), 0);
  km.pseudo_equivalent.assign(km.mutants(), 0);
  return km;
}

// Original prediction per test, or class_count when the original is wrong.
std::vector<std::size_t> killable_labels(const Network& original, const Dataset& data,
                                         const std::vector<std::size_t>& rows) {
  std::vector<std::size_t> out(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const auto label = predict_label(original, data.row(rows[t]));
    out[t] = label == data.labels[rows[t]] ? label : data.class_count;
  }
  return out;
}

void fill_row(KillMatrix& km, std::size_t m, const Network& mutant, const Dataset& data,
              const std::vector<std::size_t>& reference) {
  bool any = false;
  for (std::size_t t = 0; t < km.tests(); ++t) {
    if (reference[t] == data.class_count) continue;
    if (predict_label(mutant, data.row(km.test_indices[t])) != reference[t]) {
      km.killed[m * km.tests() + t] = 1;
      any = true;
    }
  }
  km.pseudo_equivalent[m] = any ? 0 : 1;
}

}  // namespace

KillMatrix kill_matrix(const Network& original, std::span<const Network> mutants,
                       std::span<const std::size_t> mutant_ids, const Dataset& data, Split split) {
  auto rows = data.indices(split);
  check_inputs(original, mutants, mutant_ids, data, rows);
  auto km = start_matrix(mutant_ids, std::move(rows));
  const auto reference = killable_labels(original, data, km.test_indices);
  const auto n = static_cast<std::ptrdiff_t>(mutants.size());
  NNMUT_OMP_PRAGMA("omp parallel for schedule(dynamic)")
  for (std::ptrdiff_t m = 0; m < n; ++m)
    fill_row(km, static_cast<std::size_t>(m), mutants[static_cast<std::size_t>(m)], data, reference);
  return km;
}

KillMatrix kill_matrix(const Network& original, std::span<const MutantRecord> pool, const Dataset& data,
                       Split split) {
  const auto nets = networks_of(pool);
  const auto ids = ids_of(pool);
  return kill_matrix(original, nets, ids, data, split);
}

double mutation_score(const KillMatrix& km, bool exclude_pseudo_equivalent) {
  km.validate();
  std::size_t killed = 0;
  std::size_t denominator = 0;
  for (std::size_t m = 0; m < km.mutants(); ++m) {
    if (km.any_kill(m)) ++killed;
    if (!(exclude_pseudo_equivalent && km.pseudo_equivalent[m] != 0)) ++denominator;
  }
  if (denominator == 0) throw DataError("no scorable mutants");
  return static_cast<double>(killed) / static_cast<double>(denominator);
}

std::vector<std::uint8_t> kill_bits(const KillMatrix& km, std::size_t m) {
  std::vector<std::uint8_t> bits((km.tests() + 7) / 8, 0);
  for (std::size_t t = 0; t < km.tests(); ++t)
    if (km.at(m, t)) bits[t / 8] |= static_cast<std::uint8_t>(1u << (t % 8));
  return bits;
}

LcrResult lcr(std::span<const double> sample, const Network& original, std::span<const Network> pool) {
  if (pool.empty()) throw DataError("mutant pool is empty");
  LcrResult r;
  r.reference_label = predict_label(original, sample);
  for (const auto& mutant : pool)
    if (predict_label(mutant, sample) != r.reference_label) ++r.label_changes;
  r.mutants = pool.size();
  r.lcr = static_cast<double>(r.label_changes) / static_cast<double>(r.mutants);
  return r;
}

namespace {

void check_samples(std::span<const std::vector<double>> samples, const Network& original) {
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].size() != original.input_dim())
      throw DataError("sample " + std::to_string(i) + " has " + std::to_string(samples[i].size()) +
                      " features, network expects " + std::to_string(original.input_dim()));
}

void check_pool(const Network& original, std::span<const Network> pool) {
  if (pool.empty()) throw DataError("mutant pool is empty");
  for (const auto& m : pool)
    if (m.input_dim() != original.input_dim()) throw DataError("mutant input width does not match original");
}

}  // namespace

std::vector<LcrResult> batch_lcr(std::span<const std::vector<double>> samples, const Network& original,
                                 std::span<const Network> pool) {
  check_samples(samples, original);
  check_pool(original, pool);
  std::vector<LcrResult> out(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  NNMUT_OMP_PRAGMA("omp parallel for schedule(dynamic)")
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = lcr(samples[static_cast<std::size_t>(i)], original, pool);
  return out;
}

void SprtConfig::validate() const {
  if (!(p0 > 0.0 && p0 < p1 && p1 < 1.0)) throw ConfigError("SPRT needs 0 < p0 < p1 < 1");
  if (!(alpha > 0.0 && alpha < 0.5)) throw ConfigError("SPRT alpha must lie in (0, 0.5)");
  if (!(beta > 0.0 && beta < 0.5)) throw ConfigError("SPRT beta must lie in (0, 0.5)");
  if (max_mutants == 0) throw ConfigError("SPRT max_mutants must be positive");
}

double SprtConfig::upper() const { return std::log((1.0 - beta) / alpha); }
double SprtConfig::lower() const { return std::log(beta / (1.0 - alpha)); }

double SprtConfig::llr(std::size_t k, std::size_t n) const {
  const auto changes = static_cast<double>(k);
  const auto same = static_cast<double>(n - k);
  return changes * std::log(p1 / p0) + same * std::log((1.0 - p1) / (1.0 - p0));
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  // Exact for constant data, where the interpolation would otherwise round.
  if (values[lo] == values[hi]) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

SprtConfig calibrate(std::span<const std::vector<double>> normal_samples, const Network& original,
                     std::span<const Network> pool, double q, double factor) {
  if (normal_samples.size() < 30) throw DataError("insufficient calibration data");
  if (!(factor > 1.0)) throw ConfigError("calibration factor must exceed 1");
  const auto results = batch_lcr(normal_samples, original, pool);
  std::vector<double> rates;
  rates.reserve(results.size());
  for (const auto& r : results) rates.push_back(r.lcr);

  SprtConfig cfg;
  const double floor = 1.0 / static_cast<double>(pool.size());
  cfg.p0 = std::max(quantile(std::move(rates), q), floor);
  // Keep p1 strictly inside (p0, 1).
  cfg.p1 = std::min(factor * cfg.p0, 0.5 * (cfg.p0 + 1.0));
  cfg.alpha = 0.05;
  cfg.beta = 0.05;
  cfg.max_mutants = pool.size();
  cfg.validate();
  return cfg;
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::normal: return "normal";
    case Verdict::adversarial: return "adversarial";
    case Verdict::undecided: return "undecided";
  }
  return "unknown";
}

Verdict fixed_budget_verdict(double full_pool_lcr, const SprtConfig& cfg) {
  return full_pool_lcr >= cfg.midpoint() ? Verdict::adversarial : Verdict::normal;
}

LcrReport detect(std::span<const double> sample, const Network& original, const MutantStream& stream,
                 const SprtConfig& cfg, std::size_t sample_id) {
  cfg.validate();
  LcrReport report;
  report.sample_id = sample_id;
  report.reference_label = predict_label(original, sample);
  const double upper = cfg.upper();
  const double lower = cfg.lower();
  std::size_t k = 0;
  std::size_t n = 0;
  auto finish = [&](Verdict verdict, bool forced) {
    report.verdict = verdict;
    report.forced = forced;
    report.mutants_evaluated = n;
    report.label_changes = k;
    report.lcr = n == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(n);
    return report;
  };
  while (n < cfg.max_mutants) {
    const Network* mutant = stream();
    if (mutant == nullptr) return finish(Verdict::undecided, false);
    ++n;
    if (predict_label(*mutant, sample) != report.reference_label) ++k;
    const double ratio = cfg.llr(k, n);
    if (ratio >= upper) return finish(Verdict::adversarial, false);
    if (ratio <= lower) return finish(Verdict::normal, false);
  }
  const double rate = static_cast<double>(k) / static_cast<double>(n);
  return finish(fixed_budget_verdict(rate, cfg), true);
}

LcrReport detect(std::span<const double> sample, const Network& original, std::span<const Network> pool,
                 const SprtConfig& cfg, std::size_t sample_id) {
  std::size_t next = 0;
  const MutantStream stream = [&]() -> const Network* { return next < pool.size() ? &pool[next++] : nullptr; };
  return detect(sample, original, stream, cfg, sample_id);
}

std::vector<LcrReport> batch_detect(std::span<const std::vector<double>> samples, const Network& original,
                                    std::span<const Network> pool, const SprtConfig& cfg) {
  cfg.validate();
  check_samples(samples, original);
  check_pool(original, pool);
  std::vector<LcrReport> out(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  NNMUT_OMP_PRAGMA("omp parallel for schedule(dynamic)")
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    out[idx] = detect(samples[idx], original, pool, cfg, idx);
  }
  return out;
}

FgsmResult fgsm(const Network& network, std::span<const double> sample, std::size_t label, double epsilon,
                const FeatureRange* range) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("FGSM epsilon must be non-negative");
  FgsmResult result;
  result.sample.assign(sample.begin(), sample.end());
  const auto grad = input_gradient(network, sample, label);
  result.zero_gradient = std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; });
  if (result.zero_gradient || epsilon == 0.0) return result;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (grad[i] > 0.0) result.sample[i] += epsilon;
    else if (grad[i] < 0.0) result.sample[i] -= epsilon;
    if (range != nullptr) result.sample[i] = std::clamp(result.sample[i], range->lo[i], range->hi[i]);
  }
  return result;
}

EpsilonSweep sweep_epsilon(const Network& network, const Dataset& data, Split split, std::span<const double> grid,
                           double target_rate, double confidence) {
  if (grid.empty()) throw ConfigError("epsilon grid is empty");
  const auto range = feature_range(data);
  std::vector<std::size_t> confident;
  std::vector<std::size_t> predicted;
  for (auto idx : data.indices(split)) {
    const auto probs = forward(network, data.row(idx));
    const auto label = argmax(probs);
    if (label == data.labels[idx] && probs[label] >= confidence) {
      confident.push_back(idx);
      predicted.push_back(label);
    }
  }
  if (confident.empty()) throw DataError("no confident, correctly classified samples in split");

  EpsilonSweep sweep;
  sweep.confident = confident.size();
  for (double eps : grid) {
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < confident.size(); ++i) {
      const auto adv = fgsm(network, data.row(confident[i]), predicted[i], eps, &range);
      if (predict_label(network, adv.sample) != predicted[i]) ++flipped;
    }
    sweep.epsilon = eps;
    sweep.flip_rate = static_cast<double>(flipped) / static_cast<double>(confident.size());
    if (sweep.flip_rate >= target_rate) {
      sweep.reached = true;
      break;
    }
  }
  return sweep;
}

std::vector<double> epsilon_grid(double step, std::size_t count) {
  std::vector<double> grid;
  grid.reserve(count);
  for (std::size_t i = 1; i <= count; ++i) grid.push_back(step * static_cast<double>(i));
  return grid;
}

double auroc(std::span<const double> negatives, std::span<const double> positives) {
  if (negatives.empty() || positives.empty()) throw DataError("AUROC needs both classes");
  double u = 0.0;
  for (double p : positives)
    for (double n : negatives) u += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return u / (static_cast<double>(negatives.size()) * static_cast<double>(positives.size()));
}

namespace serial {

KillMatrix kill_matrix(const Network& original, std::span<const Network> mutants,
                       std::span<const std::size_t> mutant_ids, const Dataset& data, Split split) {
  auto rows = data.indices(split);
  check_inputs(original, mutants, mutant_ids, data, rows);
  auto km = start_matrix(mutant_ids, std::move(rows));
  const auto reference = killable_labels(original, data, km.test_indices);
  for (std::size_t m = 0; m < mutants.size(); ++m) fill_row(km, m, mutants[m], data, reference);
  return km;
}

std::vector<LcrResult> batch_lcr(std::span<const std::vector<double>> samples, const Network& original,
                                 std::span<const Network> pool) {
  check_samples(samples, original);
  check_pool(original, pool);
  std::vector<LcrResult> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(lcr(s, original, pool));
  return out;
}

std::vector<LcrReport> batch_detect(std::span<const std::vector<double>> samples, const Network& original,
                                    std::span<const Network> pool, const SprtConfig& cfg) {
  cfg.validate();
  check_samples(samples, original);
  check_pool(original, pool);
  std::vector<LcrReport> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out.push_back(detect(samples[i], original, pool, cfg, i));
  return out;
}

}  // namespace serial

}  // namespace nnmut
