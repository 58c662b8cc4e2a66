#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nnmut/data.hpp"
#include "nnmut/mutation.hpp"
#include "nnmut/nn.hpp"

namespace nnmut {

/// Extracts the networks of a pool, in pool order.
std::vector<Network> networks_of(std::span<const MutantRecord> pool);
std::vector<std::size_t> ids_of(std::span<const MutantRecord> pool);

// ---------------------------------------------------------------------------
// Kill matrix and mutation score
// ---------------------------------------------------------------------------

/// killed(m, t) holds when the original classifies test t correctly and
/// mutant m predicts a different label on it. A mutant with no kill at all
/// is pseudo-equivalent.
struct KillMatrix {
  std::vector<std::size_t> mutant_ids;
  std::vector<std::size_t> test_indices;  // dataset row indices
  std::vector<std::uint8_t> killed;       // row-major, mutants x tests
  std::vector<std::uint8_t> pseudo_equivalent;

  [[nodiscard]] std::size_t mutants() const { return mutant_ids.size(); }
  [[nodiscard]] std::size_t tests() const { return test_indices.size(); }
  [[nodiscard]] bool at(std::size_t m, std::size_t t) const { return killed[m * tests() + t] != 0; }
  [[nodiscard]] bool any_kill(std::size_t m) const;

  /// Throws DataError when shapes disagree or a pseudo-equivalent row has a kill.
  void validate() const;

  bool operator==(const KillMatrix&) const = default;
};

KillMatrix kill_matrix(const Network& original, std::span<const Network> mutants,
                       std::span<const std::size_t> mutant_ids, const Dataset& data, Split split);
KillMatrix kill_matrix(const Network& original, std::span<const MutantRecord> pool, const Dataset& data, Split split);

/// Killed mutants over all mutants, or over non-pseudo-equivalent mutants
/// when `exclude_pseudo_equivalent` is set.
double mutation_score(const KillMatrix& km, bool exclude_pseudo_equivalent);

/// Per-mutant bitset: bit t lives in byte t / 8 at position t % 8 (LSB first).
std::vector<std::uint8_t> kill_bits(const KillMatrix& km, std::size_t m);

// ---------------------------------------------------------------------------
// Label change rate
// ---------------------------------------------------------------------------

struct LcrResult {
  std::size_t reference_label = 0;  // original model's prediction
  std::size_t label_changes = 0;
  std::size_t mutants = 0;
  double lcr = 0.0;
  bool operator==(const LcrResult&) const = default;
};

LcrResult lcr(std::span<const double> sample, const Network& original, std::span<const Network> pool);

/// LCR for every sample. Parallel over samples.
std::vector<LcrResult> batch_lcr(std::span<const std::vector<double>> samples, const Network& original,
                                 std::span<const Network> pool);

// ---------------------------------------------------------------------------
// Sequential detection
// ---------------------------------------------------------------------------

struct SprtConfig {
  double p0 = 0.05;  // LCR of a normal sample under H0
  double p1 = 0.15;  // LCR of an adversarial sample under H1
  double alpha = 0.05;
  double beta = 0.05;
  std::size_t max_mutants = 200;

  void validate() const;
  /// log((1 - beta) / alpha): accept H1 at or above.
  [[nodiscard]] double upper() const;
  /// log(beta / (1 - alpha)): accept H0 at or below.
  [[nodiscard]] double lower() const;
  /// Log-likelihood ratio after k label changes in n mutants.
  [[nodiscard]] double llr(std::size_t k, std::size_t n) const;
  /// Threshold for forced and fixed-budget decisions.
  [[nodiscard]] double midpoint() const { return 0.5 * (p0 + p1); }

  bool operator==(const SprtConfig&) const = default;
};

/// Type-7 (linear interpolation) sample quantile; q in [0, 1].
double quantile(std::vector<double> values, double q);

/// Suggests an SPRT configuration from the LCRs of known-normal samples:
/// p0 = max(q-quantile, 1 / |pool|), p1 = factor * p0 (kept below 1),
/// alpha = beta = 0.05, max_mutants = |pool|.
SprtConfig calibrate(std::span<const std::vector<double>> normal_samples, const Network& original,
                     std::span<const Network> pool, double q, double factor = 3.0);

enum class Verdict { normal, adversarial, undecided };

std::string_view to_string(Verdict verdict);

struct LcrReport {
  std::size_t sample_id = 0;
  double lcr = 0.0;
  std::size_t mutants_evaluated = 0;
  std::size_t label_changes = 0;
  Verdict verdict = Verdict::undecided;
  std::size_t reference_label = 0;
  /// Budget reached without an SPRT decision; verdict from the midpoint rule.
  bool forced = false;
  bool operator==(const LcrReport&) const = default;
};

/// Yields the next mutant, or nullptr once exhausted.
using MutantStream = std::function<const Network*()>;

/// Wald's SPRT over mutants drawn one at a time from the stream.
LcrReport detect(std::span<const double> sample, const Network& original, const MutantStream& stream,
                 const SprtConfig& cfg, std::size_t sample_id = 0);
LcrReport detect(std::span<const double> sample, const Network& original, std::span<const Network> pool,
                 const SprtConfig& cfg, std::size_t sample_id = 0);

/// detect() for every sample. Parallel over samples; sample ids are positions.
std::vector<LcrReport> batch_detect(std::span<const std::vector<double>> samples, const Network& original,
                                    std::span<const Network> pool, const SprtConfig& cfg);

/// Fixed-budget rule on a full-pool LCR: adversarial when lcr >= midpoint.
Verdict fixed_budget_verdict(double full_pool_lcr, const SprtConfig& cfg);

// ---------------------------------------------------------------------------
// Adversarial samples for evaluation
// ---------------------------------------------------------------------------

struct FgsmResult {
  std::vector<double> sample;
  bool zero_gradient = false;
};

/// sample + epsilon * sign(dLoss/dInput), clipped to `range` when given.
FgsmResult fgsm(const Network& network, std::span<const double> sample, std::size_t label, double epsilon,
                const FeatureRange* range = nullptr);

struct EpsilonSweep {
  double epsilon = 0.0;
  double flip_rate = 0.0;
  std::size_t confident = 0;
  bool reached = false;
};

/// Smallest epsilon on `grid` (ascending) whose FGSM flips at least
/// `target_rate` of the confident, correctly classified rows of `split`.
/// Confident means top-class probability >= `confidence`. When no grid
/// value reaches the target, the last grid value is returned with reached = false.
EpsilonSweep sweep_epsilon(const Network& network, const Dataset& data, Split split, std::span<const double> grid,
                           double target_rate = 0.7, double confidence = 0.8);

/// Evenly spaced grid step, 2*step, ..., count*step.
std::vector<double> epsilon_grid(double step, std::size_t count);

/// Area under the ROC curve of `positives` vs `negatives` scores, ties
/// counted as one half (Mann-Whitney U / (n_pos * n_neg)).
double auroc(std::span<const double> negatives, std::span<const double> positives);

namespace serial {
KillMatrix kill_matrix(const Network& original, std::span<const Network> mutants,
                       std::span<const std::size_t> mutant_ids, const Dataset& data, Split split);
std::vector<LcrResult> batch_lcr(std::span<const std::vector<double>> samples, const Network& original,
                                 std::span<const Network> pool);
std::vector<LcrReport> batch_detect(std::span<const std::vector<double>> samples, const Network& original,
                                    std::span<const Network> pool, const SprtConfig& cfg);
}  // namespace serial

}  // namespace nnmut
