#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "nnmut/campaign.hpp"
#include "nnmut/error.hpp"
#include "nnmut/parallel.hpp"
#include "nnmut/pmt.hpp"

using namespace nnmut;

namespace {

struct Version {
  CampaignConfig cfg;
  Dataset data;
  Network net;
  double baseline = 0.0;
  PoolResult pool;
  std::vector<std::uint8_t> killed;
  std::vector<MutantFeatures> features;

  explicit Version(std::uint64_t seed) : cfg(reference_config()) {
    cfg.override_seed(seed);
    data = make_dataset(cfg);
    net = run_train(cfg, data).network;
    baseline = accuracy(net, data, cfg.mutation.gate_split);
    pool = generate_pool(net, data, cfg.mutation.pool_config());
    const auto km = kill_matrix(net, pool.pool, data, cfg.score.split);
    for (std::size_t m = 0; m < km.mutants(); ++m) killed.push_back(km.any_kill(m) ? 1 : 0);
    features = extract_all(pool.pool, net, baseline);
  }

  [[nodiscard]] std::vector<std::vector<double>> rows() const {
    std::vector<std::vector<double>> out;
    for (const auto& f : features) out.push_back(f.as_vector());
    return out;
  }
};

const Version& version_a() {
  static const Version v(3);
  return v;
}

const Version& version_b() {
  static const Version v(5);
  return v;
}

MutantRecord model_record(const Network& net, const ModelMutationSpec& spec, double acc) {
  MutantRecord r;
  r.op = spec;
  r.network = apply_model_operator(net, spec);
  r.accuracy = acc;
  r.retained = true;
  return r;
}

std::vector<std::vector<double>> line(std::size_t n) {
  std::vector<std::vector<double>> x;
  for (std::size_t i = 0; i < n; ++i) x.push_back({static_cast<double>(i) - static_cast<double>(n) / 2.0 + 0.5});
  return x;
}

std::vector<std::uint8_t> threshold_labels(const std::vector<std::vector<double>>& x) {
  std::vector<std::uint8_t> y;
  for (const auto& r : x) y.push_back(r[0] > 0 ? 1 : 0);
  return y;
}

}  // namespace

TEST(PmtFeatures, CopyOfOriginalHasNoDelta) {
  const auto& A = version_a();
  auto spec = ModelMutationSpec::make(ModelOperator::GF, 0.1, 0.5);
  MutantRecord copy;
  copy.op = spec;
  copy.network = A.net;
  copy.accuracy = A.baseline;
  const auto f = extract_features(copy, A.net, A.baseline);
  EXPECT_EQ(f.weight_delta_norm, 0.0);
  EXPECT_EQ(f.gate_accuracy_drop, 0.0);
  EXPECT_EQ(f.layer_position, 0.0);
  EXPECT_DOUBLE_EQ(f.perturbation_magnitude, 0.05);
  EXPECT_EQ(f.operator_onehot[0], 1.0);
  EXPECT_EQ(std::accumulate(f.operator_onehot.begin(), f.operator_onehot.end(), 0.0), 1.0);
}

TEST(PmtFeatures, GaussianFuzzingExample) {
  const auto& A = version_a();
  const auto r = model_record(A.net, ModelMutationSpec::make(ModelOperator::GF, 0.1, 0.5, 9), A.baseline - 0.02);
  const auto f = extract_features(r, A.net, A.baseline);
  EXPECT_DOUBLE_EQ(f.perturbation_magnitude, 0.05);
  EXPECT_NEAR(f.gate_accuracy_drop, 0.02, 1e-15);
  EXPECT_GT(f.weight_delta_norm, 0.0);
  EXPECT_GE(f.layer_position, 0.0);
  EXPECT_LE(f.layer_position, 1.0);
  const auto v = f.as_vector();
  ASSERT_EQ(v.size(), MutantFeatures::kWidth);
  EXPECT_EQ(v.back(), f.gate_accuracy_drop);
  EXPECT_EQ(f.as_vector(false).back(), 0.0);
  EXPECT_EQ(MutantFeatures::column_names().back(), "gate_accuracy_drop");
}

TEST(PmtFeatures, OneHotSlotsCoverEveryOperatorFamily) {
  const auto& A = version_a();
  MutantRecord data_mutant;
  data_mutant.origin = MutantOrigin::source_level_data;
  data_mutant.op = DataMutationSpec{DataMutationKind::data_shuffle, 0.2, 0};
  data_mutant.network = A.net;
  EXPECT_EQ(extract_features(data_mutant, A.net, A.baseline).operator_onehot[4 + 4], 1.0);

  MutantRecord program_mutant;
  program_mutant.origin = MutantOrigin::source_level_program;
  program_mutant.op = ProgramMutationSpec{ProgramMutationKind::layer_removal};
  Layer out(2, 2, Activation::softmax);
  program_mutant.network = Network(2, 2, {out});
  const auto f = extract_features(program_mutant, A.net, A.baseline);
  EXPECT_EQ(f.weight_delta_norm, 1.0);
  EXPECT_EQ(f.perturbation_magnitude, 1.0);
  EXPECT_EQ(std::accumulate(f.operator_onehot.begin(), f.operator_onehot.end(), 0.0), 1.0);
  EXPECT_EQ(f.operator_onehot[9 + static_cast<std::size_t>(ProgramMutationKind::layer_removal)], 1.0);
}

TEST(PmtFeatures, ParallelMatchesSerial) {
  const auto& A = version_a();
  const int saved = max_threads();
  set_threads(4);
  EXPECT_EQ(extract_all(A.pool.pool, A.net, A.baseline), serial::extract_all(A.pool.pool, A.net, A.baseline));
  set_threads(saved);
}

TEST(PmtPredictor, ZeroWeightModelPredictsOneHalf) {
  PmtModel m;
  m.weights.assign(MutantFeatures::kWidth, 0.0);
  const std::vector<double> f(MutantFeatures::kWidth, 3.0);
  const auto p = predict_killed(m, f);
  EXPECT_EQ(p.probability, 0.5);
  EXPECT_TRUE(p.killed);
  EXPECT_THROW(predict_killed(m, std::vector<double>(3, 0.0)), DataError);
}

TEST(PmtPredictor, ProbabilityRisesWithAccuracyDropWhenItsWeightIsPositive) {
  PmtModel m;
  m.weights.assign(MutantFeatures::kWidth, 0.0);
  m.weights.back() = 2.0;
  m.bias = -0.1;
  std::vector<double> f(MutantFeatures::kWidth, 0.0);
  double prev = 0.0;
  for (double drop : {0.0, 0.01, 0.05, 0.2, 1.0}) {
    f.back() = drop;
    const double p = predict_killed(m, f).probability;
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(PmtPredictor, SeparableLineIsLearnedExactly) {
  const auto x = line(40);
  const auto y = threshold_labels(x);
  const auto model = train_predictor(x, y, {2000, 1.0, 4});
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(predict_killed(model, x[i]).killed, y[i] != 0) << i;
  for (std::size_t e = 1; e < model.loss_history.size(); ++e)
    EXPECT_LE(model.loss_history[e], model.loss_history[e - 1]);
  EXPECT_EQ(model.loss_history.size(), 2000u);
}

TEST(PmtPredictor, SameSeedSameModel) {
  const auto& A = version_a();
  const auto x = A.rows();
  EXPECT_EQ(train_predictor(x, A.killed, {300, 0.5, 2}), train_predictor(x, A.killed, {300, 0.5, 2}));
}

TEST(PmtPredictor, Errors) {
  const auto x = line(40);
  const auto y = threshold_labels(x);
  EXPECT_THROW(train_predictor(x, std::vector<std::uint8_t>(40, 1)), DataError);
  EXPECT_THROW(train_predictor(x, std::vector<std::uint8_t>(40, 0)), DataError);
  const std::vector<std::vector<double>> few(x.begin(), x.begin() + 19);
  const std::vector<std::uint8_t> few_y(y.begin(), y.begin() + 19);
  try {
    train_predictor(few, few_y);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
  auto ragged = x;
  ragged[3].push_back(1.0);
  EXPECT_THROW(train_predictor(ragged, y), DataError);
  EXPECT_THROW(train_predictor(x, std::vector<std::uint8_t>(39, 0)), DataError);
}

TEST(PmtMetrics, CountingExample) {
  const std::vector<std::uint8_t> predicted{1, 1, 0, 0, 1};
  const std::vector<std::uint8_t> truth{1, 0, 0, 1, 1};
  const auto m = evaluate_pmt(predicted, truth, 100, 0.7);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.6);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.baseline_accuracy, 0.6);
  EXPECT_NEAR(m.executions_avoided, 30.0, 1e-12);

  const auto none = evaluate_pmt(std::vector<std::uint8_t>{0, 0}, std::vector<std::uint8_t>{0, 0});
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.accuracy, 1.0);
  EXPECT_THROW(evaluate_pmt(std::vector<std::uint8_t>{}, std::vector<std::uint8_t>{}), DataError);
}

TEST(PmtCampaign, AccuracyDropCorrelatesWithKills) {
  const auto& A = version_a();
  const double n = static_cast<double>(A.features.size());
  double mean = 0.0, killed = 0.0;
  for (std::size_t i = 0; i < A.features.size(); ++i) {
    mean += A.features[i].gate_accuracy_drop / n;
    killed += A.killed[i];
  }
  double sd = 0.0, mean_killed = 0.0, mean_alive = 0.0;
  for (std::size_t i = 0; i < A.features.size(); ++i) {
    const double d = A.features[i].gate_accuracy_drop;
    sd += (d - mean) * (d - mean) / n;
    (A.killed[i] ? mean_killed : mean_alive) += d;
  }
  ASSERT_GT(killed, 0.0);
  ASSERT_LT(killed, n);
  mean_killed /= killed;
  mean_alive /= n - killed;
  const double p = killed / n;
  const double r = (mean_killed - mean_alive) / std::sqrt(sd) * std::sqrt(p * (1 - p));
  EXPECT_GT(r, 0.0);
}

TEST(PmtCampaign, ReferenceRunBeatsBaselineAndControl) {
  const auto& A = version_a();
  const auto run = run_pmt(A.cfg, A.pool.pool, A.net, A.baseline, A.killed);
  EXPECT_EQ(run.train_idx.size() + run.holdout_idx.size(), A.pool.pool.size());
  EXPECT_EQ(run.holdout_idx.size(), 60u);
  EXPECT_EQ(run.predictions.size(), 60u);
  EXPECT_GE(run.metrics.accuracy - run.metrics.baseline_accuracy, 0.05);
  EXPECT_LE(std::abs(run.permutation_control.accuracy - run.permutation_control.baseline_accuracy), 0.1);
  EXPECT_DOUBLE_EQ(run.metrics.executions_avoided, 200.0 * 0.3);
  const auto again = run_pmt(A.cfg, A.pool.pool, A.net, A.baseline, A.killed);
  EXPECT_EQ(again.model, run.model);

  const std::vector<MutantRecord> small(A.pool.pool.begin(), A.pool.pool.begin() + 19);
  const std::vector<std::uint8_t> small_killed(A.killed.begin(), A.killed.begin() + 19);
  EXPECT_THROW(run_pmt(A.cfg, small, A.net, A.baseline, small_killed), ConfigError);
}

TEST(PmtCampaign, PredictorTransfersToAnotherModelVersion) {
  const auto& A = version_a();
  const auto& B = version_b();
  const auto model = train_predictor(A.rows(), A.killed, {A.cfg.pmt.epochs, A.cfg.pmt.learning_rate, A.cfg.pmt.seed});
  std::vector<std::uint8_t> predicted;
  for (const auto& f : B.features) predicted.push_back(predict_killed(model, f.as_vector()).killed ? 1 : 0);
  const auto m = evaluate_pmt(predicted, B.killed);
  EXPECT_GT(m.accuracy, m.baseline_accuracy);
}
