#include "nnmut/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <set>

#include "nnmut/error.hpp"
#include "nnmut/parallel.hpp"
#include "nnmut/rng.hpp"

namespace nnmut {

PoolConfig CampaignConfig::MutationSection::pool_config() const {
  PoolConfig pc;
  for (auto op : operators) pc.op_mix.push_back(ModelMutationSpec::make(op, gamma, sigma));
  pc.count = count;
  pc.quality_ratio = quality_ratio;
  pc.gate_split = gate_split;
  pc.attempt_budget = attempt_budget;
  pc.base_seed = base_seed;
  return pc;
}

void CampaignConfig::validate() const {
  if (dataset.kind == "csv") {
    if (dataset.path.empty()) throw ConfigError("dataset.path is required for csv datasets");
  } else {
    synthetic_kind_from_string(dataset.kind);
  }
  split_sizes(10, dataset.fractions);
  training.validate();
  mutation.pool_config().validate();
  for (const auto& d : mutation.data_ops) d.validate();
  if (!(detection.quantile >= 0.0 && detection.quantile <= 1.0))
    throw ConfigError("detection.quantile must lie in [0, 1]");
  if (!(detection.factor > 1.0)) throw ConfigError("detection.factor must exceed 1");
  if (!(detection.epsilon >= 0.0)) throw ConfigError("detection.epsilon must be non-negative");
  if (detection.epsilon == 0.0 && (!(detection.epsilon_step > 0.0) || detection.epsilon_steps == 0))
    throw ConfigError("epsilon sweep needs a positive step and step count");
  if (!(pmt.holdout_fraction > 0.0 && pmt.holdout_fraction < 1.0))
    throw ConfigError("pmt.holdout_fraction must lie in (0, 1)");
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
}

void CampaignConfig::override_seed(std::uint64_t seed) {
  dataset.seed = seed;
  training.seed = seed + 1;
  mutation.base_seed = seed + 2;
  pmt.seed = seed + 3;
  for (std::size_t i = 0; i < mutation.data_ops.size(); ++i) mutation.data_ops[i].seed = seed + 4 + i;
  for (std::size_t i = 0; i < mutation.program_ops.size(); ++i) mutation.program_ops[i].seed = seed + 4 + mutation.data_ops.size() + i;
}

CampaignConfig reference_config() {
  CampaignConfig cfg;
  // Low noise keeps clean points away from the boundary, so FGSM
  // counterparts stand out by their label change rate.
  cfg.dataset.noise = 0.05;
  cfg.training.hidden_sizes = {16};
  cfg.training.activations = {Activation::tanh};
  cfg.training.learning_rate = 0.1;
  cfg.training.epochs = 300;
  cfg.training.batch_size = 16;
  cfg.training.seed = 3;
  cfg.training.init_scale = 0.5;

  using DK = DataMutationKind;
  cfg.mutation.data_ops = {{DK::label_error, 0.1, 0.0, 21},       {DK::data_missing, 0.2, 0.0, 22},
                           {DK::data_repetition, 0.2, 0.0, 23},   {DK::noise_perturbation, 0.2, 0.2, 24},
                           {DK::data_shuffle, 0.5, 0.0, 25}};
  using PK = ProgramMutationKind;
  cfg.mutation.program_ops = {{PK::layer_removal, 0, 8, Activation::relu, 1.0, 31},
                              {PK::layer_addition, 1, 8, Activation::relu, 1.0, 32},
                              {PK::activation_change, 0, 8, Activation::relu, 1.0, 33},
                              {PK::init_skew, 0, 8, Activation::relu, 4.0, 34},
                              {PK::learning_rate_scale, 0, 8, Activation::relu, 0.1, 35}};
  cfg.override_seed(3);
  return cfg;
}

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.contains(key)) throw ConfigError("unknown config key '" + section + key + "'");
}

template <typename T>
void read(const Json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void read_split(const Json& j, const char* key, Split& target) {
  std::string name;
  read(j, key, name);
  if (!name.empty()) target = split_from_string(name);
}

// Operator specs from the config share the loaders used for archives, which
// report malformed input as data errors.
template <typename F>
auto as_config(F&& f) {
  try {
    return f();
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

CampaignConfig config_from_json(const Json& j) {
  reject_unknown(j, {"seed", "dataset", "training", "mutation", "score", "detection", "pmt", "output_dir",
                     "schema_version"},
                 "");
  CampaignConfig cfg = reference_config();
  if (j.contains("seed")) {
    std::uint64_t seed = 0;
    read(j, "seed", seed);
    cfg.override_seed(seed);
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    reject_unknown(d, {"kind", "n", "noise", "path", "label_column", "split", "seed"}, "dataset.");
    read(d, "kind", cfg.dataset.kind);
    read(d, "n", cfg.dataset.n);
    read(d, "noise", cfg.dataset.noise);
    read(d, "path", cfg.dataset.path);
    read(d, "label_column", cfg.dataset.label_column);
    read(d, "split", cfg.dataset.fractions);
    read(d, "seed", cfg.dataset.seed);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    reject_unknown(t, {"hidden_sizes", "activations", "learning_rate", "epochs", "batch_size", "seed", "init_scale"},
                   "training.");
    cfg.training = as_config([&] { return training_spec_from_json(t, cfg.training); });
  }
  if (j.contains("mutation")) {
    const auto& m = j.at("mutation");
    reject_unknown(m, {"operators", "gamma", "sigma", "count", "quality_ratio", "gate_split", "attempt_budget",
                       "base_seed", "data_ops", "program_ops"},
                   "mutation.");
    if (m.contains("operators")) {
      std::vector<std::string> names;
      read(m, "operators", names);
      cfg.mutation.operators.clear();
      for (const auto& name : names) cfg.mutation.operators.push_back(model_operator_from_string(name));
    }
    read(m, "gamma", cfg.mutation.gamma);
    read(m, "sigma", cfg.mutation.sigma);
    read(m, "count", cfg.mutation.count);
    read(m, "quality_ratio", cfg.mutation.quality_ratio);
    read_split(m, "gate_split", cfg.mutation.gate_split);
    read(m, "attempt_budget", cfg.mutation.attempt_budget);
    read(m, "base_seed", cfg.mutation.base_seed);
    if (m.contains("data_ops")) {
      cfg.mutation.data_ops.clear();
      for (const auto& op : m.at("data_ops"))
        cfg.mutation.data_ops.push_back(as_config([&] { return data_mutation_from_json(op); }));
    }
    if (m.contains("program_ops")) {
      cfg.mutation.program_ops.clear();
      for (const auto& op : m.at("program_ops"))
        cfg.mutation.program_ops.push_back(as_config([&] { return program_mutation_from_json(op); }));
    }
  }
  if (j.contains("score")) {
    const auto& s = j.at("score");
    reject_unknown(s, {"split", "exclude_pseudo_equivalent"}, "score.");
    read_split(s, "split", cfg.score.split);
    read(s, "exclude_pseudo_equivalent", cfg.score.exclude_pseudo_equivalent);
  }
  if (j.contains("detection")) {
    const auto& d = j.at("detection");
    reject_unknown(d, {"quantile", "factor", "calibration_split", "adversarial_split", "epsilon", "epsilon_step",
                       "epsilon_steps", "target_flip_rate", "confidence", "sprt"},
                   "detection.");
    read(d, "quantile", cfg.detection.quantile);
    read(d, "factor", cfg.detection.factor);
    read_split(d, "calibration_split", cfg.detection.calibration_split);
    read_split(d, "adversarial_split", cfg.detection.adversarial_split);
    read(d, "epsilon", cfg.detection.epsilon);
    read(d, "epsilon_step", cfg.detection.epsilon_step);
    read(d, "epsilon_steps", cfg.detection.epsilon_steps);
    read(d, "target_flip_rate", cfg.detection.target_flip_rate);
    read(d, "confidence", cfg.detection.confidence);
    if (d.contains("sprt")) {
      cfg.detection.sprt_overrides = d.at("sprt");
      reject_unknown(cfg.detection.sprt_overrides, {"p0", "p1", "alpha", "beta", "max_mutants"}, "detection.sprt.");
    }
  }
  if (j.contains("pmt")) {
    const auto& p = j.at("pmt");
    reject_unknown(p, {"enable", "holdout_fraction", "epochs", "learning_rate", "seed", "use_accuracy_drop"}, "pmt.");
    read(p, "enable", cfg.pmt.enable);
    read(p, "holdout_fraction", cfg.pmt.holdout_fraction);
    read(p, "epochs", cfg.pmt.epochs);
    read(p, "learning_rate", cfg.pmt.learning_rate);
    read(p, "seed", cfg.pmt.seed);
    read(p, "use_accuracy_drop", cfg.pmt.use_accuracy_drop);
  }
  read(j, "output_dir", cfg.output_dir);
  cfg.validate();
  return cfg;
}

Json to_json(const CampaignConfig& cfg) {
  Json ops = Json::array();
  for (auto op : cfg.mutation.operators) ops.push_back(std::string(to_string(op)));
  Json data_ops = Json::array();
  for (const auto& d : cfg.mutation.data_ops) data_ops.push_back(to_json(d));
  Json program_ops = Json::array();
  for (const auto& p : cfg.mutation.program_ops) program_ops.push_back(to_json(p));
  return {
      {"dataset",
       {{"kind", cfg.dataset.kind},
        {"n", cfg.dataset.n},
        {"noise", cfg.dataset.noise},
        {"path", cfg.dataset.path},
        {"label_column", cfg.dataset.label_column},
        {"split", cfg.dataset.fractions},
        {"seed", cfg.dataset.seed}}},
      {"training", to_json(cfg.training)},
      {"mutation",
       {{"operators", std::move(ops)},
        {"gamma", cfg.mutation.gamma},
        {"sigma", cfg.mutation.sigma},
        {"count", cfg.mutation.count},
        {"quality_ratio", cfg.mutation.quality_ratio},
        {"gate_split", std::string(to_string(cfg.mutation.gate_split))},
        {"attempt_budget", cfg.mutation.attempt_budget},
        {"base_seed", cfg.mutation.base_seed},
        {"data_ops", std::move(data_ops)},
        {"program_ops", std::move(program_ops)}}},
      {"score",
       {{"split", std::string(to_string(cfg.score.split))},
        {"exclude_pseudo_equivalent", cfg.score.exclude_pseudo_equivalent}}},
      {"detection",
       {{"quantile", cfg.detection.quantile},
        {"factor", cfg.detection.factor},
        {"calibration_split", std::string(to_string(cfg.detection.calibration_split))},
        {"adversarial_split", std::string(to_string(cfg.detection.adversarial_split))},
        {"epsilon", cfg.detection.epsilon},
        {"epsilon_step", cfg.detection.epsilon_step},
        {"epsilon_steps", cfg.detection.epsilon_steps},
        {"target_flip_rate", cfg.detection.target_flip_rate},
        {"confidence", cfg.detection.confidence},
        {"sprt", cfg.detection.sprt_overrides}}},
      {"pmt",
       {{"enable", cfg.pmt.enable},
        {"holdout_fraction", cfg.pmt.holdout_fraction},
        {"epochs", cfg.pmt.epochs},
        {"learning_rate", cfg.pmt.learning_rate},
        {"seed", cfg.pmt.seed},
        {"use_accuracy_drop", cfg.pmt.use_accuracy_drop}}},
      {"output_dir", cfg.output_dir}};
}

Dataset make_dataset(const CampaignConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.kind == "csv") return load_csv(d.path, d.label_column, d.fractions, d.seed);
  return generate_synthetic(synthetic_kind_from_string(d.kind), d.n, d.noise, d.seed, d.fractions);
}

TrainOutputs run_train(const CampaignConfig& cfg, const Dataset& data) {
  TrainOutputs out;
  out.network = train(cfg.training, data);
  auto acc = [&](Split s) { return data.count(s) == 0 ? 0.0 : accuracy(out.network, data, s); };
  out.train_accuracy = acc(Split::train);
  out.val_accuracy = acc(Split::val);
  out.test_accuracy = acc(Split::test);
  return out;
}

std::vector<MutantRecord> run_source_mutants(const CampaignConfig& cfg, const Dataset& data,
                                             double baseline_accuracy, MutantOrigin origin) {
  std::vector<SourceMutation> mutations;
  if (origin == MutantOrigin::source_level_data) {
    for (const auto& d : cfg.mutation.data_ops) mutations.emplace_back(d);
  } else if (origin == MutantOrigin::source_level_program) {
    for (const auto& p : cfg.mutation.program_ops) mutations.emplace_back(p);
  } else {
    throw ConfigError("run_source_mutants needs a source-level origin");
  }
  std::vector<MutantRecord> out(mutations.size());
  std::vector<std::exception_ptr> failures(mutations.size());
  const auto n = static_cast<std::ptrdiff_t>(mutations.size());
  NNMUT_OMP_PRAGMA("omp parallel for schedule(dynamic)")
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      SourceMutantOptions opts;
      opts.id = idx;
      opts.gate_split = cfg.mutation.gate_split;
      opts.quality_ratio = cfg.mutation.quality_ratio;
      opts.baseline_accuracy = baseline_accuracy;
      out[idx] = build_source_mutant(cfg.training, data, mutations[idx], opts);
    } catch (...) {
      failures[idx] = std::current_exception();
    }
  }
  for (const auto& e : failures)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<std::vector<double>> rows_of(const Dataset& data, Split split) {
  std::vector<std::vector<double>> out;
  for (auto idx : data.indices(split)) {
    const auto row = data.row(idx);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

AdversarialSet make_adversarial_set(const CampaignConfig& cfg, const Network& original, const Dataset& data) {
  const auto& det = cfg.detection;
  AdversarialSet set;
  if (det.epsilon > 0.0) {
    set.sweep.epsilon = det.epsilon;
    set.sweep.reached = true;
  } else {
    const auto grid = epsilon_grid(det.epsilon_step, det.epsilon_steps);
    set.sweep = sweep_epsilon(original, data, det.calibration_split, grid, det.target_flip_rate, det.confidence);
  }
  const auto range = feature_range(data);
  set.rows = data.indices(det.adversarial_split);
  if (set.rows.empty()) throw DataError("adversarial split is empty");
  for (auto idx : set.rows) {
    const auto row = data.row(idx);
    const auto label = predict_label(original, row);
    auto adv = fgsm(original, row, label, set.sweep.epsilon, &range);
    set.flipped.push_back(predict_label(original, adv.sample) != label ? 1 : 0);
    set.clean.emplace_back(row.begin(), row.end());
    set.perturbed.push_back(std::move(adv.sample));
  }
  return set;
}

SprtConfig resolve_sprt(const CampaignConfig& cfg, const Network& original, std::span<const Network> pool,
                        const Dataset& data) {
  const auto normal = rows_of(data, cfg.detection.calibration_split);
  auto sprt = calibrate(normal, original, pool, cfg.detection.quantile, cfg.detection.factor);
  try {
    sprt = sprt_config_from_json(cfg.detection.sprt_overrides, sprt);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  sprt.validate();
  return sprt;
}

PmtRun run_pmt(const CampaignConfig& cfg, std::span<const MutantRecord> pool, const Network& original,
               double baseline_accuracy, std::span<const std::uint8_t> killed) {
  if (killed.size() != pool.size()) throw DataError("kill labels do not match pool size");
  if (pool.size() < 20) throw ConfigError("insufficient mutants: PMT needs at least 20");
  PmtRun run;
  run.features = extract_all(pool, original, baseline_accuracy);
  run.killed.assign(killed.begin(), killed.end());

  const Rng base(cfg.pmt.seed);
  const auto order = base.split("holdout").permutation(pool.size());
  const auto holdout = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.pmt.holdout_fraction * static_cast<double>(pool.size()))));
  run.holdout_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout));
  run.train_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(holdout), order.end());
  std::sort(run.holdout_idx.begin(), run.holdout_idx.end());
  std::sort(run.train_idx.begin(), run.train_idx.end());

  std::vector<std::vector<double>> x_train;
  std::vector<std::uint8_t> y_train;
  for (auto i : run.train_idx) {
    x_train.push_back(run.features[i].as_vector(cfg.pmt.use_accuracy_drop));
    y_train.push_back(run.killed[i]);
  }
  PmtTrainingOptions opts{cfg.pmt.epochs, cfg.pmt.learning_rate, cfg.pmt.seed};

  auto evaluate = [&](const PmtModel& model, std::vector<PmtPrediction>* keep) {
    std::vector<std::uint8_t> predicted;
    std::vector<std::uint8_t> truth;
    for (auto i : run.holdout_idx) {
      const auto p = predict_killed(model, run.features[i].as_vector(cfg.pmt.use_accuracy_drop));
      predicted.push_back(p.killed ? 1 : 0);
      truth.push_back(run.killed[i]);
      if (keep != nullptr) keep->push_back(p);
    }
    const double executed = static_cast<double>(run.train_idx.size()) / static_cast<double>(pool.size());
    return evaluate_pmt(predicted, truth, pool.size(), executed);
  };

  run.model = train_predictor(x_train, y_train, opts);
  run.metrics = evaluate(run.model, &run.predictions);

  auto shuffled = y_train;
  base.split("permutation-control").shuffle(shuffled);
  const auto control = train_predictor(x_train, shuffled, opts);
  run.permutation_control = evaluate(control, nullptr);
  return run;
}

}  // namespace nnmut
