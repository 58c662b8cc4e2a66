#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nnmut/campaign.hpp"
#include "nnmut/csv.hpp"
#include "nnmut/error.hpp"
#include "nnmut/parallel.hpp"

namespace fs = std::filesystem;
using namespace nnmut;

namespace {

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int threads = 0;
  bool verify = false;
};

// Holds an exclusive flock on <dir>/.lock for the lifetime of a command.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("output directory '" + dir.string() + "' is not writable: " + ec.message());
    fd_ = ::open((dir / ".lock").c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw ConfigError("output directory '" + dir.string() + "' is not writable");
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw ConfigError("output directory '" + dir.string() + "' is in use by another nnmut process");
    }
  }
  ~DirLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

struct Context {
  CampaignConfig cfg;
  Json config_json;
  fs::path out;
  bool verify = false;
};

Context load_context(const Globals& g) {
  Context ctx;
  if (g.config_path.empty()) {
    ctx.cfg = reference_config();
  } else {
    Json j;
    try {
      j = read_json(g.config_path);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    ctx.cfg = config_from_json(j);
  }
  // Flags win over the file.
  if (g.seed_set) ctx.cfg.override_seed(g.seed);
  if (!g.out.empty()) ctx.cfg.output_dir = g.out;
  ctx.cfg.validate();
  if (g.threads > 0) set_threads(g.threads);
  ctx.config_json = to_json(ctx.cfg);
  ctx.out = ctx.cfg.output_dir;
  ctx.verify = g.verify;
  return ctx;
}

Json stamped(const Context& ctx, const Json& body) {
  Json out = {{"schema_version", kSchemaVersion}, {"config", ctx.config_json}};
  for (const auto& [key, value] : body.items()) out[key] = value;
  return out;
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

Dataset load_data(const Context& ctx, const std::string& path) {
  return path.empty() ? make_dataset(ctx.cfg) : load_dataset(path);
}

std::vector<MutantRecord> retained_records(const fs::path& dir) {
  auto archive = read_pool_archive(dir);
  std::vector<MutantRecord> out;
  for (auto& r : archive.records)
    if (r.retained) out.push_back(std::move(r));
  return out;
}

void write_samples_csv(const fs::path& path, const std::vector<std::vector<double>>& rows,
                       const std::vector<int>& adversarial, std::size_t dim) {
  std::ostringstream os;
  std::vector<std::string> header;
  for (std::size_t d = 0; d < dim; ++d) header.push_back("x" + std::to_string(d));
  header.emplace_back("adversarial");
  os << csv::join(header) << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<std::string> fields;
    for (double v : rows[i]) fields.push_back(csv::format_real(v));
    fields.push_back(std::to_string(adversarial[i]));
    os << csv::join(fields) << '\n';
  }
  write_text(path, os.str());
}

Json stats_summary(const PoolStats& stats) {
  Json j = to_json(stats);
  return j;
}

void print_pool_stats(const PoolStats& stats, std::size_t retained) {
  std::printf("original accuracy %.4f  gate threshold %.4f  attempts %zu  retained %zu\n", stats.original_accuracy,
              stats.threshold, stats.attempts, retained);
  std::printf("%-6s %9s %9s %9s %9s\n", "op", "attempted", "retained", "rejected", "rej.rate");
  for (const auto& [name, s] : stats.per_operator)
    std::printf("%-6s %9zu %9zu %9zu %9.3f\n", name.c_str(), s.attempted, s.retained, s.rejected, s.rejection_rate());
}

// ---------------------------------------------------------------------------

void cmd_train(const Context& ctx) {
  const auto data = make_dataset(ctx.cfg);
  const auto result = run_train(ctx.cfg, data);
  save_network(ctx.out / "model.json", result.network, {{"config", ctx.config_json}});
  write_json(ctx.out / "dataset.json", stamped(ctx, to_json(data)));
  write_json(ctx.out / "metrics.json",
             stamped(ctx, {{"train_accuracy", result.train_accuracy},
                           {"val_accuracy", result.val_accuracy},
                           {"test_accuracy", result.test_accuracy},
                           {"split_counts",
                            {{"train", data.count(Split::train)},
                             {"val", data.count(Split::val)},
                             {"test", data.count(Split::test)}}}}));
  std::printf("train %.4f  val %.4f  test %.4f\n", result.train_accuracy, result.val_accuracy, result.test_accuracy);
}

void cmd_mutate_model(const Context& ctx, const std::string& model_path, const std::string& data_path,
                      const std::string& pool_dir) {
  const auto original = load_network(or_default(model_path, ctx.out / "model.json"));
  const auto data = load_data(ctx, data_path);
  const auto dir = or_default(pool_dir, ctx.out / "pool");
  const auto config = ctx.cfg.mutation.pool_config();

  PoolArchive archive;
  archive.config = ctx.config_json;
  PoolResult result;
  try {
    result = generate_pool(original, data, config);
  } catch (const PoolBudgetExhausted& e) {
    archive.records = e.partial().pool;
    archive.stats = stats_summary(e.partial().stats);
    archive.complete = false;
    write_pool_archive(dir, archive);
    print_pool_stats(e.partial().stats, archive.records.size());
    throw;
  }
  if (ctx.verify) {
    // Exhaustive re-check of the gate on every retained mutant.
    for (const auto& r : result.pool) {
      const double acc = accuracy(r.network, data, config.gate_split);
      if (acc != r.accuracy || acc < result.stats.threshold)
        throw std::logic_error("gate verification failed for mutant " + std::to_string(r.id));
    }
  }
  archive.records = result.pool;
  archive.stats = stats_summary(result.stats);
  write_pool_archive(dir, archive);
  print_pool_stats(result.stats, result.pool.size());
}

void cmd_mutate_source(const Context& ctx, MutantOrigin origin, const std::string& model_path,
                       const std::string& data_path, const std::string& pool_dir) {
  const auto original = load_network(or_default(model_path, ctx.out / "model.json"));
  const auto data = load_data(ctx, data_path);
  const bool is_data = origin == MutantOrigin::source_level_data;
  if ((is_data ? ctx.cfg.mutation.data_ops.size() : ctx.cfg.mutation.program_ops.size()) == 0)
    throw ConfigError(std::string("no ") + (is_data ? "mutation.data_ops" : "mutation.program_ops") + " configured");
  const double baseline = accuracy(original, data, ctx.cfg.mutation.gate_split);
  const auto records = run_source_mutants(ctx.cfg, data, baseline, origin);

  Json summary = Json::array();
  std::size_t kept = 0;
  for (const auto& r : records) {
    summary.push_back({{"id", r.id}, {"operator", operator_name(r.op)}, {"accuracy", r.accuracy}, {"retained", r.retained}});
    kept += r.retained ? 1 : 0;
  }
  PoolArchive archive;
  archive.config = ctx.config_json;
  archive.records = records;
  archive.stats = {{"baseline_accuracy", baseline},
                   {"threshold", ctx.cfg.mutation.quality_ratio * baseline},
                   {"retained", kept},
                   {"mutants", std::move(summary)}};
  write_pool_archive(or_default(pool_dir, ctx.out / (is_data ? "source_data" : "source_program")), archive);

  std::printf("baseline accuracy %.4f  threshold %.4f  retained %zu/%zu\n", baseline,
              ctx.cfg.mutation.quality_ratio * baseline, kept, records.size());
  for (const auto& r : records)
    std::printf("  %-20s accuracy %.4f  %s\n", operator_name(r.op).c_str(), r.accuracy, r.retained ? "retained" : "rejected");
}

void cmd_score(const Context& ctx, const std::string& model_path, const std::string& data_path,
               const std::string& pool_dir, bool exclude_flag) {
  const auto original = load_network(or_default(model_path, ctx.out / "model.json"));
  const auto data = load_data(ctx, data_path);
  const auto records = retained_records(or_default(pool_dir, ctx.out / "pool"));
  const auto km = kill_matrix(original, records, data, ctx.cfg.score.split);
  const bool exclude = exclude_flag || ctx.cfg.score.exclude_pseudo_equivalent;

  std::size_t killed = 0;
  std::size_t equivalent = 0;
  for (std::size_t m = 0; m < km.mutants(); ++m) {
    killed += km.any_kill(m) ? 1 : 0;
    equivalent += km.pseudo_equivalent[m] != 0 ? 1 : 0;
  }
  const double score = mutation_score(km, exclude);

  if (ctx.verify) {
    // Independent double loop over (mutant, test).
    const auto tests = data.indices(ctx.cfg.score.split);
    std::size_t oracle_killed = 0;
    for (std::size_t m = 0; m < records.size(); ++m) {
      bool any = false;
      for (std::size_t t = 0; t < tests.size(); ++t) {
        const auto row = data.row(tests[t]);
        const auto expect = predict_label(original, row);
        const bool kill = expect == data.labels[tests[t]] && predict_label(records[m].network, row) != expect;
        if (kill != km.at(m, t)) throw std::logic_error("kill matrix disagrees with the brute-force oracle");
        any = any || kill;
      }
      oracle_killed += any ? 1 : 0;
    }
    const double denom = static_cast<double>(exclude ? oracle_killed : records.size());
    if (oracle_killed != killed || static_cast<double>(oracle_killed) / denom != score)
      throw std::logic_error("mutation score disagrees with the brute-force oracle");
  }

  write_json(ctx.out / "kill_matrix.json", stamped(ctx, to_json(km)));
  write_json(ctx.out / "score.json", stamped(ctx, {{"split", std::string(to_string(ctx.cfg.score.split))},
                                                   {"mutants", km.mutants()},
                                                   {"tests", km.tests()},
                                                   {"killed", killed},
                                                   {"pseudo_equivalent", equivalent},
                                                   {"exclude_pseudo_equivalent", exclude},
                                                   {"mutation_score", score},
                                                   {"verified", ctx.verify}}));
  std::printf("mutation score %.4f  (%zu killed of %zu, %zu pseudo-equivalent)%s\n", score, killed, km.mutants(),
              equivalent, ctx.verify ? "  verified" : "");
}

struct Samples {
  std::vector<std::vector<double>> rows;
  std::vector<int> adversarial;  // empty when the file has no such column
};

double cell(const std::string& text, std::size_t row, std::size_t col) {
  double v = 0.0;
  if (!csv::parse_real(text, v))
    throw DataError("row " + std::to_string(row + 1) + ", column " + std::to_string(col + 1) + ": not a number: '" +
                    text + "'");
  return v;
}

Samples read_samples(const fs::path& path, std::size_t dim) {
  const auto table = csv::read(path);
  if (table.rows.empty()) throw DataError("samples file '" + path.string() + "' has no samples");
  const auto truth_col = table.column("adversarial");
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (c != truth_col) feature_cols.push_back(c);
  if (feature_cols.size() != dim)
    throw DataError("samples file has " + std::to_string(feature_cols.size()) + " feature columns, model expects " +
                    std::to_string(dim));
  Samples s;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    std::vector<double> x;
    for (auto c : feature_cols) x.push_back(cell(row.at(c), r, c));
    s.rows.push_back(std::move(x));
    if (truth_col != csv::Table::npos) {
      const auto v = cell(row.at(truth_col), r, truth_col);
      if (v != 0.0 && v != 1.0) throw DataError("row " + std::to_string(r + 1) + ": adversarial must be 0 or 1");
      s.adversarial.push_back(v == 1.0 ? 1 : 0);
    }
  }
  return s;
}

void cmd_detect(const Context& ctx, const std::string& model_path, const std::string& data_path,
                const std::string& pool_dir, const std::string& samples_path) {
  const auto original = load_network(or_default(model_path, ctx.out / "model.json"));
  const auto samples = read_samples(samples_path, original.input_dim());
  const auto data = load_data(ctx, data_path);
  const auto nets = networks_of(retained_records(or_default(pool_dir, ctx.out / "pool")));
  if (nets.empty()) throw DataError("mutant pool is empty");
  const auto sprt = resolve_sprt(ctx.cfg, original, nets, data);
  const auto reports = batch_detect(samples.rows, original, nets, sprt);
  if (ctx.verify && reports != serial::batch_detect(samples.rows, original, nets, sprt))
    throw std::logic_error("parallel detection disagrees with the serial reference");

  const bool has_truth = !samples.adversarial.empty();
  Json rows = Json::array();
  std::ostringstream table;
  table << "sample_id,verdict,lcr,mutants_evaluated,label_changes,forced" << (has_truth ? ",adversarial" : "") << '\n';
  std::size_t flagged = 0, undecided = 0, forced = 0, evaluations = 0;
  std::size_t tp = 0, fp = 0, positives = 0, negatives = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    Json j = to_json(r);
    const bool hit = r.verdict == Verdict::adversarial;
    flagged += hit ? 1 : 0;
    undecided += r.verdict == Verdict::undecided ? 1 : 0;
    forced += r.forced ? 1 : 0;
    evaluations += r.mutants_evaluated;
    table << r.sample_id << ',' << to_string(r.verdict) << ',' << csv::format_real(r.lcr) << ',' << r.mutants_evaluated
          << ',' << r.label_changes << ',' << (r.forced ? 1 : 0);
    if (has_truth) {
      const bool adv = samples.adversarial[i] != 0;
      j["adversarial"] = adv;
      table << ',' << (adv ? 1 : 0);
      (adv ? positives : negatives) += 1;
      if (hit && adv) ++tp;
      if (hit && !adv) ++fp;
    }
    table << '\n';
    rows.push_back(std::move(j));
  }
  const auto n = static_cast<double>(reports.size());
  Json summary = {{"samples", reports.size()},
                  {"flagged_adversarial", flagged},
                  {"adversarial_rate", static_cast<double>(flagged) / n},
                  {"undecided", undecided},
                  {"forced", forced},
                  {"mean_mutants_evaluated", static_cast<double>(evaluations) / n},
                  {"pool_size", nets.size()}};
  if (has_truth) {
    summary["tpr"] = positives == 0 ? Json(nullptr) : Json(static_cast<double>(tp) / static_cast<double>(positives));
    summary["fpr"] = negatives == 0 ? Json(nullptr) : Json(static_cast<double>(fp) / static_cast<double>(negatives));
  }
  write_json(ctx.out / "detection.json",
             stamped(ctx, {{"sprt", to_json(sprt)}, {"summary", summary}, {"samples", std::move(rows)}}));
  write_text(ctx.out / "detection.csv", table.str());
  std::printf("%zu samples  flagged %zu  mean mutants evaluated %.2f of %zu\n", reports.size(), flagged,
              static_cast<double>(evaluations) / n, nets.size());
  if (has_truth) std::cout << "tpr " << summary["tpr"].dump() << "  fpr " << summary["fpr"].dump() << '\n';
}

void cmd_pmt(const Context& ctx, const std::string& model_path, const std::string& data_path,
             const std::string& pool_dir, const std::string& kills_path) {
  if (!ctx.cfg.pmt.enable) throw ConfigError("pmt.enable is false");
  const auto original = load_network(or_default(model_path, ctx.out / "model.json"));
  const auto records = retained_records(or_default(pool_dir, ctx.out / "pool"));
  if (records.size() < 20)
    throw ConfigError("insufficient mutants: PMT needs at least 20, the pool has " + std::to_string(records.size()));
  const auto km = kill_matrix_from_json(read_json(or_default(kills_path, ctx.out / "kill_matrix.json")));
  std::map<std::size_t, std::uint8_t> kill_of;
  for (std::size_t m = 0; m < km.mutants(); ++m) kill_of[km.mutant_ids[m]] = km.any_kill(m) ? 1 : 0;
  std::vector<std::uint8_t> killed;
  for (const auto& r : records) {
    const auto it = kill_of.find(r.id);
    if (it == kill_of.end()) throw DataError("kill report has no row for mutant " + std::to_string(r.id));
    killed.push_back(it->second);
  }
  const auto data = load_data(ctx, data_path);
  const double baseline = accuracy(original, data, ctx.cfg.mutation.gate_split);
  const auto run = run_pmt(ctx.cfg, records, original, baseline, killed);

  auto metrics = [](const PmtMetrics& m) {
    return Json{{"accuracy", m.accuracy},
                {"precision", m.precision},
                {"recall", m.recall},
                {"baseline_accuracy", m.baseline_accuracy},
                {"delta_over_baseline", m.accuracy - m.baseline_accuracy},
                {"executions_avoided", m.executions_avoided}};
  };
  std::ostringstream table;
  table << "mutant_id,probability,predicted_killed,killed\n";
  for (std::size_t k = 0; k < run.holdout_idx.size(); ++k) {
    const auto i = run.holdout_idx[k];
    table << records[i].id << ',' << csv::format_real(run.predictions[k].probability) << ','
          << (run.predictions[k].killed ? 1 : 0) << ',' << static_cast<int>(run.killed[i]) << '\n';
  }
  const auto& names = MutantFeatures::column_names();
  write_json(ctx.out / "pmt.json", stamped(ctx, {{"features", std::vector<std::string>(names.begin(), names.end())},
                                                 {"train_mutants", run.train_idx.size()},
                                                 {"holdout_mutants", run.holdout_idx.size()},
                                                 {"model", to_json(run.model)},
                                                 {"holdout", metrics(run.metrics)},
                                                 {"permutation_control", metrics(run.permutation_control)}}));
  write_text(ctx.out / "pmt_predictions.csv", table.str());
  std::printf("holdout accuracy %.4f  majority baseline %.4f  delta %+.4f  shuffled-label control %.4f\n",
              run.metrics.accuracy, run.metrics.baseline_accuracy, run.metrics.accuracy - run.metrics.baseline_accuracy,
              run.permutation_control.accuracy);
}

void cmd_report(const Context& ctx, const std::string& model_path, const std::string& data_path,
                const std::string& pool_dir) {
  const auto original = load_network(or_default(model_path, ctx.out / "model.json"));
  const auto data = load_data(ctx, data_path);
  const auto nets = networks_of(retained_records(or_default(pool_dir, ctx.out / "pool")));
  if (nets.empty()) throw DataError("mutant pool is empty");
  const auto adv = make_adversarial_set(ctx.cfg, original, data);
  const auto clean = batch_lcr(adv.clean, original, nets);
  const auto perturbed = batch_lcr(adv.perturbed, original, nets);

  std::vector<double> neg, pos;
  std::vector<std::vector<double>> mixed = adv.clean;
  std::vector<int> mixed_truth(adv.clean.size(), 0);
  std::ostringstream table;
  table << "row,kind,flipped,lcr,label_changes\n";
  for (std::size_t i = 0; i < adv.rows.size(); ++i) {
    neg.push_back(clean[i].lcr);
    table << adv.rows[i] << ",clean,0," << csv::format_real(clean[i].lcr) << ',' << clean[i].label_changes << '\n';
  }
  for (std::size_t i = 0; i < adv.rows.size(); ++i) {
    table << adv.rows[i] << ",fgsm," << static_cast<int>(adv.flipped[i]) << ',' << csv::format_real(perturbed[i].lcr)
          << ',' << perturbed[i].label_changes << '\n';
    if (!adv.flipped[i]) continue;
    pos.push_back(perturbed[i].lcr);
    mixed.push_back(adv.perturbed[i]);
    mixed_truth.push_back(1);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };

  Json lcr = {{"epsilon", adv.sweep.epsilon},
              {"sweep_flip_rate", adv.sweep.flip_rate},
              {"sweep_reached_target", adv.sweep.reached},
              {"sweep_confident_rows", adv.sweep.confident},
              {"pool_size", nets.size()},
              {"clean_samples", neg.size()},
              {"adversarial_samples", pos.size()},
              {"mean_lcr_clean", mean(neg)},
              {"mean_lcr_adversarial", pos.empty() ? Json(nullptr) : Json(mean(pos))},
              {"auroc", pos.empty() ? Json(nullptr) : Json(auroc(neg, pos))}};

  // Summaries of the upstream artifacts. Detection and PMT read files this
  // command writes, so they stay out to keep reruns byte-identical.
  Json artifacts = Json::object();
  auto pick = [&](const char* file, std::initializer_list<const char*> keys) {
    const auto path = ctx.out / file;
    if (!fs::exists(path)) return;
    const Json j = read_json(path);
    Json out = Json::object();
    for (const char* k : keys)
      if (j.contains(k)) out[k] = j[k];
    artifacts[file] = std::move(out);
  };
  pick("metrics.json", {"train_accuracy", "val_accuracy", "test_accuracy"});
  pick("score.json", {"mutants", "killed", "pseudo_equivalent", "mutation_score"});

  write_json(ctx.out / "report.json", stamped(ctx, {{"lcr", lcr}, {"artifacts", artifacts}}));
  write_text(ctx.out / "lcr.csv", table.str());
  write_samples_csv(ctx.out / "samples_mixed.csv", mixed, mixed_truth, data.dim);
  const auto train_rows = rows_of(data, Split::train);
  write_samples_csv(ctx.out / "samples_train.csv", train_rows, std::vector<int>(train_rows.size(), 0), data.dim);

  std::printf("epsilon %.4f  mean LCR clean %.4f  adversarial %s  AUROC %s\n", adv.sweep.epsilon, mean(neg),
              lcr["mean_lcr_adversarial"].dump().c_str(), lcr["auroc"].dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mutation testing for feedforward classifiers", "nnmut"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "Campaign config (JSON); defaults to the built-in two-moons campaign");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](const std::uint64_t& s) { g.seed = s, g.seed_set = true; }, "Derive every seed from this value");
  app.add_option("--out", g.out, "Output directory (overrides output_dir)");
  app.add_option("--threads", g.threads, "Worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--verify", g.verify, "Cross-check results against brute-force or serial references");

  std::function<void(const Context&)> action;
  std::string model, data, pool, samples, kills;
  bool exclude = false;
  auto common = [&](CLI::App* sub, bool with_pool) {
    sub->add_option("--model", model, "Original model (default <out>/model.json)");
    sub->add_option("--data", data, "Dataset archive (default: regenerate from the config)");
    if (with_pool) sub->add_option("--pool", pool, "Mutant pool directory (default <out>/pool)");
  };

  auto* train = app.add_subcommand("train", "Train the original model");
  train->callback([&] { action = cmd_train; });

  auto* mutate_data = app.add_subcommand("mutate-data", "Retrain on mutated training data");
  common(mutate_data, true);
  mutate_data->callback([&] {
    action = [&](const Context& c) { cmd_mutate_source(c, MutantOrigin::source_level_data, model, data, pool); };
  });

  auto* mutate_source = app.add_subcommand("mutate-source", "Retrain with mutated training programs");
  common(mutate_source, true);
  mutate_source->callback([&] {
    action = [&](const Context& c) { cmd_mutate_source(c, MutantOrigin::source_level_program, model, data, pool); };
  });

  auto* mutate_model = app.add_subcommand("mutate-model", "Build the quality-gated model-level mutant pool");
  mutate_model->alias("mutate");
  common(mutate_model, true);
  mutate_model->callback([&] { action = [&](const Context& c) { cmd_mutate_model(c, model, data, pool); }; });

  auto* score = app.add_subcommand("score", "Kill matrix and mutation score on the test split");
  common(score, true);
  score->add_flag("--exclude-equivalent", exclude, "Leave pseudo-equivalent mutants out of the denominator");
  score->callback([&] { action = [&](const Context& c) { cmd_score(c, model, data, pool, exclude); }; });

  auto* detect = app.add_subcommand("detect", "Sequential LCR detection over a samples CSV");
  common(detect, true);
  detect->add_option("--samples", samples, "CSV of feature columns, optional 0/1 'adversarial' column")->required();
  detect->callback([&] { action = [&](const Context& c) { cmd_detect(c, model, data, pool, samples); }; });

  auto* pmt = app.add_subcommand("pmt", "Predict killed/survived mutants from their features");
  common(pmt, true);
  pmt->add_option("--kills", kills, "Kill report (default <out>/kill_matrix.json)");
  pmt->callback([&] { action = [&](const Context& c) { cmd_pmt(c, model, data, pool, kills); }; });

  auto* report = app.add_subcommand("report", "LCR analysis, sample files and artifact summaries");
  common(report, true);
  report->callback([&] { action = [&](const Context& c) { cmd_report(c, model, data, pool); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : static_cast<int>(ErrorCode::config);
  }

  try {
    const auto ctx = load_context(g);
    DirLock lock(ctx.out);
    action(ctx);
  } catch (const Error& e) {
    std::cerr << "nnmut: error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const Json::exception& e) {
    std::cerr << "nnmut: error: malformed input: " << e.what() << '\n';
    return static_cast<int>(ErrorCode::data);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "nnmut: error: " << e.what() << '\n';
    return static_cast<int>(ErrorCode::data);
  } catch (const std::exception& e) {
    std::cerr << "nnmut: internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
