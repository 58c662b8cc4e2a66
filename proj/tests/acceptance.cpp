// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nnmut/campaign.hpp"
#include "nnmut/error.hpp"
#include "oracles.hpp"

using namespace nnmut;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %d %-28s %s  (%s)\n", id, name, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double max_abs_diff(const Network& a, const Network& b) {
  double worst = 0.0;
  for (std::size_t l = 0; l < a.layers().size(); ++l) {
    const auto& x = a.layers()[l];
    const auto& y = b.layers()[l];
    for (std::size_t i = 0; i < x.weights.size(); ++i) worst = std::max(worst, std::abs(x.weights[i] - y.weights[i]));
    for (std::size_t i = 0; i < x.biases.size(); ++i) worst = std::max(worst, std::abs(x.biases[i] - y.biases[i]));
  }
  return worst;
}

// 1. GF with vanishing sigma is the identity, NAI and NS undo themselves,
//    WS and NS keep the weight multiset, and nothing changes the architecture.
void operator_algebra() {
  Rng rng(20240501);
  std::size_t trials = 0, passed = 0;
  for (int attempt = 0; trials < 600 && attempt < 5000; ++attempt) {
    const auto net = oracle::random_architecture(rng);
    const auto op = kAllModelOperators[rng.below(4)];
    const double gamma = 0.1 + 0.9 * rng.uniform01();
    const auto seed = rng.next_u64();
    Network m;
    try {
      m = apply_model_operator(net, ModelMutationSpec::make(op, gamma, op == ModelOperator::GF ? 1e-12 : 1.0, seed));
    } catch (const ConfigError&) {
      continue;  // NS needs a hidden layer with two neurons
    }
    ++trials;
    bool ok = m.same_architecture(net);
    switch (op) {
      case ModelOperator::GF: ok = ok && max_abs_diff(m, net) <= 1e-9; break;
      case ModelOperator::WS: ok = ok && oracle::all_weights(m) == oracle::all_weights(net); break;
      case ModelOperator::NS:
        ok = ok && oracle::all_weights(m) == oracle::all_weights(net) &&
             apply_model_operator(m, ModelMutationSpec::make(op, gamma, 1.0, seed)) == net;
        break;
      case ModelOperator::NAI: ok = ok && apply_model_operator(m, ModelMutationSpec::make(op, gamma, 1.0, seed)) == net;
    }
    passed += ok ? 1 : 0;
  }
  report(1, "operator algebra", trials >= 500 && passed == trials,
         fmt("%.0f/%.0f randomized trials", static_cast<double>(passed), static_cast<double>(trials)));
}

// 2. Backprop against central differences.
void gradient_check() {
  Rng rng(424242);
  const int architectures = 30;
  double worst = 0.0;
  for (int a = 0; a < architectures; ++a) {
    const auto net = oracle::random_architecture(rng);
    std::vector<std::vector<double>> xs(6, std::vector<double>(net.input_dim()));
    for (auto& x : xs)
      for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    std::vector<LabeledSample> batch;
    for (const auto& x : xs) batch.push_back({x, static_cast<std::size_t>(rng.below(net.class_count()))});
    const auto analytic = oracle::flatten(gradient(net, batch));
    const auto numeric = oracle::fd_gradient(net, batch);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
      worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    }
  }
  report(2, "gradient vs finite diff", worst < 1e-4,
         fmt("%.0f architectures, worst relative error %.2e", architectures, worst));
}

// 3. Exhaustive gate check on the 200-mutant reference pool.
void quality_gate() {
  const auto cfg = reference_config();
  const auto data = make_dataset(cfg);
  const auto net = run_train(cfg, data).network;
  const auto t0 = Clock::now();
  const auto pool = generate_pool(net, data, cfg.mutation.pool_config());
  const double build = seconds_since(t0);
  const double original = accuracy(net, data, cfg.mutation.gate_split);
  std::size_t ok = 0;
  for (const auto& m : pool.pool)
    if (m.retained && accuracy(m.network, data, cfg.mutation.gate_split) >= 0.9 * original) ++ok;
  report(3, "quality gate", pool.pool.size() == 200 && ok == 200 && build <= 60.0,
         fmt("%.0f/%.0f retained mutants pass, built in %.2f s from %.0f candidates", static_cast<double>(ok),
             static_cast<double>(pool.pool.size()), build, static_cast<double>(pool.stats.attempts)));
}

// 4. Kill matrix and score against the double loop, 200 mutants x 200 tests.
void kill_oracle() {
  auto cfg = reference_config();
  cfg.dataset.n = 800;
  const auto data = make_dataset(cfg);
  const auto net = run_train(cfg, data).network;
  const auto pool = generate_pool(net, data, cfg.mutation.pool_config());
  const auto nets = networks_of(pool.pool);
  const auto km = kill_matrix(net, pool.pool, data, Split::test);
  const auto expected = oracle::kills(net, nets, data, Split::test);
  bool same = km.mutants() == expected.killed.size();
  for (std::size_t m = 0; same && m < km.mutants(); ++m) {
    same = km.tests() == expected.killed[m].size();
    for (std::size_t t = 0; same && t < km.tests(); ++t) same = km.at(m, t) == expected.killed[m][t];
  }
  const double s = mutation_score(km, false);
  const double s_ex = mutation_score(km, true);
  same = same && s == oracle::score(expected, false) && s_ex == oracle::score(expected, true);
  report(4, "kill/score oracle", same && km.mutants() == 200 && km.tests() == 200,
         fmt("%.0f mutants x %.0f tests, score %.4f, excluding pseudo-equivalent %.4f",
             static_cast<double>(km.mutants()), static_cast<double>(km.tests()), s, s_ex));
}

struct Reference {
  CampaignConfig cfg = reference_config();
  Dataset data;
  Network net;
  PoolResult pool;
  std::vector<Network> nets;
  AdversarialSet adv;
};

// 5. LCR separation on two-moons, timed end to end.
Reference lcr_separation() {
  const auto t0 = Clock::now();
  Reference R;
  R.data = make_dataset(R.cfg);
  R.net = run_train(R.cfg, R.data).network;
  R.pool = generate_pool(R.net, R.data, R.cfg.mutation.pool_config());
  R.nets = networks_of(R.pool.pool);
  R.adv = make_adversarial_set(R.cfg, R.net, R.data);
  const auto clean = batch_lcr(R.adv.clean, R.net, R.nets);
  const auto perturbed = batch_lcr(R.adv.perturbed, R.net, R.nets);
  std::vector<double> neg, pos;
  for (const auto& r : clean) neg.push_back(r.lcr);
  for (std::size_t i = 0; i < perturbed.size(); ++i)
    if (R.adv.flipped[i]) pos.push_back(perturbed[i].lcr);
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  const double area = pos.empty() ? 0.0 : auroc(neg, pos);
  const double elapsed = seconds_since(t0);
  report(5, "LCR separation", !pos.empty() && mean(pos) > mean(neg) && area >= 0.80 && elapsed <= 300.0,
         fmt("eps %.2f, mean LCR adversarial %.4f vs clean %.4f, AUROC %.4f", R.adv.sweep.epsilon, mean(pos), mean(neg),
             area) +
             fmt(", %.0f adversarial samples, %.1f s", static_cast<double>(pos.size()), elapsed));
  return R;
}

// 6. Sequential detector against the fixed-budget full-pool decision.
void sequential_detector(const Reference& R) {
  const auto sprt = resolve_sprt(R.cfg, R.net, R.nets, R.data);
  std::vector<std::vector<double>> mixed;
  for (std::size_t i = 0; i < R.adv.clean.size() && mixed.size() < 100; ++i) mixed.push_back(R.adv.clean[i]);
  for (std::size_t i = 0; i < R.adv.perturbed.size() && mixed.size() < 200; ++i) mixed.push_back(R.adv.perturbed[i]);
  const auto seq = batch_detect(mixed, R.net, R.nets, sprt);
  const auto full = batch_lcr(mixed, R.net, R.nets);
  std::size_t agree = 0;
  double evaluations = 0.0;
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    agree += seq[i].verdict == fixed_budget_verdict(full[i].lcr, sprt) ? 1 : 0;
    evaluations += static_cast<double>(seq[i].mutants_evaluated) / static_cast<double>(mixed.size());
  }
  const auto train = rows_of(R.data, Split::train);
  const auto clean_train = batch_detect(train, R.net, R.nets, sprt);
  std::size_t flagged = 0;
  for (const auto& r : clean_train) flagged += r.verdict == Verdict::adversarial ? 1 : 0;
  const double fpr = static_cast<double>(flagged) / static_cast<double>(train.size());
  const double agreement = static_cast<double>(agree) / static_cast<double>(mixed.size());
  report(6, "sequential detector",
         mixed.size() == 200 && agreement >= 0.95 && evaluations < static_cast<double>(R.nets.size()) &&
             fpr <= sprt.alpha + 0.05,
         fmt("agreement %.3f on %.0f samples, mean evaluations %.2f of %.0f", agreement,
             static_cast<double>(mixed.size()), evaluations, static_cast<double>(R.nets.size())) +
             fmt(", train FPR %.4f (limit %.2f)", fpr, sprt.alpha + 0.05));
}

// 7. PMT on the reference pool.
void pmt(const Reference& R) {
  const auto km = kill_matrix(R.net, R.pool.pool, R.data, R.cfg.score.split);
  std::vector<std::uint8_t> killed;
  for (std::size_t m = 0; m < km.mutants(); ++m) killed.push_back(km.any_kill(m) ? 1 : 0);
  const double baseline = accuracy(R.net, R.data, R.cfg.mutation.gate_split);
  const auto run = run_pmt(R.cfg, R.pool.pool, R.net, baseline, killed);
  const double delta = run.metrics.accuracy - run.metrics.baseline_accuracy;
  const double control = run.permutation_control.accuracy - run.permutation_control.baseline_accuracy;
  report(7, "predictive mutation testing", delta >= 0.05 && std::abs(control) <= 0.1,
         fmt("holdout accuracy %.4f, majority %.4f, delta %+.4f, shuffled control %.4f", run.metrics.accuracy,
             run.metrics.baseline_accuracy, delta, run.permutation_control.accuracy));
}

// 8. Byte-identical CLI reruns.
using Snapshot = std::map<std::string, std::string>;

Snapshot snapshot(const fs::path& dir) {
  Snapshot s;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == ".lock") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    s[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return s;
}

bool run_cli(const fs::path& out, const std::string& extra, const std::string& command) {
  const std::string cmd =
      std::string(NNMUT_CLI_PATH) + " --out " + out.string() + " " + extra + " " + command + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

bool pipeline(const fs::path& out, const std::string& extra) {
  const std::vector<std::string> commands = {
      "train",
      "mutate-model",
      "score",
      "report",
      "detect --samples " + (out / "samples_mixed.csv").string(),
      "pmt",
      "mutate-data",
      "mutate-source",
  };
  for (const auto& c : commands)
    if (!run_cli(out, extra, c)) {
      std::printf("  command failed: %s\n", c.c_str());
      return false;
    }
  return true;
}

void reproducibility() {
  const auto out = fs::temp_directory_path() / "nnmut_acceptance_cli";
  fs::remove_all(out);
  const bool first_ok = pipeline(out, "");
  const auto first = snapshot(out);

  // Fresh directory, one thread.
  fs::remove_all(out);
  const bool second_ok = pipeline(out, "--threads 1");
  const auto second = snapshot(out);

  // Every command again on top of its own output.
  const bool third_ok = pipeline(out, "");
  const auto third = snapshot(out);

  std::size_t differing = 0;
  for (const auto& [name, bytes] : first) {
    if (second.count(name) == 0 || second.at(name) != bytes) ++differing;
    if (third.count(name) == 0 || third.at(name) != bytes) ++differing;
  }
  const bool ok = first_ok && second_ok && third_ok && !first.empty() && differing == 0 &&
                  second.size() == first.size() && third.size() == first.size();
  report(8, "byte-identical reruns", ok,
         fmt("%.0f artifacts compared over 3 runs, %.0f mismatches", static_cast<double>(first.size()),
             static_cast<double>(differing)));
  fs::remove_all(out);
}

}  // namespace

int main() {
  try {
    operator_algebra();
    gradient_check();
    quality_gate();
    kill_oracle();
    const auto R = lcr_separation();
    sequential_detector(R);
    pmt(R);
    reproducibility();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%s: %d of 8 criteria failed\n", failures == 0 ? "ALL PASS" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}
