#include "nnmut/serialize.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nnmut/error.hpp"

namespace nnmut {

namespace fs = std::filesystem;

Json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path& path, const Json& value) { write_text(path, value.dump(2) + "\n"); }

namespace {

constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

// Field access with a data error naming the missing key.
const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw DataError(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <typename T>
T get(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key);
}

double finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DataError(std::string("non-finite value in ") + what);
  return v;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
    if (i + 1 < bytes.size()) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
    out.push_back(kAlphabet[(chunk >> 18) & 63]);
    out.push_back(kAlphabet[(chunk >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kAlphabet[(chunk >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? kAlphabet[chunk & 63] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw DataError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t chunk = 0;
    int pad = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      std::uint32_t v = 0;
      if (c == '=') {
        ++pad;
      } else {
        const auto pos = kAlphabet.find(c);
        if (pos == std::string_view::npos || pad > 0) throw DataError("invalid base64 character");
        v = static_cast<std::uint32_t>(pos);
      }
      chunk = (chunk << 6) | v;
    }
    out.push_back(static_cast<std::uint8_t>(chunk >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(chunk >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(chunk));
  }
  return out;
}

Json to_json(const Network& network) {
  Json layers = Json::array();
  for (const auto& layer : network.layers()) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < layer.out; ++r) {
      const auto row = layer.incoming(r);
      rows.push_back(Json(std::vector<double>(row.begin(), row.end())));
    }
    layers.push_back({{"weights", std::move(rows)},
                      {"biases", layer.biases},
                      {"activation", std::string(to_string(layer.activation))}});
  }
  return {{"input_dim", network.input_dim()}, {"class_count", network.class_count()}, {"layers", std::move(layers)}};
}

Network network_from_json(const Json& j) {
  const auto input_dim = get<std::size_t>(j, "input_dim");
  const auto class_count = get<std::size_t>(j, "class_count");
  const auto& jl = field(j, "layers");
  if (!jl.is_array()) throw DataError("'layers' must be an array");
  std::vector<Layer> layers;
  std::size_t width = input_dim;
  for (const auto& entry : jl) {
    const auto rows = get<std::vector<std::vector<double>>>(entry, "weights");
    Layer layer;
    layer.in = width;
    layer.out = rows.size();
    for (const auto& row : rows) {
      if (row.size() != width)
        throw DataError("layer " + std::to_string(layers.size()) + ": weight row width " +
                        std::to_string(row.size()) + " does not match input width " + std::to_string(width));
      for (double v : row) layer.weights.push_back(finite(v, "weights"));
    }
    layer.biases = get<std::vector<double>>(entry, "biases");
    for (double v : layer.biases) finite(v, "biases");
    try {
      layer.activation = activation_from_string(get<std::string>(entry, "activation"));
    } catch (const ConfigError& e) {
      throw DataError(e.what());
    }
    width = layer.out;
    layers.push_back(std::move(layer));
  }
  return Network(input_dim, class_count, std::move(layers));
}

Network load_network(const fs::path& path) { return network_from_json(read_json(path)); }

void save_network(const fs::path& path, const Network& network, const Json& meta) {
  Json out = {{"schema_version", kSchemaVersion}};
  for (const auto& [key, value] : meta.items()) out[key] = value;
  const Json body = to_json(network);
  for (const auto& [key, value] : body.items()) out[key] = value;
  write_json(path, out);
}

Json to_json(const Dataset& data) {
  Json features = Json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = data.row(i);
    features.push_back(Json(std::vector<double>(row.begin(), row.end())));
  }
  Json tags = Json::array();
  for (auto s : data.splits) tags.push_back(std::string(to_string(s)));
  return {{"dim", data.dim},
          {"class_count", data.class_count},
          {"provenance", data.provenance},
          {"label_names", data.label_names},
          {"features", std::move(features)},
          {"labels", data.labels},
          {"split_tags", std::move(tags)}};
}

Dataset dataset_from_json(const Json& j) {
  Dataset data;
  data.dim = get<std::size_t>(j, "dim");
  data.class_count = get<std::size_t>(j, "class_count");
  data.provenance = get_or<std::string>(j, "provenance", "");
  data.label_names = get_or<std::vector<std::string>>(j, "label_names", {});
  for (const auto& row : get<std::vector<std::vector<double>>>(j, "features")) {
    if (row.size() != data.dim) throw DataError("dataset row width does not match dim");
    data.features.insert(data.features.end(), row.begin(), row.end());
  }
  data.labels = get<std::vector<std::size_t>>(j, "labels");
  for (const auto& tag : get<std::vector<std::string>>(j, "split_tags")) {
    try {
      data.splits.push_back(split_from_string(tag));
    } catch (const ConfigError& e) {
      throw DataError(e.what());
    }
  }
  data.validate();
  return data;
}

Dataset load_dataset(const fs::path& path) { return dataset_from_json(read_json(path)); }

Json to_json(const TrainingSpec& spec) {
  Json acts = Json::array();
  for (auto a : spec.activations) acts.push_back(std::string(to_string(a)));
  return {{"hidden_sizes", spec.hidden_sizes}, {"activations", std::move(acts)},
          {"learning_rate", spec.learning_rate}, {"epochs", spec.epochs},
          {"batch_size", spec.batch_size},       {"seed", spec.seed},
          {"init_scale", spec.init_scale}};
}

TrainingSpec training_spec_from_json(const Json& j, const TrainingSpec& defaults) {
  TrainingSpec spec = defaults;
  spec.hidden_sizes = get_or(j, "hidden_sizes", defaults.hidden_sizes);
  if (j.contains("activations")) {
    spec.activations.clear();
    for (const auto& name : get<std::vector<std::string>>(j, "activations"))
      spec.activations.push_back(activation_from_string(name));
  }
  spec.learning_rate = get_or(j, "learning_rate", defaults.learning_rate);
  spec.epochs = get_or(j, "epochs", defaults.epochs);
  spec.batch_size = get_or(j, "batch_size", defaults.batch_size);
  spec.seed = get_or(j, "seed", defaults.seed);
  spec.init_scale = get_or(j, "init_scale", defaults.init_scale);
  return spec;
}

Json to_json(const ModelMutationSpec& spec) {
  return {{"kind", std::string(to_string(spec.kind))}, {"level", std::string(to_string(spec.level))},
          {"gamma", spec.gamma}, {"sigma", spec.sigma}, {"seed", spec.seed}};
}

ModelMutationSpec model_mutation_from_json(const Json& j) {
  ModelMutationSpec spec;
  spec.kind = model_operator_from_string(get<std::string>(j, "kind"));
  spec.level = j.contains("level") ? mutation_level_from_string(get<std::string>(j, "level")) : level_of(spec.kind);
  spec.gamma = get_or(j, "gamma", spec.gamma);
  spec.sigma = get_or(j, "sigma", spec.sigma);
  spec.seed = get_or<std::uint64_t>(j, "seed", 0);
  spec.validate();
  return spec;
}

Json to_json(const DataMutationSpec& spec) {
  return {{"kind", std::string(to_string(spec.kind))}, {"rate", spec.rate}, {"sigma", spec.sigma},
          {"seed", spec.seed}};
}

DataMutationSpec data_mutation_from_json(const Json& j) {
  DataMutationSpec spec;
  spec.kind = data_mutation_kind_from_string(get<std::string>(j, "kind"));
  spec.rate = get_or(j, "rate", 0.0);
  spec.sigma = get_or(j, "sigma", 0.0);
  spec.seed = get_or<std::uint64_t>(j, "seed", 0);
  spec.validate();
  return spec;
}

Json to_json(const ProgramMutationSpec& spec) {
  return {{"kind", std::string(to_string(spec.kind))},
          {"layer_index", spec.layer_index},
          {"width", spec.width},
          {"activation", std::string(to_string(spec.activation))},
          {"factor", spec.factor},
          {"seed", spec.seed}};
}

ProgramMutationSpec program_mutation_from_json(const Json& j) {
  ProgramMutationSpec spec;
  spec.kind = program_mutation_kind_from_string(get<std::string>(j, "kind"));
  spec.layer_index = get_or<std::size_t>(j, "layer_index", 0);
  spec.width = get_or<std::size_t>(j, "width", spec.width);
  if (j.contains("activation")) spec.activation = activation_from_string(get<std::string>(j, "activation"));
  spec.factor = get_or(j, "factor", 1.0);
  spec.seed = get_or<std::uint64_t>(j, "seed", 0);
  return spec;
}

Json to_json(const OperatorSpec& op) {
  return std::visit(
      [](const auto& spec) {
        using T = std::decay_t<decltype(spec)>;
        Json j = {{"family", std::is_same_v<T, ModelMutationSpec> ? "model"
                             : std::is_same_v<T, DataMutationSpec> ? "data"
                                                                   : "program"}};
        j.update(to_json(spec));
        return j;
      },
      op);
}

OperatorSpec operator_spec_from_json(const Json& j) {
  const auto family = get<std::string>(j, "family");
  if (family == "model") return model_mutation_from_json(j);
  if (family == "data") return data_mutation_from_json(j);
  if (family == "program") return program_mutation_from_json(j);
  throw DataError("unknown operator family '" + family + "'");
}

Json to_json(const PoolStats& stats) {
  Json per_op = Json::object();
  for (const auto& [name, s] : stats.per_operator)
    per_op[name] = {{"attempted", s.attempted},
                    {"retained", s.retained},
                    {"rejected", s.rejected},
                    {"rejection_rate", s.rejection_rate()}};
  Json rejected = Json::array();
  for (const auto& r : stats.rejected)
    rejected.push_back({{"id", r.id}, {"kind", std::string(to_string(r.kind))}, {"accuracy", r.accuracy}});
  return {{"original_accuracy", stats.original_accuracy},
          {"threshold", stats.threshold},
          {"attempts", stats.attempts},
          {"per_operator", std::move(per_op)},
          {"rejected", std::move(rejected)}};
}

namespace {

std::string mutant_file(std::size_t id) { return "mutant_" + std::to_string(id) + ".json"; }

}  // namespace

void write_pool_archive(const fs::path& dir, const PoolArchive& archive) {
  fs::create_directories(dir);
  // Stale mutant files from an earlier run would otherwise linger.
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("mutant_", 0) == 0 && entry.path().extension() == ".json") fs::remove(entry.path());
  }
  Json records = Json::array();
  for (const auto& r : archive.records) {
    records.push_back({{"id", r.id},
                       {"origin", std::string(to_string(r.origin))},
                       {"operator", to_json(r.op)},
                       {"accuracy", r.accuracy},
                       {"retained", r.retained},
                       {"model", mutant_file(r.id)}});
    save_network(dir / mutant_file(r.id), r.network, {{"config", archive.config}});
  }
  Json pool = {{"schema_version", kSchemaVersion},
               {"complete", archive.complete},
               {"config", archive.config},
               {"stats", archive.stats},
               {"records", std::move(records)}};
  write_json(dir / "pool.json", pool);
}

PoolArchive read_pool_archive(const fs::path& dir) {
  const auto pool = read_json(dir / "pool.json");
  PoolArchive archive;
  archive.complete = get_or(pool, "complete", true);
  archive.config = get_or<Json>(pool, "config", Json::object());
  archive.stats = get_or<Json>(pool, "stats", Json::object());
  for (const auto& entry : field(pool, "records")) {
    MutantRecord r;
    r.id = get<std::size_t>(entry, "id");
    r.origin = mutant_origin_from_string(get<std::string>(entry, "origin"));
    try {
      r.op = operator_spec_from_json(field(entry, "operator"));
    } catch (const ConfigError& e) {
      throw DataError(e.what());
    }
    r.accuracy = get<double>(entry, "accuracy");
    r.retained = get<bool>(entry, "retained");
    r.network = load_network(dir / get<std::string>(entry, "model"));
    archive.records.push_back(std::move(r));
  }
  return archive;
}

Json to_json(const KillMatrix& km) {
  Json rows = Json::array();
  for (std::size_t m = 0; m < km.mutants(); ++m) {
    const auto bits = kill_bits(km, m);
    rows.push_back({{"id", km.mutant_ids[m]},
                    {"killed", km.any_kill(m)},
                    {"pseudo_equivalent", km.pseudo_equivalent[m] != 0},
                    {"bits", base64_encode(bits)}});
  }
  return {{"bit_order", "bit t is byte t/8, position t%8, least significant first"},
          {"test_indices", km.test_indices},
          {"mutants", std::move(rows)}};
}

KillMatrix kill_matrix_from_json(const Json& j) {
  KillMatrix km;
  km.test_indices = get<std::vector<std::size_t>>(j, "test_indices");
  const auto tests = km.test_indices.size();
  for (const auto& row : field(j, "mutants")) {
    km.mutant_ids.push_back(get<std::size_t>(row, "id"));
    km.pseudo_equivalent.push_back(get<bool>(row, "pseudo_equivalent") ? 1 : 0);
    const auto bits = base64_decode(get<std::string>(row, "bits"));
    if (bits.size() != (tests + 7) / 8) throw DataError("kill bitset length does not match test count");
    for (std::size_t t = 0; t < tests; ++t) km.killed.push_back((bits[t / 8] >> (t % 8)) & 1u);
  }
  km.validate();
  return km;
}

Json to_json(const SprtConfig& cfg) {
  return {{"p0", cfg.p0}, {"p1", cfg.p1}, {"alpha", cfg.alpha}, {"beta", cfg.beta}, {"max_mutants", cfg.max_mutants}};
}

SprtConfig sprt_config_from_json(const Json& j, const SprtConfig& defaults) {
  SprtConfig cfg = defaults;
  cfg.p0 = get_or(j, "p0", cfg.p0);
  cfg.p1 = get_or(j, "p1", cfg.p1);
  cfg.alpha = get_or(j, "alpha", cfg.alpha);
  cfg.beta = get_or(j, "beta", cfg.beta);
  cfg.max_mutants = get_or(j, "max_mutants", cfg.max_mutants);
  return cfg;
}

Json to_json(const LcrReport& report) {
  return {{"sample_id", report.sample_id},
          {"lcr", report.lcr},
          {"mutants_evaluated", report.mutants_evaluated},
          {"label_changes", report.label_changes},
          {"verdict", std::string(to_string(report.verdict))},
          {"reference_label", report.reference_label},
          {"forced", report.forced}};
}

Json to_json(const PmtModel& model) {
  return {{"weights", model.weights},
          {"bias", model.bias},
          {"training_meta", {{"seed", model.seed}, {"epochs", model.epochs}, {"learning_rate", model.learning_rate}}},
          {"final_loss", model.loss_history.empty() ? Json(nullptr) : Json(model.loss_history.back())}};
}

PmtModel pmt_model_from_json(const Json& j) {
  PmtModel model;
  model.weights = get<std::vector<double>>(j, "weights");
  model.bias = get<double>(j, "bias");
  for (double w : model.weights) finite(w, "pmt weights");
  finite(model.bias, "pmt bias");
  if (j.contains("training_meta")) {
    const auto& meta = j.at("training_meta");
    model.seed = get_or<std::uint64_t>(meta, "seed", 0);
    model.epochs = get_or<std::size_t>(meta, "epochs", 0);
    model.learning_rate = get_or(meta, "learning_rate", 0.0);
  }
  return model;
}

}  // namespace nnmut
