#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nnmut/analysis.hpp"
#include "nnmut/data.hpp"
#include "nnmut/mutation.hpp"
#include "nnmut/nn.hpp"
#include "nnmut/pmt.hpp"

namespace nnmut {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// Files. Output is pretty-printed with a trailing newline; doubles use the
// shortest decimal that round-trips.
Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& value);
void write_text(const std::filesystem::path& path, std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Model file: {input_dim, class_count, layers: [{weights, biases, activation}]}.
Json to_json(const Network& network);
Network network_from_json(const Json& j);
Network load_network(const std::filesystem::path& path);
/// Writes schema_version, then the keys of `meta`, then the model.
void save_network(const std::filesystem::path& path, const Network& network, const Json& meta = Json::object());

// Dataset archive: {dim, class_count, provenance, label_names, features, labels, split_tags}.
Json to_json(const Dataset& data);
Dataset dataset_from_json(const Json& j);
Dataset load_dataset(const std::filesystem::path& path);

Json to_json(const TrainingSpec& spec);
TrainingSpec training_spec_from_json(const Json& j, const TrainingSpec& defaults = {});

Json to_json(const ModelMutationSpec& spec);
ModelMutationSpec model_mutation_from_json(const Json& j);
Json to_json(const DataMutationSpec& spec);
DataMutationSpec data_mutation_from_json(const Json& j);
Json to_json(const ProgramMutationSpec& spec);
ProgramMutationSpec program_mutation_from_json(const Json& j);
/// Tagged with "family": "model" | "data" | "program".
Json to_json(const OperatorSpec& op);
OperatorSpec operator_spec_from_json(const Json& j);

Json to_json(const PoolStats& stats);

/// Mutant pool on disk: pool.json plus mutant_<id>.json per record.
struct PoolArchive {
  std::vector<MutantRecord> records;
  Json stats = Json::object();
  Json config = Json::object();
  bool complete = true;
};

void write_pool_archive(const std::filesystem::path& dir, const PoolArchive& archive);
PoolArchive read_pool_archive(const std::filesystem::path& dir);

Json to_json(const KillMatrix& km);
KillMatrix kill_matrix_from_json(const Json& j);

Json to_json(const SprtConfig& cfg);
SprtConfig sprt_config_from_json(const Json& j, const SprtConfig& defaults = {});
Json to_json(const LcrReport& report);

Json to_json(const PmtModel& model);
PmtModel pmt_model_from_json(const Json& j);

}  // namespace nnmut
