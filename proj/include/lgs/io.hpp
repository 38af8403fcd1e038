// Copyright 2026 The LGS Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// File formats: JSON instances and JSON-lines datasets, JSON checkpoints
// with base64 parameter payloads, versioned CSV tables, run manifests.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgs/inference.hpp"
#include "lgs/model.hpp"
#include "lgs/problems.hpp"
#include "lgs/training.hpp"

namespace lgs::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;
inline constexpr int kCsvMajor = 1;
inline constexpr int kCsvMinor = 0;
inline constexpr const char* kArtifactVersion = "1.0.0";

std::string read_file(const fs::path& path);
// Creates parent directories as needed.
void write_file(const fs::path& path, const std::string& content);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
// Throws IoError unless the whole string is a number.
double parse_double(const std::string& s);

std::string base64_encode(std::span<const double> values);
std::vector<double> base64_decode(const std::string& text);

// git-style object id: SHA-1 over "blob <size>\0" + content, lowercase hex.
std::string git_blob_sha1(const std::string& content);
std::string file_sha1(const fs::path& path);

Json to_json(const ProblemInstance& instance);
ProblemInstance instance_from_json(const Json& j);
void write_dataset(const fs::path& path, std::span<const ProblemInstance> instances);
std::vector<ProblemInstance> read_dataset(const fs::path& path);

Json to_json(const ModelConfig& c);
// Missing keys keep the values already in `base`.
ModelConfig model_config_from_json(const Json& j, ModelConfig base = {});
Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
Json to_json(const InferenceConfig& c);
InferenceConfig inference_config_from_json(const Json& j, InferenceConfig base = {});

struct Checkpoint {
  PolicyModel model;
  Adam optimizer;
  int epoch = 0;
  double tau0 = 0.0;
  std::optional<TrainConfig> train_config;
};

void save_checkpoint(const fs::path& path, const TrainState& state,
                     const std::optional<TrainConfig>& config = std::nullopt);
std::string checkpoint_text(const TrainState& state, const std::optional<TrainConfig>& config);
Checkpoint load_checkpoint(const fs::path& path);

struct CsvTable {
  std::string schema;
  int major = kCsvMajor;
  int minor = kCsvMinor;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

// First line: "# schema=<name> version=<major>.<minor>".
std::string csv_text(const CsvTable& table);
void write_csv(const fs::path& path, const CsvTable& table);
// Throws IoError on an unknown major version or a different schema.
CsvTable read_csv(const fs::path& path, const std::string& expected_schema);

CsvTable train_trace_table(std::span<const TraceRow> rows);
CsvTable inference_trace_table(std::span<const InferenceTraceRow> rows);
CsvTable latent_table(std::span<const LatentRow> rows);

}  // namespace lgs::io
