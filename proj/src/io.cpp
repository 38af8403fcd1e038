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

#include "lgs/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lgs/errors.hpp"

namespace lgs::io {

using diffnum::Array;
using diffnum::ParamSet;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw IoError("not a number: '" + s + "'");
  }
  return v;
}

namespace {

std::string hex(const unsigned char* p, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < n; ++i) {
    out += digits[p[i] >> 4];
    out += digits[p[i] & 15];
  }
  return out;
}

}  // namespace

std::string base64_encode(std::span<const double> values) {
  std::vector<unsigned char> raw(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &values[i], 8);
    for (int b = 0; b < 8; ++b) raw[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  std::string out(4 * ((raw.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), raw.data(),
                                static_cast<int>(raw.size()));
  out.resize(n);
  return out;
}

std::vector<double> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw IoError("base64 payload has a bad length");
  std::vector<unsigned char> raw(text.size() / 4 * 3);
  const int n = EVP_DecodeBlock(raw.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw IoError("invalid base64 payload");
  std::size_t len = static_cast<std::size_t>(n);
  for (std::size_t i = text.size(); i > 0 && text[i - 1] == '='; --i) --len;
  if (len % 8 != 0) throw IoError("base64 payload is not a whole number of doubles");
  std::vector<double> out(len / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(raw[i * 8 + b]) << (8 * b);
    std::memcpy(&out[i], &bits, 8);
  }
  return out;
}

std::string git_blob_sha1(const std::string& content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob += content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw IoError("SHA-1 digest failed");
  }
  return hex(md, len);
}

std::string file_sha1(const fs::path& path) { return git_blob_sha1(read_file(path)); }

// ---- instances ---------------------------------------------------------------

Json to_json(const ProblemInstance& p) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = to_string(p.kind);
  j["n"] = p.n;
  j["seed"] = p.seed;
  Json coords = Json::array();
  for (const auto& c : p.coords) coords.push_back({c.x, c.y});
  j["coords"] = coords;
  if (p.kind == ProblemKind::CVRP) {
    j["capacity"] = p.capacity;
    j["demands"] = p.demands;
  }
  return j;
}

ProblemInstance instance_from_json(const Json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw IoError("unsupported instance format_version " + std::to_string(version));
    }
    ProblemInstance p;
    p.kind = parse_problem_kind(j.at("kind").get<std::string>());
    p.n = j.at("n").get<int>();
    p.seed = j.value("seed", std::uint64_t{0});
    for (const auto& c : j.at("coords")) p.coords.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    if (p.kind == ProblemKind::CVRP) {
      p.capacity = j.at("capacity").get<double>();
      p.demands = j.at("demands").get<std::vector<double>>();
    }
    const int nodes = p.kind == ProblemKind::TSP ? p.n : p.n + 1;
    if (static_cast<int>(p.coords.size()) != nodes ||
        (p.kind == ProblemKind::CVRP && static_cast<int>(p.demands.size()) != nodes)) {
      throw IoError("instance arrays do not match n = " + std::to_string(p.n));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed instance: ") + e.what());
  } catch (const ArgumentError& e) {
    throw IoError(std::string("malformed instance: ") + e.what());
  }
}

void write_dataset(const fs::path& path, std::span<const ProblemInstance> instances) {
  std::string out;
  for (const auto& p : instances) {
    out += to_json(p).dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<ProblemInstance> read_dataset(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<ProblemInstance> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      out.push_back(instance_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

// ---- configs -----------------------------------------------------------------

namespace {

template <class T>
void take(const Json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

void take_kind(const Json& j, ProblemKind& kind) {
  if (!j.contains("kind")) return;
  try {
    kind = parse_problem_kind(j.at("kind").get<std::string>());
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config field 'kind': ") + e.what());
  }
}

}  // namespace

Json to_json(const ModelConfig& c) {
  return Json{{"kind", to_string(c.kind)}, {"d_h", c.d_h},         {"n_heads", c.n_heads},
              {"n_layers", c.n_layers},    {"d_ff", c.d_ff},       {"d_k", c.d_k},
              {"d_z", c.d_z},              {"latent_hidden", c.latent_hidden},
              {"omega", c.omega},          {"norm_eps", c.norm_eps}};
}

ModelConfig model_config_from_json(const Json& j, ModelConfig c) {
  take_kind(j, c.kind);
  take(j, "d_h", c.d_h);
  take(j, "n_heads", c.n_heads);
  take(j, "n_layers", c.n_layers);
  take(j, "d_ff", c.d_ff);
  take(j, "d_k", c.d_k);
  take(j, "d_z", c.d_z);
  take(j, "latent_hidden", c.latent_hidden);
  take(j, "omega", c.omega);
  take(j, "norm_eps", c.norm_eps);
  c.validate();
  return c;
}

Json to_json(const TrainConfig& c) {
  return Json{{"kind", to_string(c.kind)},
              {"problem_size", c.problem_size},
              {"batch_size", c.batch_size},
              {"latent_samples", c.latent_samples},
              {"epochs", c.epochs},
              {"entropy_coef", c.entropy_coef},
              {"tau0", c.tau0},
              {"tau_decay", c.tau_decay},
              {"learning_rate", c.learning_rate},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"weight_decay", c.weight_decay},
              {"decoder_grad_through_encoder", c.decoder_grad_through_encoder},
              {"eval_instances", c.eval_instances},
              {"seed", c.seed},
              {"record_timing", c.record_timing}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  take_kind(j, c.kind);
  take(j, "problem_size", c.problem_size);
  take(j, "batch_size", c.batch_size);
  take(j, "latent_samples", c.latent_samples);
  take(j, "epochs", c.epochs);
  take(j, "entropy_coef", c.entropy_coef);
  take(j, "tau0", c.tau0);
  take(j, "tau_decay", c.tau_decay);
  take(j, "learning_rate", c.learning_rate);
  take(j, "adam_beta1", c.adam_beta1);
  take(j, "adam_beta2", c.adam_beta2);
  take(j, "adam_eps", c.adam_eps);
  take(j, "weight_decay", c.weight_decay);
  take(j, "decoder_grad_through_encoder", c.decoder_grad_through_encoder);
  take(j, "eval_instances", c.eval_instances);
  take(j, "seed", c.seed);
  take(j, "record_timing", c.record_timing);
  c.validate();
  return c;
}

Json to_json(const InferenceConfig& c) {
  return Json{{"method", to_string(c.method)},
              {"particles", c.particles},
              {"iterations", c.iterations},
              {"wall_clock_ms", c.wall_clock_ms},
              {"lambda", c.lambda},
              {"proposal_variance", c.proposal_variance},
              {"proposal_drift", c.proposal_drift},
              {"sa_step", c.sa_step},
              {"sa_schedule", c.sa_schedule},
              {"sa_optimizer", c.sa_optimizer == SaOptimizer::kAdam ? "adam" : "sgd"},
              {"augment", c.augment},
              {"record_latents", c.record_latents},
              {"latent_dim", c.latent_dim},
              {"seed", c.seed}};
}

InferenceConfig inference_config_from_json(const Json& j, InferenceConfig c) {
  if (j.contains("method")) {
    try {
      c.method = parse_method(j.at("method").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config field 'method': ") + e.what());
    }
  }
  take(j, "particles", c.particles);
  take(j, "iterations", c.iterations);
  take(j, "wall_clock_ms", c.wall_clock_ms);
  take(j, "lambda", c.lambda);
  take(j, "proposal_variance", c.proposal_variance);
  take(j, "proposal_drift", c.proposal_drift);
  take(j, "sa_step", c.sa_step);
  take(j, "sa_schedule", c.sa_schedule);
  if (j.contains("sa_optimizer")) {
    const std::string s = j.at("sa_optimizer").get<std::string>();
    if (s == "sgd") {
      c.sa_optimizer = SaOptimizer::kSgd;
    } else if (s == "adam") {
      c.sa_optimizer = SaOptimizer::kAdam;
    } else {
      throw ConfigError("config field 'sa_optimizer' must be 'sgd' or 'adam'");
    }
  }
  take(j, "augment", c.augment);
  take(j, "record_latents", c.record_latents);
  take(j, "latent_dim", c.latent_dim);
  take(j, "seed", c.seed);
  c.validate();
  return c;
}

// ---- checkpoints -------------------------------------------------------------

namespace {

Json arrays_to_json(const std::vector<Array>& arrays) {
  Json out = Json::array();
  for (const auto& a : arrays) {
    out.push_back({{"rows", a.rows()}, {"cols", a.cols()}, {"data", base64_encode(a.data())}});
  }
  return out;
}

std::vector<Array> arrays_from_json(const Json& j) {
  std::vector<Array> out;
  for (const auto& e : j) {
    const auto rows = e.at("rows").get<std::size_t>(), cols = e.at("cols").get<std::size_t>();
    auto data = base64_decode(e.at("data").get<std::string>());
    if (data.size() != rows * cols) throw IoError("checkpoint array size mismatch");
    out.emplace_back(rows, cols, std::move(data));
  }
  return out;
}

}  // namespace

std::string checkpoint_text(const TrainState& state, const std::optional<TrainConfig>& config) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["model_config"] = to_json(state.model.config());
  Json params = Json::array();
  const ParamSet& p = state.model.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Array& a = p.value(i);
    params.push_back({{"name", p.name(i)},
                      {"group", p.group(i)},
                      {"rows", a.rows()},
                      {"cols", a.cols()},
                      {"data", base64_encode(a.data())}});
  }
  j["params"] = params;
  const Adam& opt = state.optimizer;
  j["optimizer"] = {{"learning_rate", opt.learning_rate()},
                    {"steps", opt.steps()},
                    {"m", arrays_to_json(opt.first_moment())},
                    {"v", arrays_to_json(opt.second_moment())}};
  j["epoch"] = state.epoch;
  j["tau0"] = state.tau0;
  if (config) j["train_config"] = to_json(*config);
  return j.dump(1) + "\n";
}

void save_checkpoint(const fs::path& path, const TrainState& state,
                     const std::optional<TrainConfig>& config) {
  write_file(path, checkpoint_text(state, config));
}

Checkpoint load_checkpoint(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) {
      throw IoError("'" + path.string() + "': unsupported checkpoint format_version");
    }
    const ModelConfig mc = model_config_from_json(j.at("model_config"));
    ParamSet params;
    for (const auto& e : j.at("params")) {
      auto arrays = arrays_from_json(Json::array({e}));
      params.add(e.at("name").get<std::string>(), std::move(arrays[0]), e.at("group").get<int>());
    }
    PolicyModel model(mc, std::move(params));
    std::optional<TrainConfig> tc;
    if (j.contains("train_config")) tc = train_config_from_json(j.at("train_config"));
    const Json& o = j.at("optimizer");
    Adam adam;
    if (tc) {
      adam = Adam(tc->learning_rate, tc->adam_beta1, tc->adam_beta2, tc->adam_eps,
                  tc->weight_decay);
    }
    adam.set_learning_rate(o.at("learning_rate").get<double>());
    adam.restore(o.at("steps").get<long long>(), arrays_from_json(o.at("m")),
                 arrays_from_json(o.at("v")));
    return Checkpoint{std::move(model), adam, j.at("epoch").get<int>(),
                      j.at("tau0").get<double>(), tc};
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path.string() + "': malformed checkpoint: " + e.what());
  }
}

// ---- CSV -----------------------------------------------------------------------

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw IoError("CSV '" + schema + "' has no column '" + name + "'");
}

std::string csv_text(const CsvTable& t) {
  std::string out = "# schema=" + t.schema + " version=" + std::to_string(t.major) + "." +
                    std::to_string(t.minor) + "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

void write_csv(const fs::path& path, const CsvTable& table) {
  write_file(path, csv_text(table));
}

CsvTable read_csv(const fs::path& path, const std::string& expected_schema) {
  std::istringstream in(read_file(path));
  std::string line;
  CsvTable t;
  if (!std::getline(in, line) || line.rfind("# schema=", 0) != 0) {
    throw IoError("'" + path.string() + "' has no schema line");
  }
  const auto v = line.find(" version=");
  if (v == std::string::npos) throw IoError("'" + path.string() + "' has no schema version");
  t.schema = line.substr(9, v - 9);
  const std::string ver = line.substr(v + 9);
  const auto dot = ver.find('.');
  try {
    t.major = std::stoi(ver.substr(0, dot));
    t.minor = dot == std::string::npos ? 0 : std::stoi(ver.substr(dot + 1));
  } catch (const std::exception&) {
    throw IoError("'" + path.string() + "' has a malformed version '" + ver + "'");
  }
  if (t.major != kCsvMajor) {
    throw IoError("'" + path.string() + "' has unsupported major version " +
                  std::to_string(t.major));
  }
  if (!expected_schema.empty() && t.schema != expected_schema) {
    throw IoError("'" + path.string() + "' is a '" + t.schema + "' table, expected '" +
                  expected_schema + "'");
  }
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (!std::getline(in, line)) throw IoError("'" + path.string() + "' has no header row");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) {
      throw IoError("'" + path.string() + "': row " + std::to_string(t.rows.size() + 1) +
                    " has " + std::to_string(cells.size()) + " cells");
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

CsvTable train_trace_table(std::span<const TraceRow> rows) {
  CsvTable t;
  t.schema = "train_trace";
  t.header = {"epoch", "mean_cost", "greedy_cost", "mean_step_entropy", "tau", "wall_ms"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.epoch), format_double(r.mean_cost),
                      format_double(r.greedy_cost), format_double(r.mean_step_entropy),
                      format_double(r.tau), format_double(r.wall_ms)});
  }
  return t;
}

CsvTable inference_trace_table(std::span<const InferenceTraceRow> rows) {
  CsvTable t;
  t.schema = "inference_trace";
  t.header = {"m", "best_cost", "mean_cost", "acceptance_rate", "theta_update_flag"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.m), format_double(r.best_cost), format_double(r.mean_cost),
                      format_double(r.acceptance_rate), std::to_string(r.theta_update)});
  }
  return t;
}

CsvTable latent_table(std::span<const LatentRow> rows) {
  CsvTable t;
  t.schema = "latent_trace";
  t.header = {"m", "k", "z1", "z2", "cost", "accepted"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.m), std::to_string(r.k), format_double(r.z1),
                      format_double(r.z2), format_double(r.cost), std::to_string(r.accepted)});
  }
  return t;
}

}  // namespace lgs::io
