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

#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "lgs/errors.hpp"
#include "lgs/inference.hpp"
#include "lgs/io.hpp"
#include "lgs/kernels.hpp"
#include "lgs/model.hpp"
#include "lgs/oracle.hpp"
#include "lgs/problems.hpp"
#include "lgs/training.hpp"
#include "lgs/verify.hpp"

namespace lgs::cli {
namespace {

using io::Json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// A suite or property failed; exit code 1.
class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

fs::path output_dir(const std::optional<std::string>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("LGS_OUTPUT_DIR"); env && *env) return env;
  return ".";
}

fs::path under(const fs::path& dir, const fs::path& p) { return p.is_absolute() ? p : dir / p; }

void apply_threads(const std::optional<int>& flag) {
  if (flag) {
    kernels::set_threads(*flag);
  } else if (const char* env = std::getenv("LGS_THREADS"); env && *env) {
    try {
      kernels::set_threads(std::stoi(env));
    } catch (const std::exception&) {
      throw ArgumentError(std::string("LGS_THREADS is not an integer: '") + env + "'");
    }
  }
}

// A run config file, or the "config" object of a manifest.
Json load_config(const std::optional<std::string>& path) {
  if (!path) return Json::object();
  Json j;
  try {
    j = Json::parse(io::read_file(*path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + *path + "' is not valid JSON: " + e.what());
  }
  if (j.contains("command") && j.contains("config")) return j.at("config");
  return j;
}

template <class T>
void set_if(Json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

Json file_entry(const fs::path& p) {
  return Json{{"path", p.string()}, {"sha1", io::file_sha1(p)}};
}

void write_manifest(const fs::path& path, const std::string& command, const Json& config,
                    const Json& seeds, const std::map<std::string, fs::path>& inputs,
                    const std::map<std::string, fs::path>& outputs, double wall_ms,
                    Json extra = Json::object()) {
  Json m;
  m["artifact"] = "lgs";
  m["artifact_version"] = io::kArtifactVersion;
  m["command"] = command;
  m["config"] = config;
  m["seeds"] = seeds;
  Json in = Json::object(), out = Json::object();
  for (const auto& [k, p] : inputs) in[k] = file_entry(p);
  for (const auto& [k, p] : outputs) out[k] = file_entry(p);
  m["inputs"] = in;
  m["outputs"] = out;
  if (in.contains("checkpoint")) m["checkpoint_sha1"] = in["checkpoint"]["sha1"];
  if (out.contains("checkpoint")) m["checkpoint_sha1"] = out["checkpoint"]["sha1"];
  m["threads"] = kernels::max_threads();
  m["wall_clock_ms"] = wall_ms;
  for (auto& [k, v] : extra.items()) m[k] = v;
  io::write_file(path, m.dump(2) + "\n");
}

std::string join_visits(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(v[i]);
  }
  return s;
}

// ---- gen ---------------------------------------------------------------------

struct GenFlags {
  std::optional<std::string> config, kind, out_dir;
  std::optional<int> n, count, threads;
  std::optional<std::uint64_t> seed;
  std::string out = "dataset.jsonl";
};

void add_gen(CLI::App& app, GenFlags& f) {
  app.add_option("--config", f.config, "JSON config or manifest to replay");
  app.add_option("--kind", f.kind, "tsp or cvrp");
  app.add_option("--n", f.n, "nodes (TSP) or customers (CVRP)");
  app.add_option("--count", f.count, "number of instances");
  app.add_option("--seed", f.seed, "root seed");
  app.add_option("--out", f.out, "dataset path (JSON lines)");
  app.add_option("--out-dir", f.out_dir, "base directory for relative outputs");
  app.add_option("--threads", f.threads, "OpenMP threads");
}

int cmd_gen(const GenFlags& f) {
  const auto start = Clock::now();
  apply_threads(f.threads);
  Json cfg = {{"kind", "tsp"}, {"n", 10}, {"count", 1000}, {"seed", 0}};
  cfg.merge_patch(load_config(f.config));
  set_if(cfg, "kind", f.kind);
  set_if(cfg, "n", f.n);
  set_if(cfg, "count", f.count);
  set_if(cfg, "seed", f.seed);
  const ProblemKind kind = parse_problem_kind(cfg.at("kind").get<std::string>());
  const int n = cfg.at("n").get<int>();
  const int count = cfg.at("count").get<int>();
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  if (count < 0) throw ArgumentError("--count must be >= 0");
  if (n < 1) throw ArgumentError("--n must be >= 1");
  std::vector<ProblemInstance> instances;
  instances.reserve(count);
  for (int i = 0; i < count; ++i) {
    instances.push_back(generate_instance(kind, n, derive_seed(seed, "dataset", i)));
  }
  const fs::path out = under(output_dir(f.out_dir), f.out);
  io::write_dataset(out, instances);
  write_manifest(fs::path(out.string() + ".manifest.json"), "gen", cfg, {{"seed", seed}}, {},
                 {{"dataset", out}}, elapsed_ms(start));
  std::cout << "wrote " << count << " " << to_string(kind) << " instances to " << out.string()
            << "\n";
  return kOk;
}

// ---- train -------------------------------------------------------------------

struct TrainFlags {
  std::optional<std::string> config, kind, resume, dataset, scale, out_dir;
  std::optional<int> n, epochs, batch_size, samples, d_z, checkpoint_every, eval_instances, threads;
  std::optional<double> entropy, tau0, tau_decay, lr, weight_decay;
  std::optional<std::uint64_t> seed, init_seed;
  bool timing = false;
};

void add_train(CLI::App& app, TrainFlags& f) {
  app.add_option("--config", f.config, "JSON config or manifest to replay");
  app.add_option("--kind", f.kind, "tsp or cvrp");
  app.add_option("--n", f.n, "problem size");
  app.add_option("--epochs", f.epochs, "total epochs");
  app.add_option("--batch-size", f.batch_size, "instances per epoch (B)");
  app.add_option("--samples", f.samples, "latent samples per instance (K)");
  app.add_option("--entropy", f.entropy, "entropy coefficient (beta)");
  app.add_option("--tau0", f.tau0, "initial weight temperature (<= 0: automatic)");
  app.add_option("--tau-decay", f.tau_decay, "per-epoch temperature decay");
  app.add_option("--lr", f.lr, "Adam learning rate");
  app.add_option("--weight-decay", f.weight_decay, "Adam weight decay");
  app.add_option("--eval-instances", f.eval_instances, "greedy validation instances");
  app.add_option("--seed", f.seed, "training seed");
  app.add_option("--init-seed", f.init_seed, "parameter initialisation seed");
  app.add_option("--scale", f.scale, "desk or full model size");
  app.add_option("--d-z", f.d_z, "latent dimension");
  app.add_option("--dataset", f.dataset, "train on a fixed dataset instead of fresh instances");
  app.add_option("--resume", f.resume, "checkpoint to continue from");
  app.add_option("--checkpoint-every", f.checkpoint_every, "also save every k epochs");
  app.add_flag("--timing", f.timing, "record wall_ms in the trace");
  app.add_option("--out-dir", f.out_dir, "output directory");
  app.add_option("--threads", f.threads, "OpenMP threads");
}

int cmd_train(const TrainFlags& f) {
  const auto start = Clock::now();
  apply_threads(f.threads);
  Json cfg = {{"model", Json::object()}, {"train", Json::object()}, {"init_seed", 0},
              {"scale", "desk"},         {"resume", nullptr},       {"dataset", nullptr},
              {"checkpoint_every", 0}};
  cfg.merge_patch(load_config(f.config));
  Json& t = cfg["train"];
  set_if(t, "kind", f.kind);
  set_if(t, "problem_size", f.n);
  set_if(t, "epochs", f.epochs);
  set_if(t, "batch_size", f.batch_size);
  set_if(t, "latent_samples", f.samples);
  set_if(t, "entropy_coef", f.entropy);
  set_if(t, "tau0", f.tau0);
  set_if(t, "tau_decay", f.tau_decay);
  set_if(t, "learning_rate", f.lr);
  set_if(t, "weight_decay", f.weight_decay);
  set_if(t, "eval_instances", f.eval_instances);
  set_if(t, "seed", f.seed);
  if (f.timing) t["record_timing"] = true;
  if (!t.contains("record_timing")) t["record_timing"] = false;
  set_if(cfg["model"], "d_z", f.d_z);
  set_if(cfg, "init_seed", f.init_seed);
  set_if(cfg, "scale", f.scale);
  set_if(cfg, "resume", f.resume);
  set_if(cfg, "dataset", f.dataset);
  set_if(cfg, "checkpoint_every", f.checkpoint_every);

  std::optional<io::Checkpoint> ck;
  if (!cfg["resume"].is_null()) ck = io::load_checkpoint(cfg["resume"].get<std::string>());
  TrainConfig tc = io::train_config_from_json(
      cfg["train"], ck && ck->train_config ? *ck->train_config : TrainConfig{});
  const std::string scale = cfg.at("scale").get<std::string>();
  if (scale != "desk" && scale != "full") throw ConfigError("config field 'scale' must be desk or full");
  const auto init_seed = cfg.at("init_seed").get<std::uint64_t>();

  TrainState state = [&] {
    if (ck) {
      TrainState s{ck->model, ck->optimizer, ck->epoch, ck->tau0};
      s.optimizer.set_learning_rate(tc.learning_rate);
      return s;
    }
    ModelConfig base = scale == "full" ? full_scale_config(tc.kind) : ModelConfig{};
    base.kind = tc.kind;
    ModelConfig mc = io::model_config_from_json(cfg["model"], base);
    mc.kind = tc.kind;
    return initial_state(tc, mc, init_seed);
  }();
  if (state.model.config().kind != tc.kind) {
    throw ConfigError("checkpoint is for " + to_string(state.model.config().kind) +
                      " but config asks for " + to_string(tc.kind));
  }
  cfg["train"] = io::to_json(tc);
  cfg["model"] = io::to_json(state.model.config());

  InstanceSource source;
  std::map<std::string, fs::path> inputs;
  if (!cfg["dataset"].is_null()) {
    const fs::path ds = cfg["dataset"].get<std::string>();
    source = pool_source(io::read_dataset(ds), tc.batch_size);
    inputs["dataset"] = ds;
  }
  if (ck) inputs["resume"] = cfg["resume"].get<std::string>();

  const fs::path dir = output_dir(f.out_dir);
  const int every = cfg.at("checkpoint_every").get<int>();
  std::map<std::string, fs::path> outputs;
  const TrainResult result = train(
      tc, state,
      [&](const TraceRow& row, const TrainState& s) {
        std::fprintf(stderr, "epoch %d  mean %.4f  greedy %.4f  tau %.4f\n", row.epoch,
                     row.mean_cost, row.greedy_cost, row.tau);
        if (every > 0 && row.epoch % every == 0) {
          const std::string name = "epoch_" + std::to_string(row.epoch);
          const fs::path p = dir / "checkpoints" / (name + ".json");
          io::save_checkpoint(p, s, tc);
          outputs["checkpoint_" + name] = p;
        }
      },
      source);

  const fs::path ckpt = dir / "checkpoint.json";
  const fs::path trace = dir / "train_trace.csv";
  io::save_checkpoint(ckpt, state, tc);
  io::write_csv(trace, io::train_trace_table(result.trace));
  const double final_greedy = result.trace.empty() ? result.initial_greedy_cost
                                                   : result.trace.back().greedy_cost;
  outputs["checkpoint"] = ckpt;
  outputs["trace"] = trace;
  write_manifest(dir / "train_manifest.json", "train", cfg,
                 {{"seed", tc.seed}, {"init_seed", init_seed}}, inputs, outputs, elapsed_ms(start),
                 {{"initial_greedy_cost", result.initial_greedy_cost},
                  {"final_greedy_cost", final_greedy}});
  std::printf("epochs %d  greedy cost %.4f -> %.4f (%.2f%% lower)\n", state.epoch,
              result.initial_greedy_cost, final_greedy,
              result.initial_greedy_cost > 0
                  ? 100.0 * (1.0 - final_greedy / result.initial_greedy_cost)
                  : 0.0);
  return kOk;
}

// ---- solve -------------------------------------------------------------------

struct InferenceFlags {
  std::optional<std::string> method, schedule, sa_optimizer;
  std::optional<int> particles, iterations;
  std::optional<double> wall_ms, lambda, variance, drift, sa_step;
  std::optional<std::uint64_t> seed;
  bool augment = false;
};

void add_inference(CLI::App& app, InferenceFlags& f) {
  app.add_option("--method", f.method,
                 "sampling, single_mcmc, parallel_mcmc, interacting_mcmc or lgs");
  app.add_option("--particles", f.particles, "particles K");
  app.add_option("--iterations", f.iterations, "iterations M");
  app.add_option("--wall-ms", f.wall_ms, "wall-clock budget per instance (replaces M)");
  app.add_option("--lambda", f.lambda, "cost temperature");
  app.add_option("--variance", f.variance, "proposal variance sigma^2");
  app.add_option("--drift", f.drift, "proposal drift gamma (< 0: problem default)");
  app.add_option("--sa-step", f.sa_step, "SA step size gamma_0");
  app.add_option("--schedule", f.schedule, "comma-separated SA intervals");
  app.add_option("--sa-optimizer", f.sa_optimizer, "sgd or adam");
  app.add_option("--seed", f.seed, "root seed");
  app.add_flag("--augment", f.augment, "search all 8 symmetric variants");
}

void apply_inference(Json& j, const InferenceFlags& f) {
  set_if(j, "method", f.method);
  set_if(j, "particles", f.particles);
  set_if(j, "iterations", f.iterations);
  set_if(j, "wall_clock_ms", f.wall_ms);
  set_if(j, "lambda", f.lambda);
  set_if(j, "proposal_variance", f.variance);
  set_if(j, "proposal_drift", f.drift);
  set_if(j, "sa_step", f.sa_step);
  set_if(j, "sa_optimizer", f.sa_optimizer);
  set_if(j, "seed", f.seed);
  if (f.augment) j["augment"] = true;
  if (f.schedule) {
    std::vector<int> s;
    std::stringstream ss(*f.schedule);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        s.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw ArgumentError("--schedule: '" + item + "' is not an integer");
      }
    }
    j["sa_schedule"] = s;
  }
}

struct SolveFlags {
  std::optional<std::string> config, checkpoint, dataset, out_dir;
  std::optional<int> limit, threads;
  InferenceFlags inference;
  bool trace = false, latents = false, timing = false;
};

void add_solve(CLI::App& app, SolveFlags& f) {
  app.add_option("--config", f.config, "JSON config or manifest to replay");
  app.add_option("--checkpoint", f.checkpoint, "trained checkpoint");
  app.add_option("--dataset", f.dataset, "instances (JSON lines)");
  app.add_option("--limit", f.limit, "solve only the first N instances");
  add_inference(app, f.inference);
  app.add_flag("--trace", f.trace, "write a per-instance trace CSV");
  app.add_flag("--latents", f.latents, "write a per-instance latent dump");
  app.add_flag("--timing", f.timing, "record wall_ms in results");
  app.add_option("--out-dir", f.out_dir, "output directory");
  app.add_option("--threads", f.threads, "OpenMP threads");
}

int cmd_solve(const SolveFlags& f) {
  const auto start = Clock::now();
  apply_threads(f.threads);
  Json cfg = {{"inference", io::to_json(InferenceConfig{})},
              {"checkpoint", nullptr},
              {"dataset", nullptr},
              {"limit", 0},
              {"trace", false},
              {"latents", false},
              {"timing", false}};
  cfg.merge_patch(load_config(f.config));
  apply_inference(cfg["inference"], f.inference);
  set_if(cfg, "checkpoint", f.checkpoint);
  set_if(cfg, "dataset", f.dataset);
  set_if(cfg, "limit", f.limit);
  if (f.trace) cfg["trace"] = true;
  if (f.latents) cfg["latents"] = true;
  if (f.timing) cfg["timing"] = true;
  if (cfg["checkpoint"].is_null()) throw ArgumentError("solve: --checkpoint is required");
  if (cfg["dataset"].is_null()) throw ArgumentError("solve: --dataset is required");
  InferenceConfig ic = io::inference_config_from_json(cfg["inference"]);
  if (cfg.at("latents").get<bool>()) ic.record_latents = true;
  cfg["inference"] = io::to_json(ic);
  const fs::path ckpt_path = cfg["checkpoint"].get<std::string>();
  const fs::path data_path = cfg["dataset"].get<std::string>();
  const io::Checkpoint ck = io::load_checkpoint(ckpt_path);
  std::vector<ProblemInstance> instances = io::read_dataset(data_path);
  const int limit = cfg.at("limit").get<int>();
  if (limit > 0 && static_cast<std::size_t>(limit) < instances.size()) instances.resize(limit);
  const bool timing = cfg.at("timing").get<bool>();

  const long count = static_cast<long>(instances.size());
  std::vector<RunResult> results(instances.size());
  std::vector<std::exception_ptr> errors(instances.size());
  std::vector<std::uint64_t> seeds(instances.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < count; ++i) {
    InferenceConfig c = ic;
    c.seed = seeds[i] = derive_seed(ic.seed, "solve", static_cast<std::uint64_t>(i));
    try {
      results[i] = run(ck.model, instances[i], c);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const fs::path dir = output_dir(f.out_dir);
  io::CsvTable table;
  table.schema = "results";
  table.header = {"instance", "method", "seed", "best_cost", "wall_ms", "rollouts", "visits"};
  std::map<std::string, fs::path> outputs;
  double mean = 0.0;
  for (long i = 0; i < count; ++i) {
    const RunResult& r = results[i];
    mean += r.best.cost / static_cast<double>(count);
    table.rows.push_back({std::to_string(i), to_string(ic.method), std::to_string(seeds[i]),
                          io::format_double(r.best.cost),
                          io::format_double(timing ? r.wall_ms : 0.0), std::to_string(r.rollouts),
                          join_visits(r.best.visits)});
    if (cfg.at("trace").get<bool>()) {
      const fs::path p = dir / "traces" / ("instance_" + std::to_string(i) + ".csv");
      io::write_csv(p, io::inference_trace_table(r.trace));
      outputs["trace_" + std::to_string(i)] = p;
    }
    if (ic.record_latents) {
      const fs::path p = dir / "latents" / ("instance_" + std::to_string(i) + ".csv");
      io::write_csv(p, io::latent_table(r.latents));
      outputs["latents_" + std::to_string(i)] = p;
    }
  }
  const fs::path res = dir / "results.csv";
  io::write_csv(res, table);
  outputs["results"] = res;
  write_manifest(dir / "solve_manifest.json", "solve", cfg, {{"seed", ic.seed}},
                 {{"checkpoint", ckpt_path}, {"dataset", data_path}}, outputs, elapsed_ms(start),
                 {{"budget_mode", ic.wall_clock_ms > 0 ? "wall_clock" : "iterations"}});
  std::printf("%s: %ld instances, mean best cost %.4f\n", to_string(ic.method).c_str(), count,
              mean);
  return kOk;
}

// ---- eval --------------------------------------------------------------------

struct EvalFlags {
  std::optional<std::string> config, results, reference, dataset, out, out_dir;
  std::optional<double> cost, optimal;
  std::optional<int> threads;
};

void add_eval(CLI::App& app, EvalFlags& f) {
  app.add_option("--config", f.config, "JSON config or manifest to replay");
  app.add_option("--results", f.results, "results CSV from solve");
  app.add_option("--reference", f.reference, "'oracle' or a CSV with instance,cost columns");
  app.add_option("--dataset", f.dataset, "instances, needed for oracle references");
  app.add_option("--cost", f.cost, "single objective value");
  app.add_option("--optimal", f.optimal, "single reference value");
  app.add_option("--out", f.out, "per-instance gap CSV");
  app.add_option("--out-dir", f.out_dir, "base directory for relative outputs");
  app.add_option("--threads", f.threads, "OpenMP threads");
}

int cmd_eval(const EvalFlags& f) {
  const auto start = Clock::now();
  apply_threads(f.threads);
  if (f.cost || f.optimal) {
    if (!f.cost || !f.optimal) throw ArgumentError("eval: --cost and --optimal go together");
    std::printf("gap %.4f%%\n", gap_percent(*f.cost, *f.optimal));
    return kOk;
  }
  Json cfg = {{"results", nullptr}, {"reference", "oracle"}, {"dataset", nullptr}};
  cfg.merge_patch(load_config(f.config));
  set_if(cfg, "results", f.results);
  set_if(cfg, "reference", f.reference);
  set_if(cfg, "dataset", f.dataset);
  if (cfg["results"].is_null()) throw ArgumentError("eval: --results or --cost/--optimal required");
  const fs::path res_path = cfg["results"].get<std::string>();
  const io::CsvTable res = io::read_csv(res_path, "results");
  const std::size_t c_inst = res.column("instance"), c_method = res.column("method"),
                    c_cost = res.column("best_cost"), c_wall = res.column("wall_ms");

  std::map<std::string, fs::path> inputs{{"results", res_path}};
  std::map<long, double> reference;
  const std::string ref = cfg.at("reference").get<std::string>();
  if (ref == "oracle") {
    if (cfg["dataset"].is_null()) {
      throw ArgumentError("eval: oracle references need --dataset");
    }
    const fs::path ds = cfg["dataset"].get<std::string>();
    inputs["dataset"] = ds;
    const auto instances = io::read_dataset(ds);
    std::vector<double> opt(instances.size(), 0.0);
    std::vector<std::string> errors(instances.size());
    const long count = static_cast<long>(instances.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < count; ++i) {
      try {
        opt[i] = oracle::brute_force(instances[i]).cost;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
    for (long i = 0; i < count; ++i) {
      if (!errors[i].empty()) {
        throw IoError("no reference for instance " + std::to_string(i) + ": " + errors[i]);
      }
      reference[i] = opt[i];
    }
  } else {
    inputs["reference"] = ref;
    const io::CsvTable t = io::read_csv(ref, "");
    const std::size_t ci = t.column("instance");
    const std::size_t cc = t.schema == "results" ? t.column("best_cost") : t.column("cost");
    for (const auto& row : t.rows) reference[std::stol(row[ci])] = io::parse_double(row[cc]);
  }

  struct Summary {
    double obj = 0.0, gap = 0.0, time_ms = 0.0;
    int count = 0;
  };
  std::map<std::string, Summary> by_method;
  io::CsvTable out;
  out.schema = "eval";
  out.header = {"instance", "method", "cost", "reference", "gap_pct"};
  for (const auto& row : res.rows) {
    const long i = std::stol(row[c_inst]);
    const auto it = reference.find(i);
    if (it == reference.end()) throw IoError("missing reference for instance " + row[c_inst]);
    const double cost = io::parse_double(row[c_cost]);
    double gap = gap_percent(cost, it->second);
    if (std::abs(gap) < 1e-9) gap = 0.0;  // summation-order noise on optimal solutions
    Summary& s = by_method[row[c_method]];
    s.obj += cost;
    s.gap += gap;
    s.time_ms += io::parse_double(row[c_wall]);
    ++s.count;
    out.rows.push_back({row[c_inst], row[c_method], row[c_cost], io::format_double(it->second),
                        io::format_double(gap)});
  }
  std::printf("%-18s %10s %10s %10s %6s\n", "method", "obj", "gap", "time_s", "n");
  for (const auto& [m, s] : by_method) {
    std::printf("%-18s %10.4f %9.4f%% %10.2f %6d\n", m.c_str(), s.obj / s.count, s.gap / s.count,
                s.time_ms / 1000.0, s.count);
  }
  if (f.out) {
    const fs::path p = under(output_dir(f.out_dir), *f.out);
    io::write_csv(p, out);
    write_manifest(fs::path(p.string() + ".manifest.json"), "eval", cfg, Json::object(), inputs,
                   {{"eval", p}}, elapsed_ms(start));
  }
  return kOk;
}

// ---- verify ------------------------------------------------------------------

struct VerifyFlags {
  std::string suite;
  std::optional<std::string> report, out_dir;
  std::uint64_t seed = 0;
  std::optional<int> threads;
};

void add_verify(CLI::App& app, VerifyFlags& f) {
  std::string names;
  for (const auto& s : verify::suite_names()) names += s + ", ";
  app.add_option("--suite", f.suite, "one of: " + names + "all")->required();
  app.add_option("--seed", f.seed, "seed for sampled cases");
  app.add_option("--report", f.report, "also write the JSON report here");
  app.add_option("--out-dir", f.out_dir, "base directory for relative outputs");
  app.add_option("--threads", f.threads, "OpenMP threads");
}

Json report_json(const verify::Report& r) {
  Json cases = Json::array();
  for (const auto& c : r.cases) {
    cases.push_back({{"name", c.name},
                     {"value", c.value},
                     {"relation", c.below ? "<" : ">"},
                     {"threshold", c.threshold},
                     {"passed", c.passed}});
  }
  return Json{{"suite", r.suite}, {"passed", r.passed}, {"wall_ms", r.wall_ms}, {"cases", cases}};
}

int cmd_verify(const VerifyFlags& f) {
  const auto start = Clock::now();
  apply_threads(f.threads);
  std::vector<std::string> suites;
  if (f.suite == "all") {
    suites = verify::suite_names();
  } else {
    suites = {f.suite};
    const auto& all = verify::suite_names();
    if (std::find(all.begin(), all.end(), f.suite) == all.end()) {
      verify::run_suite(f.suite, f.seed);  // throws ArgumentError listing suites
    }
  }
  Json reports = Json::array();
  bool passed = true;
  Json failing = Json::array();
  for (const auto& s : suites) {
    const verify::Report r = verify::run_suite(s, f.seed);
    passed = passed && r.passed;
    reports.push_back(report_json(r));
    for (const auto& c : r.cases) {
      if (!c.passed) failing.push_back({{"suite", s}, {"case", c.name}, {"value", c.value}});
    }
  }
  const Json doc = {{"passed", passed}, {"seed", f.seed}, {"suites", reports}, {"failing", failing}};
  std::cout << doc.dump(2) << "\n";
  if (f.report) {
    const fs::path p = under(output_dir(f.out_dir), *f.report);
    io::write_file(p, doc.dump(2) + "\n");
    write_manifest(fs::path(p.string() + ".manifest.json"), "verify",
                   {{"suite", f.suite}, {"seed", f.seed}}, {{"seed", f.seed}}, {}, {{"report", p}},
                   elapsed_ms(start));
  }
  if (!passed) throw VerificationFailure("verification failed: " + failing.dump());
  return kOk;
}

// ---- trace-latent -------------------------------------------------------------

struct TraceFlags {
  std::optional<std::string> config, checkpoint, kind, dataset, out_dir;
  std::optional<int> n, index, threads;
  std::optional<std::uint64_t> init_seed, instance_seed;
  InferenceFlags inference;
};

void add_trace(CLI::App& app, TraceFlags& f) {
  app.add_option("--config", f.config, "JSON config or manifest to replay");
  app.add_option("--checkpoint", f.checkpoint, "trained checkpoint (default: fresh d_z = 2 model)");
  app.add_option("--init-seed", f.init_seed, "initialisation seed without a checkpoint");
  app.add_option("--kind", f.kind, "tsp or cvrp");
  app.add_option("--n", f.n, "problem size");
  app.add_option("--instance-seed", f.instance_seed, "seed of the generated instance");
  app.add_option("--dataset", f.dataset, "take the instance from a dataset instead");
  app.add_option("--index", f.index, "instance index in --dataset");
  add_inference(app, f.inference);
  app.add_option("--out-dir", f.out_dir, "output directory");
  app.add_option("--threads", f.threads, "OpenMP threads");
}

int cmd_trace(const TraceFlags& f) {
  const auto start = Clock::now();
  apply_threads(f.threads);
  InferenceConfig defaults;
  defaults.record_latents = true;
  defaults.particles = 16;
  defaults.iterations = 100;
  Json cfg = {{"inference", io::to_json(defaults)},
              {"checkpoint", nullptr},
              {"init_seed", 0},
              {"instance", {{"kind", "tsp"}, {"n", 10}, {"seed", 0}}},
              {"dataset", nullptr},
              {"index", 0}};
  cfg.merge_patch(load_config(f.config));
  apply_inference(cfg["inference"], f.inference);
  set_if(cfg, "checkpoint", f.checkpoint);
  set_if(cfg, "init_seed", f.init_seed);
  set_if(cfg["instance"], "kind", f.kind);
  set_if(cfg["instance"], "n", f.n);
  set_if(cfg["instance"], "seed", f.instance_seed);
  set_if(cfg, "dataset", f.dataset);
  set_if(cfg, "index", f.index);
  InferenceConfig ic = io::inference_config_from_json(cfg["inference"]);
  ic.record_latents = true;
  cfg["inference"] = io::to_json(ic);

  std::map<std::string, fs::path> inputs;
  ProblemInstance instance;
  if (!cfg["dataset"].is_null()) {
    const fs::path ds = cfg["dataset"].get<std::string>();
    const auto all = io::read_dataset(ds);
    const int index = cfg.at("index").get<int>();
    if (index < 0 || static_cast<std::size_t>(index) >= all.size()) {
      throw ArgumentError("--index " + std::to_string(index) + " is outside the dataset");
    }
    instance = all[index];
    inputs["dataset"] = ds;
  } else {
    const Json& in = cfg["instance"];
    instance = generate_instance(parse_problem_kind(in.at("kind").get<std::string>()),
                                 in.at("n").get<int>(), in.at("seed").get<std::uint64_t>());
  }
  const auto init_seed = cfg.at("init_seed").get<std::uint64_t>();
  PolicyModel model = [&] {
    if (!cfg["checkpoint"].is_null()) {
      const fs::path p = cfg["checkpoint"].get<std::string>();
      inputs["checkpoint"] = p;
      return io::load_checkpoint(p).model;
    }
    ModelConfig mc;
    mc.kind = instance.kind;
    mc.d_z = 2;
    return PolicyModel::initialize(mc, init_seed);
  }();
  const RunResult r = run(model, instance, ic);
  const fs::path dir = output_dir(f.out_dir);
  const fs::path lat = dir / "latents.csv", tr = dir / "trace.csv";
  io::write_csv(lat, io::latent_table(r.latents));
  io::write_csv(tr, io::inference_trace_table(r.trace));
  write_manifest(dir / "trace_latent_manifest.json", "trace-latent", cfg,
                 {{"seed", ic.seed}, {"init_seed", init_seed}}, inputs,
                 {{"latents", lat}, {"trace", tr}}, elapsed_ms(start));
  std::printf("%s: best cost %.4f, %zu latent rows\n", to_string(ic.method).c_str(), r.best.cost,
              r.latents.size());
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Latent-space search for routing problems"};
  app.require_subcommand(1);
  GenFlags gen;
  TrainFlags train_flags;
  SolveFlags solve;
  EvalFlags eval;
  VerifyFlags ver;
  TraceFlags trace;
  add_gen(*app.add_subcommand("gen", "generate a random dataset"), gen);
  add_train(*app.add_subcommand("train", "train a policy"), train_flags);
  add_solve(*app.add_subcommand("solve", "search a dataset with a trained policy"), solve);
  add_eval(*app.add_subcommand("eval", "gaps against references"), eval);
  add_verify(*app.add_subcommand("verify", "run a property suite"), ver);
  add_trace(*app.add_subcommand("trace-latent", "dump latent trajectories of one run"), trace);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "gen") return cmd_gen(gen);
    if (cmd == "train") return cmd_train(train_flags);
    if (cmd == "solve") return cmd_solve(solve);
    if (cmd == "eval") return cmd_eval(eval);
    if (cmd == "verify") return cmd_verify(ver);
    return cmd_trace(trace);
  } catch (const ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const VerificationFailure& e) {
    std::cerr << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace lgs::cli
