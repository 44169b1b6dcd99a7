#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "lightlda/common.hpp"
#include "lightlda/samplers/formulas.hpp"

namespace lightlda::engine {

struct RunConfig {
  std::uint32_t topics = 100;
  std::uint32_t iterations = 100;
  std::uint32_t num_slices = 1;
  std::uint32_t num_blocks = 1;
  std::uint32_t threads = 1;
  std::uint32_t workers = 1;
  std::uint32_t staleness = 1;
  samplers::SamplerConfig sampler;
  double alpha = 0.0;  // 0 means 50/K
  double beta = 0.01;
  std::optional<double> hot_fraction;
  std::uint64_t memory_budget = 2ull << 30;
  std::uint32_t prefetch_depth = 1;
  std::uint64_t seed = 1;
  std::uint32_t eval_every = 1;        // 0 disables per-iteration likelihood
  std::uint32_t checkpoint_every = 0;  // 0 checkpoints only at the end
  bool direct_model = false;           // bypass the parameter server
  bool out_of_core = false;            // stream blocks from disk each pass
  std::string server;                  // host:port of a remote server
  std::uint32_t worker_id = 0;         // this process's worker id (remote mode)
  std::filesystem::path prep_dir;
  std::filesystem::path run_dir;
  std::filesystem::path warm_start;

  double resolved_alpha() const { return alpha > 0 ? alpha : 50.0 / topics; }

  void validate() const {
    if (topics == 0) throw ConfigError("topics must be >= 1");
    if (iterations == 0) throw ConfigError("iterations must be >= 1");
    if (threads == 0) throw ConfigError("threads must be >= 1");
    if (workers == 0) throw ConfigError("workers must be >= 1");
    if (num_slices == 0) throw ConfigError("slices must be >= 1");
    if (num_blocks == 0) throw ConfigError("blocks must be >= 1");
    if (!(beta > 0)) throw ConfigError("beta must be positive");
    if (alpha < 0) throw ConfigError("alpha must be positive");
    if (hot_fraction && !(*hot_fraction >= 0 && *hot_fraction <= 1)) {
      throw ConfigError("hot_fraction must lie in [0, 1]");
    }
    if (!server.empty() && worker_id >= workers) throw ConfigError("worker_id must be < workers");
    sampler.validate();
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["topics"] = c.topics;
  j["iterations"] = c.iterations;
  j["slices"] = c.num_slices;
  j["blocks"] = c.num_blocks;
  j["threads"] = c.threads;
  j["workers"] = c.workers;
  j["staleness"] = c.staleness;
  j["sampler"] = samplers::to_string(c.sampler.kind);
  j["mh_steps"] = c.sampler.mh_steps;
  j["alpha"] = c.resolved_alpha();
  j["beta"] = c.beta;
  j["hot_fraction"] = c.hot_fraction ? nlohmann::json(*c.hot_fraction) : nlohmann::json(nullptr);
  j["memory_budget"] = c.memory_budget;
  j["prefetch_depth"] = c.prefetch_depth;
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["direct_model"] = c.direct_model;
  j["out_of_core"] = c.out_of_core;
  j["server"] = c.server;
  j["worker_id"] = c.worker_id;
  j["prep_dir"] = c.prep_dir.string();
  j["run_dir"] = c.run_dir.string();
  j["warm_start"] = c.warm_start.string();
  return j;
}

/// One row of training metrics.
struct IterationReport {
  std::uint32_t iteration = 0;
  std::uint64_t tokens = 0;
  std::uint64_t changed = 0;
  double seconds = 0;
  double compute_seconds = 0;
  double fetch_wait_seconds = 0;
  double io_wait_seconds = 0;
  double accept_rate = 0;
  bool has_likelihood = false;
  double doc_loglik = 0;
  double word_loglik = 0;
  double total_loglik = 0;
  std::uint64_t nonzeros = 0;

  double tokens_per_sec() const { return seconds > 0 ? tokens / seconds : 0; }
  double fetch_wait_frac() const { return seconds > 0 ? fetch_wait_seconds / seconds : 0; }
};

}  // namespace lightlda::engine
