#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <thread>
#include <vector>

#include "json.hpp"

#include "lightlda/corpus/vocabulary.hpp"
#include "lightlda/engine/worker.hpp"
#include "lightlda/eval/likelihood.hpp"
#include "lightlda/pserver/server.hpp"
#include "lightlda/pserver/wire.hpp"
#include "lightlda/tables/model_dump.hpp"

namespace lightlda::engine {

/// Drives one or more workers through iterations against a model store and
/// records per-iteration reports.
inline std::filesystem::path sibling_path(const std::filesystem::path& dir, const char* suffix) {
  auto p = dir.lexically_normal();
  if (!p.has_filename()) p = p.parent_path();
  p += suffix;
  return p;
}

/// The readable checkpoint for `dir`: `dir` itself, or the previous one left
/// behind when a swap was interrupted.
inline std::filesystem::path resolve_checkpoint(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / "meta.json")) return dir;
  const auto prev = sibling_path(dir, ".prev");
  if (std::filesystem::exists(prev / "meta.json")) return prev;
  return dir;
}

class Trainer {
 public:
  Trainer(RunConfig cfg, tables::Hyperparams hp, std::shared_ptr<const tables::RowLayout> layout,
          corpus::SlicePlan plan, std::unique_ptr<BlockStore> store,
          std::uint32_t start_iteration = 0)
      : cfg_(std::move(cfg)),
        hp_(std::move(hp)),
        layout_(std::move(layout)),
        plan_(std::move(plan)),
        store_(std::move(store)),
        next_iteration_(start_iteration) {
    cfg_.validate();
    if (hp_.num_topics != cfg_.topics) throw ConfigError("hyperparameters disagree with topics");
  }

  /// Builds the model store and workers and loads the counts of every block.
  void initialize() {
    const std::uint32_t W = cfg_.workers;
    if (!cfg_.server.empty()) {
      const auto colon = cfg_.server.rfind(':');
      if (colon == std::string::npos) throw ConfigError("server must be host:port");
      remote_ = std::make_unique<pserver::wire::RemoteModel>(
          cfg_.server.substr(0, colon),
          static_cast<std::uint16_t>(std::stoul(cfg_.server.substr(colon + 1))), hp_.num_topics);
      add_worker(cfg_.worker_id, *remote_);
    } else if (cfg_.direct_model && W == 1) {
      local_ = std::make_unique<pserver::LocalModel>(layout_, plan_);
      add_worker(0, *local_);
    } else {
      server_ = std::make_unique<pserver::ParameterServer>(layout_, plan_, W, cfg_.staleness);
      for (std::uint32_t w = 0; w < W; ++w) add_worker(w, *server_);
    }
    for (auto& w : workers_) w->push_initial_counts();
    if (next_iteration_ > 0) {
      // Resume: move every clock to where the interrupted run stopped.
      for (auto& w : workers_) client_of(*w).advance_clock(w->id(), next_iteration_ + 1);
    }
  }

  std::uint32_t next_iteration() const { return next_iteration_; }
  const RunConfig& config() const { return cfg_; }
  const tables::Hyperparams& hyperparams() const { return hp_; }
  const corpus::SlicePlan& plan() const { return plan_; }
  BlockStore& store() { return *store_; }
  bool is_remote() const { return remote_ != nullptr; }

  /// Runs the next iteration on every worker.
  IterationReport step(bool with_likelihood) {
    const std::uint32_t it = next_iteration_;
    IterationReport total;
    total.iteration = it;
    if (workers_.size() == 1) {
      total = workers_[0]->run_iteration(it, with_likelihood);
    } else {
      std::vector<IterationReport> reps(workers_.size());
      std::vector<std::exception_ptr> errors(workers_.size());
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < workers_.size(); ++w) {
        threads.emplace_back([&, w] {
          try {
            reps[w] = workers_[w]->run_iteration(it, with_likelihood);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
      for (const auto& r : reps) {
        total.tokens += r.tokens;
        total.changed += r.changed;
        total.seconds = std::max(total.seconds, r.seconds);
        total.compute_seconds = std::max(total.compute_seconds, r.compute_seconds);
        total.fetch_wait_seconds = std::max(total.fetch_wait_seconds, r.fetch_wait_seconds);
        total.io_wait_seconds = std::max(total.io_wait_seconds, r.io_wait_seconds);
        total.doc_loglik += r.doc_loglik;
        total.accept_rate += r.accept_rate / reps.size();
      }
    }
    if (with_likelihood) {
      total.has_likelihood = true;
      const auto word = word_likelihood();
      total.word_loglik = word.first;
      total.nonzeros = word.second;
      total.total_loglik = total.doc_loglik + total.word_loglik;
    }
    ++next_iteration_;
    return total;
  }

  /// Runs until `cfg.iterations` iterations are complete.
  std::vector<IterationReport> run(const std::function<void(const IterationReport&)>& on_report = {}) {
    std::vector<IterationReport> out;
    while (next_iteration_ < cfg_.iterations) {
      const std::uint32_t it = next_iteration_;
      const bool eval = cfg_.eval_every > 0 &&
                        ((it + 1) % cfg_.eval_every == 0 || it + 1 == cfg_.iterations);
      out.push_back(step(eval));
      if (on_report) on_report(out.back());
      if (cfg_.checkpoint_every > 0 && (it + 1) % cfg_.checkpoint_every == 0 &&
          !cfg_.run_dir.empty()) {
        checkpoint(cfg_.run_dir / "checkpoint");
      }
    }
    return out;
  }

  /// Full likelihood from the current state (quiescent point only).
  eval::LikelihoodReport likelihood() {
    eval::LikelihoodReport r;
    for (auto& w : workers_) r.doc_loglik += w->doc_loglik();
    const auto word = word_likelihood();
    r.word_loglik = word.first;
    r.nonzeros = word.second;
    r.total_loglik = r.doc_loglik + r.word_loglik;
    return r;
  }

  tables::ModelDump dump() const {
    if (server_) return server_->dump();
    if (local_) return local_->dump();
    throw ConfigError("model dump is held by the remote server");
  }

  std::string state_hash() const {
    if (server_) return server_->server_state_hash();
    if (local_) return local_->server_state_hash();
    throw ConfigError("state hash is held by the remote server");
  }

  /// Writes blocks/, model.dump and meta.json under `dir`. The new checkpoint
  /// is assembled beside `dir` and swapped in, so a crash leaves either the
  /// old or the new one readable (see resolve_checkpoint).
  void checkpoint(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const auto partial = sibling_path(dir, ".partial"), prev = sibling_path(dir, ".prev");
    fs::remove_all(partial);
    fs::create_directories(partial);
    store_->save_all(partial / "blocks");
    if (!remote_) corpus::write_file_atomic(partial / "model.dump", tables::serialize_model(dump()));
    nlohmann::json meta;
    meta["iteration"] = next_iteration_;
    meta["seed"] = cfg_.seed;
    meta["topics"] = cfg_.topics;
    meta["sampler"] = samplers::to_string(cfg_.sampler.kind);
    meta["clock"] = next_iteration_ + 1;
    meta["workers"] = cfg_.workers;
    const std::string text = meta.dump(2);
    corpus::write_file_atomic(partial / "meta.json",
                              std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    fs::remove_all(prev);
    if (fs::exists(dir)) fs::rename(dir, prev);
    fs::rename(partial, dir);
    fs::remove_all(prev);
  }

  /// The model table (in-process stores only).
  const tables::WordTopicTable& table() const {
    if (server_) return server_->table();
    if (local_) return local_->table();
    throw ConfigError("table is held by the remote server");
  }
  const tables::SummaryRow& summary() const {
    if (server_) return server_->summary();
    if (local_) return local_->summary();
    throw ConfigError("summary is held by the remote server");
  }

 private:
  void add_worker(std::uint32_t id, pserver::ModelClient& client) {
    std::vector<std::uint32_t> mine;
    for (std::uint32_t b = 0; b < store_->size(); ++b) {
      if (b % cfg_.workers == id) mine.push_back(b);
    }
    clients_.push_back(&client);
    workers_.push_back(std::make_unique<Worker>(id, cfg_, hp_, layout_, plan_, *store_,
                                                std::move(mine), client));
  }

  pserver::ModelClient& client_of(const Worker& w) {
    for (std::size_t i = 0; i < workers_.size(); ++i) {
      if (workers_[i].get() == &w) return *clients_[i];
    }
    throw InvariantViolation("worker without a client");
  }

  std::pair<double, std::uint64_t> word_likelihood() {
    if (!remote_) return {eval::word_loglik(table(), summary().values(), hp_), table().total_nonzeros()};
    // Remote: gather every slice at the current clock.
    tables::WordTopicTable t(layout_);
    std::vector<std::int64_t> summary;
    for (std::uint32_t j = 0; j < plan_.num_slices(); ++j) {
      auto s = remote_->fetch_slice({j, cfg_.worker_id, next_iteration_ + 1});
      for (const auto& row : s.rows) t.assign_row(row.word, row.entries);
      summary = std::move(s.summary);
    }
    return {eval::word_loglik(t, summary, hp_), t.total_nonzeros()};
  }

  RunConfig cfg_;
  tables::Hyperparams hp_;
  std::shared_ptr<const tables::RowLayout> layout_;
  corpus::SlicePlan plan_;
  std::unique_ptr<BlockStore> store_;
  std::uint32_t next_iteration_;
  std::unique_ptr<pserver::ParameterServer> server_;
  std::unique_ptr<pserver::LocalModel> local_;
  std::unique_ptr<pserver::wire::RemoteModel> remote_;
  std::vector<pserver::ModelClient*> clients_;
  std::vector<std::unique_ptr<Worker>> workers_;
};

/// Reads a checkpoint's meta.json.
inline nlohmann::json read_meta(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw DataError("no meta.json in " + dir.string());
  return nlohmann::json::parse(in);
}

/// After a warm start: the counts rebuilt from the blocks' (w, z) pairs must
/// equal the dumped model exactly.
inline void verify_against_dump(const Trainer& trainer, const std::filesystem::path& dump_path) {
  const auto dumped = tables::deserialize_model(corpus::read_file(dump_path));
  if (!(dumped == trainer.dump())) {
    throw InvariantViolation("rebuilt word-topic counts differ from " + dump_path.string());
  }
}

}  // namespace lightlda::engine
