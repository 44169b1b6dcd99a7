#pragma once

#include <chrono>
#include <deque>
#include <future>
#include <memory>
#include <vector>

#include <thread>

#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include "lightlda/alias/word_proposal.hpp"
#include "lightlda/corpus/slice_plan.hpp"
#include "lightlda/engine/block_store.hpp"
#include "lightlda/engine/config.hpp"
#include "lightlda/eval/likelihood.hpp"
#include "lightlda/pserver/server.hpp"
#include "lightlda/samplers/token_sampler.hpp"

namespace lightlda::engine {

/// Document range [first, last) sampled by one thread.
struct DocRange {
  std::size_t first = 0;
  std::size_t last = 0;
};

/// Splits a block into `parts` contiguous document ranges of near-equal
/// token count. A document never spans two ranges.
inline std::vector<DocRange> partition_block(const corpus::DataBlock& block, std::uint32_t parts) {
  if (parts == 0) throw ConfigError("partition count must be >= 1");
  const std::size_t D = block.num_docs();
  const std::uint64_t total = block.num_tokens();
  std::vector<DocRange> out(parts);
  std::size_t d = 0;
  std::uint64_t seen = 0;
  for (std::uint32_t p = 0; p < parts; ++p) {
    out[p].first = d;
    if (p + 1 == parts) {
      d = D;
    } else {
      const double target = static_cast<double>(total) * (p + 1) / parts;
      while (d < D) {
        const double next = static_cast<double>(seen + block.docs[d].n_d);
        // Take the doc if that lands closer to the target than stopping here.
        if (next <= target || next - target < target - static_cast<double>(seen)) {
          seen += block.docs[d].n_d;
          ++d;
        } else {
          break;
        }
      }
    }
    out[p].last = d;
  }
  return out;
}

inline std::uint64_t range_tokens(const corpus::DataBlock& block, const DocRange& r) {
  std::uint64_t n = 0;
  for (std::size_t d = r.first; d < r.last; ++d) n += block.docs[d].n_d;
  return n;
}

/// Counts every (word, topic) pair of a set of blocks as a delta batch.
inline pserver::DeltaBatch count_blocks(BlockStore& store, const std::vector<std::uint32_t>& blocks,
                                        std::uint32_t num_topics, std::uint32_t worker) {
  pserver::DeltaBatch batch;
  batch.worker = worker;
  batch.clock = 0;
  batch.summary.assign(num_topics, 0);
  std::vector<std::vector<DeltaEntry>> parts;
  for (std::uint32_t b : blocks) {
    const auto lb = store.load(b);
    std::vector<DeltaEntry> part;
    part.reserve(lb->block.pairs.size());
    for (const auto& p : lb->block.pairs) {
      if (p.topic >= num_topics) throw DataError("block topic id out of range");
      part.push_back({p.word, p.topic, 1});
      ++batch.summary[p.topic];
    }
    parts.push_back(pserver::merge_deltas({part}));
  }
  batch.entries = pserver::merge_deltas(parts);
  return batch;
}

/// One data-parallel worker: owns some blocks, streams them slice by slice
/// against a model client, and samples with a pool of threads.
class Worker {
 public:
  Worker(std::uint32_t id, const RunConfig& cfg, const tables::Hyperparams& hp,
         std::shared_ptr<const tables::RowLayout> layout, const corpus::SlicePlan& plan,
         BlockStore& store, std::vector<std::uint32_t> blocks, pserver::ModelClient& client)
      : id_(id),
        cfg_(cfg),
        hp_(hp),
        plan_(plan),
        store_(store),
        blocks_(std::move(blocks)),
        client_(client),
        alpha_table_(samplers::alpha_alias(hp)),
        snapshot_(layout, cfg.sampler.kind == samplers::SamplerKind::kSparse),
        parallelism_(tbb::global_control::max_allowed_parallelism,
                     std::max<std::size_t>(cfg.threads, std::thread::hardware_concurrency())),
        arena_(static_cast<int>(cfg.threads)) {
    for (std::uint32_t p = 0; p < cfg.threads; ++p) {
      samplers_.push_back(
          std::make_unique<samplers::TokenSampler>(cfg.sampler, hp_, layout, &alpha_table_));
    }
    deltas_.resize(cfg.threads);
    summary_deltas_.assign(cfg.threads, std::vector<std::int64_t>(hp.num_topics, 0));
  }

  std::uint32_t id() const { return id_; }
  const std::vector<std::uint32_t>& blocks() const { return blocks_; }

  /// Pushes the counts of this worker's blocks at clock 0 and moves to clock 1.
  void push_initial_counts() {
    client_.push_deltas(count_blocks(store_, blocks_, hp_.num_topics, id_));
    client_.advance_clock(id_, 1);
  }

  /// Resamples every token of this worker's blocks once. Iteration `it`
  /// runs at clock it + 1 and ends by advancing to it + 2.
  IterationReport run_iteration(std::uint32_t it, bool with_doc_likelihood) {
    using clock = std::chrono::steady_clock;
    const auto t_start = clock::now();
    IterationReport rep;
    rep.iteration = it;
    const std::uint64_t wclock = it + 1;
    const std::uint32_t S = plan_.num_slices();
    const std::uint32_t depth = cfg_.prefetch_depth;

    struct Task {
      std::uint32_t block_pos, slice;
    };
    std::vector<Task> tasks;
    for (std::uint32_t bp = 0; bp < blocks_.size(); ++bp) {
      for (std::uint32_t j = 0; j < S; ++j) tasks.push_back({bp, j});
    }
    std::deque<std::future<pserver::ModelSlice>> pending;
    std::size_t issued = 0;
    auto issue_until = [&](std::size_t n) {
      for (; issued < std::min(n, tasks.size()); ++issued) {
        const pserver::SliceRequest req{tasks[issued].slice, id_, wclock};
        pending.push_back(std::async(std::launch::async, [this, req] {
          return client_.fetch_slice(req);
        }));
      }
    };

    std::future<std::shared_ptr<LoadedBlock>> next_block;
    std::vector<std::future<void>> writes;
    samplers::SamplerStats stats;
    std::size_t task = 0;
    for (std::uint32_t bp = 0; bp < blocks_.size(); ++bp) {
      const std::uint32_t b = blocks_[bp];
      const auto t_io = clock::now();
      std::shared_ptr<LoadedBlock> lb =
          next_block.valid() ? next_block.get() : store_.load(b);
      rep.io_wait_seconds += seconds_since(t_io);
      if (depth > 0 && !store_.resident() && bp + 1 < blocks_.size()) {
        const std::uint32_t nb = blocks_[bp + 1];
        next_block = std::async(std::launch::async, [this, nb] { return store_.load(nb); });
      }
      const auto parts = partition_block(lb->block, cfg_.threads);

      for (std::uint32_t j = 0; j < S; ++j, ++task) {
        const auto t_fetch = clock::now();
        pserver::ModelSlice slice;
        if (depth == 0) {
          slice = client_.fetch_slice({j, id_, wclock});
        } else {
          issue_until(task + 1);
          slice = pending.front().get();
          pending.pop_front();
          issue_until(task + 1 + depth);
        }
        rep.fetch_wait_seconds += seconds_since(t_fetch);

        const auto t_compute = clock::now();
        install_snapshot(slice);
        stats += sample_slice(*lb, parts, it, b, j);
        rep.compute_seconds += seconds_since(t_compute);
        // prefetched snapshots must not depend on when this push lands
        for (auto& f : pending) f.wait();
        push_slice_deltas(wclock);
      }
      if (with_doc_likelihood) rep.doc_loglik += eval::doc_loglik(lb->docs, hp_);
      if (!store_.resident()) {
        if (depth > 0) {
          writes.push_back(std::async(std::launch::async, [this, b, lb] { store_.store(b, lb); }));
        } else {
          store_.store(b, lb);
        }
      }
    }
    for (auto& w : writes) w.get();
    client_.advance_clock(id_, wclock + 1);

    rep.tokens = stats.tokens;
    rep.changed = stats.changed;
    rep.accept_rate = stats.proposals ? static_cast<double>(stats.accepted) / stats.proposals : 1.0;
    rep.seconds = seconds_since(t_start);
    return rep;
  }

  /// Doc-side likelihood over this worker's blocks (loads them if needed).
  double doc_loglik() {
    double s = 0;
    for (std::uint32_t b : blocks_) s += eval::doc_loglik(store_.load(b)->docs, hp_);
    return s;
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
  }

  void install_snapshot(const pserver::ModelSlice& slice) {
    if (slice.summary.size() != hp_.num_topics) throw DataError("slice summary has wrong length");
    if (fetched_.size() != snapshot_.vocab_size()) fetched_.assign(snapshot_.vocab_size(), 0);
    for (const auto& row : slice.rows) {
      snapshot_.assign_row(row.word, row.entries);
      fetched_[row.word] = 1;
    }
    for (WordId w : snapshot_words_) {
      if (!fetched_[w]) snapshot_.clear_row(w);
    }
    for (const auto& row : slice.rows) fetched_[row.word] = 0;
    const auto words = plan_.words_in_slice(slice.slice);
    snapshot_words_.assign(words.begin(), words.end());
    snapshot_summary_ = slice.summary;
    view_.slice = slice.slice;
    view_.snapshot = &snapshot_;
    view_.summary = snapshot_summary_;
    view_.words = words;
    view_.proposals = nullptr;
    const auto kind = cfg_.sampler.kind;
    if (kind == samplers::SamplerKind::kLight || kind == samplers::SamplerKind::kLightWordOnly) {
      proposals_.build(snapshot_, words, snapshot_summary_, hp_);
      view_.proposals = &proposals_;
    }
  }

  samplers::SamplerStats sample_slice(LoadedBlock& lb, const std::vector<DocRange>& parts,
                                      std::uint32_t it, std::uint32_t b, std::uint32_t j) {
    auto run_part = [&](std::size_t p) {
      auto& s = *samplers_[p];
      s.reset_stats();
      s.rng().reseed(cfg_.seed, {it, b, j, p});
      s.begin_slice(view_);
      for (std::size_t d = parts[p].first; d < parts[p].last; ++d) {
        const auto [a, e] = lb.block.slice_range(d, j);
        if (a == e) continue;
        const std::uint64_t off = lb.block.docs[d].offset;
        s.sample_doc(lb.docs[d], lb.block.doc_pairs(d), a - off, e - off);
      }
      deltas_[p].clear();
      std::fill(summary_deltas_[p].begin(), summary_deltas_[p].end(), 0);
      s.collect_deltas(deltas_[p], summary_deltas_[p]);
    };
    if (cfg_.threads == 1) {
      run_part(0);
    } else {
      arena_.execute([&] {
        tbb::parallel_for(std::size_t{0}, parts.size(), [&](std::size_t p) { run_part(p); });
      });
    }
    samplers::SamplerStats total;
    for (auto& s : samplers_) total += s->stats();
    return total;
  }

  void push_slice_deltas(std::uint64_t wclock) {
    pserver::DeltaBatch batch;
    batch.worker = id_;
    batch.clock = wclock;
    batch.entries = deltas_.size() == 1 ? deltas_[0] : pserver::merge_deltas(deltas_);
    batch.summary.assign(hp_.num_topics, 0);
    for (const auto& sd : summary_deltas_) {
      for (TopicId k = 0; k < hp_.num_topics; ++k) batch.summary[k] += sd[k];
    }
    client_.push_deltas(batch);
  }

  std::uint32_t id_;
  const RunConfig& cfg_;
  const tables::Hyperparams& hp_;
  const corpus::SlicePlan& plan_;
  BlockStore& store_;
  std::vector<std::uint32_t> blocks_;
  pserver::ModelClient& client_;
  alias::AliasTable alpha_table_;
  tables::WordTopicTable snapshot_;
  std::vector<WordId> snapshot_words_;
  std::vector<std::uint8_t> fetched_;
  std::vector<std::int64_t> snapshot_summary_;
  alias::SliceProposals proposals_;
  samplers::SliceView view_;
  std::vector<std::unique_ptr<samplers::TokenSampler>> samplers_;
  std::vector<std::vector<DeltaEntry>> deltas_;
  std::vector<std::vector<std::int64_t>> summary_deltas_;
  tbb::global_control parallelism_;
  tbb::task_arena arena_;
};

}  // namespace lightlda::engine
