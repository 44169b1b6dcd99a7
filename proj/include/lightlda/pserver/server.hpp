#pragma once

#include <algorithm>
#include <array>
#include <condition_variable>
#include <iomanip>
#include <memory>
#include <mutex>
#include <sstream>
#include <vector>

#include <openssl/evp.h>

#include "lightlda/common.hpp"
#include "lightlda/corpus/slice_plan.hpp"
#include "lightlda/tables/model_dump.hpp"
#include "lightlda/tables/word_topic_table.hpp"

namespace lightlda::pserver {

struct SliceRequest {
  std::uint32_t slice = 0;
  std::uint32_t worker = 0;
  std::uint64_t clock = 0;
};

/// Rows of one vocabulary slice plus n_k, as of `clock`.
struct ModelSlice {
  std::uint32_t slice = 0;
  std::uint64_t clock = 0;
  std::vector<tables::SparseRow> rows;
  std::vector<std::int64_t> summary;
};

struct DeltaBatch {
  std::uint32_t worker = 0;
  std::uint64_t clock = 0;
  std::vector<DeltaEntry> entries;
  std::vector<std::int64_t> summary;  // K deltas of n_k (may be empty)
};

/// What a worker needs from the model store.
class ModelClient {
 public:
  virtual ~ModelClient() = default;
  virtual ModelSlice fetch_slice(const SliceRequest& req) = 0;
  virtual void push_deltas(const DeltaBatch& batch) = 0;
  virtual void advance_clock(std::uint32_t worker, std::uint64_t clock) = 0;
};

/// Sums deltas per (word, topic), drops net-zero entries, sorts by word then topic.
inline std::vector<DeltaEntry> merge_deltas(const std::vector<std::vector<DeltaEntry>>& parts) {
  std::vector<DeltaEntry> all;
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  all.reserve(n);
  for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  std::sort(all.begin(), all.end(), [](const DeltaEntry& a, const DeltaEntry& b) {
    return a.word != b.word ? a.word < b.word : a.topic < b.topic;
  });
  std::vector<DeltaEntry> out;
  for (std::size_t i = 0; i < all.size();) {
    std::int64_t sum = 0;
    std::size_t j = i;
    for (; j < all.size() && all[j].word == all[i].word && all[j].topic == all[i].topic; ++j) {
      sum += all[j].delta;
    }
    if (sum != 0) out.push_back({all[i].word, all[i].topic, static_cast<std::int32_t>(sum)});
    i = j;
  }
  return out;
}

/// Hex SHA-256 of a byte string.
inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw InvariantViolation("SHA-256 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return os.str();
}

/// Applies one word's deltas to a table after checking that none underflows.
inline void apply_row_deltas(tables::WordTopicTable& table, std::span<const DeltaEntry> run) {
  for (std::size_t i = 0; i < run.size();) {
    std::int64_t sum = 0;
    std::size_t j = i;
    for (; j < run.size() && run[j].topic == run[i].topic; ++j) sum += run[j].delta;
    if (table.get(run[i].word, run[i].topic) + sum < 0) {
      throw InvariantViolation("delta batch drives n_kw negative at (w=" +
                               std::to_string(run[i].word) + ", k=" +
                               std::to_string(run[i].topic) + ")");
    }
    i = j;
  }
  for (const auto& d : run) table.update(d.word, d.topic, d.delta);
}

inline std::vector<DeltaEntry> sorted_by_word_topic(std::vector<DeltaEntry> e) {
  std::sort(e.begin(), e.end(), [](const DeltaEntry& a, const DeltaEntry& b) {
    return a.word != b.word ? a.word < b.word : a.topic < b.topic;
  });
  return e;
}

/// In-process parameter server: holds n_kw and n_k, serves slices under a
/// bounded-staleness clock and applies pushed deltas row-atomically. A fetch
/// at clock c waits until every worker has reached clock max(1, c - s), so it
/// sees every delta pushed at clocks <= c - s - 1 (clock 0 carries the
/// initial counts).
class ParameterServer : public ModelClient {
 public:
  ParameterServer(std::shared_ptr<const tables::RowLayout> layout, corpus::SlicePlan plan,
                  std::uint32_t num_workers, std::uint32_t staleness)
      : table_(std::move(layout)),
        summary_(table_.num_topics()),
        plan_(std::move(plan)),
        staleness_(staleness),
        clocks_(num_workers, 0) {
    if (num_workers == 0) throw ConfigError("parameter server needs at least one worker");
  }

  std::uint32_t num_workers() const { return static_cast<std::uint32_t>(clocks_.size()); }
  std::uint32_t staleness() const { return staleness_; }
  const corpus::SlicePlan& plan() const { return plan_; }

  ModelSlice fetch_slice(const SliceRequest& req) override {
    if (req.slice >= plan_.num_slices()) throw ConfigError("slice index out of range");
    const std::uint64_t need =
        req.clock > staleness_ ? std::max<std::uint64_t>(1, req.clock - staleness_) : 1;
    {
      std::unique_lock lock(clock_mu_);
      clock_cv_.wait(lock, [&] { return min_clock_locked() >= need; });
    }
    ModelSlice out;
    out.slice = req.slice;
    out.clock = req.clock;
    for (WordId w : plan_.words_in_slice(req.slice)) {
      std::lock_guard lock(stripe(w));
      if (table_.nnz(w) == 0) continue;
      out.rows.push_back({w, table_.row_entries(w)});
    }
    std::lock_guard lock(summary_mu_);
    out.summary = summary_.values();
    return out;
  }

  void push_deltas(const DeltaBatch& batch) override {
    const auto entries = sorted_by_word_topic(batch.entries);
    for (const auto& e : entries) {
      if (e.word >= table_.vocab_size() || e.topic >= table_.num_topics()) {
        throw DataError("delta entry out of range");
      }
    }
    for (std::size_t i = 0; i < entries.size();) {
      std::size_t j = i;
      while (j < entries.size() && entries[j].word == entries[i].word) ++j;
      std::lock_guard lock(stripe(entries[i].word));
      apply_row_deltas(table_, std::span<const DeltaEntry>(entries).subspan(i, j - i));
      i = j;
    }
    if (!batch.summary.empty()) {
      if (batch.summary.size() != summary_.size()) throw DataError("summary delta has wrong length");
      std::lock_guard lock(summary_mu_);
      for (TopicId k = 0; k < summary_.size(); ++k) {
        if (summary_[k] + batch.summary[k] < 0) {
          throw InvariantViolation("delta batch drives n_k negative at k=" + std::to_string(k));
        }
      }
      for (TopicId k = 0; k < summary_.size(); ++k) summary_.add(k, batch.summary[k]);
    }
  }

  void advance_clock(std::uint32_t worker, std::uint64_t clock) override {
    {
      std::lock_guard lock(clock_mu_);
      if (worker >= clocks_.size()) throw ConfigError("worker id out of range");
      clocks_[worker] = std::max(clocks_[worker], clock);
    }
    clock_cv_.notify_all();
  }

  std::uint64_t min_clock() const {
    std::lock_guard lock(clock_mu_);
    return min_clock_locked();
  }

  /// Full-table dump; callers must ensure no concurrent pushes.
  tables::ModelDump dump() const { return tables::ModelDump::of(table_, summary_); }

  std::string server_state_hash() const {
    const auto bytes = tables::serialize_model(dump());
    return sha256_hex(bytes);
  }

  /// Direct access for evaluation at quiescent points.
  const tables::WordTopicTable& table() const { return table_; }
  const tables::SummaryRow& summary() const { return summary_; }

 private:
  std::mutex& stripe(WordId w) { return stripes_[w % stripes_.size()]; }
  std::uint64_t min_clock_locked() const { return *std::min_element(clocks_.begin(), clocks_.end()); }

  tables::WordTopicTable table_;
  tables::SummaryRow summary_;
  corpus::SlicePlan plan_;
  std::uint32_t staleness_;
  std::array<std::mutex, 256> stripes_;
  std::mutex summary_mu_;
  mutable std::mutex clock_mu_;
  std::condition_variable clock_cv_;
  std::vector<std::uint64_t> clocks_;
};

/// Direct table access with no clocks or locking, for single-worker runs.
class LocalModel : public ModelClient {
 public:
  LocalModel(std::shared_ptr<const tables::RowLayout> layout, corpus::SlicePlan plan)
      : table_(std::move(layout)), summary_(table_.num_topics()), plan_(std::move(plan)) {}

  ModelSlice fetch_slice(const SliceRequest& req) override {
    ModelSlice out;
    out.slice = req.slice;
    out.clock = req.clock;
    for (WordId w : plan_.words_in_slice(req.slice)) {
      if (table_.nnz(w) == 0) continue;
      out.rows.push_back({w, table_.row_entries(w)});
    }
    out.summary = summary_.values();
    return out;
  }

  void push_deltas(const DeltaBatch& batch) override {
    const auto entries = sorted_by_word_topic(batch.entries);
    for (std::size_t i = 0; i < entries.size();) {
      std::size_t j = i;
      while (j < entries.size() && entries[j].word == entries[i].word) ++j;
      apply_row_deltas(table_, std::span<const DeltaEntry>(entries).subspan(i, j - i));
      i = j;
    }
    for (TopicId k = 0; k < batch.summary.size(); ++k) summary_.add(k, batch.summary[k]);
  }

  void advance_clock(std::uint32_t, std::uint64_t) override {}

  tables::ModelDump dump() const { return tables::ModelDump::of(table_, summary_); }
  std::string server_state_hash() const { return sha256_hex(tables::serialize_model(dump())); }
  const tables::WordTopicTable& table() const { return table_; }
  const tables::SummaryRow& summary() const { return summary_; }

 private:
  tables::WordTopicTable table_;
  tables::SummaryRow summary_;
  corpus::SlicePlan plan_;
};

}  // namespace lightlda::pserver
