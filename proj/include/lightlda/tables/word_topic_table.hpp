#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "lightlda/common.hpp"

namespace lightlda::tables {

namespace detail {

inline std::int32_t checked_add(std::int32_t count, std::int64_t delta, WordId w, TopicId k) {
  const std::int64_t next = static_cast<std::int64_t>(count) + delta;
  if (next < 0) {
    throw InvariantViolation("word-topic count underflow at (w=" + std::to_string(w) +
                             ", k=" + std::to_string(k) + ")");
  }
  if (next > std::numeric_limits<std::int32_t>::max()) {
    throw InvariantViolation("word-topic count overflows 32 bits at (w=" + std::to_string(w) +
                             ", k=" + std::to_string(k) + ")");
  }
  return static_cast<std::int32_t>(next);
}

}  // namespace detail

/// Dense K-length row for hot words. Optionally tracks its nonzero topics so
/// they can be enumerated in O(K_w) (needed by the SparseLDA baseline).
class DenseRow {
 public:
  DenseRow(std::uint32_t num_topics, bool track_nonzeros)
      : counts_(num_topics, 0), tracked_(track_nonzeros) {
    if (tracked_) pos_.assign(num_topics, kNoTopic);
  }

  std::int32_t get(TopicId k) const { return counts_[k]; }
  const std::int32_t* data() const { return counts_.data(); }

  std::int32_t add(TopicId k, std::int64_t delta, WordId w) {
    const std::int32_t before = counts_[k];
    const std::int32_t after = detail::checked_add(before, delta, w, k);
    counts_[k] = after;
    if (before == 0 && after != 0) {
      ++nnz_;
      if (tracked_) {
        pos_[k] = static_cast<std::uint32_t>(nonzero_.size());
        nonzero_.push_back(k);
      }
    } else if (before != 0 && after == 0) {
      --nnz_;
      if (tracked_) {
        const std::uint32_t at = pos_[k];
        const TopicId last = nonzero_.back();
        nonzero_[at] = last;
        pos_[last] = at;
        nonzero_.pop_back();
        pos_[k] = kNoTopic;
      }
    }
    return after;
  }

  std::uint32_t nnz() const { return nnz_; }
  bool tracks_nonzeros() const { return tracked_; }

  /// Replaces the contents with entries (distinct topics, positive counts).
  void assign(std::span<const TopicCount> entries, WordId w) {
    std::fill(counts_.begin(), counts_.end(), 0);
    if (tracked_) {
      for (TopicId k : nonzero_) pos_[k] = kNoTopic;
      nonzero_.clear();
    }
    nnz_ = 0;
    for (const auto& e : entries) add(e.topic, e.count, w);
  }

  /// Appends nonzero entries in topic order.
  void append_sorted(std::vector<TopicCount>& out) const {
    for (TopicId k = 0; k < counts_.size(); ++k) {
      if (counts_[k] != 0) out.push_back({k, counts_[k]});
    }
  }

  template <typename F>
  void for_each_nonzero(F&& f) const {
    if (tracked_) {
      for (TopicId k : nonzero_) f(k, counts_[k]);
    } else {
      for (TopicId k = 0; k < counts_.size(); ++k) {
        if (counts_[k] != 0) f(k, counts_[k]);
      }
    }
  }

  std::size_t memory_bytes() const {
    return counts_.capacity() * sizeof(std::int32_t) + pos_.capacity() * sizeof(std::uint32_t) +
           nonzero_.capacity() * sizeof(TopicId);
  }

 private:
  std::vector<std::int32_t> counts_;
  std::uint32_t nnz_ = 0;
  bool tracked_ = false;
  std::vector<std::uint32_t> pos_;
  std::vector<TopicId> nonzero_;
};

/// Open-addressing row for long-tail words. Capacity is a power of two and the
/// probe sequence is triangular: slot(i) = (h + i(i+1)/2) mod capacity, which
/// visits every slot. Occupied slots (live keys plus zero-count tombstones)
/// never exceed half the capacity.
class HashRow {
 public:
  struct Slot {
    TopicId topic = kNoTopic;
    std::int32_t count = 0;
  };

  /// Smallest power of two >= 2 * min(frequency, K), at least 8.
  static std::uint32_t capacity_for(std::uint64_t frequency, std::uint32_t num_topics) {
    const std::uint64_t keys = std::min<std::uint64_t>(frequency, num_topics);
    return static_cast<std::uint32_t>(std::max<std::uint64_t>(8, std::bit_ceil(2 * keys)));
  }

  static std::uint32_t probe(std::uint32_t home, std::uint32_t i, std::uint32_t mask) {
    return (home + static_cast<std::uint32_t>((static_cast<std::uint64_t>(i) * (i + 1) / 2))) &
           mask;
  }

  explicit HashRow(std::uint32_t capacity = 8) { reset(capacity); }

  /// Empties the row, keeping its storage when the capacity allows.
  void clear(std::uint32_t capacity) { reset(capacity); }

  std::int32_t get(TopicId k) const {
    const std::uint32_t mask = capacity() - 1;
    const std::uint32_t h = home(k);
    for (std::uint32_t i = 0;; ++i) {
      const Slot& s = slots_[probe(h, i, mask)];
      if (s.topic == k) return s.count;
      if (s.topic == kNoTopic) return 0;
    }
  }

  std::int32_t add(TopicId k, std::int64_t delta, WordId w) {
    Slot* slot = find_or_empty(k);
    if (slot->topic != k) {
      if (delta == 0) return 0;
      if (delta < 0) detail::checked_add(0, delta, w, k);
      if (2 * (occupied_ + 1) > capacity()) {
        rehash(nnz_ + 1);
        slot = find_or_empty(k);
      }
      slot->topic = k;
      slot->count = detail::checked_add(0, delta, w, k);
      ++occupied_;
      ++nnz_;
      return slot->count;
    }
    const std::int32_t before = slot->count;
    slot->count = detail::checked_add(before, delta, w, k);
    if (before == 0 && slot->count != 0) ++nnz_;
    if (before != 0 && slot->count == 0) --nnz_;  // tombstone stays until rehash
    return slot->count;
  }

  void prefetch(TopicId k) const { __builtin_prefetch(&slots_[home(k)]); }

  std::uint32_t nnz() const { return nnz_; }
  std::uint32_t capacity() const { return static_cast<std::uint32_t>(slots_.size()); }
  std::uint32_t occupied() const { return occupied_; }
  double load_factor() const { return static_cast<double>(occupied_) / capacity(); }

  template <typename F>
  void for_each_nonzero(F&& f) const {
    for (const Slot& s : slots_) {
      if (s.topic != kNoTopic && s.count != 0) f(s.topic, s.count);
    }
  }

  std::size_t memory_bytes() const { return slots_.capacity() * sizeof(Slot); }

 private:
  void reset(std::uint32_t capacity) {
    if (capacity < 2 || !std::has_single_bit(capacity)) {
      throw InvariantViolation("hash row capacity must be a power of two >= 2");
    }
    slots_.assign(capacity, Slot{});
    shift_ = 32 - static_cast<std::uint32_t>(std::countr_zero(capacity));
    occupied_ = 0;
    nnz_ = 0;
  }

  std::uint32_t home(TopicId k) const {
    // Fibonacci hashing; shift_ == 32 only for capacity 1, which reset() forbids.
    return (k * 2654435769u) >> shift_;
  }

  Slot* find_or_empty(TopicId k) {
    const std::uint32_t mask = capacity() - 1;
    const std::uint32_t h = home(k);
    for (std::uint32_t i = 0;; ++i) {
      Slot& s = slots_[probe(h, i, mask)];
      if (s.topic == k || s.topic == kNoTopic) return &s;
    }
  }

  void rehash(std::uint32_t live_keys) {
    std::uint32_t cap = capacity();
    while (2 * live_keys > cap) cap *= 2;
    std::vector<Slot> old;
    old.swap(slots_);
    reset(cap);
    for (const Slot& s : old) {
      if (s.topic == kNoTopic || s.count == 0) continue;
      Slot* dst = find_or_empty(s.topic);
      *dst = s;
      ++occupied_;
      ++nnz_;
    }
  }

  std::vector<Slot> slots_;
  std::uint32_t shift_ = 0;
  std::uint32_t occupied_ = 0;
  std::uint32_t nnz_ = 0;
};

/// Read-only handle on one row, resolved once per token.
class RowView {
 public:
  RowView() = default;
  explicit RowView(const std::int32_t* dense) : dense_(dense) {}
  explicit RowView(const HashRow* hash) : hash_(hash) {}

  std::int32_t get(TopicId k) const {
    if (dense_) return dense_[k];
    return hash_ ? hash_->get(k) : 0;
  }

  const std::int32_t* dense_data() const { return dense_; }

 private:
  const std::int32_t* dense_ = nullptr;
  const HashRow* hash_ = nullptr;
};

/// Per-word storage decision for the hybrid table: which words get dense rows
/// and, for the rest, the frequency that sizes their hash rows.
struct RowLayout {
  std::uint32_t num_topics = 0;
  std::vector<std::uint8_t> dense;        // 1 = hot word, dense row
  std::vector<std::uint64_t> frequency;   // corpus frequency per word

  std::uint32_t vocab_size() const { return static_cast<std::uint32_t>(dense.size()); }

  static std::shared_ptr<const RowLayout> make(std::uint32_t K, std::vector<std::uint8_t> dense,
                                               std::vector<std::uint64_t> frequency) {
    auto l = std::make_shared<RowLayout>();
    l->num_topics = K;
    l->dense = std::move(dense);
    l->frequency = std::move(frequency);
    return l;
  }

  static std::shared_ptr<const RowLayout> all_dense(std::uint32_t V, std::uint32_t K) {
    return make(K, std::vector<std::uint8_t>(V, 1), std::vector<std::uint64_t>(V, 0));
  }
};

/// Result of hot/long-tail classification.
struct WordClassification {
  std::vector<std::uint8_t> dense;
  std::uint32_t num_dense = 0;
  std::uint64_t estimated_bytes = 0;
  std::uint64_t dense_estimate_bytes = 0;  // V*K*4, the all-dense reference
};

/// Bytes a row is expected to occupy (payload only).
inline std::uint64_t estimated_row_bytes(bool dense, std::uint64_t frequency, std::uint32_t K) {
  return dense ? std::uint64_t{K} * sizeof(std::int32_t)
               : std::uint64_t{HashRow::capacity_for(frequency, K)} * sizeof(HashRow::Slot);
}

/// Per-row bookkeeping overhead charged by the memory estimate.
inline constexpr std::uint64_t kRowOverheadBytes = 64;

/// Marks the most frequent words (ties by lower id) as dense. With a
/// `hot_fraction`, floor(hot_fraction * V) words are dense; with a
/// `memory_budget`, the dense count is the largest whose estimate fits (and,
/// when both are given, no more than the fraction allows).
inline WordClassification classify_words(const std::vector<std::uint64_t>& frequency,
                                         std::uint32_t K, std::optional<double> hot_fraction,
                                         std::optional<std::uint64_t> memory_budget) {
  const auto V = static_cast<std::uint32_t>(frequency.size());
  if (hot_fraction && !(*hot_fraction >= 0.0 && *hot_fraction <= 1.0)) {
    throw ConfigError("hot_fraction must lie in [0, 1]");
  }
  std::vector<WordId> ranked(V);
  std::iota(ranked.begin(), ranked.end(), WordId{0});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](WordId a, WordId b) { return frequency[a] > frequency[b]; });

  std::uint32_t max_dense = V;
  if (hot_fraction) {
    max_dense = static_cast<std::uint32_t>(std::floor(*hot_fraction * V + 1e-9));
  }
  // estimate[h] = bytes when the h most frequent words are dense.
  std::uint64_t estimate = std::uint64_t{V} * kRowOverheadBytes;
  for (WordId w : ranked) estimate += estimated_row_bytes(false, frequency[w], K);
  std::uint32_t chosen = memory_budget ? 0 : max_dense;
  std::uint64_t chosen_bytes = estimate;
  bool feasible = !memory_budget || estimate <= *memory_budget;
  for (std::uint32_t h = 1; h <= max_dense; ++h) {
    const WordId w = ranked[h - 1];
    estimate += estimated_row_bytes(true, frequency[w], K);
    estimate -= estimated_row_bytes(false, frequency[w], K);
    if (!memory_budget || estimate <= *memory_budget) {
      if (memory_budget || h == max_dense) {
        chosen = h;
        chosen_bytes = estimate;
        feasible = true;
      }
    }
  }
  if (!feasible) {
    throw ConfigError("memory budget " + std::to_string(*memory_budget) +
                      " bytes is below the smallest hybrid-table estimate");
  }
  WordClassification out;
  out.dense.assign(V, 0);
  for (std::uint32_t i = 0; i < chosen; ++i) out.dense[ranked[i]] = 1;
  out.num_dense = chosen;
  out.estimated_bytes = chosen_bytes;
  out.dense_estimate_bytes = std::uint64_t{V} * K * sizeof(std::int32_t);
  return out;
}

/// The word-topic count table n_kw: hybrid of dense rows (hot words) and
/// open-addressing rows (long-tail words). Rows are created on first write,
/// so a table may hold only a subset of the vocabulary (a model slice).
class WordTopicTable {
 public:
  WordTopicTable() = default;
  explicit WordTopicTable(std::shared_ptr<const RowLayout> layout, bool track_dense_nonzeros = false)
      : layout_(std::move(layout)),
        track_(track_dense_nonzeros),
        rows_(layout_->vocab_size()) {}

  std::uint32_t num_topics() const { return layout_->num_topics; }
  std::uint32_t vocab_size() const { return static_cast<std::uint32_t>(rows_.size()); }
  const std::shared_ptr<const RowLayout>& layout() const { return layout_; }

  std::int32_t get(WordId w, TopicId k) const {
    const Row& row = rows_[w];
    if (const auto* d = std::get_if<DenseRow>(&row)) return d->get(k);
    if (const auto* h = std::get_if<HashRow>(&row)) return h->get(k);
    return 0;
  }

  /// Adds delta to n_kw and returns the new count. Underflow is a hard error.
  std::int32_t update(WordId w, TopicId k, std::int64_t delta) {
    Row& row = rows_[w];
    if (auto* d = std::get_if<DenseRow>(&row)) return d->add(k, delta, w);
    if (auto* h = std::get_if<HashRow>(&row)) return h->add(k, delta, w);
    if (delta == 0) return 0;
    return create_row(w).index() == 1 ? std::get<DenseRow>(row).add(k, delta, w)
                                      : std::get<HashRow>(row).add(k, delta, w);
  }

  RowView view(WordId w) const {
    const Row& row = rows_[w];
    if (const auto* d = std::get_if<DenseRow>(&row)) return RowView(d->data());
    if (const auto* h = std::get_if<HashRow>(&row)) return RowView(h);
    return RowView();
  }

  /// Cache hints for an upcoming get(w, k): the row handle, then the count.
  void prefetch_row(WordId w) const { __builtin_prefetch(&rows_[w]); }
  void prefetch(WordId w, TopicId k) const {
    const Row& row = rows_[w];
    if (const auto* d = std::get_if<DenseRow>(&row)) {
      __builtin_prefetch(d->data() + k);
    } else if (const auto* h = std::get_if<HashRow>(&row)) {
      h->prefetch(k);
    }
  }

  bool has_row(WordId w) const { return !std::holds_alternative<std::monostate>(rows_[w]); }
  bool is_dense(WordId w) const { return std::holds_alternative<DenseRow>(rows_[w]); }
  const HashRow* hash_row(WordId w) const { return std::get_if<HashRow>(&rows_[w]); }

  /// K_w: number of topics with a nonzero count for word w.
  std::uint32_t nnz(WordId w) const {
    const Row& row = rows_[w];
    if (const auto* d = std::get_if<DenseRow>(&row)) return d->nnz();
    if (const auto* h = std::get_if<HashRow>(&row)) return h->nnz();
    return 0;
  }

  /// Calls f(topic, count) for each nonzero entry of row w, in no fixed order.
  template <typename F>
  void for_each_nonzero(WordId w, F&& f) const {
    const Row& row = rows_[w];
    if (const auto* d = std::get_if<DenseRow>(&row)) {
      d->for_each_nonzero(f);
    } else if (const auto* h = std::get_if<HashRow>(&row)) {
      h->for_each_nonzero(f);
    }
  }

  /// Nonzero entries of row w sorted by topic.
  std::vector<TopicCount> row_entries(WordId w) const {
    std::vector<TopicCount> out;
    out.reserve(nnz(w));
    if (const auto* d = std::get_if<DenseRow>(&rows_[w])) {
      d->append_sorted(out);
      return out;
    }
    for_each_nonzero(w, [&](TopicId k, std::int32_t c) { out.push_back({k, c}); });
    std::sort(out.begin(), out.end(),
              [](const TopicCount& a, const TopicCount& b) { return a.topic < b.topic; });
    return out;
  }

  std::int64_t row_sum(WordId w) const {
    std::int64_t s = 0;
    for_each_nonzero(w, [&](TopicId, std::int32_t c) { s += c; });
    return s;
  }

  /// Replaces row w with the given entries.
  void assign_row(WordId w, std::span<const TopicCount> entries) {
    if (entries.empty()) {
      clear_row(w);
      return;
    }
    Row& row = rows_[w];
    if (auto* d = std::get_if<DenseRow>(&row)) {
      d->assign(entries, w);
      return;
    }
    if (auto* h = std::get_if<HashRow>(&row)) {
      h->clear(hash_capacity(w, entries.size()));
    } else {
      create_row(w, entries.size());
    }
    for (const auto& e : entries) update(w, e.topic, e.count);
  }

  /// Copies row w from another table with the same layout.
  void copy_row_from(const WordTopicTable& src, WordId w) { rows_[w] = src.rows_[w]; }

  void clear_row(WordId w) { rows_[w] = std::monostate{}; }

  std::uint64_t total_nonzeros() const {
    std::uint64_t n = 0;
    for (WordId w = 0; w < rows_.size(); ++w) n += nnz(w);
    return n;
  }

  /// Bytes held by rows plus per-row bookkeeping.
  std::uint64_t memory_bytes() const {
    std::uint64_t bytes = rows_.capacity() * sizeof(Row);
    for (const Row& row : rows_) {
      if (const auto* d = std::get_if<DenseRow>(&row)) bytes += d->memory_bytes();
      if (const auto* h = std::get_if<HashRow>(&row)) bytes += h->memory_bytes();
    }
    return bytes;
  }

 private:
  using Row = std::variant<std::monostate, DenseRow, HashRow>;

  Row& create_row(WordId w, std::size_t expected_keys = 0) {
    Row& row = rows_[w];
    if (layout_->dense[w]) {
      row.emplace<DenseRow>(layout_->num_topics, track_);
    } else {
      row.emplace<HashRow>(hash_capacity(w, expected_keys));
    }
    return row;
  }

  std::uint32_t hash_capacity(WordId w, std::size_t expected_keys) const {
    const std::uint64_t freq = std::max<std::uint64_t>(layout_->frequency[w], expected_keys);
    return HashRow::capacity_for(freq, layout_->num_topics);
  }

  std::shared_ptr<const RowLayout> layout_;
  bool track_ = false;
  std::vector<Row> rows_;
};

/// Length-K vector of 64-bit topic totals n_k.
class SummaryRow {
 public:
  SummaryRow() = default;
  explicit SummaryRow(std::uint32_t K) : totals_(K, 0) {}
  explicit SummaryRow(std::vector<std::int64_t> totals) : totals_(std::move(totals)) {}

  std::uint32_t size() const { return static_cast<std::uint32_t>(totals_.size()); }
  std::int64_t operator[](TopicId k) const { return totals_[k]; }

  void add(TopicId k, std::int64_t delta) {
    const std::int64_t next = totals_[k] + delta;
    if (next < 0) {
      throw InvariantViolation("summary row underflow at topic " + std::to_string(k));
    }
    totals_[k] = next;
  }

  std::int64_t total() const { return std::accumulate(totals_.begin(), totals_.end(), std::int64_t{0}); }
  const std::vector<std::int64_t>& values() const { return totals_; }
  std::vector<std::int64_t>& values() { return totals_; }

  friend bool operator==(const SummaryRow&, const SummaryRow&) = default;

 private:
  std::vector<std::int64_t> totals_;
};

}  // namespace lightlda::tables
