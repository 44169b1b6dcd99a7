#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "lightlda/alias/alias_table.hpp"
#include "lightlda/common.hpp"
#include "lightlda/tables/hyperparams.hpp"
#include "lightlda/tables/word_topic_table.hpp"

namespace lightlda::alias {

/// Word proposals p_w(k) ∝ (n_kw + β_w)/(n_k + β̄) for every word of a model
/// slice, built from one snapshot. Each word keeps a sparse alias table over
/// its nonzero topics (mass n_kw/(n_k+β̄)); all words share one dense alias
/// table over 1/(n_k+β̄), weighted by β_w at the mixture level.
class SliceProposals {
 public:
  struct WordEntry {
    std::uint64_t offset = 0;   // into topics_/bins_
    std::uint32_t size = 0;     // K_w
    double mass_sparse = 0.0;   // Σ_k n_kw/(n_k+β̄)
  };

  /// Builds proposals for `words` from `snapshot` rows and `summary` (n_k).
  void build(const tables::WordTopicTable& snapshot, std::span<const WordId> words,
             std::span<const std::int64_t> summary, const tables::Hyperparams& hp) {
    const std::uint32_t K = hp.num_topics;
    if (local_.size() != hp.vocab_size) local_.assign(hp.vocab_size, kNoTopic);
    for (WordId w : words_) local_[w] = kNoTopic;
    words_.assign(words.begin(), words.end());
    entries_.assign(words_.size(), WordEntry{});
    topics_.clear();
    bins_.clear();

    inv_denom_.resize(K);
    for (TopicId k = 0; k < K; ++k) {
      inv_denom_[k] = 1.0 / (static_cast<double>(summary[k]) + hp.beta_bar);
    }
    dense_.build(inv_denom_);
    ++dense_builds_;
    ops_ += K;

    for (std::uint32_t i = 0; i < words_.size(); ++i) {
      const WordId w = words_[i];
      local_[w] = i;
      auto& e = entries_[i];
      e.offset = topics_.size();
      weights_.clear();
      snapshot.for_each_nonzero(w, [&](TopicId k, std::int32_t c) {
        topics_.push_back(k);
        weights_.push_back(c * inv_denom_[k]);
      });
      e.size = static_cast<std::uint32_t>(weights_.size());
      ops_ += e.size;
      if (e.size == 0) continue;
      bins_.resize(topics_.size());
      e.mass_sparse = build_alias_bins(weights_, std::span<AliasBin>(bins_).subspan(e.offset, e.size),
                                       small_, large_, scaled_);
    }
  }

  void prefetch_entry(WordId w) const { __builtin_prefetch(&local_[w]); }
  void prefetch(WordId w) const {
    const std::uint32_t i = local_[w];
    if (i == kNoTopic) return;
    __builtin_prefetch(&entries_[i]);
    const WordEntry& e = entries_[i];
    if (e.size != 0) __builtin_prefetch(bins_.data() + e.offset);
  }

  bool contains(WordId w) const { return w < local_.size() && local_[w] != kNoTopic; }
  std::span<const WordId> words() const { return words_; }
  const WordEntry& entry(WordId w) const { return entries_[local_[w]]; }

  double mass_sparse(WordId w) const { return entry(w).mass_sparse; }
  /// Σ_k β_w/(n_k+β̄).
  double mass_dense(WordId w, const tables::Hyperparams& hp) const {
    return hp.beta_w(w) * dense_.total_mass();
  }
  const AliasTable& dense_part() const { return dense_; }

  /// Draws k with probability ∝ (n_kw + β_w)/(n_k + β̄) at snapshot values.
  TopicId draw(WordId w, double beta_w, Rng& rng) const {
    const WordEntry& e = entry(w);
    const double md = beta_w * dense_.total_mass();
    if (e.size != 0 && rng.uniform() * (e.mass_sparse + md) < e.mass_sparse) {
      const std::span<const AliasBin> bins(bins_.data() + e.offset, e.size);
      return topics_[e.offset + draw_bins(bins, rng.next())];
    }
    return dense_.draw(rng);
  }

  /// Draws from the same proposal with one token of topic s0 removed from the
  /// snapshot counts (n_s0w and n_s0 both reduced by one). Uses rejection:
  /// a draw of s0 is kept with probability f_-(s0)/f(s0) <= 1.
  TopicId draw_excluding(WordId w, double beta_w, double beta_bar, TopicId s0,
                         std::int64_t snap_n_s0w, std::int64_t snap_n_s0, Rng& rng) const {
    if (snap_n_s0w < 1 || snap_n_s0 < 1) return draw(w, beta_w, rng);
    const double keep = std::min(
        1.0, ((snap_n_s0w - 1 + beta_w) / (snap_n_s0 - 1 + beta_bar)) /
                 ((snap_n_s0w + beta_w) / (snap_n_s0 + beta_bar)));
    for (;;) {
      const TopicId t = draw(w, beta_w, rng);
      if (t != s0 || rng.uniform() < keep) return t;
    }
  }

  /// Normalized mixture probability of every topic implied by the alias bins.
  std::vector<double> reconstruct(WordId w, const tables::Hyperparams& hp) const {
    const WordEntry& e = entry(w);
    const double md = mass_dense(w, hp);
    const double total = e.mass_sparse + md;
    std::vector<double> p = dense_.reconstruct();
    for (double& x : p) x *= md / total;
    if (e.size != 0) {
      const auto sparse =
          reconstruct_bins(std::span<const AliasBin>(bins_.data() + e.offset, e.size));
      for (std::uint32_t i = 0; i < e.size; ++i) {
        p[topics_[e.offset + i]] += sparse[i] * e.mass_sparse / total;
      }
    }
    return p;
  }

  /// Cumulative count of weight entries touched by build().
  std::uint64_t ops() const { return ops_; }
  /// Number of dense-part builds (one per build() call).
  std::uint64_t dense_builds() const { return dense_builds_; }

 private:
  std::vector<WordId> words_;
  std::vector<std::uint32_t> local_;
  std::vector<WordEntry> entries_;
  std::vector<TopicId> topics_;
  std::vector<AliasBin> bins_;
  AliasTable dense_;
  std::vector<double> inv_denom_;
  std::vector<double> weights_;
  std::vector<std::uint32_t> small_, large_;
  std::vector<double> scaled_;
  std::uint64_t ops_ = 0;
  std::uint64_t dense_builds_ = 0;
};

}  // namespace lightlda::alias
