#pragma once

#include <algorithm>
#include <memory>
#include <span>
#include <vector>

#include "lightlda/alias/alias_table.hpp"
#include "lightlda/alias/word_proposal.hpp"
#include "lightlda/common.hpp"
#include "lightlda/samplers/formulas.hpp"
#include "lightlda/tables/doc_topic.hpp"
#include "lightlda/tables/hyperparams.hpp"
#include "lightlda/tables/word_topic_table.hpp"

namespace lightlda::samplers {

/// Immutable inputs shared by all threads while one model slice is sampled.
struct SliceView {
  std::uint32_t slice = 0;
  const tables::WordTopicTable* snapshot = nullptr;
  std::span<const std::int64_t> summary;          // n_k at snapshot time
  std::span<const WordId> words;                  // rows held by the slice
  const alias::SliceProposals* proposals = nullptr;  // word proposals (light kinds)
};

struct SamplerStats {
  std::uint64_t tokens = 0;
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  std::uint64_t changed = 0;

  SamplerStats& operator+=(const SamplerStats& o) {
    tokens += o.tokens;
    proposals += o.proposals;
    accepted += o.accepted;
    changed += o.changed;
    return *this;
  }
};

/// Thread-confined sampler. Holds a live copy of the current slice's rows and
/// of n_k, so a thread sees its own updates at once; the difference against
/// the snapshot is handed back as deltas when the slice ends.
class TokenSampler {
 public:
  TokenSampler(const SamplerConfig& cfg, const tables::Hyperparams& hp,
               std::shared_ptr<const tables::RowLayout> layout,
               const alias::AliasTable* alpha_table)
      : cfg_(cfg),
        hp_(hp),
        alpha_table_(alpha_table),
        live_(std::move(layout), cfg.kind == SamplerKind::kSparse),
        cursor_(hp.num_topics),
        summary_(hp.num_topics, 0) {
    cfg_.validate();
    const std::uint32_t K = hp.num_topics;
    if (cfg_.kind == SamplerKind::kGibbs) cumulative_.resize(K);
    if (cfg_.kind == SamplerKind::kSparse) {
      inv_.resize(K);
      q_.resize(K);
    }
    if (cfg_.kind == SamplerKind::kAlias) {
      inv_.resize(K);
      stale_.resize(hp.vocab_size);
      u_topics_.reserve(K);
      u_cumulative_.reserve(K);
    }
  }

  Rng& rng() { return rng_; }
  const SamplerStats& stats() const { return stats_; }
  void reset_stats() { stats_ = {}; }
  const tables::WordTopicTable& live() const { return live_; }
  std::span<const std::int64_t> live_summary() const { return summary_; }

  /// Installs a slice: copies its rows and n_k from the snapshot.
  void begin_slice(const SliceView& view) {
    if (view.slice != slice_ || !has_slice_) {
      for (WordId w : view_.words) live_.clear_row(w);
    }
    view_ = view;
    slice_ = view.slice;
    has_slice_ = true;
    for (WordId w : view.words) live_.copy_row_from(*view.snapshot, w);
    std::copy(view.summary.begin(), view.summary.end(), summary_.begin());
    if (cfg_.kind == SamplerKind::kSparse) reset_sparse_cache();
    if (cfg_.kind == SamplerKind::kAlias) {
      for (TopicId k = 0; k < hp_.num_topics; ++k) refresh_inv(k);
    }
    if ((cfg_.kind == SamplerKind::kLight || cfg_.kind == SamplerKind::kLightWordOnly) &&
        !view.proposals) {
      throw InvariantViolation("light sampler needs word proposals for the slice");
    }
  }

  /// Resamples tokens [first, last) of one document, given as indices into
  /// `doc_pairs` (the whole document).
  void sample_doc(tables::DocTopicSparse& doc, std::span<TokenTopicPair> doc_pairs,
                  std::size_t first, std::size_t last) {
    if (first == last) return;
    cursor_.attach(doc);
    if (cfg_.kind == SamplerKind::kSparse) attach_sparse_doc();
    for (std::size_t i = first; i < last; ++i) {
      if (i + 2 < last) prefetch_far(doc_pairs[i + 2]);
      if (i + 1 < last) prefetch_near(doc_pairs[i + 1]);
      sample_token(doc_pairs, i);
    }
    if (cfg_.kind == SamplerKind::kSparse) detach_sparse_doc();
    cursor_.detach();
  }

  /// Appends live-minus-snapshot deltas for the slice's rows (sorted by
  /// word order of the slice, then topic) and adds n_k deltas to `summary`.
  void collect_deltas(std::vector<DeltaEntry>& out, std::span<std::int64_t> summary) const {
    const std::uint32_t K = hp_.num_topics;
    const auto& snap = *view_.snapshot;
    for (WordId w : view_.words) {
      const std::size_t start = out.size();
      if (live_.is_dense(w) || snap.is_dense(w)) {
        const auto lv = live_.view(w);
        const auto sv = snap.view(w);
        if (lv.dense_data() && sv.dense_data()) {
          const std::int32_t* a = lv.dense_data();
          const std::int32_t* b = sv.dense_data();
          for (TopicId k = 0; k < K; ++k) {
            if (a[k] != b[k]) out.push_back({w, k, a[k] - b[k]});
          }
          continue;
        }
        for (TopicId k = 0; k < K; ++k) {
          const std::int32_t d = lv.get(k) - sv.get(k);
          if (d != 0) out.push_back({w, k, d});
        }
        continue;
      }
      live_.for_each_nonzero(w, [&](TopicId k, std::int32_t c) {
        const std::int32_t d = c - snap.get(w, k);
        if (d != 0) out.push_back({w, k, d});
      });
      snap.for_each_nonzero(w, [&](TopicId k, std::int32_t c) {
        if (live_.get(w, k) == 0) out.push_back({w, k, -c});
      });
      std::sort(out.begin() + static_cast<std::ptrdiff_t>(start), out.end(),
                [](const DeltaEntry& a, const DeltaEntry& b) { return a.topic < b.topic; });
    }
    for (TopicId k = 0; k < K; ++k) summary[k] += summary_[k] - view_.summary[k];
  }

 private:
  struct LiveCounts {
    const tables::DocTopicCursor* d;
    tables::RowView row;
    const std::int64_t* nk;
    WordId w;
    double doc(TopicId k) const { return d->get(k); }
    double word(TopicId k) const { return row.get(k); }
    double topic(TopicId k) const { return static_cast<double>(nk[k]); }
    WordId word_id() const { return w; }
  };

  // Snapshot counts with the token's own snapshot contribution (topic s0)
  // taken out; these are the counts the word proposal draws from.
  struct ProposalCounts {
    tables::RowView row;
    const std::int64_t* nk;
    TopicId s0;
    double word(TopicId k) const { return row.get(k) - (k == s0 ? 1.0 : 0.0); }
    double topic(TopicId k) const { return static_cast<double>(nk[k]) - (k == s0 ? 1.0 : 0.0); }
  };

  bool light_kind() const {
    return cfg_.kind == SamplerKind::kLight || cfg_.kind == SamplerKind::kLightWordOnly;
  }

  void prefetch_far(const TokenTopicPair& p) const {
    live_.prefetch_row(p.word);
    if (light_kind()) {
      view_.snapshot->prefetch_row(p.word);
      view_.proposals->prefetch_entry(p.word);
    } else if (cfg_.kind == SamplerKind::kAlias) {
      __builtin_prefetch(&stale_[p.word]);
    }
  }

  void prefetch_near(const TokenTopicPair& p) const {
    live_.prefetch(p.word, p.topic);
    if (light_kind()) {
      view_.snapshot->prefetch(p.word, p.topic);
      view_.proposals->prefetch(p.word);
    } else if (cfg_.kind == SamplerKind::kAlias && stale_[p.word]) {
      __builtin_prefetch(stale_[p.word].get());
    }
  }

  void sample_token(std::span<TokenTopicPair> doc_pairs, std::size_t i) {
    TokenTopicPair& pair = doc_pairs[i];
    const WordId w = pair.word;
    const TopicId s0 = pair.topic;
    remove(w, s0);
    TopicId t = s0;
    switch (cfg_.kind) {
      case SamplerKind::kGibbs: t = gibbs(w); break;
      case SamplerKind::kSparse: t = sparse(w); break;
      case SamplerKind::kAlias: t = aliaslda(w, s0); break;
      default: t = light(w, s0, doc_pairs, i); break;
    }
    add(w, t);
    pair.topic = t;
    ++stats_.tokens;
    if (t != s0) ++stats_.changed;
  }

  void remove(WordId w, TopicId k) {
    if (cfg_.kind == SamplerKind::kSparse) sparse_unhook(k);
    cursor_.dec(k);
    live_.update(w, k, -1);
    if (--summary_[k] < 0) throw InvariantViolation("live summary underflow");
    if (cfg_.kind == SamplerKind::kSparse) sparse_rehook(k);
    if (cfg_.kind == SamplerKind::kAlias) refresh_inv(k);
  }

  void add(WordId w, TopicId k) {
    if (cfg_.kind == SamplerKind::kSparse) sparse_unhook(k);
    cursor_.inc(k);
    live_.update(w, k, +1);
    ++summary_[k];
    if (cfg_.kind == SamplerKind::kSparse) sparse_rehook(k);
    if (cfg_.kind == SamplerKind::kAlias) refresh_inv(k);
  }

  LiveCounts live_counts(WordId w) const { return {&cursor_, live_.view(w), summary_.data(), w}; }

  TopicId fallback_topic(TopicId k) const { return std::min(k, hp_.num_topics - 1); }

  // --- collapsed Gibbs ----------------------------------------------------
  TopicId gibbs(WordId w) {
    const auto c = live_counts(w);
    const std::uint32_t K = hp_.num_topics;
    double acc = 0;
    for (TopicId k = 0; k < K; ++k) {
      acc += conditional_mass(k, c, hp_);
      cumulative_[k] = acc;
    }
    const double u = rng_.uniform() * acc;
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return fallback_topic(static_cast<TopicId>(it - cumulative_.begin()));
  }

  // --- SparseLDA ----------------------------------------------------------
  void reset_sparse_cache() {
    r_sum_ = 0;
    for (TopicId k = 0; k < hp_.num_topics; ++k) {
      inv_[k] = 1.0 / (static_cast<double>(summary_[k]) + hp_.beta_bar);
      r_sum_ += hp_.alpha_k(k) * inv_[k];
      q_[k] = hp_.alpha_k(k) * inv_[k];
    }
  }

  void attach_sparse_doc() {
    s_sum_ = 0;
    for (const auto& e : cursor_.entries()) {
      s_sum_ += e.count * inv_[e.topic];
      q_[e.topic] = (hp_.alpha_k(e.topic) + e.count) * inv_[e.topic];
    }
  }

  void detach_sparse_doc() {
    for (const auto& e : cursor_.entries()) q_[e.topic] = hp_.alpha_k(e.topic) * inv_[e.topic];
    s_sum_ = 0;
  }

  void sparse_unhook(TopicId k) {
    r_sum_ -= hp_.alpha_k(k) * inv_[k];
    s_sum_ -= cursor_.get(k) * inv_[k];
  }

  void refresh_inv(TopicId k) {
    inv_[k] = 1.0 / (static_cast<double>(summary_[k]) + hp_.beta_bar);
  }

  void sparse_rehook(TopicId k) {
    inv_[k] = 1.0 / (static_cast<double>(summary_[k]) + hp_.beta_bar);
    r_sum_ += hp_.alpha_k(k) * inv_[k];
    s_sum_ += cursor_.get(k) * inv_[k];
    q_[k] = (hp_.alpha_k(k) + cursor_.get(k)) * inv_[k];
  }

  TopicId sparse(WordId w) {
    const double bw = hp_.beta_w(w);
    t_topics_.clear();
    t_cumulative_.clear();
    double t_sum = 0;
    live_.for_each_nonzero(w, [&](TopicId k, std::int32_t c) {
      t_sum += c * q_[k];
      t_topics_.push_back(k);
      t_cumulative_.push_back(t_sum);
    });
    const double s_mass = std::max(0.0, bw * s_sum_);
    const double r_mass = std::max(0.0, bw * r_sum_);
    double u = rng_.uniform() * (t_sum + s_mass + r_mass);
    if (u < t_sum) {
      const auto it = std::upper_bound(t_cumulative_.begin(), t_cumulative_.end(), u);
      return t_topics_[std::min<std::size_t>(it - t_cumulative_.begin(), t_topics_.size() - 1)];
    }
    u -= t_sum;
    if (u < s_mass && cursor_.entries().size() > 0) {
      double acc = 0;
      for (const auto& e : cursor_.entries()) {
        acc += bw * e.count * inv_[e.topic];
        if (u < acc) return e.topic;
      }
      return cursor_.entries().back().topic;
    }
    u -= s_mass;
    double acc = 0;
    for (TopicId k = 0; k < hp_.num_topics; ++k) {
      acc += bw * hp_.alpha_k(k) * inv_[k];
      if (u < acc) return k;
    }
    return hp_.num_topics - 1;
  }

  // --- AliasLDA -----------------------------------------------------------
  struct StaleWord {
    std::vector<alias::AliasBin> bins;
    double total = 0.0;
    std::vector<double> weights;  // α_k(n_kw+β_w)/(n_k+β̄) at build time
    std::uint32_t draws_left = 0;
  };

  TopicId aliaslda(WordId w, TopicId s0) {
    const auto c = live_counts(w);
    const std::uint32_t K = hp_.num_topics;
    const double bw = hp_.beta_w(w);
    auto& slot = stale_[w];
    if (!slot) slot = std::make_unique<StaleWord>();
    StaleWord& sw = *slot;
    if (sw.draws_left == 0) {
      sw.weights.resize(K);
      for (TopicId k = 0; k < K; ++k) {
        sw.weights[k] = hp_.alpha_k(k) * (c.word(k) + bw) / (c.topic(k) + hp_.beta_bar);
      }
      sw.bins.resize(K);
      sw.total = alias::build_alias_bins(sw.weights, sw.bins, alias_small_, alias_large_,
                                         alias_scaled_);
      sw.draws_left = K;
    }
    u_topics_.clear();
    u_cumulative_.clear();
    double u_sum = 0;
    for (const auto& e : cursor_.entries()) {
      u_sum += e.count * (c.word(e.topic) + bw) * inv_[e.topic];
      u_topics_.push_back(e.topic);
      u_cumulative_.push_back(u_sum);
    }
    const double v_sum = sw.total;
    auto q = [&](TopicId k) {
      return c.doc(k) * (c.word(k) + bw) * inv_[k] + sw.weights[k];
    };
    TopicId s = s0;
    for (std::uint32_t step = 0; step < cfg_.mh_steps; ++step) {
      TopicId t;
      const double x = rng_.uniform() * (u_sum + v_sum);
      if (x < u_sum) {
        const auto it = std::upper_bound(u_cumulative_.begin(), u_cumulative_.end(), x);
        t = u_topics_[std::min<std::size_t>(it - u_cumulative_.begin(), u_topics_.size() - 1)];
      } else {
        t = alias::draw_bins(sw.bins, rng_.next());
        if (sw.draws_left > 0) --sw.draws_left;
      }
      ++stats_.proposals;
      if (t == s) {
        ++stats_.accepted;
        continue;
      }
      const double pi = conditional_mass(t, c, hp_) * q(s) / (conditional_mass(s, c, hp_) * q(t));
      if (pi >= 1.0 || rng_.uniform() < pi) {
        s = t;
        ++stats_.accepted;
      }
    }
    return s;
  }

  // --- LightLDA cycle / word-only / doc-only ------------------------------
  TopicId light(WordId w, TopicId s0, std::span<TokenTopicPair> doc_pairs, std::size_t i) {
    const auto c = live_counts(w);
    TopicId s = s0;
    for (std::uint32_t step = 0; step < cfg_.mh_steps; ++step) {
      const bool doc_step = cfg_.kind == SamplerKind::kLightDocOnly ||
                            (cfg_.kind == SamplerKind::kLight && step % 2 == 0);
      TopicId t;
      double accept;
      if (doc_step) {
        t = light_doc_propose(doc_pairs, hp_, *alpha_table_, rng_, i);
        accept = light_doc_accept(s, t, c, hp_, c);
      } else {
        const auto snap_row = view_.snapshot->view(w);
        t = view_.proposals->draw_excluding(w, hp_.beta_w(w), hp_.beta_bar, s0,
                                            snap_row.get(s0), view_.summary[s0], rng_);
        const ProposalCounts prop{snap_row, view_.summary.data(),
                                  snap_row.get(s0) >= 1 && view_.summary[s0] >= 1 ? s0 : kNoTopic};
        accept = light_word_accept(s, t, c, hp_, prop);
      }
      ++stats_.proposals;
      if (t == s) {
        ++stats_.accepted;
        continue;
      }
      if (accept >= 1.0 || rng_.uniform() < accept) {
        s = t;
        ++stats_.accepted;
      }
    }
    return s;
  }

  SamplerConfig cfg_;
  const tables::Hyperparams& hp_;
  const alias::AliasTable* alpha_table_;
  tables::WordTopicTable live_;
  tables::DocTopicCursor cursor_;
  std::vector<std::int64_t> summary_;
  SliceView view_;
  std::uint32_t slice_ = 0;
  bool has_slice_ = false;
  Rng rng_;
  SamplerStats stats_;

  std::vector<double> cumulative_;

  std::vector<double> inv_, q_;
  double r_sum_ = 0, s_sum_ = 0;
  std::vector<TopicId> t_topics_;
  std::vector<double> t_cumulative_;

  std::vector<std::unique_ptr<StaleWord>> stale_;
  std::vector<TopicId> u_topics_;
  std::vector<double> u_cumulative_;
  std::vector<std::uint32_t> alias_small_, alias_large_;
  std::vector<double> alias_scaled_;
};

}  // namespace lightlda::samplers
