#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "lightlda/common.hpp"

namespace lightlda::tables {

/// Sparse topic counts of one document: only topics with count >= 1 are kept.
class DocTopicSparse {
 public:
  DocTopicSparse() = default;

  /// Counts the topics of a document's token-topic pairs.
  static DocTopicSparse from_pairs(std::span<const TokenTopicPair> pairs) {
    DocTopicSparse d;
    for (const auto& p : pairs) d.inc(p.topic);
    return d;
  }

  std::int32_t get(TopicId k) const {
    for (const auto& e : entries_) {
      if (e.topic == k) return e.count;
    }
    return 0;
  }

  void inc(TopicId k) {
    ++n_d_;
    for (auto& e : entries_) {
      if (e.topic == k) {
        ++e.count;
        return;
      }
    }
    entries_.push_back({k, 1});
  }

  void dec(TopicId k) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].topic == k) {
        --n_d_;
        if (--entries_[i].count == 0) {
          entries_[i] = entries_.back();
          entries_.pop_back();
        }
        return;
      }
    }
    throw InvariantViolation("doc-topic count underflow at topic " + std::to_string(k));
  }

  std::uint32_t n_d() const { return n_d_; }
  /// K_d: number of distinct topics present.
  std::uint32_t size() const { return static_cast<std::uint32_t>(entries_.size()); }
  std::span<const TopicCount> entries() const { return entries_; }

  std::vector<TopicCount> sorted_entries() const {
    auto out = entries_;
    std::sort(out.begin(), out.end(),
              [](const TopicCount& a, const TopicCount& b) { return a.topic < b.topic; });
    return out;
  }

 private:
  friend class DocTopicCursor;
  std::vector<TopicCount> entries_;
  std::uint32_t n_d_ = 0;
};

/// O(1) access to one document's counts while it is being sampled. Holds a
/// thread-owned dense scratch of K counts and entry positions; attach() and
/// detach() cost O(K_d).
class DocTopicCursor {
 public:
  explicit DocTopicCursor(std::uint32_t num_topics)
      : counts_(num_topics, 0), pos_(num_topics, kNoTopic) {}

  void attach(DocTopicSparse& doc) {
    doc_ = &doc;
    for (std::uint32_t i = 0; i < doc.entries_.size(); ++i) {
      counts_[doc.entries_[i].topic] = doc.entries_[i].count;
      pos_[doc.entries_[i].topic] = i;
    }
  }

  void detach() {
    if (!doc_) return;
    for (const auto& e : doc_->entries_) {
      counts_[e.topic] = 0;
      pos_[e.topic] = kNoTopic;
    }
    doc_ = nullptr;
  }

  std::int32_t get(TopicId k) const { return counts_[k]; }
  std::uint32_t n_d() const { return doc_->n_d_; }
  std::span<const TopicCount> entries() const { return doc_->entries_; }
  const DocTopicSparse& doc() const { return *doc_; }

  void inc(TopicId k) {
    auto& entries = doc_->entries_;
    ++doc_->n_d_;
    if (counts_[k]++ == 0) {
      pos_[k] = static_cast<std::uint32_t>(entries.size());
      entries.push_back({k, 1});
    } else {
      ++entries[pos_[k]].count;
    }
  }

  void dec(TopicId k) {
    if (counts_[k] == 0) {
      throw InvariantViolation("doc-topic count underflow at topic " + std::to_string(k));
    }
    auto& entries = doc_->entries_;
    --doc_->n_d_;
    const std::uint32_t at = pos_[k];
    if (--counts_[k] == 0) {
      entries[at] = entries.back();
      pos_[entries[at].topic] = at;
      entries.pop_back();
      pos_[k] = kNoTopic;
    } else {
      --entries[at].count;
    }
  }

 private:
  DocTopicSparse* doc_ = nullptr;
  std::vector<std::int32_t> counts_;
  std::vector<std::uint32_t> pos_;
};

}  // namespace lightlda::tables
