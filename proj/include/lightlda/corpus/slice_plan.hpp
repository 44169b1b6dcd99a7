#pragma once

#include <algorithm>
#include <queue>
#include <span>
#include <vector>

#include "lightlda/common.hpp"
#include "lightlda/corpus/vocabulary.hpp"

namespace lightlda::corpus {

/// Assignment of vocabulary words to model slices. `order` lists words
/// slice-major; slice j owns order[begin(j), begin(j+1)).
class SlicePlan {
 public:
  SlicePlan() = default;

  /// Contiguous partition of `order` into `num_slices` runs whose sizes
  /// differ by at most one word.
  static SlicePlan from_order(std::vector<WordId> order, std::uint32_t num_slices) {
    const auto V = static_cast<std::uint32_t>(order.size());
    if (num_slices == 0 || num_slices > V) {
      throw ConfigError("num_slices must be in [1, V]; got " + std::to_string(num_slices) +
                        " for V=" + std::to_string(V));
    }
    SlicePlan plan;
    plan.num_slices_ = num_slices;
    plan.order_ = std::move(order);
    plan.begin_.resize(num_slices + 1);
    const std::uint32_t base = V / num_slices;
    const std::uint32_t extra = V % num_slices;
    plan.begin_[0] = 0;
    for (std::uint32_t j = 0; j < num_slices; ++j) {
      plan.begin_[j + 1] = plan.begin_[j] + base + (j < extra ? 1 : 0);
    }
    plan.slice_of_word_.assign(V, 0);
    plan.rank_.assign(V, 0);
    for (std::uint32_t j = 0; j < num_slices; ++j) {
      for (std::uint32_t p = plan.begin_[j]; p < plan.begin_[j + 1]; ++p) {
        plan.slice_of_word_[plan.order_[p]] = j;
        plan.rank_[plan.order_[p]] = p;
      }
    }
    return plan;
  }

  std::uint32_t num_slices() const { return num_slices_; }
  std::uint32_t vocab_size() const { return static_cast<std::uint32_t>(order_.size()); }
  std::uint32_t slice_of(WordId w) const { return slice_of_word_[w]; }
  /// Position of w in the slice-major order; tokens inside a block sort by it.
  std::uint32_t rank(WordId w) const { return rank_[w]; }

  std::span<const WordId> words_in_slice(std::uint32_t j) const {
    return std::span<const WordId>(order_).subspan(begin_[j], begin_[j + 1] - begin_[j]);
  }

  const std::vector<WordId>& order() const { return order_; }
  const std::vector<std::uint32_t>& slice_of_word() const { return slice_of_word_; }

 private:
  std::uint32_t num_slices_ = 0;
  std::vector<WordId> order_;
  std::vector<std::uint32_t> begin_;
  std::vector<std::uint32_t> slice_of_word_;
  std::vector<std::uint32_t> rank_;
};

/// Token mass (sum of corpus frequencies) per slice.
inline std::vector<std::uint64_t> slice_token_mass(const SlicePlan& plan,
                                                   const Vocabulary& vocab) {
  std::vector<std::uint64_t> mass(plan.num_slices(), 0);
  for (const auto& w : vocab.words()) mass[plan.slice_of(w.id)] += w.frequency;
  return mass;
}

/// Builds a slice plan whose slices hold equal word counts (±1) and balanced
/// token mass. Words are visited by descending frequency (ties broken by their
/// position in the vocabulary's seeded slice_order) and each goes to the
/// lightest slice that still has room; within a slice, words keep their
/// seeded shuffled order so hot and long-tail words interleave.
inline SlicePlan plan_slices(const Vocabulary& vocab, std::uint32_t num_slices) {
  const std::uint32_t V = vocab.size();
  if (num_slices == 0 || num_slices > V) {
    throw ConfigError("num_slices must be in [1, V]; got " + std::to_string(num_slices) +
                      " for V=" + std::to_string(V));
  }
  const auto& shuffled = vocab.slice_order();
  std::vector<std::uint32_t> shuffle_pos(V);
  for (std::uint32_t p = 0; p < V; ++p) shuffle_pos[shuffled[p]] = p;

  std::vector<WordId> by_freq(shuffled.begin(), shuffled.end());
  std::stable_sort(by_freq.begin(), by_freq.end(), [&](WordId a, WordId b) {
    return vocab.frequency(a) > vocab.frequency(b);
  });

  std::vector<std::uint32_t> capacity(num_slices, V / num_slices);
  for (std::uint32_t j = 0; j < V % num_slices; ++j) ++capacity[j];

  using Entry = std::pair<std::uint64_t, std::uint32_t>;  // (mass, slice)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> lightest;
  for (std::uint32_t j = 0; j < num_slices; ++j) lightest.emplace(0, j);

  std::vector<std::vector<WordId>> members(num_slices);
  for (WordId w : by_freq) {
    auto [mass, j] = lightest.top();
    lightest.pop();
    members[j].push_back(w);
    if (members[j].size() < capacity[j]) lightest.emplace(mass + vocab.frequency(w), j);
  }

  std::vector<WordId> order;
  order.reserve(V);
  for (auto& m : members) {
    std::sort(m.begin(), m.end(),
              [&](WordId a, WordId b) { return shuffle_pos[a] < shuffle_pos[b]; });
    order.insert(order.end(), m.begin(), m.end());
  }
  return SlicePlan::from_order(std::move(order), num_slices);
}

}  // namespace lightlda::corpus
