#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lightlda/common.hpp"

namespace lightlda::corpus {

struct VocabWord {
  WordId id = 0;
  std::string surface;
  std::uint64_t frequency = 0;
};

/// Dense word-id space [0, V) with corpus frequencies and the seeded
/// frequency-sorted-then-shuffled order used to lay out model slices.
class Vocabulary {
 public:
  Vocabulary() = default;

  Vocabulary(std::vector<VocabWord> words, std::vector<WordId> slice_order,
             std::uint64_t shuffle_seed)
      : words_(std::move(words)),
        slice_order_(std::move(slice_order)),
        shuffle_seed_(shuffle_seed) {
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (words_[i].id != i) throw DataError("vocabulary ids must be dense and ordered");
      if (!index_.emplace(words_[i].surface, words_[i].id).second) {
        throw DataError("duplicate surface form in vocabulary: " + words_[i].surface);
      }
    }
    check_order(slice_order_);
  }

  std::uint32_t size() const { return static_cast<std::uint32_t>(words_.size()); }
  bool empty() const { return words_.empty(); }

  const VocabWord& word(WordId w) const { return words_.at(w); }
  const std::vector<VocabWord>& words() const { return words_; }
  std::uint64_t frequency(WordId w) const { return words_[w].frequency; }

  std::vector<std::uint64_t> frequencies() const {
    std::vector<std::uint64_t> f(words_.size());
    for (const auto& w : words_) f[w.id] = w.frequency;
    return f;
  }

  std::uint64_t total_tokens() const {
    std::uint64_t total = 0;
    for (const auto& w : words_) total += w.frequency;
    return total;
  }

  std::optional<WordId> lookup(const std::string& surface) const {
    auto it = index_.find(surface);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<WordId>& slice_order() const { return slice_order_; }
  std::uint64_t shuffle_seed() const { return shuffle_seed_; }

  void set_slice_order(std::vector<WordId> order) {
    check_order(order);
    slice_order_ = std::move(order);
  }

 private:
  void check_order(const std::vector<WordId>& order) const {
    if (order.size() != words_.size()) {
      throw DataError("slice_order length differs from vocabulary size");
    }
    std::vector<bool> seen(order.size(), false);
    for (WordId w : order) {
      if (w >= order.size() || seen[w]) throw DataError("slice_order is not a permutation");
      seen[w] = true;
    }
  }

  std::vector<VocabWord> words_;
  std::vector<WordId> slice_order_;
  std::uint64_t shuffle_seed_ = 0;
  std::unordered_map<std::string, WordId> index_;
};

struct EmptyVocabularyError : DataError {
  EmptyVocabularyError()
      : DataError("vocabulary is empty after min_count filtering") {}
};

/// Ids sorted by descending frequency (ties by id), then permuted by a
/// seeded shuffle.
inline std::vector<WordId> shuffled_frequency_order(
    const std::vector<std::uint64_t>& freq, std::uint64_t seed) {
  std::vector<WordId> order(freq.size());
  std::iota(order.begin(), order.end(), WordId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](WordId a, WordId b) { return freq[a] > freq[b]; });
  Rng rng(seed, {0x511CE});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Keeps words whose count reaches min_count. Surviving words keep their
/// relative order; `remap` (optional) receives old id -> new id or kNoTopic.
inline Vocabulary vocabulary_from_counts(const std::vector<std::string>& surfaces,
                                         const std::vector<std::uint64_t>& counts,
                                         std::uint64_t min_count, std::uint64_t seed,
                                         std::vector<WordId>* remap = nullptr) {
  std::vector<VocabWord> words;
  if (remap) remap->assign(surfaces.size(), kNoTopic);
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    if (counts[i] == 0 || counts[i] < min_count) continue;
    const auto id = static_cast<WordId>(words.size());
    if (remap) (*remap)[i] = id;
    words.push_back({id, surfaces[i], counts[i]});
  }
  if (words.empty()) throw EmptyVocabularyError();
  std::vector<std::uint64_t> freq(words.size());
  for (const auto& w : words) freq[w.id] = w.frequency;
  auto order = shuffled_frequency_order(freq, seed);
  return Vocabulary(std::move(words), std::move(order), seed);
}

/// Counts surface forms over a finite stream of tokenized documents. Ids are
/// assigned in order of first appearance.
template <typename Docs>
Vocabulary build_vocabulary(const Docs& docs, std::uint64_t min_count,
                            std::uint64_t seed = 0) {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::string> surfaces;
  std::vector<std::uint64_t> counts;
  for (const auto& doc : docs) {
    for (const auto& token : doc) {
      auto [it, inserted] = index.emplace(std::string(token), surfaces.size());
      if (inserted) {
        surfaces.emplace_back(token);
        counts.push_back(0);
      }
      ++counts[it->second];
    }
  }
  return vocabulary_from_counts(surfaces, counts, min_count, seed);
}

// Vocabulary file: TSV rows (word_id, surface, frequency) plus a JSON sidecar
// at <path>.json holding the shuffle seed and slice_order.
inline void write_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocabulary " + path.string());
    for (const auto& w : vocab.words()) {
      out << w.id << '\t' << w.surface << '\t' << w.frequency << '\n';
    }
  }
  nlohmann::json side;
  side["shuffle_seed"] = vocab.shuffle_seed();
  side["slice_order"] = vocab.slice_order();
  std::ofstream js(path.string() + ".json");
  if (!js) throw DataError("cannot write vocabulary sidecar for " + path.string());
  js << side.dump() << '\n';
}

inline Vocabulary read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read vocabulary " + path.string());
  std::vector<VocabWord> words;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = line.rfind('\t');
    if (t1 == std::string::npos || t1 == t2) {
      throw DataError("malformed vocabulary line: " + line);
    }
    VocabWord w;
    w.id = static_cast<WordId>(std::stoul(line.substr(0, t1)));
    w.surface = line.substr(t1 + 1, t2 - t1 - 1);
    w.frequency = std::stoull(line.substr(t2 + 1));
    words.push_back(std::move(w));
  }
  std::ifstream js(path.string() + ".json");
  if (!js) throw DataError("missing vocabulary sidecar " + path.string() + ".json");
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed vocabulary sidecar: ") + e.what());
  }
  return Vocabulary(std::move(words), side.at("slice_order").get<std::vector<WordId>>(),
                    side.at("shuffle_seed").get<std::uint64_t>());
}

}  // namespace lightlda::corpus
