#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lightlda/common.hpp"
#include "lightlda/corpus/data_block.hpp"
#include "lightlda/corpus/vocabulary.hpp"

namespace lightlda::corpus {

/// A corpus mapped onto a vocabulary, ready for block encoding.
struct Corpus {
  Vocabulary vocab;
  std::vector<RawDocument> docs;

  std::uint64_t num_tokens() const {
    std::uint64_t n = 0;
    for (const auto& d : docs) n += d.words.size();
    return n;
  }
};

/// UTF-8 text, one document per line, whitespace-tokenized. Documents keep
/// their line number as doc id, including lines that end up empty.
inline Corpus read_text_corpus(const std::filesystem::path& path, std::uint64_t min_count,
                               std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path.string());
  std::vector<std::vector<std::string>> tokenized;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> doc;
    for (std::string tok; ls >> tok;) doc.push_back(std::move(tok));
    tokenized.push_back(std::move(doc));
  }
  Corpus c;
  c.vocab = build_vocabulary(tokenized, min_count, seed);
  c.docs.reserve(tokenized.size());
  for (std::size_t d = 0; d < tokenized.size(); ++d) {
    RawDocument doc{d, {}};
    for (const auto& tok : tokenized[d]) {
      if (auto id = c.vocab.lookup(tok)) doc.words.push_back(*id);
    }
    c.docs.push_back(std::move(doc));
  }
  return c;
}

/// Bag-of-words "docword" format: three header lines (D, W, NNZ) followed by
/// 1-based "doc_id word_id count" triples. `vocab_path`, if present, names
/// the words one per line; otherwise words are called "w<id>".
inline Corpus read_docword_corpus(const std::filesystem::path& path,
                                  const std::filesystem::path& vocab_path,
                                  std::uint64_t min_count, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open docword file " + path.string());
  std::uint64_t D = 0, W = 0, nnz = 0;
  if (!(in >> D >> W >> nnz)) throw DataError("docword header must hold D, W, NNZ");

  std::vector<std::string> surfaces(W);
  if (!vocab_path.empty()) {
    std::ifstream vin(vocab_path);
    if (!vin) throw DataError("cannot open docword vocabulary " + vocab_path.string());
    for (std::uint64_t i = 0; i < W; ++i) {
      if (!std::getline(vin, surfaces[i])) {
        throw DataError("docword vocabulary shorter than W=" + std::to_string(W));
      }
    }
  } else {
    for (std::uint64_t i = 0; i < W; ++i) surfaces[i] = "w" + std::to_string(i + 1);
  }

  struct Triple { std::uint32_t doc, word, count; };
  std::vector<Triple> triples;
  triples.reserve(nnz);
  std::vector<std::uint64_t> counts(W, 0);
  std::uint64_t d, w, c;
  while (in >> d >> w >> c) {
    if (d == 0 || d > D || w == 0 || w > W) {
      throw DataError("docword triple out of range: " + std::to_string(d) + " " +
                      std::to_string(w));
    }
    triples.push_back({static_cast<std::uint32_t>(d - 1), static_cast<std::uint32_t>(w - 1),
                       static_cast<std::uint32_t>(c)});
    counts[w - 1] += c;
  }
  if (triples.size() != nnz) {
    throw DataError("docword NNZ mismatch: header " + std::to_string(nnz) + ", read " +
                    std::to_string(triples.size()));
  }

  std::vector<WordId> remap;
  Corpus corpus;
  corpus.vocab = vocabulary_from_counts(surfaces, counts, min_count, seed, &remap);
  corpus.docs.resize(D);
  for (std::uint64_t i = 0; i < D; ++i) corpus.docs[i].doc_id = i;
  for (const auto& t : triples) {
    const WordId id = remap[t.word];
    if (id == kNoTopic) continue;
    auto& words = corpus.docs[t.doc].words;
    words.insert(words.end(), t.count, id);
  }
  return corpus;
}

/// Splits documents into `num_blocks` contiguous groups of roughly equal
/// token count.
inline std::vector<std::span<const RawDocument>> split_into_blocks(
    const std::vector<RawDocument>& docs, std::uint32_t num_blocks) {
  if (num_blocks == 0) throw ConfigError("num_blocks must be >= 1");
  std::uint64_t total = 0;
  for (const auto& d : docs) total += d.words.size();
  std::vector<std::span<const RawDocument>> out;
  std::size_t start = 0;
  std::uint64_t seen = 0;
  for (std::uint32_t b = 0; b < num_blocks; ++b) {
    const std::uint64_t target = total * (b + 1) / num_blocks;
    std::size_t end = start;
    if (b + 1 == num_blocks) {
      end = docs.size();
    } else {
      while (end < docs.size() && seen + docs[end].words.size() <= target) {
        seen += docs[end].words.size();
        ++end;
      }
    }
    out.emplace_back(docs.data() + start, end - start);
    start = end;
  }
  return out;
}

}  // namespace lightlda::corpus
