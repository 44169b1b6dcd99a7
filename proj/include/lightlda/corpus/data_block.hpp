#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include <zlib.h>

#include "lightlda/common.hpp"
#include "lightlda/corpus/slice_plan.hpp"

namespace lightlda::corpus {

struct DocSpan {
  DocId doc_id = 0;
  std::uint32_t n_d = 0;
  std::uint64_t offset = 0;

  friend bool operator==(const DocSpan&, const DocSpan&) = default;
};

/// A shard of documents as one flat array of (word, topic) pairs. Within each
/// document the pairs are ordered by slice rank of the word, so the tokens of
/// one model slice are contiguous. `slice_offsets` is derived from the plan:
/// for document d, slice j covers pairs [at(d, j), at(d, j + 1)).
class DataBlock {
 public:
  std::vector<DocSpan> docs;
  std::vector<TokenTopicPair> pairs;

  std::size_t num_docs() const { return docs.size(); }
  std::uint64_t num_tokens() const { return pairs.size(); }

  std::span<TokenTopicPair> doc_pairs(std::size_t d) {
    return std::span<TokenTopicPair>(pairs).subspan(docs[d].offset, docs[d].n_d);
  }
  std::span<const TokenTopicPair> doc_pairs(std::size_t d) const {
    return std::span<const TokenTopicPair>(pairs).subspan(docs[d].offset, docs[d].n_d);
  }

  /// Rebuilds the per-document slice index. Requires pairs sorted by rank.
  void index_slices(const SlicePlan& plan) {
    num_slices_ = plan.num_slices();
    slice_offsets_.assign(docs.size() * (num_slices_ + 1), 0);
    for (std::size_t d = 0; d < docs.size(); ++d) {
      auto* row = &slice_offsets_[d * (num_slices_ + 1)];
      std::uint64_t pos = docs[d].offset;
      const std::uint64_t end = docs[d].offset + docs[d].n_d;
      for (std::uint32_t j = 0; j < num_slices_; ++j) {
        row[j] = pos;
        while (pos < end && plan.slice_of(pairs[pos].word) == j) ++pos;
      }
      row[num_slices_] = pos;
      if (pos != end) {
        throw DataError("block tokens are not grouped by nondecreasing slice index");
      }
    }
  }

  std::uint32_t num_slices() const { return num_slices_; }

  /// Pair-array range [first, last) of document d's tokens in slice j.
  std::pair<std::uint64_t, std::uint64_t> slice_range(std::size_t d, std::uint32_t j) const {
    const auto* row = &slice_offsets_[d * (num_slices_ + 1)];
    return {row[j], row[j + 1]};
  }

  /// Token count of slice j across the block.
  std::uint64_t slice_tokens(std::uint32_t j) const {
    std::uint64_t total = 0;
    for (std::size_t d = 0; d < docs.size(); ++d) {
      auto [a, b] = slice_range(d, j);
      total += b - a;
    }
    return total;
  }

  /// Structural equality (slice index excluded).
  friend bool operator==(const DataBlock& a, const DataBlock& b) {
    return a.docs == b.docs && a.pairs == b.pairs;
  }

 private:
  std::uint32_t num_slices_ = 0;
  std::vector<std::uint64_t> slice_offsets_;
};

struct RawDocument {
  DocId doc_id = 0;
  std::vector<WordId> words;
};

/// Lays out documents slice-sorted. Topics are drawn uniformly from [0, K)
/// with `rng` unless `warm_topics` supplies one topic per token in input order.
inline DataBlock encode_block(std::span<const RawDocument> input, const SlicePlan& plan,
                              std::uint32_t num_topics, Rng& rng,
                              const std::vector<std::vector<TopicId>>* warm_topics = nullptr) {
  DataBlock block;
  block.docs.reserve(input.size());
  std::uint64_t total = 0;
  for (const auto& d : input) total += d.words.size();
  block.pairs.reserve(total);
  const std::uint32_t V = plan.vocab_size();
  for (std::size_t i = 0; i < input.size(); ++i) {
    const auto& doc = input[i];
    DocSpan span{doc.doc_id, static_cast<std::uint32_t>(doc.words.size()), block.pairs.size()};
    const std::size_t first = block.pairs.size();
    for (std::size_t t = 0; t < doc.words.size(); ++t) {
      const WordId w = doc.words[t];
      if (w >= V) {
        throw DataError("word id " + std::to_string(w) + " out of range (V=" +
                        std::to_string(V) + ")");
      }
      TopicId z;
      if (warm_topics) {
        z = (*warm_topics)[i].at(t);
        if (z >= num_topics) throw DataError("warm-start topic out of range");
      } else {
        z = static_cast<TopicId>(rng.below(num_topics));
      }
      block.pairs.push_back({w, z});
    }
    std::stable_sort(block.pairs.begin() + first, block.pairs.end(),
                     [&](const TokenTopicPair& a, const TokenTopicPair& b) {
                       return plan.rank(a.word) < plan.rank(b.word);
                     });
    block.docs.push_back(span);
  }
  block.index_slices(plan);
  return block;
}

/// Inverse of encode_block up to within-document token order.
inline std::vector<RawDocument> decode_block(const DataBlock& block) {
  std::vector<RawDocument> out;
  out.reserve(block.num_docs());
  for (std::size_t d = 0; d < block.num_docs(); ++d) {
    RawDocument doc{block.docs[d].doc_id, {}};
    for (const auto& p : block.doc_pairs(d)) doc.words.push_back(p.word);
    out.push_back(std::move(doc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Block file format (little-endian):
//   header  magic "LLDB" | version u32 | doc_count u64 | token_count u64 | crc32 u32
//   payload doc table (doc_id u64, n_d u32, offset u64) x doc_count
//           pairs (word u32, topic u32) x token_count
// The CRC covers the payload.

inline constexpr char kBlockMagic[4] = {'L', 'L', 'D', 'B'};
inline constexpr std::uint32_t kBlockVersion = 1;
inline constexpr std::size_t kBlockHeaderBytes = 28;
inline constexpr std::size_t kDocEntryBytes = 20;

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, bytes.data() + pos, chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::vector<std::uint8_t> serialize_block(const DataBlock& block) {
  std::vector<std::uint8_t> payload;
  payload.reserve(block.num_docs() * kDocEntryBytes + block.pairs.size() * 8);
  for (const auto& d : block.docs) {
    le::put(payload, d.doc_id);
    le::put(payload, d.n_d);
    le::put(payload, d.offset);
  }
  const std::size_t pair_start = payload.size();
  payload.resize(pair_start + block.pairs.size() * 8);
  static_assert(sizeof(TokenTopicPair) == 8);
  if (!block.pairs.empty()) {
    std::memcpy(payload.data() + pair_start, block.pairs.data(), block.pairs.size() * 8);
  }

  std::vector<std::uint8_t> out;
  out.reserve(kBlockHeaderBytes + payload.size());
  out.insert(out.end(), kBlockMagic, kBlockMagic + 4);
  le::put(out, kBlockVersion);
  le::put(out, static_cast<std::uint64_t>(block.num_docs()));
  le::put(out, static_cast<std::uint64_t>(block.pairs.size()));
  le::put(out, crc32_of(payload));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline DataBlock deserialize_block(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kBlockHeaderBytes) throw DataError("block file truncated (header)");
  if (std::memcmp(bytes.data(), kBlockMagic, 4) != 0) throw DataError("bad block magic");
  le::Reader r(bytes.subspan(4));
  const auto version = r.get<std::uint32_t>();
  if (version != kBlockVersion) {
    throw DataError("unsupported block version " + std::to_string(version));
  }
  const auto doc_count = r.get<std::uint64_t>();
  const auto token_count = r.get<std::uint64_t>();
  const auto crc = r.get<std::uint32_t>();
  const auto payload = bytes.subspan(kBlockHeaderBytes);
  if (doc_count > payload.size() / kDocEntryBytes ||
      token_count > payload.size() / 8 ||
      payload.size() != doc_count * kDocEntryBytes + token_count * 8) {
    throw DataError("block file truncated or oversized: payload " +
                    std::to_string(payload.size()) + " bytes");
  }
  if (crc32_of(payload) != crc) throw DataError("block checksum mismatch");

  DataBlock block;
  block.docs.resize(doc_count);
  le::Reader pr(payload);
  std::uint64_t expected_offset = 0;
  for (auto& d : block.docs) {
    d.doc_id = pr.get<std::uint64_t>();
    d.n_d = pr.get<std::uint32_t>();
    d.offset = pr.get<std::uint64_t>();
    if (d.offset != expected_offset) throw DataError("block doc table offsets are not contiguous");
    expected_offset += d.n_d;
  }
  if (expected_offset != token_count) throw DataError("block doc lengths do not sum to token count");
  block.pairs.resize(token_count);
  if (token_count) {
    std::memcpy(block.pairs.data(), payload.data() + doc_count * kDocEntryBytes, token_count * 8);
  }
  return block;
}

/// Atomic write: the bytes go to <path>.tmp, which is then renamed over path.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw DataError("read failed for " + path.string());
  return bytes;
}

inline void write_block(const DataBlock& block, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_block(block));
}

/// Reads and verifies a block; if `plan` is given the slice index is rebuilt.
inline DataBlock read_block(const std::filesystem::path& path, const SlicePlan* plan = nullptr) {
  auto bytes = read_file(path);
  DataBlock block;
  try {
    block = deserialize_block(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (plan) block.index_slices(*plan);
  return block;
}

}  // namespace lightlda::corpus
