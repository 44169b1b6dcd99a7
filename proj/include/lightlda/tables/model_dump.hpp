#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "lightlda/common.hpp"
#include "lightlda/tables/word_topic_table.hpp"

namespace lightlda::tables {

// Model dump (little-endian):
//   magic "LLMD" | version u32 | K u32 | V u32 | row_count u32
//   row_count x (word_id u32 | nnz u32 | nnz x (topic u32, count u32))
//   K x summary i64
// Rows appear in ascending word id with topics ascending; words with an
// empty row are omitted. The same row encoding carries slices on the wire.

inline constexpr char kDumpMagic[4] = {'L', 'L', 'M', 'D'};
inline constexpr std::uint32_t kDumpVersion = 1;

struct SparseRow {
  WordId word = 0;
  std::vector<TopicCount> entries;

  friend bool operator==(const SparseRow&, const SparseRow&) = default;
};

inline void put_rows(std::vector<std::uint8_t>& out, std::span<const SparseRow> rows) {
  for (const auto& row : rows) {
    le::put(out, row.word);
    le::put(out, static_cast<std::uint32_t>(row.entries.size()));
    for (const auto& e : row.entries) {
      le::put(out, e.topic);
      le::put(out, static_cast<std::uint32_t>(e.count));
    }
  }
}

inline std::vector<SparseRow> get_rows(le::Reader& r, std::uint32_t row_count, std::uint32_t K,
                                       std::uint32_t V) {
  std::vector<SparseRow> rows(row_count);
  for (auto& row : rows) {
    row.word = r.get<WordId>();
    if (row.word >= V) throw DataError("row word id out of range");
    const auto nnz = r.get<std::uint32_t>();
    if (nnz > K || nnz * 8ull > r.remaining()) throw DataError("row length out of range");
    row.entries.resize(nnz);
    for (auto& e : row.entries) {
      e.topic = r.get<TopicId>();
      const auto c = r.get<std::uint32_t>();
      if (e.topic >= K) throw DataError("row topic out of range");
      if (c > static_cast<std::uint32_t>(std::numeric_limits<std::int32_t>::max())) {
        throw DataError("row count out of range");
      }
      e.count = static_cast<std::int32_t>(c);
    }
  }
  return rows;
}

inline std::vector<SparseRow> table_rows(const WordTopicTable& table) {
  std::vector<SparseRow> rows;
  for (WordId w = 0; w < table.vocab_size(); ++w) {
    if (table.nnz(w) == 0) continue;
    rows.push_back({w, table.row_entries(w)});
  }
  return rows;
}

struct ModelDump {
  std::uint32_t num_topics = 0;
  std::uint32_t vocab_size = 0;
  std::vector<SparseRow> rows;
  std::vector<std::int64_t> summary;

  friend bool operator==(const ModelDump&, const ModelDump&) = default;

  static ModelDump of(const WordTopicTable& table, const SummaryRow& summary) {
    return {table.num_topics(), table.vocab_size(), table_rows(table), summary.values()};
  }

  /// Fills an empty table with the dumped rows.
  void load_into(WordTopicTable& table, SummaryRow& out_summary) const {
    if (table.num_topics() != num_topics || table.vocab_size() != vocab_size) {
      throw DataError("model dump shape does not match the table");
    }
    for (const auto& row : rows) table.assign_row(row.word, row.entries);
    out_summary = SummaryRow(summary);
  }
};

inline std::vector<std::uint8_t> serialize_model(const ModelDump& m) {
  std::vector<std::uint8_t> out(kDumpMagic, kDumpMagic + 4);
  le::put(out, kDumpVersion);
  le::put(out, m.num_topics);
  le::put(out, m.vocab_size);
  le::put(out, static_cast<std::uint32_t>(m.rows.size()));
  put_rows(out, m.rows);
  for (auto v : m.summary) le::put(out, v);
  return out;
}

inline ModelDump deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kDumpMagic, 4) != 0) {
    throw DataError("bad model dump magic");
  }
  le::Reader r(bytes.subspan(4));
  if (r.get<std::uint32_t>() != kDumpVersion) throw DataError("unsupported model dump version");
  ModelDump m;
  m.num_topics = r.get<std::uint32_t>();
  m.vocab_size = r.get<std::uint32_t>();
  const auto row_count = r.get<std::uint32_t>();
  m.rows = get_rows(r, row_count, m.num_topics, m.vocab_size);
  m.summary.resize(m.num_topics);
  for (auto& v : m.summary) v = r.get<std::int64_t>();
  if (!r.done()) throw DataError("trailing bytes after model dump");
  return m;
}

}  // namespace lightlda::tables
