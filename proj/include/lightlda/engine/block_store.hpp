#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <mutex>
#include <vector>

#include "lightlda/corpus/data_block.hpp"
#include "lightlda/corpus/slice_plan.hpp"
#include "lightlda/tables/doc_topic.hpp"

namespace lightlda::engine {

/// A block in memory together with its doc-topic tables.
struct LoadedBlock {
  corpus::DataBlock block;
  std::vector<tables::DocTopicSparse> docs;
};

inline std::vector<tables::DocTopicSparse> build_doc_tables(const corpus::DataBlock& block) {
  std::vector<tables::DocTopicSparse> docs;
  docs.reserve(block.num_docs());
  for (std::size_t d = 0; d < block.num_docs(); ++d) {
    docs.push_back(tables::DocTopicSparse::from_pairs(block.doc_pairs(d)));
  }
  return docs;
}

class BlockStore {
 public:
  virtual ~BlockStore() = default;
  virtual std::uint32_t size() const = 0;
  virtual std::shared_ptr<LoadedBlock> load(std::uint32_t b) = 0;
  /// Called once the block's tokens have all been sampled for this pass.
  virtual void store(std::uint32_t b, const std::shared_ptr<LoadedBlock>& lb) = 0;
  /// True when load() is free (blocks stay resident).
  virtual bool resident() const = 0;
  /// Writes every block to `dir` as block_NNNNN.lldb.
  virtual void save_all(const std::filesystem::path& dir) = 0;
};

inline std::filesystem::path block_path(const std::filesystem::path& dir, std::uint32_t b) {
  char name[32];
  std::snprintf(name, sizeof(name), "block_%05u.lldb", b);
  return dir / name;
}

inline std::uint32_t count_block_files(const std::filesystem::path& dir) {
  std::uint32_t n = 0;
  while (std::filesystem::exists(block_path(dir, n))) ++n;
  if (n == 0) throw DataError("no block files in " + dir.string());
  return n;
}

class InMemoryBlockStore : public BlockStore {
 public:
  InMemoryBlockStore(std::vector<corpus::DataBlock> blocks, const corpus::SlicePlan& plan) {
    for (auto& b : blocks) {
      auto lb = std::make_shared<LoadedBlock>();
      lb->block = std::move(b);
      lb->block.index_slices(plan);
      lb->docs = build_doc_tables(lb->block);
      blocks_.push_back(std::move(lb));
    }
  }

  static std::unique_ptr<InMemoryBlockStore> from_directory(const std::filesystem::path& dir,
                                                            const corpus::SlicePlan& plan) {
    std::vector<corpus::DataBlock> blocks;
    const std::uint32_t n = count_block_files(dir);
    for (std::uint32_t b = 0; b < n; ++b) blocks.push_back(corpus::read_block(block_path(dir, b)));
    return std::make_unique<InMemoryBlockStore>(std::move(blocks), plan);
  }

  std::uint32_t size() const override { return static_cast<std::uint32_t>(blocks_.size()); }
  std::shared_ptr<LoadedBlock> load(std::uint32_t b) override { return blocks_.at(b); }
  void store(std::uint32_t, const std::shared_ptr<LoadedBlock>&) override {}
  bool resident() const override { return true; }

  void save_all(const std::filesystem::path& dir) override {
    std::filesystem::create_directories(dir);
    for (std::uint32_t b = 0; b < size(); ++b) corpus::write_block(blocks_[b]->block, block_path(dir, b));
  }

  const corpus::DataBlock& block(std::uint32_t b) const { return blocks_.at(b)->block; }
  const LoadedBlock& loaded(std::uint32_t b) const { return *blocks_.at(b); }

 private:
  std::vector<std::shared_ptr<LoadedBlock>> blocks_;
};

/// Streams blocks from a directory: each load reads and verifies the file,
/// each store rewrites it atomically with the new topics.
class DirectoryBlockStore : public BlockStore {
 public:
  DirectoryBlockStore(std::filesystem::path dir, const corpus::SlicePlan& plan)
      : dir_(std::move(dir)), plan_(plan), count_(count_block_files(dir_)) {}

  std::uint32_t size() const override { return count_; }

  std::shared_ptr<LoadedBlock> load(std::uint32_t b) override {
    auto lb = std::make_shared<LoadedBlock>();
    lb->block = corpus::read_block(block_path(dir_, b), &plan_);
    lb->docs = build_doc_tables(lb->block);
    return lb;
  }

  void store(std::uint32_t b, const std::shared_ptr<LoadedBlock>& lb) override {
    corpus::write_block(lb->block, block_path(dir_, b));
  }

  bool resident() const override { return false; }

  void save_all(const std::filesystem::path& dir) override {
    std::filesystem::create_directories(dir);
    if (std::filesystem::equivalent(dir, dir_)) return;
    for (std::uint32_t b = 0; b < count_; ++b) {
      std::filesystem::copy_file(block_path(dir_, b), block_path(dir, b),
                                 std::filesystem::copy_options::overwrite_existing);
    }
  }

  const std::filesystem::path& directory() const { return dir_; }

 private:
  std::filesystem::path dir_;
  corpus::SlicePlan plan_;
  std::uint32_t count_;
};

}  // namespace lightlda::engine
