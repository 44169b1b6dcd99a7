#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <vector>

#include "json.hpp"

#include "lightlda/corpus/data_block.hpp"
#include "lightlda/corpus/reader.hpp"
#include "lightlda/corpus/slice_plan.hpp"
#include "lightlda/corpus/vocabulary.hpp"
#include "lightlda/engine/trainer.hpp"
#include "lightlda/tables/hyperparams.hpp"
#include "lightlda/tables/word_topic_table.hpp"

namespace lightlda::engine {

struct PrepOptions {
  std::uint32_t topics = 100;
  std::uint32_t num_blocks = 1;
  std::uint32_t num_slices = 1;
  std::uint64_t seed = 1;
};

struct PrepResult {
  corpus::Vocabulary vocab;
  corpus::SlicePlan plan;
  std::vector<corpus::DataBlock> blocks;
  std::uint64_t tokens = 0;
};

/// Plans slices, rewrites the vocabulary's slice order to match, and encodes
/// the documents into slice-sorted blocks with seeded uniform topics.
inline PrepResult prepare(corpus::Corpus corpus, const PrepOptions& opt) {
  if (opt.topics == 0) throw ConfigError("topics must be >= 1");
  PrepResult r;
  r.plan = corpus::plan_slices(corpus.vocab, opt.num_slices);
  corpus.vocab.set_slice_order(r.plan.order());
  r.vocab = std::move(corpus.vocab);
  const auto groups = corpus::split_into_blocks(corpus.docs, opt.num_blocks);
  for (std::uint32_t b = 0; b < groups.size(); ++b) {
    Rng rng(opt.seed, {0xB10C, b});
    r.blocks.push_back(corpus::encode_block(groups[b], r.plan, opt.topics, rng));
    r.tokens += r.blocks.back().num_tokens();
  }
  return r;
}

/// Writes vocab.tsv (+ sidecar), blocks/block_NNNNN.lldb and prep.json.
inline void write_prepared(const PrepResult& r, const PrepOptions& opt,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "blocks");
  corpus::write_vocabulary(r.vocab, dir / "vocab.tsv");
  for (std::uint32_t b = 0; b < r.blocks.size(); ++b) {
    corpus::write_block(r.blocks[b], block_path(dir / "blocks", b));
  }
  nlohmann::json meta;
  meta["topics"] = opt.topics;
  meta["blocks"] = opt.num_blocks;
  meta["slices"] = opt.num_slices;
  meta["seed"] = opt.seed;
  meta["vocab_size"] = r.vocab.size();
  meta["tokens"] = r.tokens;
  std::ofstream(dir / "prep.json") << meta.dump(2) << '\n';
}

inline std::shared_ptr<const tables::RowLayout> make_layout(
    const std::vector<std::uint64_t>& frequency, std::uint32_t K,
    std::optional<double> hot_fraction, std::optional<std::uint64_t> memory_budget,
    tables::WordClassification* info = nullptr) {
  auto cls = tables::classify_words(frequency, K, hot_fraction, memory_budget);
  auto layout = tables::RowLayout::make(K, cls.dense, frequency);
  if (info) *info = std::move(cls);
  return layout;
}

inline tables::Hyperparams make_hyperparams(const RunConfig& cfg, std::uint32_t V) {
  return tables::Hyperparams::symmetric(cfg.topics, V, cfg.resolved_alpha(), cfg.beta);
}

/// In-memory trainer over already encoded blocks.
inline std::unique_ptr<Trainer> make_memory_trainer(const RunConfig& cfg,
                                                    const corpus::Vocabulary& vocab,
                                                    std::vector<corpus::DataBlock> blocks) {
  auto plan = corpus::SlicePlan::from_order(vocab.slice_order(), cfg.num_slices);
  auto hp = make_hyperparams(cfg, vocab.size());
  auto layout = make_layout(vocab.frequencies(), cfg.topics, cfg.hot_fraction, cfg.memory_budget);
  auto store = std::make_unique<InMemoryBlockStore>(std::move(blocks), plan);
  return std::make_unique<Trainer>(cfg, std::move(hp), std::move(layout), std::move(plan),
                                   std::move(store));
}

/// Trainer over a prepared directory, optionally resuming from a checkpoint.
inline std::unique_ptr<Trainer> make_trainer(const RunConfig& cfg) {
  if (cfg.prep_dir.empty()) throw ConfigError("a prepared data directory is required");
  const auto vocab = corpus::read_vocabulary(cfg.prep_dir / "vocab.tsv");
  std::ifstream pin(cfg.prep_dir / "prep.json");
  if (!pin) throw DataError("missing prep.json in " + cfg.prep_dir.string());
  const auto prep = nlohmann::json::parse(pin);
  if (prep.at("topics").get<std::uint32_t>() != cfg.topics) {
    throw ConfigError("blocks were prepared for K=" + prep.at("topics").dump() +
                      " but training asks for K=" + std::to_string(cfg.topics));
  }
  auto plan = corpus::SlicePlan::from_order(vocab.slice_order(), cfg.num_slices);
  auto hp = make_hyperparams(cfg, vocab.size());
  auto layout = make_layout(vocab.frequencies(), cfg.topics, cfg.hot_fraction, cfg.memory_budget);

  std::uint32_t start = 0;
  std::filesystem::path source = cfg.prep_dir / "blocks";
  if (!cfg.warm_start.empty()) {
    const auto ckpt = resolve_checkpoint(cfg.warm_start);
    const auto meta = read_meta(ckpt);
    start = meta.at("iteration").get<std::uint32_t>();
    if (meta.at("topics").get<std::uint32_t>() != cfg.topics) {
      throw ConfigError("checkpoint topic count differs from --topics");
    }
    source = ckpt / "blocks";
  }
  std::unique_ptr<BlockStore> store;
  if (cfg.out_of_core) {
    const auto work = cfg.run_dir / "work" / "blocks";
    std::filesystem::create_directories(work);
    if (std::filesystem::weakly_canonical(source) != std::filesystem::weakly_canonical(work)) {
      const std::uint32_t n = count_block_files(source);
      for (std::uint32_t b = 0; b < n; ++b) {
        std::filesystem::copy_file(block_path(source, b), block_path(work, b),
                                   std::filesystem::copy_options::overwrite_existing);
      }
    }
    store = std::make_unique<DirectoryBlockStore>(work, plan);
  } else {
    store = InMemoryBlockStore::from_directory(source, plan);
  }
  auto trainer = std::make_unique<Trainer>(cfg, std::move(hp), std::move(layout), std::move(plan),
                                           std::move(store), start);
  return trainer;
}

}  // namespace lightlda::engine
