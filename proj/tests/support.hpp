#pragma once

#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "lightlda/corpus/data_block.hpp"
#include "lightlda/corpus/slice_plan.hpp"
#include "lightlda/corpus/vocabulary.hpp"
#include "lightlda/engine/pipeline.hpp"
#include "lightlda/eval/exact_posterior.hpp"

namespace lightlda::test_support {

/// Vocabulary over ids [0, V) named "w<id>" with the given frequencies and an
/// identity slice order.
inline corpus::Vocabulary plain_vocabulary(const std::vector<std::uint64_t>& freq) {
  std::vector<corpus::VocabWord> words;
  for (std::uint32_t w = 0; w < freq.size(); ++w) words.push_back({w, "w" + std::to_string(w), freq[w]});
  std::vector<WordId> order(freq.size());
  std::iota(order.begin(), order.end(), 0);
  return corpus::Vocabulary(std::move(words), std::move(order), 0);
}

inline std::vector<std::uint64_t> word_frequencies(const std::vector<corpus::RawDocument>& docs,
                                                   std::uint32_t V) {
  std::vector<std::uint64_t> f(V, 0);
  for (const auto& d : docs) {
    for (WordId w : d.words) ++f[w];
  }
  return f;
}

inline std::vector<corpus::RawDocument> raw_docs(const std::vector<std::vector<WordId>>& docs) {
  std::vector<corpus::RawDocument> out;
  for (std::size_t d = 0; d < docs.size(); ++d) out.push_back({d, docs[d]});
  return out;
}

/// In-memory engine over the given documents: one block per entry of
/// `block_sizes` (documents taken in order), identity slice order.
struct EngineFixture {
  corpus::Vocabulary vocab;
  std::unique_ptr<engine::Trainer> trainer;

  engine::InMemoryBlockStore& store() {
    return dynamic_cast<engine::InMemoryBlockStore&>(trainer->store());
  }
};

inline EngineFixture make_engine(const std::vector<corpus::RawDocument>& docs, std::uint32_t V,
                                 engine::RunConfig cfg, std::uint32_t num_blocks = 1) {
  EngineFixture f;
  f.vocab = plain_vocabulary(word_frequencies(docs, V));
  const auto plan = corpus::SlicePlan::from_order(f.vocab.slice_order(), cfg.num_slices);
  std::vector<corpus::DataBlock> blocks;
  const auto groups = corpus::split_into_blocks(docs, num_blocks);
  for (std::uint32_t b = 0; b < groups.size(); ++b) {
    Rng rng(cfg.seed, {0xB10C, b});
    blocks.push_back(corpus::encode_block(groups[b], plan, cfg.topics, rng));
  }
  cfg.num_blocks = num_blocks;
  f.trainer = engine::make_memory_trainer(cfg, f.vocab, std::move(blocks));
  f.trainer->initialize();
  return f;
}

/// Token order used for z-state indices: block-major, then pairs order.
inline std::vector<std::vector<WordId>> state_docs(engine::InMemoryBlockStore& store) {
  std::vector<std::vector<WordId>> docs;
  for (std::uint32_t b = 0; b < store.size(); ++b) {
    for (auto& d : corpus::decode_block(store.block(b))) docs.push_back(std::move(d.words));
  }
  return docs;
}

inline std::size_t state_index(engine::InMemoryBlockStore& store, std::uint32_t K) {
  std::size_t idx = 0, mul = 1;
  for (std::uint32_t b = 0; b < store.size(); ++b) {
    for (const auto& p : store.block(b).pairs) {
      idx += p.topic * mul;
      mul *= K;
    }
  }
  return idx;
}

/// Empirical z-state distribution from `kept` engine iterations after `burn`.
inline std::vector<double> chain_distribution(EngineFixture& f, std::uint32_t K,
                                              std::size_t states, std::uint64_t burn,
                                              std::uint64_t kept) {
  std::vector<double> hist(states, 0.0);
  for (std::uint64_t i = 0; i < burn; ++i) f.trainer->step(false);
  for (std::uint64_t i = 0; i < kept; ++i) {
    f.trainer->step(false);
    hist[state_index(f.store(), K)] += 1.0;
  }
  for (double& h : hist) h /= static_cast<double>(kept);
  return hist;
}

inline engine::RunConfig tiny_config(samplers::SamplerKind kind, std::uint32_t K, double alpha,
                                     double beta, std::uint64_t seed) {
  engine::RunConfig cfg;
  cfg.topics = K;
  cfg.alpha = alpha;
  cfg.beta = beta;
  cfg.sampler.kind = kind;
  cfg.sampler.seed = seed;
  cfg.seed = seed;
  cfg.iterations = 1u << 31;
  cfg.prefetch_depth = 0;
  cfg.eval_every = 0;
  cfg.staleness = 0;
  cfg.hot_fraction = 0.5;
  return cfg;
}

inline const std::vector<samplers::SamplerKind>& all_kinds() {
  static const std::vector<samplers::SamplerKind> kinds{
      samplers::SamplerKind::kGibbs, samplers::SamplerKind::kSparse,
      samplers::SamplerKind::kAlias, samplers::SamplerKind::kLight,
      samplers::SamplerKind::kLightWordOnly, samplers::SamplerKind::kLightDocOnly};
  return kinds;
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t m = i; m <= j; ++m) r[idx[m]] = (i + j) / 2.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace lightlda::test_support
