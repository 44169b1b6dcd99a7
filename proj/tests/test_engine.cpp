#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "lightlda/corpus/synthetic.hpp"
#include "support.hpp"

using namespace lightlda;
using namespace lightlda::engine;
using namespace lightlda::test_support;
using samplers::SamplerKind;
namespace fs = std::filesystem;

namespace {

std::vector<corpus::RawDocument> lda_docs(std::uint32_t D, std::uint32_t V, std::uint64_t seed) {
  corpus::SyntheticSpec spec;
  spec.docs = D;
  spec.vocab = V;
  spec.mean_doc_len = 30;
  spec.true_topics = 5;
  spec.seed = seed;
  auto docs = corpus::synthetic_documents(spec);
  // keep ids dense: every word occurs at least once
  for (WordId w = 0; w < V; ++w) docs[w % D].words.push_back(w);
  return docs;
}

RunConfig small_config(SamplerKind kind, std::uint32_t K = 8) {
  RunConfig cfg;
  cfg.topics = K;
  cfg.iterations = 100;
  cfg.sampler.kind = kind;
  cfg.prefetch_depth = 0;
  cfg.staleness = 0;
  cfg.eval_every = 0;
  cfg.seed = 5;
  return cfg;
}

std::uint64_t total_tokens(InMemoryBlockStore& store) {
  std::uint64_t n = 0;
  for (std::uint32_t b = 0; b < store.size(); ++b) n += store.block(b).num_tokens();
  return n;
}

/// Recounts every table from the store's (w, z) pairs and compares.
void expect_counts_consistent(EngineFixture& f) {
  const auto& hp = f.trainer->hyperparams();
  const std::uint32_t K = hp.num_topics, V = hp.vocab_size;
  std::vector<std::int64_t> nwk(static_cast<std::size_t>(V) * K, 0), nk(K, 0);
  for (std::uint32_t b = 0; b < f.store().size(); ++b) {
    const auto& lb = f.store().loaded(b);
    for (std::size_t d = 0; d < lb.block.num_docs(); ++d) {
      const auto pairs = lb.block.doc_pairs(d);
      std::vector<std::int32_t> ndk(K, 0);
      for (const auto& p : pairs) {
        ++nwk[static_cast<std::size_t>(p.word) * K + p.topic];
        ++nk[p.topic];
        ++ndk[p.topic];
      }
      ASSERT_EQ(lb.docs[d].n_d(), pairs.size());
      for (TopicId k = 0; k < K; ++k) ASSERT_EQ(lb.docs[d].get(k), ndk[k]);
    }
  }
  for (WordId w = 0; w < V; ++w) {
    for (TopicId k = 0; k < K; ++k) {
      ASSERT_EQ(f.trainer->table().get(w, k), nwk[static_cast<std::size_t>(w) * K + k]);
    }
  }
  std::int64_t total = 0;
  for (TopicId k = 0; k < K; ++k) {
    EXPECT_EQ(f.trainer->summary()[k], nk[k]);
    total += nk[k];
  }
  EXPECT_EQ(static_cast<std::uint64_t>(total), total_tokens(f.store()));
}

/// Plain serial collapsed Gibbs over the same token order and random stream.
struct ReferenceGibbs {
  std::uint32_t K, V, S;
  double alpha, beta;
  std::uint64_t seed;
  std::vector<std::int64_t> nwk, nk;
  std::vector<std::vector<std::int64_t>> ndk;

  void init(const std::vector<corpus::DataBlock>& blocks) {
    nwk.assign(static_cast<std::size_t>(V) * K, 0);
    nk.assign(K, 0);
    ndk.clear();
    for (const auto& b : blocks) {
      for (std::size_t d = 0; d < b.num_docs(); ++d) {
        ndk.emplace_back(K, 0);
        for (const auto& p : b.doc_pairs(d)) {
          ++nwk[static_cast<std::size_t>(p.word) * K + p.topic];
          ++nk[p.topic];
          ++ndk.back()[p.topic];
        }
      }
    }
  }

  void sweep(std::vector<corpus::DataBlock>& blocks, std::uint32_t it) {
    const double beta_bar = beta * V;
    std::vector<double> cum(K);
    std::size_t doc_base = 0;
    for (std::uint32_t b = 0; b < blocks.size(); ++b) {
      auto& block = blocks[b];
      for (std::uint32_t j = 0; j < S; ++j) {
        Rng rng(seed, {it, b, j, 0});
        for (std::size_t d = 0; d < block.num_docs(); ++d) {
          auto& nd = ndk[doc_base + d];
          const auto [a, e] = block.slice_range(d, j);
          for (auto i = a; i < e; ++i) {
            auto& p = block.pairs[i];
            const std::size_t row = static_cast<std::size_t>(p.word) * K;
            --nwk[row + p.topic];
            --nk[p.topic];
            --nd[p.topic];
            double acc = 0;
            for (TopicId k = 0; k < K; ++k) {
              acc += (nd[k] + alpha) * (nwk[row + k] + beta) / (nk[k] + beta_bar);
              cum[k] = acc;
            }
            const double u = rng.uniform() * acc;
            auto t = static_cast<TopicId>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
            t = std::min(t, K - 1);
            p.topic = t;
            ++nwk[row + t];
            ++nk[t];
            ++nd[t];
          }
        }
      }
      doc_base += block.num_docs();
    }
  }
};

}  // namespace

TEST(Partition, TokenBalanceWithinTenPercent) {
  const auto docs = lda_docs(400, 200, 1);
  auto f = make_engine(docs, 200, small_config(SamplerKind::kGibbs), 1);
  const auto& block = f.store().block(0);
  for (std::uint32_t parts : {1u, 2u, 4u, 8u}) {
    const auto ranges = partition_block(block, parts);
    ASSERT_EQ(ranges.size(), parts);
    EXPECT_EQ(ranges.front().first, 0u);
    EXPECT_EQ(ranges.back().last, block.num_docs());
    const double mean = static_cast<double>(block.num_tokens()) / parts;
    for (std::size_t p = 0; p < parts; ++p) {
      if (p > 0) EXPECT_EQ(ranges[p].first, ranges[p - 1].last);
      EXPECT_LE(std::abs(static_cast<double>(range_tokens(block, ranges[p])) - mean), 0.1 * mean);
    }
  }
}

TEST(Engine, IterationVisitsEveryTokenOnce) {
  const auto docs = lda_docs(120, 80, 2);
  for (auto kind : all_kinds()) {
    auto cfg = small_config(kind);
    cfg.num_slices = 3;
    auto f = make_engine(docs, 80, cfg, 3);
    const auto L = total_tokens(f.store());
    for (int i = 0; i < 2; ++i) EXPECT_EQ(f.trainer->step(false).tokens, L) << to_string(kind);
  }
}

TEST(Engine, GibbsMatchesSerialReferenceSweep) {
  const auto docs = lda_docs(60, 50, 3);
  for (std::uint32_t S : {1u, 2u}) {
    auto cfg = small_config(SamplerKind::kGibbs, 6);
    cfg.num_slices = S;
    cfg.alpha = 0.3;
    cfg.beta = 0.05;
    auto f = make_engine(docs, 50, cfg, 2);
    std::vector<corpus::DataBlock> ref_blocks{f.store().block(0), f.store().block(1)};
    ReferenceGibbs ref{6, 50, S, 0.3, 0.05, cfg.seed, {}, {}, {}};
    ref.init(ref_blocks);
    for (std::uint32_t it = 0; it < 5; ++it) {
      f.trainer->step(false);
      ref.sweep(ref_blocks, it);
      for (std::uint32_t b = 0; b < 2; ++b) {
        ASSERT_EQ(f.store().block(b).pairs, ref_blocks[b].pairs) << "S=" << S << " it=" << it;
      }
    }
  }
}

TEST(Engine, CountsStayConsistent) {
  const auto docs = lda_docs(150, 120, 4);
  for (auto kind : all_kinds()) {
    for (std::uint32_t threads : {1u, 3u}) {
      auto cfg = small_config(kind);
      cfg.num_slices = 2;
      cfg.threads = threads;
      cfg.workers = 2;
      cfg.staleness = 1;
      cfg.prefetch_depth = 1;
      auto f = make_engine(docs, 120, cfg, 4);
      expect_counts_consistent(f);
      for (int i = 0; i < 3; ++i) f.trainer->step(false);
      expect_counts_consistent(f);
    }
  }
}

TEST(Engine, SameSeedSameState) {
  const auto docs = lda_docs(100, 90, 5);
  for (auto kind : all_kinds()) {
    auto cfg = small_config(kind);
    cfg.num_slices = 3;
    cfg.threads = 2;
    cfg.prefetch_depth = 2;
    cfg.staleness = 1;
    auto a = make_engine(docs, 90, cfg, 2);
    auto b = make_engine(docs, 90, cfg, 2);
    for (int i = 0; i < 3; ++i) {
      a.trainer->step(false);
      b.trainer->step(false);
    }
    EXPECT_EQ(a.trainer->state_hash(), b.trainer->state_hash()) << to_string(kind);
    cfg.seed = 6;
    auto c = make_engine(docs, 90, cfg, 2);
    for (int i = 0; i < 3; ++i) c.trainer->step(false);
    EXPECT_NE(a.trainer->state_hash(), c.trainer->state_hash()) << to_string(kind);
  }
}

TEST(Engine, ServerAtZeroStalenessEqualsDirectModel) {
  const auto docs = lda_docs(80, 60, 6);
  for (auto kind : all_kinds()) {
    auto cfg = small_config(kind);
    cfg.num_slices = 3;
    auto via_server = make_engine(docs, 60, cfg, 2);
    cfg.direct_model = true;
    auto direct = make_engine(docs, 60, cfg, 2);
    for (int i = 0; i < 4; ++i) {
      via_server.trainer->step(false);
      direct.trainer->step(false);
    }
    EXPECT_EQ(via_server.trainer->dump(), direct.trainer->dump()) << to_string(kind);
  }
}

TEST(Engine, LikelihoodImprovesFromRandomStart) {
  const auto docs = lda_docs(200, 150, 7);
  for (auto kind : all_kinds()) {
    auto cfg = small_config(kind, 5);
    auto f = make_engine(docs, 150, cfg, 1);
    const double start = f.trainer->likelihood().total_loglik;
    for (int i = 0; i < 30; ++i) f.trainer->step(false);
    const auto rep = f.trainer->step(true);
    EXPECT_GT(rep.total_loglik, start) << to_string(kind);
    EXPECT_NEAR(rep.total_loglik, f.trainer->likelihood().total_loglik, 1e-6 * std::abs(start));
  }
}

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("lightlda_engine_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path prepared(const std::string& name) {
  const auto dir = fresh_dir(name);
  corpus::SyntheticSpec spec;
  spec.docs = 150;
  spec.vocab = 300;
  spec.mean_doc_len = 40;
  spec.true_topics = 6;
  PrepOptions opt;
  opt.topics = 10;
  opt.num_blocks = 3;
  opt.num_slices = 2;
  opt.seed = 4;
  write_prepared(prepare(corpus::synthetic_corpus(spec, 4), opt), opt, dir / "data");
  return dir;
}

}  // namespace

TEST(WarmStart, ResumedRunMatchesUninterrupted) {
  for (bool out_of_core : {false, true}) {
    const auto dir = prepared(out_of_core ? "warm_ooc" : "warm_mem");
    RunConfig cfg = small_config(SamplerKind::kLight, 10);
    cfg.num_slices = 2;
    cfg.num_blocks = 3;
    cfg.iterations = 6;
    cfg.prefetch_depth = 2;
    cfg.staleness = 1;
    cfg.out_of_core = out_of_core;
    cfg.prep_dir = dir / "data";

    cfg.run_dir = dir / "full";
    auto full = make_trainer(cfg);
    full->initialize();
    full->run();

    cfg.run_dir = dir / "first";
    cfg.iterations = 3;
    auto first = make_trainer(cfg);
    first->initialize();
    first->run();
    first->checkpoint(cfg.run_dir / "checkpoint");
    const auto dumped = first->dump();
    first.reset();

    cfg.iterations = 6;
    cfg.warm_start = dir / "first" / "checkpoint";
    cfg.run_dir = dir / "second";
    auto second = make_trainer(cfg);
    second->initialize();
    EXPECT_EQ(second->next_iteration(), 3u);
    EXPECT_EQ(second->dump(), dumped);
    EXPECT_NO_THROW(verify_against_dump(*second, cfg.warm_start / "model.dump"));
    second->run();
    EXPECT_EQ(second->state_hash(), full->state_hash()) << "out_of_core=" << out_of_core;
    const double a = full->likelihood().total_loglik, b = second->likelihood().total_loglik;
    EXPECT_EQ(a, b);
  }
}

TEST(WarmStart, TopicMismatchIsAConfigError) {
  const auto dir = prepared("warm_mismatch");
  RunConfig cfg = small_config(SamplerKind::kLight, 12);
  cfg.prep_dir = dir / "data";
  EXPECT_THROW(make_trainer(cfg), ConfigError);
}

TEST(Prepare, SameInputsGiveIdenticalFiles) {
  const auto a = prepared("prep_a"), b = prepared("prep_b");
  for (const auto& entry : fs::recursive_directory_iterator(a / "data")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a / "data");
    EXPECT_EQ(corpus::read_file(entry.path()), corpus::read_file(b / "data" / rel)) << rel;
  }
}
