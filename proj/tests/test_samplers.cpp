#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numeric>

#include "lightlda/samplers/formulas.hpp"
#include "lightlda/samplers/token_sampler.hpp"

using namespace lightlda;
using namespace lightlda::samplers;

namespace {

void expect_rel_near(double a, double b, double rel = 1e-12) {
  EXPECT_LE(std::abs(a - b), rel * std::max(std::abs(a), std::abs(b))) << a << " vs " << b;
}

double chi_square_p(const std::vector<std::uint64_t>& observed, const std::vector<double>& weight) {
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
  double stat = 0;
  int cells = 0;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    const double e = n * weight[i] / total;
    if (e == 0) continue;
    stat += (observed[i] - e) * (observed[i] - e) / e;
    ++cells;
  }
  if (cells < 2) return 1.0;
  boost::math::chi_squared dist(cells - 1);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

/// Random −di context; counts are integers as in a real state.
DenseCounts random_counts(Rng& rng, std::uint32_t K, WordId w = 0) {
  DenseCounts c;
  c.w = w;
  c.nd.resize(K);
  c.nw.resize(K);
  c.nk.resize(K);
  for (TopicId k = 0; k < K; ++k) {
    c.nd[k] = static_cast<double>(rng.below(2) ? rng.below(6) : 0);
    c.nw[k] = static_cast<double>(rng.below(2) ? rng.below(9) : 0);
    c.nk[k] = c.nw[k] + static_cast<double>(rng.below(40));
  }
  return c;
}

tables::Hyperparams random_hp(Rng& rng, std::uint32_t K, std::uint32_t V) {
  std::vector<double> alpha(K), beta(V);
  for (auto& a : alpha) a = 0.01 + rng.uniform() * 2;
  for (auto& b : beta) b = 0.001 + rng.uniform();
  return tables::Hyperparams::asymmetric(alpha, beta);
}

// Oracles written directly from the model: the collapsed target p(k), the
// word proposal p_w(k) and the doc proposal p_d(k).
double target(TopicId k, const DenseCounts& c, const tables::Hyperparams& hp) {
  const WordId w = c.w;
  return (c.nd[k] + hp.alpha[k]) * (c.nw[k] + hp.beta_w(w)) / (c.nk[k] + hp.beta_bar);
}

struct ProposalCountsView {
  std::vector<double> nw, nk, nd;
  double word(TopicId k) const { return nw[k]; }
  double topic(TopicId k) const { return nk[k]; }
  double doc(TopicId k) const { return nd[k]; }
};

}  // namespace

TEST(Formulas, ConditionalMassMatchesModel) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto K = static_cast<std::uint32_t>(1 + rng.below(20));
    const auto hp = random_hp(rng, K, 3);
    const auto c = random_counts(rng, K, static_cast<WordId>(rng.below(3)));
    for (TopicId k = 0; k < K; ++k) expect_rel_near(conditional_mass(k, c, hp), target(k, c, hp));
  }
}

TEST(Formulas, SparseBucketsSumToConditional) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto K = static_cast<std::uint32_t>(1 + rng.below(30));
    const auto hp = random_hp(rng, K, 4);
    const auto c = random_counts(rng, K, static_cast<WordId>(rng.below(4)));
    const auto m = sparse_bucket_masses(c, hp);
    double r = 0, s = 0, t = 0;
    for (TopicId k = 0; k < K; ++k) {
      expect_rel_near(m.r[k] + m.s[k] + m.t[k], target(k, c, hp));
      r += m.r[k];
      s += m.s[k];
      t += m.t[k];
    }
    expect_rel_near(m.r_sum, r);
    expect_rel_near(m.s_sum + 1e-300, s + 1e-300);
    expect_rel_near(m.t_sum + 1e-300, t + 1e-300);
  }
}

TEST(Formulas, SparseBucketsVanishForEmptyDocAndFreshWord) {
  Rng rng(3);
  const auto hp = random_hp(rng, 8, 2);
  auto c = random_counts(rng, 8);
  std::fill(c.nd.begin(), c.nd.end(), 0.0);
  EXPECT_EQ(sparse_bucket_masses(c, hp).s_sum, 0.0);
  c = random_counts(rng, 8);
  std::fill(c.nw.begin(), c.nw.end(), 0.0);
  EXPECT_EQ(sparse_bucket_masses(c, hp).t_sum, 0.0);
}

TEST(Formulas, AliasUMassMatchesDirectSum) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto K = static_cast<std::uint32_t>(1 + rng.below(25));
    const auto hp = random_hp(rng, K, 3);
    const auto c = random_counts(rng, K, 1);
    double u = 0, v = 0, total = 0;
    for (TopicId k = 0; k < K; ++k) {
      u += c.nd[k] * (c.nw[k] + hp.beta_w(1)) / (c.nk[k] + hp.beta_bar);
      v += hp.alpha[k] * (c.nw[k] + hp.beta_w(1)) / (c.nk[k] + hp.beta_bar);
      total += target(k, c, hp);
    }
    expect_rel_near(aliaslda_u_mass(c, hp) + 1e-300, u + 1e-300);
    // fresh v term: u + v is the full conditional, so every proposal is accepted
    expect_rel_near(u + v, total);
  }
}

TEST(WordAccept, SelfTransitionIsOne) {
  Rng rng(5);
  const auto hp = random_hp(rng, 5, 1);
  const auto c = random_counts(rng, 5);
  ProposalCountsView prop{c.nw, c.nk, c.nd};
  for (TopicId s = 0; s < 5; ++s) EXPECT_EQ(light_word_accept(s, s, c, hp, prop), 1.0);
}

TEST(WordAccept, HandWorkedExample) {
  // s: −di counts all 0, token included: n_sw = n_s = 1; t: −di counts all 1.
  auto hp = tables::Hyperparams::asymmetric({0.5, 0.5}, {0.5, 0.5});
  ASSERT_DOUBLE_EQ(hp.beta_bar, 1.0);
  DenseCounts c{0, {0, 1}, {0, 1}, {0, 1}};
  ProposalCountsView prop{{1, 1}, {1, 1}, {}};
  const double ratio = (1.5 * 1.5 * 1 * 1.5 * 2) / (0.5 * 0.5 * 2 * 1.5 * 2);
  EXPECT_DOUBLE_EQ(ratio, 4.5);
  const double brute = (target(1, c, hp) * (1 + 0.5) / (1 + 1.0)) /
                       (target(0, c, hp) * (1 + 0.5) / (1 + 1.0));
  EXPECT_DOUBLE_EQ(brute, 4.5);
  EXPECT_EQ(light_word_accept(0, 1, c, hp, prop), 1.0);
}

TEST(WordAccept, MatchesBruteForceRatio) {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const auto K = static_cast<std::uint32_t>(2 + rng.below(20));
    const auto hp = random_hp(rng, K, 3);
    const auto w = static_cast<WordId>(rng.below(3));
    const auto c = random_counts(rng, K, w);
    ProposalCountsView prop{std::vector<double>(K), std::vector<double>(K), {}};
    for (TopicId k = 0; k < K; ++k) {
      prop.nw[k] = c.nw[k] + static_cast<double>(rng.below(4));
      prop.nk[k] = c.nk[k] + prop.nw[k] + static_cast<double>(rng.below(4));
    }
    const auto s = static_cast<TopicId>(rng.below(K));
    auto t = static_cast<TopicId>(rng.below(K - 1));
    if (t >= s) ++t;
    auto pw = [&](TopicId k) { return (prop.nw[k] + hp.beta_w(w)) / (prop.nk[k] + hp.beta_bar); };
    const double brute = std::min(1.0, target(t, c, hp) * pw(s) / (target(s, c, hp) * pw(t)));
    expect_rel_near(light_word_accept(s, t, c, hp, prop), brute);
  }
}

TEST(DocAccept, SelfTransitionAndSymmetry) {
  Rng rng(7);
  const auto hp = tables::Hyperparams::symmetric(6, 2, 0.3, 0.1);
  auto c = random_counts(rng, 6);
  ProposalCountsView prop{{}, {}, c.nd};
  EXPECT_EQ(light_doc_accept(2, 2, c, hp, prop), 1.0);
  c.nd[1] = c.nd[4] = 3;
  c.nw[1] = c.nw[4] = 2;
  c.nk[1] = c.nk[4] = 9;
  prop.nd = c.nd;
  EXPECT_DOUBLE_EQ(light_doc_accept(1, 4, c, hp, prop), 1.0);
  EXPECT_DOUBLE_EQ(light_doc_accept(4, 1, c, hp, prop), 1.0);
}

TEST(DocAccept, MatchesBruteForceRatio) {
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const auto K = static_cast<std::uint32_t>(2 + rng.below(20));
    const auto hp = random_hp(rng, K, 2);
    const auto c = random_counts(rng, K, static_cast<WordId>(rng.below(2)));
    ProposalCountsView prop{{}, {}, c.nd};
    const auto s = static_cast<TopicId>(rng.below(K));
    auto t = static_cast<TopicId>(rng.below(K - 1));
    if (t >= s) ++t;
    const double n = std::accumulate(prop.nd.begin(), prop.nd.end(), 0.0);
    auto pd = [&](TopicId k) { return (prop.nd[k] + hp.alpha[k]) / (n + hp.alpha_bar); };
    const double brute = std::min(1.0, target(t, c, hp) * pd(s) / (target(s, c, hp) * pd(t)));
    expect_rel_near(light_doc_accept(s, t, c, hp, prop), brute);
  }
}

TEST(DocPropose, ConcentratedDocument) {
  const auto hp = tables::Hyperparams::symmetric(10, 1, 1e-9, 0.1);
  const auto alpha_table = alpha_alias(hp);
  std::vector<TokenTopicPair> doc(6, TokenTopicPair{0, 7});
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) EXPECT_EQ(light_doc_propose(doc, hp, alpha_table, rng), 7u);
}

TEST(DocPropose, MixtureExample) {
  const auto hp = tables::Hyperparams::symmetric(10, 1, 0.1, 0.1);
  ASSERT_DOUBLE_EQ(hp.alpha_bar, 1.0);
  const auto alpha_table = alpha_alias(hp);
  const std::vector<TokenTopicPair> doc{{0, 2}, {0, 2}, {0, 5}};
  const double analytic = 3.0 / 4 * (2.0 / 3) + 1.0 / 4 * (0.1 / 1);
  EXPECT_DOUBLE_EQ(analytic, 0.525);
  Rng rng(2);
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += light_doc_propose(doc, hp, alpha_table, rng) == 2;
  EXPECT_NEAR(static_cast<double>(hits) / n, analytic, 4 * std::sqrt(0.525 * 0.475 / n));
}

TEST(DocPropose, MassMatchesCountsPlusPrior) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto K = static_cast<std::uint32_t>(2 + rng.below(8));
    const auto hp = random_hp(rng, K, 1);
    const auto alpha_table = alpha_alias(hp);
    std::vector<TokenTopicPair> doc(rng.below(12));
    std::vector<double> weight(hp.alpha);
    for (auto& p : doc) {
      p.topic = static_cast<TopicId>(rng.below(K));
      weight[p.topic] += 1;
    }
    std::vector<std::uint64_t> hist(K, 0);
    for (int i = 0; i < 20000; ++i) ++hist[light_doc_propose(doc, hp, alpha_table, rng)];
    EXPECT_GT(chi_square_p(hist, weight), 1e-4) << "trial " << trial;

    if (doc.empty()) continue;
    // leaving token e out gives n_kd − δ(k, z_e) + α_k
    const std::size_t e = rng.below(doc.size());
    std::vector<double> excl(weight);
    excl[doc[e].topic] -= 1;
    std::fill(hist.begin(), hist.end(), 0);
    for (int i = 0; i < 20000; ++i) ++hist[light_doc_propose(doc, hp, alpha_table, rng, e)];
    EXPECT_GT(chi_square_p(hist, excl), 1e-4) << "trial " << trial;
  }
}

namespace {

/// One token in a fixed context, resampled repeatedly through TokenSampler.
struct SingleTokenHarness {
  tables::Hyperparams hp;
  std::shared_ptr<const tables::RowLayout> layout;
  tables::WordTopicTable snapshot;
  std::vector<std::int64_t> summary;
  std::vector<WordId> words;
  std::vector<TokenTopicPair> doc_pairs;
  alias::AliasTable alpha_table;
  alias::SliceProposals proposals;

  SingleTokenHarness(tables::Hyperparams h, std::vector<TokenTopicPair> doc,
                     const std::vector<std::vector<std::int32_t>>& other_counts)
      : hp(std::move(h)),
        layout(tables::RowLayout::make(hp.num_topics,
                                       std::vector<std::uint8_t>(hp.vocab_size, 0),
                                       std::vector<std::uint64_t>(hp.vocab_size, 4))),
        snapshot(layout),
        summary(hp.num_topics, 0),
        doc_pairs(std::move(doc)),
        alpha_table(alpha_alias(hp)) {
    words.resize(hp.vocab_size);
    std::iota(words.begin(), words.end(), 0);
    for (WordId w = 0; w < hp.vocab_size; ++w) {
      for (TopicId k = 0; k < hp.num_topics; ++k) {
        if (other_counts[w][k]) snapshot.update(w, k, other_counts[w][k]);
        summary[k] += other_counts[w][k];
      }
    }
    for (const auto& p : doc_pairs) {
      snapshot.update(p.word, p.topic, 1);
      ++summary[p.topic];
    }
    proposals.build(snapshot, words, summary, hp);
  }

  SliceView view() const { return {0, &snapshot, summary, words, &proposals}; }

  /// −di counts seen by token i.
  DenseCounts minus_di(std::size_t i) const {
    DenseCounts c;
    const auto& tok = doc_pairs[i];
    c.w = tok.word;
    for (TopicId k = 0; k < hp.num_topics; ++k) {
      double nd = 0;
      for (const auto& p : doc_pairs) nd += p.topic == k;
      c.nd.push_back(nd - (tok.topic == k));
      c.nw.push_back(snapshot.get(tok.word, k) - (tok.topic == k));
      c.nk.push_back(static_cast<double>(summary[k]) - (tok.topic == k));
    }
    return c;
  }

  std::vector<std::uint64_t> draw(SamplerKind kind, std::size_t i, int n, std::uint64_t seed) {
    SamplerConfig cfg;
    cfg.kind = kind;
    cfg.mh_steps = 1;
    TokenSampler sampler(cfg, hp, layout, &alpha_table);
    sampler.rng().reseed(seed, {});
    std::vector<std::uint64_t> hist(hp.num_topics, 0);
    for (int r = 0; r < n; ++r) {
      auto pairs = doc_pairs;
      auto doc = tables::DocTopicSparse::from_pairs(pairs);
      sampler.begin_slice(view());
      sampler.sample_doc(doc, pairs, i, i + 1);
      ++hist[pairs[i].topic];
    }
    return hist;
  }
};

}  // namespace

TEST(TokenSampler, SingleTopicAlwaysZero) {
  SingleTokenHarness h(tables::Hyperparams::symmetric(1, 2, 0.5, 0.1), {{0, 0}, {1, 0}},
                       {{3}, {1}});
  for (auto kind : {SamplerKind::kGibbs, SamplerKind::kSparse, SamplerKind::kAlias,
                    SamplerKind::kLight, SamplerKind::kLightWordOnly, SamplerKind::kLightDocOnly}) {
    EXPECT_EQ(h.draw(kind, 1, 100, 1)[0], 100u) << to_string(kind);
  }
}

TEST(TokenSampler, GibbsAndSparseMatchFullConditional) {
  Rng rng(10);
  for (int trial = 0; trial < 6; ++trial) {
    const std::uint32_t K = 2 + static_cast<std::uint32_t>(rng.below(6)), V = 3;
    const auto hp = random_hp(rng, K, V);
    std::vector<TokenTopicPair> doc(1 + rng.below(5));
    for (auto& p : doc) p = {static_cast<WordId>(rng.below(V)), static_cast<TopicId>(rng.below(K))};
    std::vector<std::vector<std::int32_t>> other(V, std::vector<std::int32_t>(K));
    for (auto& row : other) {
      for (auto& x : row) x = static_cast<std::int32_t>(rng.below(4));
    }
    SingleTokenHarness h(hp, doc, other);
    const auto c = h.minus_di(0);
    std::vector<double> mass(K);
    for (TopicId k = 0; k < K; ++k) mass[k] = target(k, c, hp);
    for (auto kind : {SamplerKind::kGibbs, SamplerKind::kSparse}) {
      const auto hist = h.draw(kind, 0, 100000, 20 + trial);
      EXPECT_GT(chi_square_p(hist, mass), 0.001) << to_string(kind) << " trial " << trial;
    }
  }
}

TEST(TokenSampler, TwoTopicsZeroCountsAreEven) {
  SingleTokenHarness h(tables::Hyperparams::symmetric(2, 1, 0.5, 0.5), {{0, 0}}, {{0, 0}});
  for (auto kind : {SamplerKind::kGibbs, SamplerKind::kSparse}) {
    const auto hist = h.draw(kind, 0, 100000, 3);
    EXPECT_NEAR(hist[0] / 100000.0, 0.5, 4 * std::sqrt(0.25 / 100000));
  }
}

TEST(TokenSampler, MhKernelsLeaveConditionalInvariant) {
  // With the rest of the state frozen, one MH step started from the
  // conditional must return the conditional.
  Rng rng(12);
  for (int trial = 0; trial < 4; ++trial) {
    const std::uint32_t K = 3, V = 2;
    const auto hp = random_hp(rng, K, V);
    std::vector<TokenTopicPair> doc(2 + rng.below(3));
    for (auto& p : doc) p = {static_cast<WordId>(rng.below(V)), static_cast<TopicId>(rng.below(K))};
    std::vector<std::vector<std::int32_t>> other(V, std::vector<std::int32_t>(K));
    for (auto& row : other) {
      for (auto& x : row) x = static_cast<std::int32_t>(rng.below(3));
    }
    for (auto kind : {SamplerKind::kAlias, SamplerKind::kLight, SamplerKind::kLightWordOnly,
                      SamplerKind::kLightDocOnly}) {
      std::vector<double> mass(K);
      std::vector<std::uint64_t> hist(K, 0);
      std::vector<double> start(K);
      for (TopicId s = 0; s < K; ++s) {
        auto d = doc;
        d[0].topic = s;
        SingleTokenHarness h(hp, d, other);
        const auto c = h.minus_di(0);
        for (TopicId k = 0; k < K; ++k) mass[k] = target(k, c, hp);
      }
      const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
      // Mix the kernels started from each s by the conditional weight of s.
      const int n = 60000;
      std::vector<double> out(K, 0.0);
      for (TopicId s = 0; s < K; ++s) {
        auto d = doc;
        d[0].topic = s;
        SingleTokenHarness h(hp, d, other);
        const auto hs = h.draw(kind, 0, n, 100 + s);
        for (TopicId k = 0; k < K; ++k) out[k] += mass[s] / total * hs[k] / n;
      }
      for (TopicId k = 0; k < K; ++k) {
        EXPECT_NEAR(out[k], mass[k] / total, 0.01) << to_string(kind) << " trial " << trial;
      }
    }
  }
}

TEST(TokenSampler, CountsStayConsistentForEveryKind) {
  const std::uint32_t K = 5, V = 4;
  const auto hp = tables::Hyperparams::symmetric(K, V, 0.2, 0.1);
  Rng rng(13);
  std::vector<TokenTopicPair> doc(30);
  for (auto& p : doc) p = {static_cast<WordId>(rng.below(V)), static_cast<TopicId>(rng.below(K))};
  std::sort(doc.begin(), doc.end(), [](auto a, auto b) { return a.word < b.word; });
  std::vector<std::vector<std::int32_t>> other(V, std::vector<std::int32_t>(K, 1));
  for (auto kind : {SamplerKind::kGibbs, SamplerKind::kSparse, SamplerKind::kAlias,
                    SamplerKind::kLight, SamplerKind::kLightWordOnly, SamplerKind::kLightDocOnly}) {
    SingleTokenHarness h(hp, doc, other);
    SamplerConfig cfg;
    cfg.kind = kind;
    TokenSampler sampler(cfg, h.hp, h.layout, &h.alpha_table);
    auto pairs = doc;
    auto d = tables::DocTopicSparse::from_pairs(pairs);
    sampler.begin_slice(h.view());
    sampler.sample_doc(d, pairs, 0, pairs.size());
    EXPECT_EQ(sampler.stats().tokens, pairs.size());
    const auto recount = tables::DocTopicSparse::from_pairs(pairs);
    for (TopicId k = 0; k < K; ++k) EXPECT_EQ(d.get(k), recount.get(k)) << to_string(kind);
    EXPECT_EQ(d.n_d(), pairs.size());
    std::vector<DeltaEntry> deltas;
    std::vector<std::int64_t> sd(K, 0);
    sampler.collect_deltas(deltas, sd);
    for (WordId w = 0; w < V; ++w) {
      for (TopicId k = 0; k < K; ++k) {
        std::int64_t expect = other[w][k];
        for (const auto& p : pairs) expect += p.word == w && p.topic == k;
        EXPECT_EQ(sampler.live().get(w, k), expect);
      }
    }
    std::int64_t net = 0;
    for (auto x : sd) net += x;
    EXPECT_EQ(net, 0);
    for (TopicId k = 0; k < K; ++k) {
      EXPECT_EQ(sampler.live_summary()[k], h.summary[k] + sd[k]);
    }
  }
}
