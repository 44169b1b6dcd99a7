#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numeric>

#include "lightlda/alias/alias_table.hpp"
#include "lightlda/alias/word_proposal.hpp"

using namespace lightlda;
using namespace lightlda::alias;

namespace {

double chi_square_p(const std::vector<std::uint64_t>& observed, const std::vector<double>& prob) {
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  double stat = 0;
  int cells = 0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (prob[i] == 0) {
      EXPECT_EQ(observed[i], 0u) << "outcome " << i << " has zero mass";
      continue;
    }
    const double e = n * prob[i];
    stat += (observed[i] - e) * (observed[i] - e) / e;
    ++cells;
  }
  boost::math::chi_squared dist(cells - 1);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

std::vector<double> normalized(std::vector<double> w) {
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= s;
  return w;
}

void expect_rel_near(double a, double b, double rel) {
  EXPECT_LE(std::abs(a - b), rel * std::max(std::abs(a), std::abs(b))) << a << " vs " << b;
}

}  // namespace

TEST(AliasTable, UniformWeightsNeedNoAliases) {
  AliasTable t(std::vector<double>{1, 1, 1, 1});
  for (std::uint32_t i = 0; i < 4; ++i) {
    EXPECT_EQ(t.bins()[i].split, 1.0);
    EXPECT_EQ(t.bins()[i].alias, i);
  }
}

TEST(AliasTable, ReconstructsSmallExampleExactly) {
  AliasTable t(std::vector<double>{2, 1, 1});
  const auto p = t.reconstruct();
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.25);
  EXPECT_DOUBLE_EQ(p[2], 0.25);
}

TEST(AliasTable, MassReconstructionOnRandomWeights) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 1 + rng.below(300);
    std::vector<double> w(n);
    for (auto& x : w) x = rng.below(5) == 0 ? 0.0 : std::pow(rng.uniform(), 3) * 100;
    if (std::accumulate(w.begin(), w.end(), 0.0) == 0) w[0] = 1;
    AliasTable t(w);
    const auto p = t.reconstruct();
    const auto q = normalized(w);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_LE(std::abs(p[i] - q[i]), 1e-12 * std::max(q[i], 1e-300) + 1e-15);
    }
  }
}

TEST(AliasTable, ChiSquareGoodnessOfFit) {
  Rng wrng(5);
  std::vector<double> w(100);
  for (auto& x : w) x = 0.1 + wrng.uniform() * 10;
  const AliasTable t(w);
  const auto prob = normalized(w);

  std::vector<std::uint64_t> two_variates(100, 0), one_variate(100, 0);
  Rng rng(99);
  for (int i = 0; i < 1'000'000; ++i) {
    ++two_variates[t.draw(rng.uniform(), rng.uniform())];
    ++one_variate[t.draw(rng)];
  }
  EXPECT_GT(chi_square_p(two_variates, prob), 0.01);
  EXPECT_GT(chi_square_p(one_variate, prob), 0.01);
}

TEST(AliasTable, RejectsInvalidWeights) {
  EXPECT_THROW(AliasTable(std::vector<double>{}), InvariantViolation);
  EXPECT_THROW(AliasTable(std::vector<double>{1, -1}), InvariantViolation);
  EXPECT_THROW(AliasTable(std::vector<double>{0, 0}), InvariantViolation);
  EXPECT_THROW(AliasTable(std::vector<double>{1, std::nan("")}), InvariantViolation);
}

namespace {

struct ProposalFixture {
  tables::Hyperparams hp;
  std::shared_ptr<const tables::RowLayout> layout;
  tables::WordTopicTable table;
  std::vector<std::int64_t> summary;
  std::vector<WordId> words;
  SliceProposals proposals;

  ProposalFixture(tables::Hyperparams h, std::vector<std::uint8_t> dense)
      : hp(std::move(h)),
        layout(tables::RowLayout::make(hp.num_topics, dense,
                                       std::vector<std::uint64_t>(dense.size(), hp.num_topics))),
        table(layout),
        summary(hp.num_topics, 0) {
    words.resize(hp.vocab_size);
    std::iota(words.begin(), words.end(), 0);
  }

  void build() { proposals.build(table, words, summary, hp); }

  std::vector<double> direct(WordId w) const {
    std::vector<double> p(hp.num_topics);
    for (TopicId k = 0; k < hp.num_topics; ++k) {
      p[k] = (table.get(w, k) + hp.beta_w(w)) / (summary[k] + hp.beta_bar);
    }
    return normalized(p);
  }
};

}  // namespace

TEST(WordProposal, TwoTopicMixtureExample) {
  ProposalFixture f(tables::Hyperparams::asymmetric({0.1, 0.1}, {0.5, 0.5}), {0, 1});
  f.table.update(0, 0, 3);
  f.table.update(0, 1, 1);
  f.summary = {5, 5};
  f.build();
  const auto p = f.proposals.reconstruct(0, f.hp);
  EXPECT_NEAR(p[0], 0.7, 1e-12);
  EXPECT_NEAR(p[1], 0.3, 1e-12);

  Rng rng(4);
  std::uint64_t zero = 0;
  const int n = 100'000;
  for (int i = 0; i < n; ++i) zero += f.proposals.draw(0, 0.5, rng) == 0;
  const double sd = std::sqrt(0.7 * 0.3 / n);
  EXPECT_NEAR(static_cast<double>(zero) / n, 0.7, 4 * sd);
}

TEST(WordProposal, EmptyRowUsesDensePartOnly) {
  ProposalFixture f(tables::Hyperparams::symmetric(6, 3, 0.1, 0.2), {0, 0, 1});
  f.table.update(1, 2, 4);
  f.summary = {0, 0, 4, 0, 0, 0};
  f.build();
  EXPECT_EQ(f.proposals.mass_sparse(0), 0.0);
  EXPECT_EQ(f.proposals.mass_sparse(2), 0.0);
  const auto p = f.proposals.reconstruct(0, f.hp);
  const auto dense = f.proposals.dense_part().reconstruct();
  for (TopicId k = 0; k < 6; ++k) EXPECT_NEAR(p[k], dense[k], 1e-15);
}

TEST(WordProposal, MixtureMassEqualsDirectEvaluation) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto K = static_cast<std::uint32_t>(2 + rng.below(12));
    const auto V = static_cast<std::uint32_t>(1 + rng.below(6));
    std::vector<double> beta(V);
    for (auto& b : beta) b = 0.01 + rng.uniform();
    std::vector<double> alpha(K, 0.1);
    std::vector<std::uint8_t> dense(V);
    for (auto& d : dense) d = static_cast<std::uint8_t>(rng.below(2));
    ProposalFixture f(tables::Hyperparams::asymmetric(alpha, beta), dense);
    for (int i = 0; i < 40; ++i) {
      const auto w = static_cast<WordId>(rng.below(V));
      const auto k = static_cast<TopicId>(rng.below(K));
      f.table.update(w, k, 1);
      ++f.summary[k];
    }
    for (auto& s : f.summary) s += static_cast<std::int64_t>(rng.below(5));
    f.build();
    for (WordId w = 0; w < V; ++w) {
      const auto p = f.proposals.reconstruct(w, f.hp);
      const auto q = f.direct(w);
      for (TopicId k = 0; k < K; ++k) expect_rel_near(p[k], q[k], 1e-12);
      double sparse = 0;
      f.table.for_each_nonzero(w, [&](TopicId k, std::int32_t c) { sparse += c / (f.summary[k] + f.hp.beta_bar); });
      expect_rel_near(f.proposals.mass_sparse(w) + 1e-300, sparse + 1e-300, 1e-12);
    }
  }
}

TEST(WordProposal, BuildTouchesNonzerosPlusK) {
  const std::uint32_t K = 40, V = 30;
  ProposalFixture f(tables::Hyperparams::symmetric(K, V, 0.1, 0.01), std::vector<std::uint8_t>(V, 0));
  Rng rng(2);
  std::uint64_t nonzeros = 0;
  for (int i = 0; i < 300; ++i) {
    const auto w = static_cast<WordId>(rng.below(V));
    const auto k = static_cast<TopicId>(rng.below(K));
    f.table.update(w, k, 1);
    ++f.summary[k];
  }
  for (WordId w = 0; w < V; ++w) nonzeros += f.table.nnz(w);
  f.build();
  EXPECT_EQ(f.proposals.dense_builds(), 1u);
  EXPECT_EQ(f.proposals.ops(), nonzeros + K);
  f.build();
  EXPECT_EQ(f.proposals.dense_builds(), 2u);
}

TEST(WordProposal, DrawExcludingMatchesReducedCounts) {
  ProposalFixture f(tables::Hyperparams::symmetric(4, 2, 0.1, 0.3), {0, 1});
  f.table.update(0, 0, 2);
  f.table.update(0, 2, 1);
  f.table.update(1, 1, 5);
  f.summary = {2, 5, 1, 0};
  f.build();
  // one token of word 0 at topic 2 removed
  std::vector<double> expect(4);
  for (TopicId k = 0; k < 4; ++k) {
    const double nkw = f.table.get(0, k) - (k == 2);
    const double nk = static_cast<double>(f.summary[k]) - (k == 2);
    expect[k] = (nkw + 0.3) / (nk + f.hp.beta_bar);
  }
  expect = normalized(expect);
  std::vector<std::uint64_t> hist(4, 0);
  Rng rng(6);
  for (int i = 0; i < 400'000; ++i) ++hist[f.proposals.draw_excluding(0, 0.3, f.hp.beta_bar, 2, 1, 1, rng)];
  EXPECT_GT(chi_square_p(hist, expect), 0.01);
}
