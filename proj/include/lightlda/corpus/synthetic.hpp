#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lightlda/alias/alias_table.hpp"
#include "lightlda/common.hpp"
#include "lightlda/corpus/reader.hpp"

namespace lightlda::corpus {

/// Generator settings. With true_topics == 0 every token is an independent
/// Zipf draw; otherwise documents follow an LDA model whose topic-word
/// distributions are Dirichlet draws centred on the Zipf base measure, so the
/// marginal word frequencies stay power-law.
struct SyntheticSpec {
  std::uint32_t docs = 1000;
  std::uint32_t vocab = 10000;
  double mean_doc_len = 100;
  double zipf_exponent = 1.0;
  std::uint32_t true_topics = 0;
  double doc_alpha = 0.1;
  double topic_concentration = 0.5;  // Dirichlet concentration per vocabulary word
  std::uint64_t seed = 1;
};

inline std::vector<double> zipf_weights(std::uint32_t V, double exponent) {
  std::vector<double> w(V);
  for (std::uint32_t r = 0; r < V; ++r) w[r] = 1.0 / std::pow(r + 1.0, exponent);
  return w;
}

/// Raw documents over word ids [0, spec.vocab); id r has Zipf rank r + 1.
inline std::vector<RawDocument> synthetic_documents(const SyntheticSpec& spec) {
  Rng rng(spec.seed, {0x5EED});
  const auto base = zipf_weights(spec.vocab, spec.zipf_exponent);
  std::poisson_distribution<std::uint32_t> length(std::max(0.0, spec.mean_doc_len - 1));

  std::vector<alias::AliasTable> topics;
  if (spec.true_topics > 0) {
    double base_total = 0;
    for (double b : base) base_total += b;
    const double c = spec.topic_concentration * spec.vocab;
    std::vector<double> phi(spec.vocab);
    for (std::uint32_t k = 0; k < spec.true_topics; ++k) {
      double total = 0;
      for (std::uint32_t w = 0; w < spec.vocab; ++w) {
        std::gamma_distribution<double> g(c * base[w] / base_total, 1.0);
        phi[w] = g(rng);
        total += phi[w];
      }
      if (!(total > 0)) phi.assign(spec.vocab, 1.0);
      topics.emplace_back(phi);
    }
  }
  const alias::AliasTable unigram(base);

  std::vector<RawDocument> docs(spec.docs);
  std::vector<double> theta(spec.true_topics);
  std::gamma_distribution<double> g_alpha(spec.doc_alpha, 1.0);
  for (std::uint32_t d = 0; d < spec.docs; ++d) {
    docs[d].doc_id = d;
    const std::uint32_t n = 1 + length(rng);
    docs[d].words.resize(n);
    if (spec.true_topics == 0) {
      for (auto& w : docs[d].words) w = unigram.draw(rng);
      continue;
    }
    double total = 0;
    for (auto& t : theta) total += (t = g_alpha(rng));
    if (!(total > 0)) std::fill(theta.begin(), theta.end(), 1.0);
    const alias::AliasTable doc_topics(theta);
    for (auto& w : docs[d].words) w = topics[doc_topics.draw(rng)].draw(rng);
  }
  return docs;
}

/// Synthetic corpus with a vocabulary named "w<rank>"; words never drawn are
/// dropped and ids compacted.
inline Corpus synthetic_corpus(const SyntheticSpec& spec, std::uint64_t vocab_seed) {
  auto raw = synthetic_documents(spec);
  std::vector<std::string> surfaces(spec.vocab);
  std::vector<std::uint64_t> counts(spec.vocab, 0);
  for (std::uint32_t w = 0; w < spec.vocab; ++w) surfaces[w] = "w" + std::to_string(w);
  for (const auto& d : raw) {
    for (WordId w : d.words) ++counts[w];
  }
  std::vector<WordId> remap;
  Corpus c;
  c.vocab = vocabulary_from_counts(surfaces, counts, 1, vocab_seed, &remap);
  for (auto& d : raw) {
    for (auto& w : d.words) w = remap[w];
  }
  c.docs = std::move(raw);
  return c;
}

}  // namespace lightlda::corpus
