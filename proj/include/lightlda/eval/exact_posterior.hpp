#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lightlda/common.hpp"
#include "lightlda/tables/hyperparams.hpp"

namespace lightlda::eval {

/// Enumerates every topic assignment of a tiny corpus and returns p(z | w).
/// Tokens are numbered document-major in the given order; state index is
/// Σ_i z_i K^i.
inline std::vector<double> exact_posterior(const std::vector<std::vector<WordId>>& docs,
                                           const tables::Hyperparams& hp) {
  const std::uint32_t K = hp.num_topics;
  const std::uint32_t V = hp.vocab_size;
  std::vector<std::pair<std::uint32_t, WordId>> tokens;  // (doc, word)
  for (std::uint32_t d = 0; d < docs.size(); ++d) {
    for (WordId w : docs[d]) {
      if (w >= V) throw DataError("word id out of range in exact_posterior");
      tokens.emplace_back(d, w);
    }
  }
  const std::size_t L = tokens.size();
  double states_d = std::pow(static_cast<double>(K), static_cast<double>(L));
  if (states_d > 1e7) throw ConfigError("exact_posterior needs K^L <= 1e7");
  const auto states = static_cast<std::size_t>(states_d);

  const std::size_t D = docs.size();
  std::vector<double> logp(states);
  std::vector<std::uint32_t> z(L, 0);
  std::vector<std::int64_t> ndk(D * K), nwk(static_cast<std::size_t>(V) * K), nk(K);
  for (std::size_t idx = 0; idx < states; ++idx) {
    std::size_t rest = idx;
    std::fill(ndk.begin(), ndk.end(), 0);
    std::fill(nwk.begin(), nwk.end(), 0);
    std::fill(nk.begin(), nk.end(), 0);
    for (std::size_t i = 0; i < L; ++i) {
      const auto k = static_cast<std::uint32_t>(rest % K);
      rest /= K;
      ++ndk[tokens[i].first * K + k];
      ++nwk[static_cast<std::size_t>(tokens[i].second) * K + k];
      ++nk[k];
    }
    double lp = 0;
    for (std::size_t d = 0; d < D; ++d) {
      lp += std::lgamma(hp.alpha_bar) - std::lgamma(docs[d].size() + hp.alpha_bar);
      for (TopicId k = 0; k < K; ++k) {
        lp += std::lgamma(ndk[d * K + k] + hp.alpha_k(k)) - std::lgamma(hp.alpha_k(k));
      }
    }
    for (TopicId k = 0; k < K; ++k) {
      lp += std::lgamma(hp.beta_bar) - std::lgamma(nk[k] + hp.beta_bar);
      for (WordId w = 0; w < V; ++w) {
        lp += std::lgamma(nwk[static_cast<std::size_t>(w) * K + k] + hp.beta_w(w)) -
              std::lgamma(hp.beta_w(w));
      }
    }
    logp[idx] = lp;
  }
  const double mx = *std::max_element(logp.begin(), logp.end());
  double norm = 0;
  for (double& x : logp) {
    x = std::exp(x - mx);
    norm += x;
  }
  for (double& x : logp) x /= norm;
  return logp;
}

/// Total-variation distance between two distributions of equal support.
inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

}  // namespace lightlda::eval
