#pragma once

#include <numeric>
#include <vector>

#include "lightlda/common.hpp"

namespace lightlda::tables {

/// Dirichlet priors: α_k per topic and β_w per word, with their sums ᾱ and β̄.
struct Hyperparams {
  std::uint32_t num_topics = 0;
  std::uint32_t vocab_size = 0;
  std::vector<double> alpha;       // α_k
  double alpha_bar = 0;            // Σ_k α_k
  double beta = 0;                 // symmetric β (used when beta_words is empty)
  std::vector<double> beta_words;  // optional per-word β_w
  double beta_bar = 0;             // Σ_w β_w

  static Hyperparams symmetric(std::uint32_t K, std::uint32_t V, double alpha, double beta) {
    if (K == 0 || V == 0) throw ConfigError("K and V must be positive");
    if (!(alpha > 0) || !(beta > 0)) throw ConfigError("alpha and beta must be positive");
    Hyperparams hp;
    hp.num_topics = K;
    hp.vocab_size = V;
    hp.alpha.assign(K, alpha);
    hp.alpha_bar = K * alpha;
    hp.beta = beta;
    hp.beta_bar = V * beta;
    return hp;
  }

  static Hyperparams asymmetric(std::vector<double> alpha, std::vector<double> beta_words) {
    Hyperparams hp;
    hp.num_topics = static_cast<std::uint32_t>(alpha.size());
    hp.vocab_size = static_cast<std::uint32_t>(beta_words.size());
    if (hp.num_topics == 0 || hp.vocab_size == 0) throw ConfigError("K and V must be positive");
    for (double a : alpha) {
      if (!(a > 0)) throw ConfigError("alpha_k must be positive");
    }
    for (double b : beta_words) {
      if (!(b > 0)) throw ConfigError("beta_w must be positive");
    }
    hp.alpha_bar = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    hp.beta_bar = std::accumulate(beta_words.begin(), beta_words.end(), 0.0);
    hp.alpha = std::move(alpha);
    hp.beta = hp.beta_bar / hp.vocab_size;
    hp.beta_words = std::move(beta_words);
    return hp;
  }

  double alpha_k(TopicId k) const { return alpha[k]; }
  double beta_w(WordId w) const { return beta_words.empty() ? beta : beta_words[w]; }
  bool symmetric_alpha() const {
    for (double a : alpha) {
      if (a != alpha[0]) return false;
    }
    return true;
  }
};

}  // namespace lightlda::tables
