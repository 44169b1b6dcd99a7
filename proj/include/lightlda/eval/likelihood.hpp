#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "lightlda/common.hpp"
#include "lightlda/tables/doc_topic.hpp"
#include "lightlda/tables/hyperparams.hpp"
#include "lightlda/tables/word_topic_table.hpp"

namespace lightlda::eval {

struct LikelihoodReport {
  double doc_loglik = 0;
  double word_loglik = 0;
  double total_loglik = 0;
  std::uint64_t nonzeros = 0;
};

/// lgamma(n + offset) for integer n, tabulated below `size`.
class LgammaCache {
 public:
  LgammaCache(double offset, std::size_t size) : offset_(offset), table_(size) {
    for (std::size_t n = 0; n < size; ++n) table_[n] = std::lgamma(n + offset);
  }
  double operator()(std::int64_t n) const {
    return n >= 0 && static_cast<std::size_t>(n) < table_.size()
               ? table_[n]
               : std::lgamma(static_cast<double>(n) + offset_);
  }

 private:
  double offset_;
  std::vector<double> table_;
};

/// Σ_d [lgamma(ᾱ) − lgamma(n_d+ᾱ) + Σ_k (lgamma(n_kd+α_k) − lgamma(α_k))].
inline double doc_loglik(std::span<const tables::DocTopicSparse> docs,
                         const tables::Hyperparams& hp) {
  const double lg_alpha_bar = std::lgamma(hp.alpha_bar);
  const bool sym = hp.symmetric_alpha();
  const LgammaCache cache(hp.alpha[0], sym ? 4096 : 0);
  const double lg_alpha0 = std::lgamma(hp.alpha[0]);
  double total = 0;
  for (const auto& d : docs) {
    double s = lg_alpha_bar - std::lgamma(d.n_d() + hp.alpha_bar);
    for (const auto& e : d.sorted_entries()) {
      if (sym) {
        s += cache(e.count) - lg_alpha0;
      } else {
        s += std::lgamma(e.count + hp.alpha_k(e.topic)) - std::lgamma(hp.alpha_k(e.topic));
      }
    }
    total += s;
  }
  return total;
}

/// Σ_k [lgamma(β̄) − lgamma(n_k+β̄)] + Σ_w Σ_k (lgamma(n_kw+β_w) − lgamma(β_w)).
inline double word_loglik(const tables::WordTopicTable& table,
                          std::span<const std::int64_t> summary,
                          const tables::Hyperparams& hp) {
  double total = 0;
  const double lg_beta_bar = std::lgamma(hp.beta_bar);
  for (TopicId k = 0; k < hp.num_topics; ++k) {
    total += lg_beta_bar - std::lgamma(static_cast<double>(summary[k]) + hp.beta_bar);
  }
  const bool sym = hp.beta_words.empty();
  const LgammaCache cache(hp.beta, sym ? 1 << 16 : 0);
  for (WordId w = 0; w < table.vocab_size(); ++w) {
    const double bw = hp.beta_w(w);
    const double lg_bw = std::lgamma(bw);
    double row = 0;
    for (const auto& e : table.row_entries(w)) {
      row += (sym ? cache(e.count) : std::lgamma(e.count + bw)) - lg_bw;
    }
    total += row;
  }
  return total;
}

inline LikelihoodReport likelihood(std::span<const tables::DocTopicSparse> docs,
                                   const tables::WordTopicTable& table,
                                   std::span<const std::int64_t> summary,
                                   const tables::Hyperparams& hp) {
  LikelihoodReport r;
  r.doc_loglik = doc_loglik(docs, hp);
  r.word_loglik = word_loglik(table, summary, hp);
  r.total_loglik = r.doc_loglik + r.word_loglik;
  r.nonzeros = table.total_nonzeros();
  return r;
}

/// Smoothed point estimates φ̂_kw = (n_kw+β_w)/(n_k+β̄) and
/// θ̂_kd = (n_kd+α_k)/(n_d+ᾱ), dense (for small models and reports).
struct PointEstimates {
  std::vector<std::vector<double>> phi;    // K x V
  std::vector<std::vector<double>> theta;  // D x K
};

inline PointEstimates estimate_phi_theta(std::span<const tables::DocTopicSparse> docs,
                                         const tables::WordTopicTable& table,
                                         std::span<const std::int64_t> summary,
                                         const tables::Hyperparams& hp) {
  const std::uint32_t K = hp.num_topics;
  const std::uint32_t V = hp.vocab_size;
  PointEstimates out;
  out.phi.assign(K, std::vector<double>(V));
  for (TopicId k = 0; k < K; ++k) {
    const double denom = static_cast<double>(summary[k]) + hp.beta_bar;
    for (WordId w = 0; w < V; ++w) out.phi[k][w] = hp.beta_w(w) / denom;
  }
  for (WordId w = 0; w < V; ++w) {
    table.for_each_nonzero(w, [&](TopicId k, std::int32_t c) {
      out.phi[k][w] += c / (static_cast<double>(summary[k]) + hp.beta_bar);
    });
  }
  out.theta.reserve(docs.size());
  for (const auto& d : docs) {
    std::vector<double> th(K);
    const double denom = d.n_d() + hp.alpha_bar;
    for (TopicId k = 0; k < K; ++k) th[k] = hp.alpha_k(k) / denom;
    for (const auto& e : d.entries()) th[e.topic] += e.count / denom;
    out.theta.push_back(std::move(th));
  }
  return out;
}

}  // namespace lightlda::eval
