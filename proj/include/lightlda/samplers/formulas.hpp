#pragma once

#include <algorithm>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "lightlda/alias/alias_table.hpp"
#include "lightlda/common.hpp"
#include "lightlda/tables/hyperparams.hpp"

namespace lightlda::samplers {

enum class SamplerKind { kGibbs, kSparse, kAlias, kLight, kLightWordOnly, kLightDocOnly };

inline const char* to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::kGibbs: return "gibbs";
    case SamplerKind::kSparse: return "sparse";
    case SamplerKind::kAlias: return "alias";
    case SamplerKind::kLight: return "light";
    case SamplerKind::kLightWordOnly: return "light-word-only";
    case SamplerKind::kLightDocOnly: return "light-doc-only";
  }
  return "?";
}

inline SamplerKind parse_sampler_kind(const std::string& s) {
  for (auto k : {SamplerKind::kGibbs, SamplerKind::kSparse, SamplerKind::kAlias,
                 SamplerKind::kLight, SamplerKind::kLightWordOnly, SamplerKind::kLightDocOnly}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown sampler kind '" + s + "'");
}

struct SamplerConfig {
  SamplerKind kind = SamplerKind::kLight;
  std::uint32_t mh_steps = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (mh_steps < 1) throw ConfigError("mh_steps must be >= 1");
  }
};

/// Counts seen by one token. doc/word/topic return n_kd, n_kw, n_k with the
/// token itself removed (the −di counts).
template <typename C>
concept TokenCounts = requires(const C& c, TopicId k) {
  { c.doc(k) } -> std::convertible_to<double>;
  { c.word(k) } -> std::convertible_to<double>;
  { c.topic(k) } -> std::convertible_to<double>;
  { c.word_id() } -> std::convertible_to<WordId>;
};

/// Plain dense counts, used by tests and small drivers.
struct DenseCounts {
  WordId w = 0;
  std::vector<double> nd, nw, nk;

  double doc(TopicId k) const { return nd[k]; }
  double word(TopicId k) const { return nw[k]; }
  double topic(TopicId k) const { return nk[k]; }
  WordId word_id() const { return w; }
};

/// Unnormalized full conditional (n_kd+α_k)(n_kw+β_w)/(n_k+β̄).
template <TokenCounts C>
double conditional_mass(TopicId k, const C& c, const tables::Hyperparams& hp) {
  return (c.doc(k) + hp.alpha_k(k)) * (c.word(k) + hp.beta_w(c.word_id())) /
         (c.topic(k) + hp.beta_bar);
}

/// MH acceptance for a word-proposal move s -> t. `prop` supplies the n_kw and
/// n_k values the word proposal was built from.
template <TokenCounts C, typename P>
double light_word_accept(TopicId s, TopicId t, const C& c, const tables::Hyperparams& hp,
                         const P& prop) {
  if (s == t) return 1.0;
  const double bw = hp.beta_w(c.word_id());
  const double bb = hp.beta_bar;
  const double num = (c.doc(t) + hp.alpha_k(t)) * (c.word(t) + bw) * (c.topic(s) + bb) *
                     (prop.word(s) + bw) * (prop.topic(t) + bb);
  const double den = (c.doc(s) + hp.alpha_k(s)) * (c.word(s) + bw) * (c.topic(t) + bb) *
                     (prop.word(t) + bw) * (prop.topic(s) + bb);
  return std::min(1.0, num / den);
}

/// MH acceptance for a doc-proposal move s -> t. `prop.doc(k)` is the n_kd the
/// doc proposal drew from.
template <TokenCounts C, typename P>
double light_doc_accept(TopicId s, TopicId t, const C& c, const tables::Hyperparams& hp,
                        const P& prop) {
  if (s == t) return 1.0;
  const double bw = hp.beta_w(c.word_id());
  const double bb = hp.beta_bar;
  const double num = (c.doc(t) + hp.alpha_k(t)) * (c.word(t) + bw) * (c.topic(s) + bb) *
                     (prop.doc(s) + hp.alpha_k(s));
  const double den = (c.doc(s) + hp.alpha_k(s)) * (c.word(s) + bw) * (c.topic(t) + bb) *
                     (prop.doc(t) + hp.alpha_k(t));
  return std::min(1.0, num / den);
}

inline constexpr std::size_t kNoExclude = static_cast<std::size_t>(-1);

/// Doc proposal p_d(k) ∝ n_kd + α_k drawn through the document's own topic
/// array: with probability n/(n+ᾱ) the topic of a uniformly chosen token,
/// otherwise a draw from the α table. With `exclude` set, token `exclude`
/// is left out of the array (n = n_d - 1).
inline TopicId light_doc_propose(std::span<const TokenTopicPair> doc,
                                 const tables::Hyperparams& hp,
                                 const alias::AliasTable& alpha_table, Rng& rng,
                                 std::size_t exclude = kNoExclude) {
  const std::size_t n = doc.size() - (exclude < doc.size() ? 1 : 0);
  if (n > 0 && rng.uniform() * (static_cast<double>(n) + hp.alpha_bar) < n) {
    std::size_t j = rng.below(n);
    if (exclude < doc.size() && j >= exclude) ++j;
    return doc[j].topic;
  }
  return alpha_table.draw(rng);
}

/// Per-topic masses of the three SparseLDA buckets
/// r = α_k β_w/(n_k+β̄), s = n_kd β_w/(n_k+β̄), t = (n_kd+α_k) n_kw/(n_k+β̄).
struct BucketMasses {
  std::vector<double> r, s, t;
  double r_sum = 0, s_sum = 0, t_sum = 0;
};

template <TokenCounts C>
BucketMasses sparse_bucket_masses(const C& c, const tables::Hyperparams& hp) {
  const std::uint32_t K = hp.num_topics;
  const double bw = hp.beta_w(c.word_id());
  BucketMasses m;
  m.r.resize(K);
  m.s.resize(K);
  m.t.resize(K);
  for (TopicId k = 0; k < K; ++k) {
    const double inv = 1.0 / (c.topic(k) + hp.beta_bar);
    m.r[k] = hp.alpha_k(k) * bw * inv;
    m.s[k] = c.doc(k) * bw * inv;
    m.t[k] = (c.doc(k) + hp.alpha_k(k)) * c.word(k) * inv;
    m.r_sum += m.r[k];
    m.s_sum += m.s[k];
    m.t_sum += m.t[k];
  }
  return m;
}

/// AliasLDA's exact doc-sparse term mass Σ_k n_kd (n_kw+β_w)/(n_k+β̄).
template <TokenCounts C>
double aliaslda_u_mass(const C& c, const tables::Hyperparams& hp) {
  double u = 0;
  const double bw = hp.beta_w(c.word_id());
  for (TopicId k = 0; k < hp.num_topics; ++k) {
    u += c.doc(k) * (c.word(k) + bw) / (c.topic(k) + hp.beta_bar);
  }
  return u;
}

/// Builds the static α_k alias table of the doc proposal's prior component.
inline alias::AliasTable alpha_alias(const tables::Hyperparams& hp) {
  return alias::AliasTable(hp.alpha);
}

}  // namespace lightlda::samplers
