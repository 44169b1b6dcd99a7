#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "lightlda/common.hpp"

namespace lightlda::alias {

struct AliasBin {
  double split = 1.0;     // retained mass of this bin, in [0, 1]
  std::uint32_t alias = 0;
};

/// Two-worklist construction into `bins` (same length as `weights`).
/// Returns the total mass. `small`/`large` are caller-owned scratch.
inline double build_alias_bins(std::span<const double> weights, std::span<AliasBin> bins,
                               std::vector<std::uint32_t>& small,
                               std::vector<std::uint32_t>& large,
                               std::vector<double>& scaled) {
  const auto n = static_cast<std::uint32_t>(weights.size());
  if (n == 0) throw InvariantViolation("alias table needs at least one weight");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvariantViolation("alias weights must be finite and nonnegative");
    }
    total += w;
  }
  if (!(total > 0.0)) throw InvariantViolation("alias weights are all zero");

  scaled.resize(n);
  small.clear();
  large.clear();
  const double scale = n / total;
  for (std::uint32_t i = 0; i < n; ++i) {
    scaled[i] = weights[i] * scale;
    if (scaled[i] <= 1.0) {
      small.push_back(i);
    } else {
      large.push_back(i);
    }
  }
  while (!small.empty() && !large.empty()) {
    const std::uint32_t l = small.back();
    small.pop_back();
    const std::uint32_t g = large.back();
    bins[l] = {scaled[l], g};
    scaled[g] = (scaled[g] + scaled[l]) - 1.0;
    if (scaled[g] <= 1.0) {
      large.pop_back();
      small.push_back(g);
    }
  }
  for (std::uint32_t i : small) bins[i] = {1.0, i};
  for (std::uint32_t i : large) bins[i] = {1.0, i};
  return total;
}

/// Draw with two uniforms: bin = floor(u1 * n), keep it if u2 < split.
inline std::uint32_t draw_bins(std::span<const AliasBin> bins, double u1, double u2) {
  const auto n = static_cast<std::uint32_t>(bins.size());
  std::uint32_t bin = static_cast<std::uint32_t>(u1 * n);
  if (bin >= n) bin = n - 1;
  return u2 < bins[bin].split ? bin : bins[bin].alias;
}

/// Draw with one 64-bit variate: the high part of x*n picks the bin and the
/// low 64 bits serve as the threshold.
inline std::uint32_t draw_bins(std::span<const AliasBin> bins, std::uint64_t x) {
  const auto prod = static_cast<unsigned __int128>(x) * bins.size();
  const auto bin = static_cast<std::uint32_t>(prod >> 64);
  const double u2 = static_cast<double>(static_cast<std::uint64_t>(prod) >> 11) * 0x1.0p-53;
  return u2 < bins[bin].split ? bin : bins[bin].alias;
}

/// Normalized probability of every outcome implied by the bins.
inline std::vector<double> reconstruct_bins(std::span<const AliasBin> bins) {
  const double n = static_cast<double>(bins.size());
  std::vector<double> p(bins.size(), 0.0);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    p[i] += bins[i].split / n;
    p[bins[i].alias] += (1.0 - bins[i].split) / n;
  }
  return p;
}

/// Walker alias table over a fixed weight vector.
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(std::span<const double> weights) { build(weights); }

  void build(std::span<const double> weights) {
    bins_.resize(weights.size());
    total_ = build_alias_bins(weights, bins_, small_, large_, scaled_);
  }

  std::uint32_t size() const { return static_cast<std::uint32_t>(bins_.size()); }
  double total_mass() const { return total_; }
  std::span<const AliasBin> bins() const { return bins_; }

  std::uint32_t draw(double u1, double u2) const { return draw_bins(bins_, u1, u2); }
  std::uint32_t draw(Rng& rng) const { return draw_bins(bins_, rng.next()); }

  std::vector<double> reconstruct() const { return reconstruct_bins(bins_); }

 private:
  std::vector<AliasBin> bins_;
  double total_ = 0.0;
  std::vector<std::uint32_t> small_, large_;
  std::vector<double> scaled_;
};

}  // namespace lightlda::alias
