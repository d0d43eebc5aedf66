#pragma once

#include "contactforge/core.hpp"
#include "contactforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace contactforge {

/// How far a sample's contact pattern departs from the dataset mean:
/// s = (1/V) (cᵀ(1 − c̄) − cᵀc̄). Always in [−1, 1]; 0 for an empty sample.
inline double contact_balance_score(std::span<const std::uint8_t> contact, std::span<const double> contact_mean) {
  require_same_size(contact.size(), contact_mean.size(), "contact_balance_score");
  if (contact.empty())
    return 0.0;
  double acc = 0.0;
  for (std::size_t v = 0; v < contact.size(); ++v)
    if (contact[v])
      acc += (1.0 - contact_mean[v]) - contact_mean[v];
  return acc / static_cast<double>(contact.size());
}

inline std::vector<double> contact_balance_scores(const ContactDataset &ds) {
  std::vector<double> s(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    s[i] = contact_balance_score(ds[i].contact, ds.contact_mean());
  return s;
}

struct BinEdges {
  std::vector<double> edges; // K + 1 values
  bool degenerate = false;   // s_min == s_max: one bin holds everything

  std::size_t bin_count() const { return edges.size() - 1; }
};

/// Logarithmically spaced edges τ_k = s_min + (s_max − s_min)·ln(1 + βk/K)/ln(1 + β),
/// which narrow toward s_max. β is the curvature.
inline BinEdges compute_bin_edges(double s_min, double s_max, std::size_t bins, double curvature) {
  if (bins < 2)
    throw std::invalid_argument("bin count must be >= 2");
  if (!(curvature > 0.0) || !std::isfinite(curvature))
    throw std::invalid_argument("curvature must be positive");
  if (!std::isfinite(s_min) || !std::isfinite(s_max) || s_max < s_min)
    throw std::invalid_argument("score range must satisfy s_min <= s_max");
  if (s_max == s_min)
    return {{s_min, s_max}, true};

  BinEdges out;
  out.edges.resize(bins + 1);
  const double denom = std::log1p(curvature);
  const double range = s_max - s_min;
  for (std::size_t k = 0; k <= bins; ++k) {
    const double x = static_cast<double>(k) / static_cast<double>(bins);
    out.edges[k] = s_min + range * (std::log1p(curvature * x) / denom);
  }
  out.edges.front() = s_min;
  out.edges.back() = s_max;
  return out;
}

/// Sample i joins bin k when τ_k <= s_i < τ_{k+1}; the last bin is closed on
/// the right. Bins are 0-based.
inline std::vector<std::vector<std::size_t>> assign_bins(std::span<const double> scores, const BinEdges &edges) {
  const std::size_t k_bins = edges.bin_count();
  std::vector<std::vector<std::size_t>> bins(k_bins);
  const double lo = edges.edges.front(), hi = edges.edges.back();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (!(s >= lo && s <= hi))
      throw std::invalid_argument("score " + format_double(s) + " of sample " + std::to_string(i) +
                                  " lies outside the bin range");
    std::size_t k;
    if (edges.degenerate || s == hi) {
      k = k_bins - 1;
    } else {
      const auto it = std::upper_bound(edges.edges.begin(), edges.edges.end(), s);
      k = static_cast<std::size_t>(it - edges.edges.begin()) - 1;
    }
    bins[k].push_back(i);
  }
  return bins;
}

struct ResampledIndex {
  std::size_t sample = 0;
  std::size_t bin = 0;

  friend bool operator==(const ResampledIndex &, const ResampledIndex &) = default;
};

/// Draws `total` indices so that every non-empty bin contributes
/// ⌊total/K'⌋ or ⌈total/K'⌉ of them (the first total mod K' non-empty bins
/// get the extra one). Bins larger than their quota are subsampled without
/// replacement; smaller bins repeat every member ⌊quota/size⌋ times and fill
/// the remainder without replacement. The result is shuffled.
inline std::vector<ResampledIndex> stratified_resample(const std::vector<std::vector<std::size_t>> &bins,
                                                       std::size_t total, std::uint64_t seed) {
  std::vector<std::size_t> live;
  for (std::size_t k = 0; k < bins.size(); ++k)
    if (!bins[k].empty())
      live.push_back(k);
  if (live.empty())
    throw std::invalid_argument("stratified_resample: all bins are empty");
  if (total < bins.size())
    throw std::invalid_argument("stratified_resample: total (" + std::to_string(total) +
                                ") must be at least the bin count (" + std::to_string(bins.size()) + ")");

  std::mt19937_64 rng(seed);
  std::vector<ResampledIndex> out;
  out.reserve(total);
  const std::size_t base = total / live.size();
  const std::size_t extra = total % live.size();
  for (std::size_t j = 0; j < live.size(); ++j) {
    const auto &members = bins[live[j]];
    const std::size_t quota = base + (j < extra ? 1 : 0);
    std::vector<std::size_t> pool(members);
    const std::size_t copies = quota / pool.size();
    for (std::size_t c = 0; c < copies; ++c)
      for (std::size_t m : pool)
        out.push_back({m, live[j]});
    const std::size_t rest = quota % pool.size();
    for (std::size_t r = 0; r < rest; ++r) {
      std::uniform_int_distribution<std::size_t> pick(r, pool.size() - 1);
      std::swap(pool[r], pool[pick(rng)]);
      out.push_back({pool[r], live[j]});
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

/// Scores, edges, bins, and the resampled index stream for one dataset.
struct SamplingPlan {
  std::vector<double> scores;
  BinEdges edges;
  double curvature = 5.0;
  std::vector<std::vector<std::size_t>> bins;
  std::vector<ResampledIndex> resampled;

  std::size_t bin_count() const { return bins.size(); }

  /// Fresh draw from the same bins (per-epoch regeneration).
  std::vector<ResampledIndex> redraw(std::size_t total, std::uint64_t seed) const {
    return stratified_resample(bins, total, seed);
  }
};

inline constexpr std::size_t kDefaultBinCount = 8;
inline constexpr double kDefaultCurvature = 5.0;

/// Balanced contact sampling over a whole dataset.
inline SamplingPlan build_sampling_plan(const ContactDataset &ds, std::size_t bins, double curvature,
                                        std::size_t total, std::uint64_t seed) {
  SamplingPlan plan;
  plan.curvature = curvature;
  plan.scores = contact_balance_scores(ds);
  const auto [mn, mx] = std::minmax_element(plan.scores.begin(), plan.scores.end());
  plan.edges = compute_bin_edges(*mn, *mx, bins, curvature);
  plan.bins = assign_bins(plan.scores, plan.edges);
  plan.resampled = stratified_resample(plan.bins, total, seed);
  return plan;
}

/// Plain shuffled passes over all samples, no rebalancing. Single bin.
inline SamplingPlan build_uniform_plan(std::size_t sample_count, std::size_t total, std::uint64_t seed) {
  if (sample_count == 0)
    throw std::invalid_argument("uniform plan needs at least one sample");
  SamplingPlan plan;
  plan.edges = {{0.0, 0.0}, true};
  plan.bins.assign(1, std::vector<std::size_t>(sample_count));
  std::iota(plan.bins[0].begin(), plan.bins[0].end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm = plan.bins[0];
  while (plan.resampled.size() < total) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i : perm) {
      if (plan.resampled.size() == total)
        break;
      plan.resampled.push_back({i, 0});
    }
  }
  return plan;
}

/// `position,sample_index,bin` rows (0-based).
inline std::string format_plan_csv(std::span<const ResampledIndex> seq) {
  std::string out = "position,sample_index,bin\n";
  for (std::size_t i = 0; i < seq.size(); ++i)
    out += std::to_string(i) + "," + std::to_string(seq[i].sample) + "," + std::to_string(seq[i].bin) + "\n";
  return out;
}

inline std::vector<ResampledIndex> parse_plan_csv(std::string_view text, const std::string &source = "<plan>") {
  std::vector<ResampledIndex> seq;
  std::size_t line_no = 0;
  for (const auto &raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty())
      continue;
    if (line_no == 1 && line == "position,sample_index,bin")
      continue;
    const auto cols = split(line, ',');
    std::size_t pos = 0;
    ResampledIndex r;
    if (cols.size() != 3 || !parse_int(cols[0], pos) || !parse_int(cols[1], r.sample) || !parse_int(cols[2], r.bin))
      throw DataError(source, line_no, "expected 'position,sample_index,bin'");
    if (pos != seq.size())
      throw DataError(source, line_no, "positions must be consecutive from 0");
    seq.push_back(r);
  }
  if (seq.empty())
    throw DataError(source, line_no, "plan is empty");
  return seq;
}

} // namespace contactforge
