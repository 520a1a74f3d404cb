#pragma once

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "assimlab/error.hpp"

namespace assimlab::metrics {

/// Ensemble CRPS: mean |x* - x_i| - (1 / 2M^2) sum_ij |x_i - x_j|.
/// The pairwise term uses the sorted-order identity, O(M log M).
inline double crps_ensemble(std::span<const double> members, double truth) {
  if (members.empty()) throw ContractError("crps_ensemble: empty ensemble");
  const auto m = static_cast<double>(members.size());
  std::vector<double> x(members.begin(), members.end());
  std::sort(x.begin(), x.end());
  double abs_err = 0.0;
  double pair = 0.0;  // sum over i<j of (x_j - x_i)
  for (std::size_t k = 0; k < x.size(); ++k) {
    abs_err += std::abs(truth - x[k]);
    pair += x[k] * (2.0 * static_cast<double>(k) - m + 1.0);
  }
  return std::max(0.0, abs_err / m - pair / (m * m));
}

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Closed-form CRPS of N(mu, sigma^2) against a scalar truth.
inline double crps_gaussian(double mu, double sigma, double truth) {
  if (!(sigma > 0.0)) throw ContractError("crps_gaussian: sigma must be > 0");
  const double z = (truth - mu) / sigma;
  return sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::sqrt(std::numbers::pi));
}

struct MeanSpread {
  double mean = 0.0;
  double spread = 0.0;
};

/// Ensemble mean and sample standard deviation (zero for a single member).
inline MeanSpread ensemble_moments(std::span<const double> members) {
  if (members.empty()) throw ContractError("ensemble_moments: empty ensemble");
  const auto m = static_cast<double>(members.size());
  const double mean = std::accumulate(members.begin(), members.end(), 0.0) / m;
  if (members.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : members) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (m - 1.0))};
}

enum class SsrelWeighting { CountWeighted, Unweighted };

struct SpreadSkillBin {
  double lo = 0.0;
  double hi = 0.0;
  double spread = 0.0;  // root-mean predictive variance in the bin
  double skill = 0.0;   // RMSE of predictive means in the bin
  std::size_t count = 0;
};

struct SpreadSkillTable {
  std::vector<SpreadSkillBin> bins;
  double spread = 0.0;
  double skill = 0.0;
  double ssrat = 0.0;
  double ssrel = 0.0;
  std::size_t total = 0;
  std::size_t dropped_bins = 0;
};

/// Spread-skill table over cells with predictive mean, spread (std) and truth.
/// Bins hold equal counts of cells sorted by spread; empty bins are dropped.
inline SpreadSkillTable spread_skill(std::span<const double> means, std::span<const double> spreads,
                                     std::span<const double> truths, std::size_t n_bins = 20,
                                     SsrelWeighting weighting = SsrelWeighting::CountWeighted) {
  const std::size_t total = means.size();
  if (total == 0) throw ContractError("spread_skill: no cells");
  if (spreads.size() != total || truths.size() != total) throw ContractError("spread_skill: length mismatch");
  if (n_bins == 0) throw ContractError("spread_skill: n_bins must be >= 1");

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return spreads[a] < spreads[b]; });

  SpreadSkillTable t;
  t.total = total;
  double var_sum = 0.0, err_sum = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    const std::size_t begin = b * total / n_bins;
    const std::size_t end = (b + 1) * total / n_bins;
    if (begin == end) {
      ++t.dropped_bins;
      continue;
    }
    SpreadSkillBin bin;
    bin.lo = spreads[order[begin]];
    bin.hi = spreads[order[end - 1]];
    bin.count = end - begin;
    double v = 0.0, e = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t c = order[k];
      v += spreads[c] * spreads[c];
      e += (means[c] - truths[c]) * (means[c] - truths[c]);
    }
    var_sum += v;
    err_sum += e;
    bin.spread = std::sqrt(v / static_cast<double>(bin.count));
    bin.skill = std::sqrt(e / static_cast<double>(bin.count));
    t.bins.push_back(bin);
  }
  t.spread = std::sqrt(var_sum / static_cast<double>(total));
  t.skill = std::sqrt(err_sum / static_cast<double>(total));
  t.ssrat = t.skill > 0.0 ? t.spread / t.skill : std::numeric_limits<double>::infinity();
  for (const auto& bin : t.bins) {
    const double w = weighting == SsrelWeighting::CountWeighted
                         ? static_cast<double>(bin.count) / static_cast<double>(total)
                         : 1.0;
    t.ssrel += w * std::abs(bin.spread - bin.skill);
  }
  return t;
}

/// Summary of a probabilistic prediction against truth over many cells.
struct Scores {
  double crps = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  SpreadSkillTable table;
};

/// Gaussian predictions: CRPS by the closed form.
inline Scores score_gaussian(std::span<const double> mu, std::span<const double> sigma, std::span<const double> truth,
                             std::size_t n_bins = 20, SsrelWeighting w = SsrelWeighting::CountWeighted) {
  Scores s;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    s.crps += crps_gaussian(mu[i], sigma[i], truth[i]);
    s.mae += std::abs(mu[i] - truth[i]);
  }
  s.crps /= static_cast<double>(mu.size());
  s.mae /= static_cast<double>(mu.size());
  s.table = spread_skill(mu, sigma, truth, n_bins, w);
  s.rmse = s.table.skill;
  return s;
}

/// Ensemble predictions: `members` is cells x M, row-major.
inline Scores score_ensemble(std::span<const double> members, std::size_t m, std::span<const double> truth,
                             std::size_t n_bins = 20, SsrelWeighting w = SsrelWeighting::CountWeighted) {
  if (m == 0 || members.size() != m * truth.size()) throw ContractError("score_ensemble: shape mismatch");
  Scores s;
  std::vector<double> means(truth.size()), spreads(truth.size());
  for (std::size_t c = 0; c < truth.size(); ++c) {
    auto row = members.subspan(c * m, m);
    s.crps += crps_ensemble(row, truth[c]);
    const auto ms = ensemble_moments(row);
    means[c] = ms.mean;
    spreads[c] = ms.spread;
    s.mae += std::abs(ms.mean - truth[c]);
  }
  s.crps /= static_cast<double>(truth.size());
  s.mae /= static_cast<double>(truth.size());
  s.table = spread_skill(means, spreads, truth, n_bins, w);
  s.rmse = s.table.skill;
  return s;
}

}  // namespace assimlab::metrics
