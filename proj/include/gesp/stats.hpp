#pragma once

// Order statistics and the two-sided Mann-Whitney U test, applied pointwise
// to aligned attainment series.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gesp/format.hpp"

namespace gesp {

// Linear interpolation between order statistics (Hyndman-Fan type 7).
inline double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q outside [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::span<const double> values) { return quantile(values, 0.5); }

enum class MannWhitneyMethod { Exact, Normal };

struct MannWhitneyResult {
  double u = 0.0;  // U statistic of the first sample
  double p_value = 1.0;
  MannWhitneyMethod method = MannWhitneyMethod::Exact;
};

namespace detail {

// Midranks of the pooled sample; also returns sum(t^3 - t) over tie groups.
inline std::vector<double> midranks(std::span<const double> pooled, double& tie_term) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> ranks(n);
  tie_term = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && pooled[idx[j + 1]] == pooled[idx[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  return ranks;
}

// Number of ways each U value in [0, n*m] arises among all C(n+m, n)
// arrangements of two tie-free samples.
inline std::vector<double> exact_u_counts(std::size_t n, std::size_t m) {
  // counts[i][j][u]: arrangements of i items from A and j from B with statistic u.
  // Rolled over j to keep memory at O(n * n*m).
  const std::size_t umax = n * m;
  std::vector<std::vector<double>> prev(n + 1, std::vector<double>(umax + 1, 0.0));
  for (std::size_t i = 0; i <= n; ++i) prev[i][0] = 1.0;  // j = 0
  for (std::size_t j = 1; j <= m; ++j) {
    std::vector<std::vector<double>> cur(n + 1, std::vector<double>(umax + 1, 0.0));
    cur[0][0] = 1.0;
    for (std::size_t i = 1; i <= n; ++i) {
      // Largest element comes from A (beats all j B items) or from B.
      for (std::size_t u = 0; u <= umax; ++u) {
        double c = prev[i][u];
        if (u >= j) c += cur[i - 1][u - j];
        cur[i][u] = c;
      }
    }
    prev = std::move(cur);
  }
  return prev[n];
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace detail

// Two-sided Mann-Whitney U test. Exact null distribution when the smaller
// sample has at most 8 values and there are no ties; otherwise the normal
// approximation with tie and continuity corrections.
inline MannWhitneyResult mann_whitney_two_sided(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mann_whitney: empty sample");
  for (double v : a) {
    if (!std::isfinite(v)) throw std::invalid_argument("mann_whitney: non-finite value");
  }
  for (double v : b) {
    if (!std::isfinite(v)) throw std::invalid_argument("mann_whitney: non-finite value");
  }
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  double tie_term = 0.0;
  const auto ranks = detail::midranks(pooled, tie_term);
  double rank_sum_a = 0.0;
  for (std::size_t i = 0; i < n; ++i) rank_sum_a += ranks[i];

  MannWhitneyResult res;
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  res.u = rank_sum_a - nd * (nd + 1.0) / 2.0;
  const double mean_u = nd * md / 2.0;

  const std::size_t total = n + m;
  if (tie_term == static_cast<double>(total) * static_cast<double>(total) * static_cast<double>(total) -
                      static_cast<double>(total)) {
    // Every value identical: no evidence either way.
    res.p_value = 1.0;
    res.method = MannWhitneyMethod::Normal;
    return res;
  }

  if (std::min(n, m) <= 8 && tie_term == 0.0) {
    res.method = MannWhitneyMethod::Exact;
    const auto counts = detail::exact_u_counts(n, m);
    const auto u_obs = static_cast<std::size_t>(std::llround(res.u));
    double le = 0.0, ge = 0.0, all = 0.0;
    for (std::size_t u = 0; u < counts.size(); ++u) {
      all += counts[u];
      if (u <= u_obs) le += counts[u];
      if (u >= u_obs) ge += counts[u];
    }
    res.p_value = std::min(1.0, 2.0 * std::min(le, ge) / all);
    return res;
  }

  res.method = MannWhitneyMethod::Normal;
  const double nt = nd + md;
  const double var = nd * md / 12.0 * ((nt + 1.0) - tie_term / (nt * (nt - 1.0)));
  const double diff = std::abs(res.u - mean_u);
  const double z = std::max(0.0, diff - 0.5) / std::sqrt(var);
  res.p_value = std::clamp(2.0 * detail::normal_sf(z), 0.0, 1.0);
  return res;
}

// One-sided variant: p-value for the alternative "a tends to be larger than b".
inline double mann_whitney_greater(std::span<const double> a, std::span<const double> b) {
  const auto two = mann_whitney_two_sided(a, b);
  const double mean_u = static_cast<double>(a.size()) * static_cast<double>(b.size()) / 2.0;
  if (two.u > mean_u) return two.p_value / 2.0;
  return std::min(1.0, 1.0 - two.p_value / 2.0);
}

struct PointwiseComparison {
  std::size_t checkpoint_budget = 0;
  std::optional<double> median_a, q25_a, q75_a;
  std::optional<double> median_b, q25_b, q75_b;
  std::optional<double> p_value;
  bool significant = false;
};

// One group of aligned series: group[rep][checkpoint], nullopt = no value yet.
using SeriesGroup = std::vector<std::vector<std::optional<double>>>;

inline std::vector<PointwiseComparison> compare_trajectories(std::span<const std::size_t> checkpoints,
                                                             const SeriesGroup& runs_a,
                                                             const SeriesGroup& runs_b,
                                                             double alpha = 0.01) {
  for (const auto* g : {&runs_a, &runs_b}) {
    for (const auto& s : *g) {
      if (s.size() != checkpoints.size()) throw std::invalid_argument("compare_trajectories: misaligned grids");
    }
  }
  std::vector<PointwiseComparison> out;
  out.reserve(checkpoints.size());
  std::vector<double> va, vb;
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    va.clear();
    vb.clear();
    for (const auto& s : runs_a) {
      if (s[c]) va.push_back(*s[c]);
    }
    for (const auto& s : runs_b) {
      if (s[c]) vb.push_back(*s[c]);
    }
    PointwiseComparison pc;
    pc.checkpoint_budget = checkpoints[c];
    if (!va.empty()) {
      pc.median_a = median(va);
      pc.q25_a = quantile(va, 0.25);
      pc.q75_a = quantile(va, 0.75);
    }
    if (!vb.empty()) {
      pc.median_b = median(vb);
      pc.q25_b = quantile(vb, 0.25);
      pc.q75_b = quantile(vb, 0.75);
    }
    if (va.size() >= 2 && vb.size() >= 2) {
      pc.p_value = mann_whitney_two_sided(va, vb).p_value;
      pc.significant = *pc.p_value < alpha;
    }
    out.push_back(pc);
  }
  return out;
}

inline std::string comparison_csv(std::span<const PointwiseComparison> rows) {
  std::string s = "checkpoint_budget,median_a,q25_a,q75_a,median_b,q25_b,q75_b,p_value,significant\n";
  for (const auto& r : rows) {
    s += std::to_string(r.checkpoint_budget);
    for (const auto* v : {&r.median_a, &r.q25_a, &r.q75_a, &r.median_b, &r.q25_b, &r.q75_b, &r.p_value}) {
      s += ',';
      s += format_optional(*v);
    }
    s += r.significant ? ",1\n" : ",0\n";
  }
  return s;
}

}  // namespace gesp
