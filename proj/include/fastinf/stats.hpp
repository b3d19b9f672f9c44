#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "fastinf/errors.hpp"

namespace fastinf {

struct CorrelationReport {
  double pearson = 0.0;
  double spearman = 0.0;
  double kendall = 0.0;  // tau-b
  std::size_t n = 0;
};

namespace detail {

inline double pearson_raw(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0 || sbb <= 0) throw DegenerateInputError("correlation undefined: zero variance");
  return sab / std::sqrt(saa * sbb);
}

// Average ranks with ties averaged.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0 && db == 0) continue;
      if (da == 0) { ++ties_a; continue; }
      if (db == 0) { ++ties_b; continue; }
      (da * db > 0 ? concordant : discordant) += 1;
    }
  const double n0a = static_cast<double>(concordant + discordant + ties_a);
  const double n0b = static_cast<double>(concordant + discordant + ties_b);
  if (n0a <= 0 || n0b <= 0) throw DegenerateInputError("kendall tau-b undefined: all pairs tied");
  return static_cast<double>(concordant - discordant) / std::sqrt(n0a * n0b);
}

}  // namespace detail

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ConfigError("correlation needs two equal-length sequences, n >= 2");
  return detail::pearson_raw(a, b);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ConfigError("correlation needs two equal-length sequences, n >= 2");
  return detail::pearson_raw(detail::average_ranks(a), detail::average_ranks(b));
}

inline double kendall(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ConfigError("correlation needs two equal-length sequences, n >= 2");
  return detail::kendall_tau_b(a, b);
}

inline CorrelationReport correlate(const std::vector<double>& a, const std::vector<double>& b) {
  CorrelationReport r;
  r.pearson = pearson(a, b);
  r.spearman = spearman(a, b);
  r.kendall = kendall(a, b);
  r.n = a.size();
  return r;
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace fastinf
