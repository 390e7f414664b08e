#pragma once

// Kolmogorov-Smirnov distances used to compare simulators and chain marginals.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace coalgp {

// sup |F_a - F_b| between two empirical CDFs.
inline auto ks_distance(std::vector<double> a, std::vector<double> b) -> double {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument{"KS distance of an empty sample"};
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  auto na = static_cast<double>(a.size());
  auto nb = static_cast<double>(b.size());
  auto i = std::size_t{0};
  auto j = std::size_t{0};
  auto d = 0.0;
  while (i < a.size() && j < b.size()) {
    auto x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) {
      ++i;
    }
    while (j < b.size() && b[j] == x) {
      ++j;
    }
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// sup |F_n - F| against a continuous CDF.
template <typename Cdf>
auto ks_distance(std::vector<double> sample, Cdf&& cdf) -> double {
  if (sample.empty()) {
    throw std::invalid_argument{"KS distance of an empty sample"};
  }
  std::sort(sample.begin(), sample.end());
  auto n = static_cast<double>(sample.size());
  auto d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    auto f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace coalgp
