#pragma once

// Independent reference computations used only by tests. Nothing here
// shares code with the library paths it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <vector>

namespace tmrec::oracle {

/// AP@k straight from the definition, recounting precision at every rank.
inline double naive_ap(const std::vector<int>& ranked, const std::set<int>& relevant, int k) {
  if (relevant.empty()) return 0.0;
  double total = 0.0;
  for (int i = 1; i <= k && i <= static_cast<int>(ranked.size()); ++i) {
    if (!relevant.count(ranked[i - 1])) continue;
    int hits_in_prefix = 0;
    for (int j = 0; j < i; ++j) hits_in_prefix += relevant.count(ranked[j]) ? 1 : 0;
    total += static_cast<double>(hits_in_prefix) / i;
  }
  const int norm = std::min(static_cast<int>(relevant.size()), k);
  return total / norm;
}

/// Exact Shapley values of the interventional game
///   v(S) = mean_b f(x_S, b_rest)
/// by enumerating every coalition (n <= ~12).
inline std::vector<double> exact_shapley(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<std::vector<double>>& background, const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  const std::uint32_t full = 1U << n;
  std::vector<double> value(full, 0.0);
  for (std::uint32_t mask = 0; mask < full; ++mask) {
    double sum = 0.0;
    for (const auto& b : background) {
      std::vector<double> z = b;
      for (int i = 0; i < n; ++i) {
        if (mask & (1U << i)) z[i] = x[i];
      }
      sum += f(z);
    }
    value[mask] = sum / static_cast<double>(background.size());
  }
  std::vector<double> fact(n + 1, 1.0);
  for (int i = 1; i <= n; ++i) fact[i] = fact[i - 1] * i;
  std::vector<double> phi(n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (std::uint32_t mask = 0; mask < full; ++mask) {
      if (mask & (1U << i)) continue;
      const int s = __builtin_popcount(mask);
      const double w = fact[s] * fact[n - s - 1] / fact[n];
      phi[i] += w * (value[mask | (1U << i)] - value[mask]);
    }
  }
  return phi;
}

/// Central finite difference of a scalar function of one parameter.
inline double central_difference(const std::function<double(double)>& f, double at, double h) {
  return (f(at + h) - f(at - h)) / (2.0 * h);
}

}  // namespace tmrec::oracle
