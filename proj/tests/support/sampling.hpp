#pragma once

#include <cmath>
#include <random>
#include <vector>

// Shared sampling helpers for property tests.
namespace testsupport {

inline std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> g(points);
  const double la = std::log(lo), lb = std::log(hi);
  for (int i = 0; i < points; ++i)
    g[i] = std::exp(la + (lb - la) * i / (points - 1));
  return g;
}

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

}  // namespace testsupport
