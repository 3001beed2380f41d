#pragma once

#include <cmath>
#include <vector>

namespace resopt {

struct SimulationResult {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Two-pass sample mean and standard error of the mean.
inline SimulationResult mean_and_error(const std::vector<double>& v) {
  SimulationResult r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() < 2) return r;
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return r;
}

}  // namespace resopt
