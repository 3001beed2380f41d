#pragma once

// Finite-difference oracle for tape gradients (test-only).

#include <cmath>
#include <functional>
#include <string>

#include "resopt/autodiff.hpp"

namespace resopt::testutil {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  int kinks = 0;
  std::string worst;
};

/// `loss` rebuilds the tape from the current store values and returns the scalar node value;
/// when `backward` is true it must also run tape.backward into store.grads().
/// Coordinates whose one-sided differences disagree (a kink within +-h) are skipped and counted.
inline GradCheckResult grad_check(ad::ParamStore& store, const std::function<double(bool)>& loss, double h = 1e-5,
                                  double floor = 1e-5) {
  store.zero_grad();
  const double f0 = loss(true);
  const std::vector<double> analytic = store.grads();
  GradCheckResult r;
  auto& x = store.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = loss(false);
    x[i] = keep - h;
    const double fm = loss(false);
    x[i] = keep;
    const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
    const double scale = std::max({std::abs(fwd), std::abs(bwd), 1.0});
    if (std::abs(fwd - bwd) > 1e-3 * scale) {
      ++r.kinks;
      continue;
    }
    const double numeric = (fp - fm) / (2 * h);
    const double rel = std::abs(numeric - analytic[i]) / std::max({std::abs(numeric), std::abs(analytic[i]), floor});
    ++r.checked;
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst = "coord " + std::to_string(i) + " analytic=" + std::to_string(analytic[i]) +
                " numeric=" + std::to_string(numeric);
    }
  }
  return r;
}

}  // namespace resopt::testutil
