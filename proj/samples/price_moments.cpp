// Simulates the one-factor seasonal model and compares sample moments with the closed forms.

#include <cmath>
#include <cstdio>

#include "resopt/price_models.hpp"
#include "resopt/stats.hpp"

int main() {
  using namespace resopt;
  const ForwardModel model{HjmParams::one_factor(0.08, 0.01), SeasonalCurve{30.0, {{5.0, 365.0}, {1.0, 7.0}}}, 1.0};
  const int n = 200000;
  std::printf("%5s %10s %10s %8s %12s %12s\n", "t", "F(0,t)", "mean", "s.e.", "var log S", "closed form");
  for (int t : {0, 7, 30, 90, 180, 364}) {
    const PathBatch b = sample_window(model, 42, 0, n, t, 1);
    std::vector<double> s(n), l(n);
    for (int p = 0; p < n; ++p) {
      s[p] = b.spot_at(p, 0);
      l[p] = std::log(s[p]);
    }
    const SimulationResult m = mean_and_error(s), lm = mean_and_error(l);
    std::printf("%5d %10.4f %10.4f %8.4f %12.6f %12.6f\n", t, model.forward(t), m.mean, m.std_error,
                lm.std_error * lm.std_error * n, model.log_variance(t));
  }
}
