// Trains a per-date policy and a merged policy on a 30-day storage and compares both with the
// regression DP reference.

#include <cstdio>

#include "resopt/dp_reference.hpp"
#include "resopt/gv_trainer.hpp"

int main() {
  using namespace resopt;
  const int n = 30;
  const ForwardModel model{HjmParams::one_factor(0.08, 0.01), SeasonalCurve{30.0, {{5.0, double(n)}, {1.0, 7.0}}}, 1.0};
  const StorageSpec storage;

  DpConfig dp;
  dp.n_steps = n;
  dp.mode = DpMode::Value;
  const BellmanTable table = solve_dp(model, storage, dp);
  const SimulationResult ref = simulate_dp_policy(table, model, 100000, 7);
  std::printf("DP reference: optimization %.1f, simulated %.1f +- %.1f\n", table.value, ref.mean, ref.std_error);

  for (PolicyKind kind : {PolicyKind::PerStep, PolicyKind::Merged}) {
    GvConfig c;
    c.model = model;
    c.storage = storage;
    c.horizon = n;
    c.policy.kind = kind;
    c.iterations = 3000;
    c.eval_paths = 20000;
    const TrainedPolicy tp = train_gv(c);
    const EvalResult e = evaluate_policy(tp);
    std::printf("%-9s %.1f +- %.1f (%.2f%% of DP) in %.1f s\n", to_string(kind), e.mean, e.std_error,
                100.0 * e.mean / ref.mean, tp.train_seconds);
  }
}
