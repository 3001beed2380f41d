#include <gtest/gtest.h>

#include "resopt/rng.hpp"
#include "resopt/storage.hpp"

using namespace resopt;

namespace {
const StorageSpec kSpec{5.0, 10.0, 100.0, 50.0};
}

TEST(EffectiveBounds, Examples) {
  EXPECT_EQ(effective_bounds({0.0}, {kSpec}).cw_hat[0], 0.0);
  EXPECT_EQ(effective_bounds({100.0}, {kSpec}).ci_hat[0], 0.0);
  EXPECT_DOUBLE_EQ(effective_bounds({98.0}, {kSpec}).ci_hat[0], 2.0);
  EXPECT_DOUBLE_EQ(effective_bounds({3.0}, {kSpec}).cw_hat[0], 3.0);
  EXPECT_THROW(effective_bounds({101.0}, {kSpec}), std::invalid_argument);
  EXPECT_THROW(effective_bounds({-1.0}, {kSpec}), std::invalid_argument);
}

TEST(EffectiveBounds, LipschitzAndPiecewiseLinear) {
  const CounterRng rng(3);
  const double h = 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const double q = 1e-3 + (100.0 - 2e-3) * rng.uniform(0, i);
    const auto lo = effective_bounds({q - h}, {kSpec});
    const auto hi = effective_bounds({q + h}, {kSpec});
    const double dci = (hi.ci_hat[0] - lo.ci_hat[0]) / (2 * h);
    const double dcw = (hi.cw_hat[0] - lo.cw_hat[0]) / (2 * h);
    EXPECT_LE(std::abs(dci), 1.0 + 1e-6);
    EXPECT_LE(std::abs(dcw), 1.0 + 1e-6);
    // Away from kinks the slope is exactly 0 or -1 / +1.
    if (std::abs(q - 95.0) > 1e-3) {
      EXPECT_NEAR(dci, q > 95.0 ? -1.0 : 0.0, 1e-6);
    }
    if (std::abs(q - 10.0) > 1e-3) {
      EXPECT_NEAR(dcw, q < 10.0 ? 1.0 : 0.0, 1e-6);
    }
  }
}

TEST(ControlFromUnit, Examples) {
  const FlowBounds b{{10.0}, {5.0}};
  EXPECT_DOUBLE_EQ(control_from_unit(b, {0.0})[0], -10.0);
  EXPECT_DOUBLE_EQ(control_from_unit(b, {1.0})[0], 5.0);
  EXPECT_DOUBLE_EQ(control_from_unit(b, {0.5})[0], -2.5);
  EXPECT_THROW(control_from_unit(b, {1.5}), std::invalid_argument);
}

TEST(ApplyControl, Examples) {
  EXPECT_EQ(apply_control({50.0}, {0.0})[0], 50.0);
  EXPECT_EQ(apply_control({50.0}, {-10.0})[0], 40.0);
}

TEST(ApplyControl, RandomUnitSequencesStayAdmissible) {
  const CounterRng rng(99);
  const std::vector<StorageSpec> specs(3, kSpec);
  for (int path = 0; path < 200; ++path) {
    StockVector q(3, 50.0);
    for (int step = 0; step < 365; ++step) {
      std::vector<double> phi(3);
      for (int j = 0; j < 3; ++j) phi[j] = rng.uniform(path, step * 3 + j) < 0.5 ? 0.0 : 1.0;
      if (step % 3 == 0) phi[1] = rng.uniform(path + 1000, step);
      q = apply_control(q, control_from_unit(effective_bounds(q, specs), phi));
      for (double v : q) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 100.0);
      }
    }
  }
}

TEST(ApplyControl, HalfUnitIsStationaryInTheInterior) {
  const StorageSpec sym{8.0, 8.0, 100.0, 50.0};
  for (double q = 8.0; q <= 92.0; q += 4.0) {
    const auto u = control_from_unit(effective_bounds({q}, {sym}), {0.5});
    EXPECT_DOUBLE_EQ(apply_control({q}, u)[0], q);
  }
}

TEST(StepCashflow, Examples) {
  EXPECT_EQ(step_cashflow(30.0, {0.0}), 0.0);
  EXPECT_DOUBLE_EQ(step_cashflow(30.0, {-10.0}), 300.0);
  EXPECT_DOUBLE_EQ(step_cashflow(30.0, {-10.0}, PriceImpact{0.2, 1}), 280.0);
}

TEST(TapeStorage, MatchesScalarDynamics) {
  const std::vector<StorageSpec> specs{kSpec, StorageSpec{10.0, 20.0, 100.0, 50.0}};
  TapeStorage ts(specs);
  ad::Tape tape;
  ad::Mat q(2, 4), phi(2, 4), spot(1, 4);
  q << 0.0, 3.0, 98.0, 50.0, 100.0, 15.0, 85.0, 40.0;
  phi << 0.1, 0.9, 0.5, 0.0, 0.2, 0.7, 1.0, 0.3;
  spot << 30.0, 25.0, 40.0, 33.0;
  auto qv = tape.constant(q);
  auto [u, next] = ts.step(tape, qv, tape.constant(phi));
  auto cash = TapeStorage::cashflow(tape, tape.constant(spot), u, PriceImpact{0.2, 2});
  for (int b = 0; b < 4; ++b) {
    const StockVector qs{q(0, b), q(1, b)};
    const auto uu = control_from_unit(effective_bounds(qs, specs), {phi(0, b), phi(1, b)});
    EXPECT_NEAR(tape.value(u)(0, b), uu[0], 1e-12);
    EXPECT_NEAR(tape.value(u)(1, b), uu[1], 1e-12);
    EXPECT_NEAR(tape.value(next)(1, b), qs[1] + uu[1], 1e-12);
    EXPECT_NEAR(tape.value(cash)(0, b), step_cashflow(spot(0, b), uu, PriceImpact{0.2, 2}), 1e-9);
  }
}
