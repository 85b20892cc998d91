// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "d2ft/cost_sim.hpp"
#include "d2ft/rng.hpp"

using namespace d2ft;

namespace {

/// One-device table with the given operation counts, p_f cells first.
ScheduleTable row_with_counts(int n_full, int n_fwd, int n_shortcut) {
  ScheduleTable t(1, n_full + n_fwd + n_shortcut);
  for (int i = 0; i < n_full; ++i) t.set_code(0, i, 1);
  for (int i = n_full; i < n_full + n_fwd; ++i) t.set_code(0, i, 2);
  return t;
}

}  // namespace

TEST_CASE("compute cost fraction reproduces the forward-only effectiveness ladder") {
  CostModel cm;  // cf=2, cb=3
  const double expected[] = {0.20, 0.28, 0.36, 0.44, 0.52};
  for (int n_po = 0; n_po <= 4; ++n_po) {
    ScheduleTable t = row_with_counts(1, n_po, 4 - n_po);
    CHECK(compute_cost_fraction(t, cm) == expected[n_po]);
  }
  ScheduleTable all_full = row_with_counts(5, 0, 0);
  CHECK(compute_cost_fraction(all_full, cm) == 1.0);
}

TEST_CASE("communication cost fraction reproduces the reference settings") {
  CHECK(comm_cost_fraction(row_with_counts(2, 1, 2)) == 0.5);
  CHECK(comm_cost_fraction(row_with_counts(3, 1, 1)) == 0.7);
  CHECK(comm_cost_fraction(row_with_counts(3, 2, 0)) == 0.8);
  CHECK(comm_cost_fraction(row_with_counts(0, 0, 5)) == 0.0);
  CHECK(comm_cost_fraction(row_with_counts(5, 0, 0)) == 1.0);
}

TEST_CASE("workload variance") {
  CostModel cm;

  SUBCASE("uniform budgets balance exactly") {
    ScheduleTable t(4, 5);
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < 3; ++i) t.set_code(k, i, 1);
    CHECK(workload_variance(t, cm) == 0.0);
  }

  SUBCASE("one loaded and one idle device give the two-point variance") {
    ScheduleTable t(2, 5);
    for (int i = 0; i < 5; ++i) t.set_code(0, i, 1);
    CHECK(workload_variance(t, cm) == 0.25);
  }

  SUBCASE("matches a direct-summation oracle on random tables") {
    auto rng = make_rng(31337, 0);
    for (int trial = 0; trial < 20; ++trial) {
      ScheduleTable t(3, 6);
      for (int k = 0; k < 3; ++k)
        for (int i = 0; i < 6; ++i)
          t.set_code(k, i, static_cast<std::uint8_t>(1 + uniform_below(rng, 3)));
      std::vector<double> loads;
      for (int k = 0; k < 3; ++k) {
        double units = 0;
        for (int i = 0; i < 6; ++i) {
          if (t.code(k, i) == 1) units += 5;
          else if (t.code(k, i) == 2) units += 2;
        }
        loads.push_back(units / 30.0);
      }
      double mean = (loads[0] + loads[1] + loads[2]) / 3.0;
      double ref = 0;
      for (double l : loads) ref += (l - mean) * (l - mean);
      ref /= 3.0;
      CHECK(workload_variance(t, cm) == ref);
    }
  }

  SUBCASE("fixed per-row counts balance even for random cell placement") {
    auto rng = make_rng(555, 0);
    ScheduleTable t(4, 5);
    for (int k = 0; k < 4; ++k) {
      std::vector<int> perm = {0, 1, 2, 3, 4};
      shuffle(perm, rng);
      t.set_code(k, perm[0], 1);
      t.set_code(k, perm[1], 1);
      t.set_code(k, perm[2], 2);
    }
    CHECK(workload_variance(t, cm) == 0.0);
  }
}

TEST_CASE("device timing table") {
  DeviceProfile p = DeviceProfile::standard(0);

  SUBCASE("calibrated entries are exact") {
    CHECK(p.time_ms(1, true) == 2.01);
    CHECK(p.time_ms(1, false) == 0.86);
    CHECK(p.time_ms(2, true) == 2.20);
    CHECK(p.time_ms(3, true) == 2.27);
    CHECK(p.time_ms(4, false) == 1.20);
    CHECK(p.time_ms(5, true) == 3.16);
    CHECK(p.time_ms(5, false) == 1.48);
    CHECK(p.time_ms(0, true) == 0.0);
  }

  SUBCASE("gaps interpolate linearly") {
    DeviceProfile sparse = p;
    sparse.timing_table = {{2, 2.0, 1.0}, {4, 3.0, 2.0}};
    CHECK(sparse.time_ms(3, true) == doctest::Approx(2.5));
    CHECK(sparse.time_ms(3, false) == doctest::Approx(1.5));
    CHECK(sparse.time_ms(1, true) == doctest::Approx(1.0));  // anchor at (0, 0)
  }

  SUBCASE("beyond the table extrapolates the last slope") {
    double slope = 3.16 - 2.74;
    CHECK(p.time_ms(7, true) == doctest::Approx(3.16 + 2 * slope));
  }

  SUBCASE("non-monotone tables are rejected") {
    DeviceProfile bad = p;
    bad.timing_table = {{1, 2.0, 1.0}, {2, 1.5, 1.2}};
    CHECK_THROWS_AS(bad.validate(), Error);
  }
}

TEST_CASE("simulate_batch") {
  CostModel cm;

  SUBCASE("single device timings come straight from the table") {
    ScheduleTable t = row_with_counts(1, 0, 4);
    BatchMetrics m = simulate_batch(t, {DeviceProfile::standard(0)}, cm);
    CHECK(m.makespan_ms == 2.01);
    ScheduleTable t2 = row_with_counts(0, 1, 4);
    BatchMetrics m2 = simulate_batch(t2, {DeviceProfile::standard(0)}, cm);
    CHECK(m2.makespan_ms == 0.86);
  }

  SUBCASE("equal loads give a makespan equal to either device") {
    ScheduleTable t(2, 5);
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 2; ++i) t.set_code(k, i, 1);
    std::vector<DeviceProfile> profiles = {DeviceProfile::standard(0),
                                           DeviceProfile::standard(1)};
    BatchMetrics m = simulate_batch(t, profiles, cm);
    CHECK(m.per_device_busy_ms[0] == m.per_device_busy_ms[1]);
    CHECK(m.makespan_ms == m.per_device_busy_ms[0]);
    CHECK(m.workload_variance == 0.0);
  }

  SUBCASE("a two-unit device aggregates its rows") {
    ScheduleTable t(3, 5);
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 2; ++i) t.set_code(k, i, 1);
    DeviceProfile large = DeviceProfile::standard(0);
    large.memory_units = 2;
    std::vector<DeviceProfile> profiles = {large, DeviceProfile::standard(1)};
    BatchMetrics m = simulate_batch(t, profiles, cm);
    // large device: 4 full micro-batches; small: 2
    CHECK(m.per_device_busy_ms[0] == 2.74);
    CHECK(m.per_device_busy_ms[1] == 2.20);
    CHECK(m.makespan_ms == 2.74);
  }

  SUBCASE("makespan is at least the mean busy time") {
    auto rng = make_rng(4711, 0);
    ScheduleTable t(4, 5);
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < 5; ++i)
        t.set_code(k, i, static_cast<std::uint8_t>(1 + uniform_below(rng, 3)));
    std::vector<DeviceProfile> profiles;
    for (int k = 0; k < 4; ++k) profiles.push_back(DeviceProfile::standard(k));
    BatchMetrics m = simulate_batch(t, profiles, cm);
    double mean = 0;
    for (double b : m.per_device_busy_ms) mean += b;
    mean /= 4;
    CHECK(m.makespan_ms >= mean);
  }

  SUBCASE("imbalance residual against per-row capacities") {
    ScheduleTable t = row_with_counts(2, 2, 1);  // 14 units
    Capacities caps;
    caps.full = {10};
    caps.fwd = {4};
    BatchMetrics m = simulate_batch(t, {DeviceProfile::standard(0)}, cm, &caps);
    CHECK(m.imbalance_residual == 0.0);
    Capacities slack;
    slack.full = {15};
    slack.fwd = {4};
    BatchMetrics m2 = simulate_batch(t, {DeviceProfile::standard(0)}, cm, &slack);
    CHECK(m2.imbalance_residual == 5.0);
  }

  SUBCASE("host mismatch is rejected") {
    ScheduleTable t(3, 5);
    std::vector<DeviceProfile> profiles = {DeviceProfile::standard(0),
                                           DeviceProfile::standard(1)};
    CHECK_THROWS_AS(simulate_batch(t, profiles, cm), Error);
  }
}

TEST_CASE("heterogeneous profile construction") {
  SUBCASE("memory mode: 9 large devices on 74 units gives 65 devices") {
    HeteroSetup s = build_hetero_profiles(HeteroMode::Memory, 9, 74);
    CHECK(s.profiles.size() == 65);
    int units = 0, large = 0;
    for (const auto& p : s.profiles) {
      units += p.memory_units;
      if (p.memory_units == 2) ++large;
    }
    CHECK(units == 74);
    CHECK(large == 9);
    CHECK(s.budget.n_full == 2);
    CHECK(s.budget.n_fwd == 2);
    CHECK(s.budget.overrides.empty());
  }

  SUBCASE("memory mode configuration points 9, 14, 19 all host 74 units") {
    for (int count : {9, 14, 19}) {
      HeteroSetup s = build_hetero_profiles(HeteroMode::Memory, count, 74);
      int units = 0;
      for (const auto& p : s.profiles) units += p.memory_units;
      CHECK(units == 74);
      CHECK(static_cast<int>(s.profiles.size()) == 74 - count);
    }
  }

  SUBCASE("compute mode: fast devices get the 3+1 budget") {
    HeteroSetup s = build_hetero_profiles(HeteroMode::Compute, 2, 6);
    CHECK(s.profiles.size() == 6);
    CHECK(s.profiles[0].speed_class == DeviceProfile::Speed::Fast);
    CHECK(s.profiles[2].speed_class == DeviceProfile::Speed::Slow);
    REQUIRE(s.budget.overrides.size() == 2);
    CHECK(s.budget.overrides[0].n_full == 3);
    CHECK(s.budget.overrides[0].n_fwd == 1);
    CHECK(s.budget.n_full_for(0) == 3);
    CHECK(s.budget.n_full_for(3) == 2);
  }

  SUBCASE("compute mode with zero fast devices leaves everything slow") {
    HeteroSetup s = build_hetero_profiles(HeteroMode::Compute, 0, 4);
    for (const auto& p : s.profiles) CHECK(p.speed_class == DeviceProfile::Speed::Slow);
    CHECK(s.budget.overrides.empty());
  }

  SUBCASE("infeasible host assignment is rejected") {
    CHECK_THROWS_AS(build_hetero_profiles(HeteroMode::Memory, 40, 74), Error);
    CHECK_THROWS_AS(build_hetero_profiles(HeteroMode::Compute, 10, 6), Error);
  }
}

TEST_CASE("lora cost model reference points") {
  SUBCASE("compute settings evaluate to 95 / 77.5 / 60 percent") {
    auto points = lora_compute_reference_points();
    REQUIRE(points.size() == 3);
    CHECK(points[0].computed_pct == 95.0);
    CHECK(points[1].computed_pct == 77.5);
    CHECK(points[2].computed_pct == 60.0);
    // the first two sit within 3 points of their nominal 95 / 75
    CHECK(std::abs(points[0].computed_pct - points[0].nominal_pct) <= 3.0);
    CHECK(std::abs(points[1].computed_pct - points[1].nominal_pct) <= 3.0);
    CHECK(points[2].computed_pct == points[2].nominal_pct);
  }

  SUBCASE("comm settings flag the 3pf+2po nominal 90 as a discrepancy") {
    auto points = lora_comm_reference_points();
    REQUIRE(points.size() == 3);
    CHECK(points[0].computed_pct == 80.0);
    CHECK(points[0].discrepancy);
    CHECK(points[1].computed_pct == 70.0);
    CHECK(!points[1].discrepancy);
    CHECK(points[2].computed_pct == 50.0);
    CHECK(!points[2].discrepancy);
  }
}
