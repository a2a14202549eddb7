/*
 * Copyright 2026 The lidar-rebalance Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lidar_rebalance/balance.hpp"

namespace lidar_rebalance {
namespace {

// Weights evaluated straight from the definition in long double.
std::vector<double> DirectWeights(const std::vector<double>& w, double t) {
  long double denom = 0.0L;
  for (double x : w) denom += std::exp(static_cast<long double>(x) / t);
  std::vector<double> out;
  for (double x : w) {
    out.push_back(static_cast<double>(
        static_cast<long double>(w.size()) *
        std::exp(static_cast<long double>(x) / t) / denom));
  }
  return out;
}

LossSnapshot Uniform(std::size_t heads, double value, double n_pos = 1.0) {
  return {std::vector<HeadLoss>(heads, {value, value, value}), n_pos};
}

// ---------------------------------------------------------------------------
// window_average
// ---------------------------------------------------------------------------

TEST(WindowAverageTest, Examples) {
  // beta-weighted sum of a head with all components c is 3.2 c.
  const std::vector<LossSnapshot> constant(7, Uniform(1, 2.0 / 3.2));
  EXPECT_NEAR(WindowAverage(constant, 0), 2.0, 1e-15);
  const std::vector<LossSnapshot> two{Uniform(1, 1.0 / 3.2),
                                      Uniform(1, 3.0 / 3.2)};
  EXPECT_NEAR(WindowAverage(two, 0), 2.0, 1e-15);
  EXPECT_THROW(WindowAverage({}, 0), UsageError);
}

TEST(WindowAverageTest, MatchesRecomputation) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LossSnapshot> window;
    for (int i = 0; i < 50; ++i) {
      LossSnapshot s;
      for (int h = 0; h < 3; ++h) s.heads.push_back({u(rng), u(rng), u(rng)});
      window.push_back(s);
    }
    for (std::size_t h = 0; h < 3; ++h) {
      long double acc = 0.0L;
      for (const auto& s : window) {
        acc += 2.0L * s.heads[h].loc + 1.0L * s.heads[h].cls +
               0.2L * s.heads[h].dir;
      }
      EXPECT_NEAR(WindowAverage(window, h), static_cast<double>(acc / 50),
                  1e-12);
    }
  }
}

// ---------------------------------------------------------------------------
// dwa_step
// ---------------------------------------------------------------------------

TEST(DwaStepTest, EqualRatiosGiveOnes) {
  const std::vector<double> prev{0.7, 0.7, 0.7};
  const WeightVector v = DwaStep(prev, prev, {});
  for (double a : v.alpha) EXPECT_DOUBLE_EQ(a, 1.0);
}

TEST(DwaStepTest, WorkedValue) {
  // Ratios (1.0, 1.2, 0.8) at T = 2; reference from 50-digit evaluation.
  const std::vector<double> prev{1.0, 1.2, 0.8};
  const std::vector<double> prev2{1.0, 1.0, 1.0};
  const WeightVector v = DwaStep(prev, prev2, {2.0, 50});
  EXPECT_NEAR(v.alpha[0], 0.99668, 1e-4);
  EXPECT_NEAR(v.alpha[1], 1.10150, 1e-4);
  EXPECT_NEAR(v.alpha[2], 0.90183, 1e-4);
  EXPECT_NEAR(v.alpha[0], 0.9966749806, 1e-9);
  EXPECT_NEAR(v.alpha[1], 1.1014962033, 1e-9);
  EXPECT_NEAR(v.alpha[2], 0.9018288161, 1e-9);
}

TEST(DwaStepTest, HugeTemperatureFlattens) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> w(0.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> ratios(1 + rng() % 10);
    for (double& r : ratios) r = w(rng);
    for (double a : DwaWeights(ratios, 1e6)) EXPECT_LT(std::abs(a - 1.0), 1e-4);
  }
}

TEST(DwaStepTest, WarmUpIsAllOnes) {
  const std::vector<double> prev{1.0, 5.0};
  const std::vector<double> prev2{3.0, 1.0};
  for (std::int64_t t : {0, 1}) {
    const WeightVector v = DwaStep(prev, prev2, {}, t);
    EXPECT_EQ(v.alpha, (std::vector<double>{1.0, 1.0}));
  }
  EXPECT_NE(DwaStep(prev, prev2, {}, 2).alpha[0], 1.0);
}

TEST(DwaStepTest, NearZeroPriorLossClampsRatio) {
  const std::vector<double> prev{0.5, 2.0};
  const std::vector<double> prev2{1e-13, 1.0};
  const WeightVector v = DwaStep(prev, prev2, {2.0, 50});
  EXPECT_EQ(v.clamped, (std::vector<bool>{true, false}));
  const auto expected = DirectWeights({1.0, 2.0}, 2.0);
  EXPECT_NEAR(v.alpha[0], expected[0], 1e-12);
  EXPECT_NEAR(v.alpha[1], expected[1], 1e-12);
  for (double a : v.alpha) EXPECT_TRUE(std::isfinite(a));
}

TEST(DwaStepTest, InvalidInputs) {
  const std::vector<double> two{1.0, 1.0};
  const std::vector<double> three{1.0, 1.0, 1.0};
  EXPECT_THROW(DwaStep(two, three, {}), UsageError);
  EXPECT_THROW(DwaStep(two, two, {0.0, 50}), ValidationError);
  EXPECT_THROW(DwaStep(two, two, {2.0, 0}), ValidationError);
}

TEST(DwaPropertyTest, MatchesDirectEvaluationAndNormalizes) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> w(0.0, 3.0);
  std::uniform_real_distribution<double> logt(-2.0, 3.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> ratios(1 + rng() % 12);
    for (double& r : ratios) r = w(rng);
    const double t = std::pow(10.0, logt(rng));
    const auto got = DwaWeights(ratios, t);
    const auto want = DirectWeights(ratios, t);
    double sum = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_NEAR(got[i], want[i], 1e-9 * std::max(1.0, want[i]));
      EXPECT_GT(got[i], 0.0);
      sum += got[i];
    }
    EXPECT_NEAR(sum, static_cast<double>(ratios.size()), 1e-9);
  }
}

TEST(DwaPropertyTest, StrictMonotonicity) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> w(0.1, 3.0);
  std::uniform_real_distribution<double> logt(-1.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> ratios(2 + rng() % 8);
    for (double& r : ratios) r = w(rng);
    const auto alpha = DwaWeights(ratios, std::pow(10.0, logt(rng)));
    for (std::size_t a = 0; a < ratios.size(); ++a) {
      for (std::size_t b = 0; b < ratios.size(); ++b) {
        if (ratios[a] > ratios[b]) EXPECT_GT(alpha[a], alpha[b]);
      }
    }
  }
}

TEST(DwaPropertyTest, ScaleInvariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> l(0.01, 5.0);
  std::uniform_real_distribution<double> loggamma(-6.0, 6.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t heads = 2 + rng() % 5;
    std::vector<double> prev(heads), prev2(heads);
    for (std::size_t c = 0; c < heads; ++c) {
      prev[c] = l(rng);
      prev2[c] = l(rng);
    }
    const auto base = DwaStep(prev, prev2, {});
    const std::size_t victim = rng() % heads;
    const double gamma = std::pow(10.0, loggamma(rng));
    prev[victim] *= gamma;
    prev2[victim] *= gamma;
    const auto scaled = DwaStep(prev, prev2, {});
    for (std::size_t c = 0; c < heads; ++c) {
      EXPECT_NEAR(scaled.alpha[c], base.alpha[c], 1e-12);
    }
  }
}

TEST(DwaPropertyTest, LowerTemperatureWidensSpread) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> w(0.5, 1.5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> ratios(2 + rng() % 6);
    for (double& r : ratios) r = w(rng);
    double previous_spread = -1.0;
    for (double t : {100.0, 10.0, 3.0, 1.0, 0.5, 0.2}) {
      const auto a = DwaWeights(ratios, t);
      const double spread = *std::max_element(a.begin(), a.end()) -
                            *std::min_element(a.begin(), a.end());
      EXPECT_GT(spread, previous_spread);
      previous_spread = spread;
    }
  }
}

// ---------------------------------------------------------------------------
// total_loss
// ---------------------------------------------------------------------------

TEST(TotalLossTest, Examples) {
  const std::vector<double> one{1.0};
  EXPECT_DOUBLE_EQ(TotalLoss(Uniform(1, 1.0), one), 3.2);
  const std::vector<double> three{1.0, 1.0, 1.0};
  EXPECT_THROW(TotalLoss(Uniform(3, 1.0), one), UsageError);
  EXPECT_DOUBLE_EQ(TotalLoss(Uniform(3, 1.0, 4.0), three), 3 * 3.2 / 4.0);
}

TEST(TotalLossTest, DoublingNposHalvesExactly) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (int trial = 0; trial < 1000; ++trial) {
    LossSnapshot s;
    std::vector<double> alpha;
    for (int h = 0; h < 3; ++h) {
      s.heads.push_back({u(rng), u(rng), u(rng)});
      alpha.push_back(0.5 + u(rng) / 4);
    }
    s.n_pos = 1.0 + static_cast<double>(rng() % 500);
    const double base = TotalLoss(s, alpha);
    s.n_pos *= 2.0;
    EXPECT_EQ(TotalLoss(s, alpha), base / 2.0);
  }
}

TEST(TotalLossTest, MatchesIndependentAccumulation) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (int trial = 0; trial < 1000; ++trial) {
    LossSnapshot s;
    std::vector<double> alpha;
    for (int h = 0; h < 3; ++h) {
      s.heads.push_back({u(rng), u(rng), u(rng)});
      alpha.push_back(u(rng));
    }
    s.n_pos = 1.0 + static_cast<double>(rng() % 100);
    long double acc = 0.0L;
    for (int h = 0; h < 3; ++h) {
      acc += static_cast<long double>(alpha[h]) *
             (2.0L * s.heads[h].loc + 1.0L * s.heads[h].cls +
              0.2L * s.heads[h].dir);
    }
    EXPECT_NEAR(TotalLoss(s, alpha), static_cast<double>(acc / s.n_pos),
                1e-12);
  }
}

// ---------------------------------------------------------------------------
// Scheduler and trajectories
// ---------------------------------------------------------------------------

TEST(SchedulerTest, EmitsAtWindowBoundaries) {
  DwaScheduler s(2, {2.0, 3});
  EXPECT_EQ(s.current().timestep, 0);
  EXPECT_FALSE(s.Observe(Uniform(2, 1.0)));
  EXPECT_FALSE(s.Observe(Uniform(2, 1.0)));
  const auto v = s.Observe(Uniform(2, 1.0));
  ASSERT_TRUE(v);
  EXPECT_EQ(v->timestep, 1);
  EXPECT_THROW(s.Observe(Uniform(3, 1.0)), ValidationError);
  LossSnapshot bad = Uniform(2, 1.0);
  bad.heads[0].cls = -1.0;
  EXPECT_THROW(s.Observe(bad), ValidationError);
  bad = Uniform(2, 1.0, 0.0);
  EXPECT_THROW(s.Observe(bad), ValidationError);
}

TEST(TrajectoryTest, ConstantStreamIsFlat) {
  const std::vector<LossSnapshot> stream(500, Uniform(3, 0.4));
  const auto traj = RunTrajectory(stream, {"a", "b", "c"}, {2.0, 50});
  ASSERT_EQ(traj.steps.size(), 11u);
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    EXPECT_EQ(traj.steps[i].timestep, static_cast<std::int64_t>(i));
    for (double a : traj.steps[i].alpha) EXPECT_DOUBLE_EQ(a, 1.0);
  }
}

TEST(TrajectoryTest, EqualDecayRatesAreFlatAfterWarmUp) {
  SyntheticLossSpec spec{{{"a", 2.0, 0.01, 0.0}, {"b", 0.3, 0.01, 0.0},
                          {"c", 7.0, 0.01, 0.0}},
                         1000,
                         1.0};
  std::mt19937_64 rng(1);
  const auto stream = GenerateLossStream(spec, rng);
  const auto traj = RunTrajectory(stream.snapshots, stream.head_names, {});
  for (const auto& step : traj.steps) {
    for (double a : step.alpha) EXPECT_NEAR(a, 1.0, 1e-12);
  }
}

TEST(TrajectoryTest, SlowerDecayingHeadGetsMoreWeight) {
  SyntheticLossSpec spec{{{"fast", 1.0, 0.004, 0.0},
                          {"slow", 1.0, 0.001, 0.0}},
                         2000,
                         1.0};
  std::mt19937_64 rng(1);
  const auto stream = GenerateLossStream(spec, rng);
  const DwaConfig cfg{2.0, 50};
  const auto traj = RunTrajectory(stream.snapshots, stream.head_names, cfg);
  ASSERT_EQ(traj.steps.size(), 41u);
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& a = traj.steps[t].alpha;
    if (t < 2) {
      EXPECT_EQ(a, (std::vector<double>{1.0, 1.0}));
      continue;
    }
    EXPECT_GT(a[1], a[0]) << t;
    // Per-step recomputation from the window averages.
    std::vector<double> w(2);
    for (std::size_t c = 0; c < 2; ++c) {
      const std::span<const LossSnapshot> all(stream.snapshots);
      w[c] = WindowAverage(all.subspan((t - 1) * 50, 50), c) /
             WindowAverage(all.subspan((t - 2) * 50, 50), c);
    }
    ASSERT_GT(w[1], w[0]);
    const auto want = DirectWeights(w, 2.0);
    EXPECT_NEAR(a[0], want[0], 1e-12);
    EXPECT_NEAR(a[1], want[1], 1e-12);
  }
}

TEST(TrajectoryTest, NoisyStreamsStayNormalized) {
  SyntheticLossSpec spec{{{"a", 1.0, 0.002, 0.3}, {"b", 0.5, 0.0, 0.3},
                          {"c", 2.0, 0.004, 0.5}},
                         3000,
                         16.0};
  std::mt19937_64 rng(9);
  const auto stream = GenerateLossStream(spec, rng);
  const auto traj = RunTrajectory(stream.snapshots, stream.head_names, {1.0, 25});
  for (std::size_t i = 1; i < traj.steps.size(); ++i) {
    EXPECT_GT(traj.steps[i].timestep, traj.steps[i - 1].timestep);
  }
  for (const auto& step : traj.steps) {
    EXPECT_NEAR(step.sum(), 3.0, 1e-9);
    for (double a : step.alpha) EXPECT_GT(a, 0.0);
  }
}

TEST(TrajectoryTest, SyntheticStreamIsSeeded) {
  SyntheticLossSpec spec{{{"a", 1.0, 0.002, 0.3}}, 100, 1.0};
  std::mt19937_64 a(3), b(3);
  EXPECT_EQ(WriteLossCsv(GenerateLossStream(spec, a)),
            WriteLossCsv(GenerateLossStream(spec, b)));
  spec.heads[0].initial_loss = 0.0;
  EXPECT_THROW(GenerateLossStream(spec, a), ValidationError);
}

TEST(TrajectoryTest, CsvExport) {
  const std::vector<LossSnapshot> stream(2, Uniform(2, 1.0));
  const auto traj = RunTrajectory(stream, {"Car", "Cyclist"}, {2.0, 1});
  EXPECT_EQ(TrajectoryCsv(traj),
            "timestep,class_name,alpha\n"
            "0,Car,1\n0,Cyclist,1\n"
            "1,Car,1\n1,Cyclist,1\n"
            "2,Car,1\n2,Cyclist,1\n");
}

// ---------------------------------------------------------------------------
// Loss CSV
// ---------------------------------------------------------------------------

TEST(LossCsvTest, RoundTrip) {
  SyntheticLossSpec spec{{{"Car", 1.0, 0.002, 0.3}, {"Pedestrian", 2.0, 0.001, 0.2}},
                         40,
                         8.0};
  std::mt19937_64 rng(2);
  const auto stream = GenerateLossStream(spec, rng);
  const std::string csv = WriteLossCsv(stream);
  const auto back = ReadLossCsv(csv);
  EXPECT_EQ(back.head_names, stream.head_names);
  ASSERT_EQ(back.snapshots.size(), stream.snapshots.size());
  for (std::size_t i = 0; i < back.snapshots.size(); ++i) {
    EXPECT_EQ(back.snapshots[i].n_pos, stream.snapshots[i].n_pos);
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_EQ(back.snapshots[i].heads[c].loc, stream.snapshots[i].heads[c].loc);
      EXPECT_EQ(back.snapshots[i].heads[c].dir, stream.snapshots[i].heads[c].dir);
    }
  }
  EXPECT_EQ(WriteLossCsv(back), csv);
}

TEST(LossCsvTest, HeadOrderFromFirstIteration) {
  const auto s = ReadLossCsv(
      "iteration,head,loc,cls,dir,n_pos\n"
      "0,b,1,1,1,2\n0,a,2,2,2,2\n"
      "1,a,3,3,3,4\n1,b,4,4,4,4\n");
  EXPECT_EQ(s.head_names, (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(s.snapshots[1].heads[0].loc, 4.0);
  EXPECT_EQ(s.snapshots[1].heads[1].loc, 3.0);
  EXPECT_EQ(s.snapshots[1].n_pos, 4.0);
}

TEST(LossCsvTest, ErrorsCarryLineNumbers) {
  struct Case {
    std::string text;
    std::size_t line;
  };
  const std::string h = "iteration,head,loc,cls,dir,n_pos\n";
  const Case cases[] = {
      {"iter,head\n", 1},
      {h + "0,a,1,1,1,1\n0,a,1,1,1,1\n", 3},         // repeated head
      {h + "0,a,1,1,1,1\n1,a,x,1,1,1\n", 3},         // bad number
      {h + "0,a,1,1,1,1\n1,a,1,1,1\n", 3},           // field count
      {h + "0,a,1,1,1,1\n0,b,1,1,1,1\n1,a,1,1,1,1\n2,a,1,1,1,1\n", 5},
      {h + "0,a,1,1,1,1\n1,c,1,1,1,1\n", 3},         // unknown head
      {h + "1,a,1,1,1,1\n0,a,1,1,1,1\n", 3},         // decreasing
      {h + "0,a,-1,1,1,1\n", 2},                     // negative loss
      {h + "0,a,1,1,1,0\n", 2},                      // n_pos < 1
  };
  for (const auto& c : cases) {
    try {
      ReadLossCsv(c.text);
      ADD_FAILURE() << "expected FormatError for:\n" << c.text;
    } catch (const FormatError& e) {
      EXPECT_EQ(e.unit(), FormatError::Unit::kLine) << c.text;
      EXPECT_EQ(e.position(), c.line) << c.text << e.what();
    }
  }
}

}  // namespace
}  // namespace lidar_rebalance
