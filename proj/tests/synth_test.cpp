/*
 * Copyright 2026 The flapwear Authors.
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

#include <algorithm>
#include <cmath>
#include <numbers>

#include "flapwear/engine.hpp"
#include "flapwear/simulation.hpp"
#include "flapwear/synth.hpp"

namespace flapwear::synth {
namespace {

WheelSpec spec(UsageState u, FlapProfile p, std::optional<Severity> s, double depth = 0.0,
               std::set<int> torn = {}) {
  WheelSpec w;
  w.usage = u;
  w.profile = p;
  w.severity = s;
  w.profile_depth = depth;
  w.torn_flaps = std::move(torn);
  w.fringe = u == UsageState::New;
  return w;
}

TEST(Generator, RectangularIsConstant) {
  const auto obs = generate_observation(spec(UsageState::Used, FlapProfile::Rectangular, {}), 1);
  ASSERT_GE(obs.radial.samples.size(), 64u);
  for (double r : obs.radial.samples) EXPECT_EQ(r, obs.radial.samples.front());
}

TEST(Generator, FullyConcaveDepthAndCenter) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto obs =
        generate_observation(spec(UsageState::Used, FlapProfile::Concave, Severity::Fully, 0.2), seed);
    const auto& r = obs.radial.samples;
    const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
    EXPECT_NEAR(*lo, *hi - 0.2, 1e-4);
    const double at = static_cast<double>(lo - r.begin()) / static_cast<double>(r.size() - 1);
    EXPECT_GE(at, 0.4);
    EXPECT_LE(at, 0.6);
  }
}

TEST(Generator, ShapeFunction) {
  const GeneratorConfig cfg;
  const auto r = shape_profile(0.85, FlapProfile::Convex, 0.2, {0.0, 1.0}, cfg);
  EXPECT_NEAR(r.front(), 0.65, 1e-12);
  EXPECT_NEAR(r.back(), 0.65, 1e-12);
  EXPECT_NEAR(*std::max_element(r.begin(), r.end()), 0.85, 1e-4);
  EXPECT_EQ(shape_weight(0.0, 0.25), 0.0);
  EXPECT_DOUBLE_EQ(shape_weight(0.5, 0.25), 1.0);
}

TEST(Generator, TornGapDominates) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto obs = generate_observation(
        spec(UsageState::Used, FlapProfile::Rectangular, {}, 0.0, {3}), seed);
    const auto& g = obs.axial.gap_angles;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (i != 3) {
        EXPECT_GT(g[3], g[i]);
      }
    }
  }
}

TEST(Generator, GapsSumToFreeArc) {
  const GeneratorConfig cfg;
  for (int torn = 0; torn < 4; ++torn) {
    std::set<int> t;
    for (int i = 0; i < torn; ++i) t.insert(i * 5);
    auto w = spec(UsageState::Used, FlapProfile::Rectangular, {}, 0.0, t);
    const auto obs = generate_observation(w, 7);
    double sum = 0.0;
    for (double g : obs.axial.gap_angles) {
      EXPECT_GT(g, 0.0);
      sum += g;
    }
    const double arc = 2 * std::numbers::pi * cfg.flap_fill / w.n_flaps * (w.n_flaps - torn);
    EXPECT_NEAR(sum, 2 * std::numbers::pi - arc, 1e-12);
    EXPECT_EQ(obs.axial.gap_angles.size(), static_cast<std::size_t>(w.n_flaps));
  }
}

TEST(Generator, Deterministic) {
  auto w = spec(UsageState::Used, FlapProfile::Convex, Severity::Partially, 0.3, {1, 9});
  w.noise_sigma = 0.01;
  const auto a = generate_observation(w, 99);
  const auto b = generate_observation(w, 99);
  EXPECT_EQ(a.radial, b.radial);
  EXPECT_EQ(a.axial, b.axial);
  EXPECT_NE(generate_observation(w, 100).radial, a.radial);
  for (double r : a.radial.samples) {
    EXPECT_GT(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(Generator, InvalidSpecs) {
  auto expect_invalid = [](const WheelSpec& w) {
    try {
      validate(w);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidSpec);
    }
  };
  auto w = spec(UsageState::Used, FlapProfile::Rectangular, {});
  w.n_flaps = 6;
  expect_invalid(w);
  expect_invalid(spec(UsageState::Used, FlapProfile::Rectangular, {}, 0.0, {24}));
  expect_invalid(spec(UsageState::Used, FlapProfile::Concave, {}, 0.2));
  expect_invalid(spec(UsageState::Used, FlapProfile::Rectangular, Severity::Fully));
  expect_invalid(spec(UsageState::Used, FlapProfile::Concave, Severity::Fully, 0.7));
  expect_invalid(spec(UsageState::New, FlapProfile::Rectangular, {}, 0.0, {2}));
  expect_invalid(spec(UsageState::New, FlapProfile::Convex, Severity::Fully, 0.2));
  w = spec(UsageState::Used, FlapProfile::Rectangular, {});
  w.noise_sigma = -1;
  expect_invalid(w);
  EXPECT_NO_THROW(validate(worn_rectangular_with_fringe()));
}

TEST(ProfileClassifier, Examples) {
  const GeneratorConfig cfg;
  RadialProfile flat{std::vector<double>(cfg.width, 0.85), false};
  EXPECT_EQ(argmax_class(profile_feature_classifier(flat)), 0u);
  RadialProfile concave{shape_profile(0.85, FlapProfile::Concave, 0.2, {0.2, 0.5}, cfg), false};
  EXPECT_EQ(argmax_class(profile_feature_classifier(concave)), 1u);
  RadialProfile convex{shape_profile(0.85, FlapProfile::Convex, 0.2, {0.2, 0.5}, cfg), false};
  EXPECT_EQ(argmax_class(profile_feature_classifier(convex)), 2u);
}

TEST(SeverityClassifier, Examples) {
  const GeneratorConfig cfg;
  RadialProfile wide{shape_profile(0.85, FlapProfile::Concave, 0.2, {0.025, 0.95}, cfg), false};
  EXPECT_EQ(argmax_class(severity_feature_classifier(wide, FlapProfile::Concave)), 0u);
  RadialProfile narrow{shape_profile(0.85, FlapProfile::Convex, 0.2, {0.3, 0.4}, cfg), false};
  EXPECT_EQ(argmax_class(severity_feature_classifier(narrow, FlapProfile::Convex)), 1u);
  // Exactly three quarters of the samples below mid-range.
  RadialProfile boundary{std::vector<double>(128, 0.85), false};
  for (std::size_t i = 16; i < 112; ++i) boundary.samples[i] = 0.65;
  ASSERT_DOUBLE_EQ(affected_width(boundary, FlapProfile::Concave), 0.75);
  const auto v = severity_feature_classifier(boundary, FlapProfile::Concave);
  EXPECT_NEAR(v.probs[0], 0.5, 0.05);
  EXPECT_NEAR(v.probs[1], 0.5, 0.05);
}

TEST(TearClassifier, Examples) {
  AxialGapPattern uniform{std::vector<double>(24, 0.1)};
  EXPECT_DOUBLE_EQ(max_to_median_gap(uniform), 1.0);
  EXPECT_EQ(argmax_class(tear_feature_classifier(uniform)), 1u);
  AxialGapPattern torn = uniform;
  torn.gap_angles[5] = 0.3;
  EXPECT_EQ(argmax_class(tear_feature_classifier(torn)), 0u);
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto obs = generate_observation(spec(UsageState::Used, FlapProfile::Rectangular, {}), seed);
    EXPECT_LT(max_to_median_gap(obs.axial), kTearRatioThreshold);
    EXPECT_EQ(argmax_class(tear_feature_classifier(obs.axial)), 1u);
  }
}

TEST(UsageClassifier, Examples) {
  const auto fresh = generate_observation(spec(UsageState::New, FlapProfile::Rectangular, {}), 3);
  EXPECT_EQ(argmax_class(usage_feature_classifier(fresh.radial)), 0u);
  const auto used = generate_observation(spec(UsageState::Used, FlapProfile::Rectangular, {}), 3);
  EXPECT_EQ(argmax_class(usage_feature_classifier(used.radial)), 1u);
  auto noisy = spec(UsageState::Used, FlapProfile::Rectangular, {});
  noisy.noise_sigma = 0.02;
  EXPECT_LT(confidence(usage_feature_classifier(generate_observation(noisy, 3).radial)),
            confidence(usage_feature_classifier(used.radial)));
}

TEST(UsageClassifier, AdversarialFringeMisclassifiedAsNew) {
  const auto w = worn_rectangular_with_fringe();
  const auto obs = generate_observation(w, 5);
  EXPECT_EQ(argmax_class(usage_feature_classifier(obs.radial)), 0u);
  const auto r = classify_run(classify_observation(obs, "adv"), EngineConfig{});
  ASSERT_TRUE(r.outcome());
  EXPECT_EQ(r.outcome()->id, 1);
  EXPECT_NE(r.outcome()->id, w.outcome().id);
}

TEST(ClosedLoop, ZeroNoiseSpecsRecoverTruth) {
  const auto specs = sim::random_specs(1100, 31);
  std::array<int, 12> per_outcome{};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto obs = generate_observation(specs[i], 1000 + i);
    const auto r = classify_run(classify_observation(obs, "s"), EngineConfig::without_thresholds());
    ASSERT_TRUE(r.outcome()) << "spec " << i;
    EXPECT_EQ(r.outcome()->id, specs[i].outcome().id) << "spec " << i;
    ++per_outcome[static_cast<std::size_t>(specs[i].outcome().id)];
  }
  for (int id = 1; id <= 11; ++id) EXPECT_EQ(per_outcome[static_cast<std::size_t>(id)], 100);
}

TEST(Oracle, OneHotRowAlwaysCorrect) {
  const std::vector<double> row = {0.0, 1.0, 0.0};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto p = stochastic_oracle(StageId::Profile, 1, row, {}, seed);
    EXPECT_EQ(argmax_class(p.vector), 1u);
    EXPECT_FALSE(validate_prediction(p));
  }
}

TEST(Oracle, UsedRowErrorRate) {
  const std::vector<double> row = {19.0 / 1040.0, 1021.0 / 1040.0};
  Rng rng(77);
  int errors = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    errors += argmax_class(oracle_prediction(StageId::Usage, 1, row, {}, rng).vector) != 1;
  }
  EXPECT_NEAR(static_cast<double>(errors) / n, 0.0183, 0.0013);
  EXPECT_EQ(stochastic_oracle(StageId::Usage, 1, row, {}, 5), stochastic_oracle(StageId::Usage, 1, row, {}, 5));
}

TEST(Oracle, ConfidenceLawMeans) {
  const ConfusionMatrix cm(StageId::Usage, {{458, 2}, {19, 1021}});
  Rng rng(78);
  double sum_all = 0.0, sum_false = 0.0;
  int n_false = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const std::size_t truth = i % 1500 < 460 ? 0 : 1;
    const auto p = oracle_prediction(StageId::Usage, truth, per_class_row(cm, truth), {0.97, 0.89, 0.03}, rng);
    const double c = confidence(p.vector);
    sum_all += c;
    if (argmax_class(p.vector) != truth) {
      sum_false += c;
      ++n_false;
    }
  }
  EXPECT_NEAR(sum_all / n, 0.97, 0.01);
  EXPECT_NEAR(sum_false / n_false, 0.89, 0.01);
}

TEST(Oracle, EmpiricalConfusionConvergesToRow) {
  const ConfusionMatrix cm(StageId::Profile, {{1165, 0, 0}, {40, 1212, 107}, {15, 1, 1024}});
  for (std::size_t truth = 0; truth < 3; ++truth) {
    const auto row = per_class_row(cm, truth);
    Rng rng(100 + truth);
    std::vector<double> hist(3, 0.0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      hist[argmax_class(oracle_prediction(StageId::Profile, truth, row, {}, rng).vector)] += 1.0 / n;
    }
    double tv = 0.0;
    for (std::size_t c = 0; c < 3; ++c) tv += 0.5 * std::abs(hist[c] - row[c]);
    EXPECT_LT(tv, 0.01);
  }
}

TEST(Oracle, VectorsValidAndArgmaxIsSampledClass) {
  Rng rng(3);
  const ConfidenceLaw wide{0.6, 0.4, 0.3};
  for (int i = 0; i < 20000; ++i) {
    const std::size_t predicted = static_cast<std::size_t>(i % 3);
    const auto v = oracle_vector(StageId::Profile, predicted, i % 2 == 0, wide, rng);
    EXPECT_FALSE(validate_vector(v));
    EXPECT_EQ(argmax_class(v), predicted);
    EXPECT_GT(confidence(v), 1.0 / 3.0);
  }
}

TEST(Oracle, BadRows) {
  auto expect_bad = [](StageId s, std::vector<double> row) {
    try {
      stochastic_oracle(s, 0, row, {}, 0);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::BadRow);
    }
  };
  expect_bad(StageId::Usage, {0.5, 0.4});
  expect_bad(StageId::Usage, {1.0});
  expect_bad(StageId::Profile, {1.2, -0.1, -0.1});
  EXPECT_THROW(stochastic_oracle(StageId::Usage, 0, std::vector<double>{0.5, 0.5}, {0.4, 0.9, 0.1}, 0), Error);
}

TEST(Oracle, AccuracyCalibratedRows) {
  const ConfusionMatrix cm(StageId::ConvexSeverity, {{141, 19}, {0, 220}});
  const auto full = accuracy_calibrated_row(cm, 0);
  const auto part = accuracy_calibrated_row(cm, 1);
  EXPECT_DOUBLE_EQ(full[0], 0.95);
  EXPECT_DOUBLE_EQ(part[1], 0.95);
  EXPECT_NEAR(full[1], 0.05, 1e-15);
  EXPECT_NEAR(part[0], 0.05, 1e-15);
}

}  // namespace
}  // namespace flapwear::synth
