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

// Synthetic flap wheels with known ground truth.
//
// A wheel is reduced to two 1-D signals: the radial profile r(w) of the flap
// front across its width, and the angular gaps between neighbouring flaps as
// seen axially. Rule-based feature classifiers map those signals to the same
// probability vectors the stage models emit, and a stochastic oracle draws
// predictions from a confusion row with a configurable confidence law.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "flapwear/engine.hpp"
#include "flapwear/error.hpp"
#include "flapwear/metrics.hpp"
#include "flapwear/predictions.hpp"
#include "flapwear/random.hpp"
#include "flapwear/taxonomy.hpp"

namespace flapwear::synth {

struct GeneratorConfig {
  std::size_t width = 128;       // radial samples across the flap width
  double new_radius = 0.97;      // normalized outer radius of a new wheel
  double used_radius = 0.85;
  double flap_fill = 0.6;        // share of the circumference covered by flaps
  double gap_jitter = 0.1;       // relative spread of untorn gaps
  double tear_enlarge_min = 1.5; // torn gap grows by this many nominal gaps...
  double tear_enlarge_max = 3.0; // ...up to this many
  double full_span_min = 0.9;
  double partial_span_min = 0.3;
  double partial_span_max = 0.6;
  double partial_margin = 0.1;   // partial deformations stay this far from the edges
  double shape_exponent = 0.25;  // h(t) = sin(pi t)^p, flat-bottomed for small p
};

struct WheelSpec {
  UsageState usage = UsageState::Used;
  FlapProfile profile = FlapProfile::Rectangular;
  std::optional<Severity> severity;
  int n_flaps = 24;
  std::set<int> torn_flaps;
  double profile_depth = 0.0;  // in normalized radius units
  double noise_sigma = 0.0;
  bool fringe = false;         // textile fringes on the flap edge

  TearState tear() const { return torn_flaps.empty() ? TearState::NoTear : TearState::WithTear; }
  WearOutcome outcome() const { return outcome_from_parts(usage, profile, tear(), severity); }
};

inline void validate(const WheelSpec& s) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidSpec, msg); };
  if (s.n_flaps < 8) fail("n_flaps must be >= 8");
  for (int f : s.torn_flaps) {
    if (f < 0 || f >= s.n_flaps) fail("torn flap index " + std::to_string(f) + " out of range");
  }
  // Tear detection compares against the median gap.
  if (2 * s.torn_flaps.size() >= static_cast<std::size_t>(s.n_flaps)) {
    fail("fewer than half of the flaps may be torn");
  }
  if (needs_severity(s.profile) != s.severity.has_value()) {
    fail("severity must be present exactly for concave/convex profiles");
  }
  if (!(s.profile_depth >= 0.0 && s.profile_depth <= 0.5)) fail("profile_depth outside [0, 0.5]");
  if (s.profile == FlapProfile::Rectangular && s.profile_depth != 0.0) {
    fail("rectangular profile takes no depth");
  }
  if (!(s.noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (s.usage == UsageState::New) {
    if (s.profile != FlapProfile::Rectangular || !s.torn_flaps.empty() || !s.fringe) {
      fail("a new wheel is rectangular, untorn and fringed");
    }
  }
}

// Used rectangular wheel that kept its fringes: the usage classifier calls
// it new.
inline WheelSpec worn_rectangular_with_fringe() {
  WheelSpec s;
  s.usage = UsageState::Used;
  s.profile = FlapProfile::Rectangular;
  s.fringe = true;
  return s;
}

struct RadialProfile {
  std::vector<double> samples;
  bool fringe = false;

  friend bool operator==(const RadialProfile&, const RadialProfile&) = default;
};

struct AxialGapPattern {
  std::vector<double> gap_angles;

  friend bool operator==(const AxialGapPattern&, const AxialGapPattern&) = default;
};

struct SyntheticObservation {
  WheelSpec spec;
  RadialProfile radial;
  AxialGapPattern axial;
};

// Deformed region of the flap front, as fractions of the width.
struct Deformation {
  double start = 0.0;
  double span = 1.0;
};

inline double shape_weight(double t, double exponent) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return std::pow(std::sin(std::numbers::pi * t), exponent);
}

// Noise-free radius curve. Concave: a depression of `depth` inside the region.
// Convex: the mirror image, the region keeps the full radius and everything
// outside it is worn down by `depth`.
inline std::vector<double> shape_profile(double radius, FlapProfile profile, double depth,
                                         Deformation region, const GeneratorConfig& cfg) {
  std::vector<double> r(cfg.width, radius);
  if (profile == FlapProfile::Rectangular) return r;
  for (std::size_t i = 0; i < cfg.width; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(cfg.width - 1);
    const double h = shape_weight((x - region.start) / region.span, cfg.shape_exponent);
    r[i] = profile == FlapProfile::Concave ? radius - depth * h : radius - depth + depth * h;
  }
  return r;
}

inline SyntheticObservation generate_observation(const WheelSpec& spec, std::uint64_t seed,
                                                 const GeneratorConfig& cfg = {}) {
  validate(spec);
  if (cfg.width < 64) throw Error(ErrorCode::InvalidSpec, "generator width must be >= 64");
  Rng rng(seed);
  SyntheticObservation obs;
  obs.spec = spec;

  const double radius = spec.usage == UsageState::New ? cfg.new_radius : cfg.used_radius;
  Deformation region;
  if (spec.severity == Severity::Fully) {
    region.span = uniform(rng, cfg.full_span_min, 1.0);
    region.start = uniform(rng, 0.0, 1.0 - region.span);
  } else if (spec.severity == Severity::Partially) {
    region.span = uniform(rng, cfg.partial_span_min, cfg.partial_span_max);
    region.start = uniform(rng, cfg.partial_margin, 1.0 - cfg.partial_margin - region.span);
  }
  obs.radial.samples = shape_profile(radius, spec.profile, spec.profile_depth, region, cfg);
  obs.radial.fringe = spec.fringe;
  if (spec.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (double& r : obs.radial.samples) r = std::clamp(r + noise(rng), 1e-3, 1.0);
  }

  const double two_pi = 2.0 * std::numbers::pi;
  const double nominal_gap = two_pi * (1.0 - cfg.flap_fill) / spec.n_flaps;
  const double flap_arc = two_pi * cfg.flap_fill / spec.n_flaps;
  std::vector<double>& gaps = obs.axial.gap_angles;
  gaps.resize(static_cast<std::size_t>(spec.n_flaps));
  double raw_sum = 0.0;
  for (int i = 0; i < spec.n_flaps; ++i) {
    double g = nominal_gap * (1.0 + uniform(rng, -cfg.gap_jitter, cfg.gap_jitter));
    if (spec.torn_flaps.count(i)) {
      g += nominal_gap * uniform(rng, cfg.tear_enlarge_min, cfg.tear_enlarge_max);
    }
    gaps[static_cast<std::size_t>(i)] = g;
    raw_sum += g;
  }
  // Torn flaps no longer occupy their arc.
  const double present_arc =
      flap_arc * static_cast<double>(spec.n_flaps - static_cast<int>(spec.torn_flaps.size()));
  const double scale = (two_pi - present_arc) / raw_sum;
  for (double& g : gaps) g *= scale;
  return obs;
}

// Random spec realizing `outcome`, with a depth large enough to be seen.
inline WheelSpec random_spec(const WearOutcome& outcome, Rng& rng, double noise_sigma = 0.0) {
  WheelSpec s;
  s.usage = outcome.usage;
  s.profile = outcome.profile;
  s.severity = outcome.severity;
  s.fringe = outcome.usage == UsageState::New;
  s.noise_sigma = noise_sigma;
  s.n_flaps = 8 + static_cast<int>(rng() % 41);
  if (needs_severity(s.profile)) s.profile_depth = uniform(rng, 0.05, 0.5);
  if (outcome.tear == TearState::WithTear) {
    const int max_torn = std::max(1, s.n_flaps / 4);
    const int torn = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_torn));
    while (static_cast<int>(s.torn_flaps.size()) < torn) {
      s.torn_flaps.insert(static_cast<int>(rng() % static_cast<std::uint64_t>(s.n_flaps)));
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Feature classifiers

namespace detail {

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Robust white-noise estimate from successive differences.
inline double noise_estimate(const std::vector<double>& r) {
  if (r.size() < 3) return 0.0;
  std::vector<double> d;
  d.reserve(r.size() - 1);
  for (std::size_t i = 1; i < r.size(); ++i) d.push_back(std::abs(r[i] - r[i - 1]));
  return median(std::move(d)) / (0.6745 * std::numbers::sqrt2);
}

inline std::vector<double> softmax(std::vector<double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& z : logits) {
    z = std::exp(z - m);
    sum += z;
  }
  for (double& z : logits) z /= sum;
  return logits;
}

inline std::vector<double> binary(double p_first) { return {p_first, 1.0 - p_first}; }

}  // namespace detail

struct ProfileFeatures {
  double edge_mean = 0.0;
  double depression = 0.0;  // edge mean minus interior minimum
  double bulge = 0.0;       // interior maximum minus edge mean
  double noise = 0.0;
};

inline ProfileFeatures profile_features(const RadialProfile& radial) {
  const auto& r = radial.samples;
  if (r.size() < 8) throw Error(ErrorCode::InvalidArgument, "radial profile too short");
  const std::size_t edge = std::max<std::size_t>(2, r.size() / 20);
  double edge_sum = 0.0;
  for (std::size_t i = 0; i < edge; ++i) edge_sum += r[i] + r[r.size() - 1 - i];
  ProfileFeatures f;
  f.edge_mean = edge_sum / static_cast<double>(2 * edge);
  const auto [lo, hi] = std::minmax_element(r.begin() + static_cast<std::ptrdiff_t>(edge),
                                            r.end() - static_cast<std::ptrdiff_t>(edge));
  f.depression = f.edge_mean - *lo;
  f.bulge = *hi - f.edge_mean;
  f.noise = detail::noise_estimate(r);
  return f;
}

// Rectangular competes with a fixed tolerance that widens with the measured
// noise; concave and convex score their central deviation below/above the
// edge level.
inline ProbabilityVector profile_feature_classifier(const RadialProfile& radial) {
  const ProfileFeatures f = profile_features(radial);
  const double tolerance = 0.02 + 4.0 * f.noise;
  const double temperature = 0.02 + f.noise;
  return {StageId::Profile,
          detail::softmax({tolerance / temperature, f.depression / temperature,
                           f.bulge / temperature})};
}

inline constexpr double kSeverityBoundary = 0.75;

// Share of the width whose deviation exceeds half of the total deviation.
// Concave counts samples below mid-range, convex samples above it.
inline double affected_width(const RadialProfile& radial, FlapProfile branch) {
  const auto& r = radial.samples;
  const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
  const double mid = 0.5 * (*lo + *hi);
  if (*hi - *lo <= 0.0) return 0.0;
  std::size_t affected = 0;
  for (double v : r) {
    if (branch == FlapProfile::Concave ? v < mid : v > mid) ++affected;
  }
  return static_cast<double>(affected) / static_cast<double>(r.size());
}

inline ProbabilityVector severity_feature_classifier(const RadialProfile& radial,
                                                     FlapProfile branch,
                                                     double boundary = kSeverityBoundary) {
  if (branch == FlapProfile::Rectangular) {
    throw Error(ErrorCode::InvalidArgument, "severity is only defined for concave/convex");
  }
  const double width = affected_width(radial, branch);
  const double p_fully = detail::logistic((width - boundary) / 0.025);
  return {branch == FlapProfile::Concave ? StageId::ConcaveSeverity : StageId::ConvexSeverity,
          detail::binary(p_fully)};
}

inline constexpr double kTearRatioThreshold = 1.5;

inline double max_to_median_gap(const AxialGapPattern& axial) {
  if (axial.gap_angles.empty()) throw Error(ErrorCode::InvalidArgument, "no gaps");
  const double med = detail::median(axial.gap_angles);
  return *std::max_element(axial.gap_angles.begin(), axial.gap_angles.end()) / med;
}

inline ProbabilityVector tear_feature_classifier(const AxialGapPattern& axial) {
  const double ratio = max_to_median_gap(axial);
  return {StageId::Tear, detail::binary(detail::logistic((ratio - kTearRatioThreshold) / 0.1))};
}

// Fringes vote New, their absence Used; surface noise lowers the confidence.
inline ProbabilityVector usage_feature_classifier(const RadialProfile& radial) {
  const double strength = 4.0 / (1.0 + detail::noise_estimate(radial.samples) / 0.01);
  const double z = radial.fringe ? strength : -strength;
  return {StageId::Usage, detail::binary(detail::logistic(z))};
}

// All five stage vectors for one observation, as the engine consumes them.
inline RunInput classify_observation(const SyntheticObservation& obs, std::string tool_id) {
  RunInput in;
  in.tool_id = std::move(tool_id);
  in.usage = usage_feature_classifier(obs.radial);
  in.profile = profile_feature_classifier(obs.radial);
  in.tear = tear_feature_classifier(obs.axial);
  in.concave_severity = severity_feature_classifier(obs.radial, FlapProfile::Concave);
  in.convex_severity = severity_feature_classifier(obs.radial, FlapProfile::Convex);
  return in;
}

// ---------------------------------------------------------------------------
// Stochastic oracle

struct ConfidenceLaw {
  double mean_correct = 0.97;
  double mean_false = 0.89;
  double spread = 0.03;
};

inline void validate_row(StageId stage, std::span<const double> row) {
  if (row.size() != class_count(stage)) {
    throw Error(ErrorCode::BadRow, "confusion row length does not match stage " +
                                       std::string(to_string(stage)));
  }
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::BadRow, "confusion row entry outside [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbabilitySumTolerance) {
    throw Error(ErrorCode::BadRow, "confusion row does not sum to 1");
  }
}

inline void validate_law(StageId stage, const ConfidenceLaw& law) {
  const double floor = 1.0 / static_cast<double>(class_count(stage));
  for (double m : {law.mean_correct, law.mean_false}) {
    if (!(m > floor && m < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "confidence means must lie in (1/n, 1)");
    }
  }
  if (!(law.spread >= 0.0)) throw Error(ErrorCode::InvalidArgument, "spread must be >= 0");
}

// Probability vector with argmax `predicted` and maximum near the law's mean
// for a correct or a false prediction.
inline ProbabilityVector oracle_vector(StageId stage, std::size_t predicted, bool correct,
                                       const ConfidenceLaw& law, Rng& rng) {
  const std::size_t n = class_count(stage);
  const double floor = 1.0 / static_cast<double>(n);
  std::normal_distribution<double> spread(0.0, 1.0);
  const double mean = correct ? law.mean_correct : law.mean_false;
  // Keep the maximum strictly above 1/n so the argmax is unambiguous.
  const double top = std::clamp(mean + law.spread * spread(rng), floor + 1e-6, 1.0);
  const double rest = 1.0 - top;

  ProbabilityVector v{stage, std::vector<double>(n, 0.0)};
  std::vector<double> weights(n - 1);
  double wsum = 0.0;
  for (double& w : weights) {
    w = unit_uniform(rng) + 1e-12;
    wsum += w;
  }
  std::size_t k = 0;
  bool over = false;
  for (std::size_t c = 0; c < n; ++c) {
    if (c == predicted) continue;
    v.probs[c] = rest * weights[k++] / wsum;
    over |= v.probs[c] >= top;
  }
  if (over) {
    for (std::size_t c = 0; c < n; ++c)
      if (c != predicted) v.probs[c] = rest / static_cast<double>(n - 1);
  }
  v.probs[predicted] = top;
  return v;
}

inline std::size_t sample_class(std::span<const double> row, Rng& rng) {
  const double u = unit_uniform(rng);
  double acc = 0.0;
  for (std::size_t c = 0; c < row.size(); ++c) {
    acc += row[c];
    if (u < acc) return c;
  }
  // Rounding slack: fall back to the last class with mass.
  for (std::size_t c = row.size(); c-- > 0;)
    if (row[c] > 0.0) return c;
  return 0;
}

inline Prediction oracle_prediction(StageId stage, std::size_t truth, std::span<const double> row,
                                    const ConfidenceLaw& law, Rng& rng) {
  const std::size_t predicted = sample_class(row, rng);
  Prediction p;
  p.view = required_view(stage);
  p.vector = oracle_vector(stage, predicted, predicted == truth, law, rng);
  return p;
}

inline Prediction stochastic_oracle(StageId stage, std::size_t truth, std::span<const double> row,
                                    const ConfidenceLaw& law, std::uint64_t seed) {
  validate_row(stage, row);
  validate_law(stage, law);
  if (truth >= class_count(stage)) throw Error(ErrorCode::IndexOutOfRange, "truth index out of range");
  Rng rng(seed);
  return oracle_prediction(stage, truth, row, law, rng);
}

// Confusion row of `truth`, normalized.
inline std::vector<double> per_class_row(const ConfusionMatrix& cm, std::size_t truth) {
  const auto total = cm.row_sum(truth);
  if (total == 0) throw Error(ErrorCode::BadRow, "confusion row has no samples");
  std::vector<double> row(cm.size());
  for (std::size_t p = 0; p < cm.size(); ++p) {
    row[p] = static_cast<double>(cm(truth, p)) / static_cast<double>(total);
  }
  return row;
}

// Row whose hit rate is the matrix accuracy for every truth class; the miss
// mass follows the row's own error pattern, or is spread evenly when the row
// has no errors. Makes per-stage correctness independent of the true class,
// which is the assumption behind the path-product model.
inline std::vector<double> accuracy_calibrated_row(const ConfusionMatrix& cm, std::size_t truth) {
  const double acc = accuracy(cm);
  std::vector<double> row(cm.size(), 0.0);
  std::uint64_t off = cm.row_sum(truth) - cm(truth, truth);
  for (std::size_t p = 0; p < cm.size(); ++p) {
    if (p == truth) continue;
    row[p] = off ? (1.0 - acc) * static_cast<double>(cm(truth, p)) / static_cast<double>(off)
                 : (1.0 - acc) / static_cast<double>(cm.size() - 1);
  }
  row[truth] = acc;
  return row;
}

}  // namespace flapwear::synth
