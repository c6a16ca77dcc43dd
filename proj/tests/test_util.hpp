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

// Shared fixtures for the unit tests.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flapwear/engine.hpp"
#include "flapwear/metrics.hpp"
#include "flapwear/predictions.hpp"

namespace flapwear::testing {

inline ProbabilityVector vec(StageId s, std::vector<double> p) { return {s, std::move(p)}; }

inline RunInput run_input(std::vector<double> usage, std::vector<double> profile,
                          std::vector<double> tear, std::vector<double> concave = {},
                          std::vector<double> convex = {}, std::string tool = "t1") {
  RunInput in;
  in.tool_id = std::move(tool);
  in.usage = vec(StageId::Usage, std::move(usage));
  in.profile = vec(StageId::Profile, std::move(profile));
  in.tear = vec(StageId::Tear, std::move(tear));
  if (!concave.empty()) in.concave_severity = vec(StageId::ConcaveSeverity, std::move(concave));
  if (!convex.empty()) in.convex_severity = vec(StageId::ConvexSeverity, std::move(convex));
  return in;
}

inline LabeledSample sample(std::string tool, StageId s, std::vector<double> p,
                            std::optional<std::size_t> truth = std::nullopt,
                            std::string image = {}) {
  LabeledSample out;
  out.prediction.tool_id = tool;
  out.prediction.image_id = image.empty() ? tool + "-" + std::string(to_string(s)) : image;
  out.prediction.view = required_view(s);
  out.prediction.vector = vec(s, std::move(p));
  out.truth = truth;
  return out;
}

// Labeled records whose argmax decisions replay `cm` exactly. The predicted
// class carries probability `top`, the rest is split evenly.
inline std::vector<LabeledSample> replay_samples(const ConfusionMatrix& cm, double top = 0.9) {
  std::vector<LabeledSample> out;
  const std::size_t n = cm.size();
  std::size_t k = 0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::uint64_t i = 0; i < cm(t, p); ++i) {
        std::vector<double> probs(n, (1.0 - top) / static_cast<double>(n - 1));
        probs[p] = top;
        out.push_back(sample("tool-" + std::to_string(k % 97), cm.stage(), probs, t,
                             "img-" + std::to_string(k)));
        ++k;
      }
    }
  }
  return out;
}

}  // namespace flapwear::testing
