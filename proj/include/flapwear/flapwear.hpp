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

#pragma once

#include "flapwear/engine.hpp"
#include "flapwear/error.hpp"
#include "flapwear/metrics.hpp"
#include "flapwear/predictions.hpp"
#include "flapwear/propagation.hpp"
#include "flapwear/random.hpp"
#include "flapwear/report.hpp"
#include "flapwear/simulation.hpp"
#include "flapwear/synth.hpp"
#include "flapwear/taxonomy.hpp"
