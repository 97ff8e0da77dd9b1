// Copyright 2026 The AIS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef AIS_SAMPLE_EVAL_HPP
#define AIS_SAMPLE_EVAL_HPP

#include <functional>

#include "ais/densities.hpp"

namespace ais {

/// Vector-valued integrand phi: R^d -> R^p.
using Integrand = std::function<Vector(const Vector&)>;

/// One explored point with everything the estimators and updaters need from it.
struct SampleEval {
  Vector point;
  double log_q = 0.0;       ///< log-density of the policy that generated the point
  double log_target = 0.0;  ///< log pi_u(point), also used as log f by the updaters
  Vector integrand;         ///< phi(point)
};

/// Evaluates the policy, target and integrand at a point drawn from `policy`.
SampleEval evaluate_sample(const PolicyParams& policy, const TargetSpec& target,
                           const Integrand& integrand, Vector point);

}  // namespace ais

#endif  // AIS_SAMPLE_EVAL_HPP
