// Copyright 2026 The dualseg Authors. All Rights Reserved.
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


#ifndef DSEG_GRADCHECK_HPP_
#define DSEG_GRADCHECK_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace dseg {

struct GradCheckOptions {
  double step = 1e-5;       // central-difference half step
  double tolerance = 1e-5;  // max relative error allowed
  int trials = 5;           // random shapes per primitive
  uint64_t seed = 20240601;
  // Negative-control hook: the analytic gradient of this primitive ("all" for
  // every one) is scaled by 1.01 before comparison, which must fail.
  std::string corrupt_op;
};

struct GradCheckResult {
  std::string op;
  int trials = 0;
  double max_rel_error = 0.0;
  bool passed = false;
  std::vector<std::string> shapes;  // input shape summary per trial
};

/// Names of every differentiable primitive covered by the checker.
const std::vector<std::string>& grad_check_ops();

/// Compares tape gradients of `op` against central finite differences of a
/// randomly weighted sum of its output. The relative error of one input is
/// max|analytic - numeric| / max(max|analytic|, max|numeric|); the result
/// reports the worst over inputs and trials. `double` is the verification
/// dtype; `float` is accepted for smoke use with a loose tolerance.
template <typename T>
GradCheckResult grad_check(const std::string& op, const GradCheckOptions& options = {});

}  // namespace dseg

#endif  // DSEG_GRADCHECK_HPP_
