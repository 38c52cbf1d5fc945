// Copyright 2026 The robust-rmab Authors.
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

// Central finite differences against tape gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rrmab/autodiff.hpp"

namespace rrmab::oracle {

struct GradCheckResult {
  int checked = 0;
  int failures = 0;
  double worst_ratio = 0.0;  // max |g - fd| / (rtol max(|g|, |fd|) + atol)
  std::string worst_entry;
  bool ok() const { return failures == 0; }
};

inline GradCheckResult grad_check(const std::vector<ad::Parameter*>& params,
                                  const std::function<ad::Var(ad::Tape&)>& build, double h = 1e-5,
                                  double rtol = 1e-4, double atol = 1e-8) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape tape;
    tape.backward(build(tape));
  }
  auto eval = [&] {
    ad::Tape tape;
    return build(tape).scalar();
  };
  GradCheckResult r;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double x = p->value(i);
      p->value(i) = x + h;
      const double up = eval();
      p->value(i) = x - h;
      const double down = eval();
      p->value(i) = x;
      const double fd = (up - down) / (2.0 * h);
      const double g = p->grad(i);
      const double ratio = std::abs(g - fd) / (rtol * std::max(std::abs(g), std::abs(fd)) + atol);
      ++r.checked;
      if (ratio > 1.0) ++r.failures;
      if (ratio > r.worst_ratio) {
        r.worst_ratio = ratio;
        r.worst_entry = p->name + "[" + std::to_string(i) + "] g=" + std::to_string(g) + " fd=" + std::to_string(fd);
      }
    }
  }
  return r;
}

}  // namespace rrmab::oracle
