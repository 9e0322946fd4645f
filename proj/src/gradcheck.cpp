// Copyright 2026 The LEReg Authors
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

#include "lereg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lereg/errors.hpp"

namespace lereg::ad {

namespace {

struct Evaluation {
  double value;
  std::vector<std::uint8_t> kinks;
};

Evaluation evaluate(const ScalarFunction& f, const std::vector<Tensor>& point) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const auto& t : point) leaves.push_back(tape.leaf(t, false));
  const Var out = f(tape, leaves);
  return {out.value().scalar(), tape.kink_pattern()};
}

}  // namespace

GradCheckReport check_gradients(const ScalarFunction& f, const std::vector<Tensor>& point,
                                double h, double tol, Stencil stencil) {
  GradCheckReport report;
  report.tolerance = tol;

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : point) leaves.push_back(tape.leaf(t, true));
  const Var out = f(tape, leaves);
  const Gradients grads = tape.backward(out);
  const auto base_kinks = tape.kink_pattern();

  std::vector<Tensor> probe = point;
  for (std::size_t in = 0; in < point.size(); ++in) {
    const Tensor zero(point[in].rows(), point[in].cols());
    const Tensor& analytic = grads.contains(leaves[in]) ? grads.at(leaves[in]) : zero;
    for (std::size_t k = 0; k < point[in].size(); ++k) {
      const double x = point[in][k];
      auto at = [&](double offset) {
        probe[in][k] = x + offset;
        Evaluation e = evaluate(f, probe);
        probe[in][k] = x;
        return e;
      };
      const int reach = stencil == Stencil::kCentral ? 1 : stencil == Stencil::kFivePoint ? 2 : 3;
      bool kinked = false;
      double d[3] = {0.0, 0.0, 0.0};
      for (int s = 1; s <= reach && !kinked; ++s) {
        const Evaluation plus = at(s * h);
        const Evaluation minus = at(-s * h);
        kinked = plus.kinks != base_kinks || minus.kinks != base_kinks;
        d[s - 1] = plus.value - minus.value;
      }
      double numeric = 0.0;
      switch (stencil) {
        case Stencil::kCentral: numeric = d[0] / (2.0 * h); break;
        case Stencil::kFivePoint: numeric = (8.0 * d[0] - d[1]) / (12.0 * h); break;
        case Stencil::kSevenPoint: numeric = (45.0 * d[0] - 9.0 * d[1] + d[2]) / (60.0 * h); break;
      }
      if (kinked) {
        ++report.kink_excluded;
        continue;
      }
      const double a = analytic[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++report.compared;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        report.worst_input = in;
        report.worst_index = k;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace lereg::ad
