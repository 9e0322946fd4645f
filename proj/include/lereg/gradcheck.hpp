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

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lereg/tape.hpp"

namespace lereg::ad {

/// Builds a scalar on `tape` from the given leaves.
using ScalarFunction = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t compared = 0;
  /// Elements where some probe lands on the other side of a relu or hinge
  /// kink; excluded from max_rel_error.
  std::size_t kink_excluded = 0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error < tolerance; }
};

enum class Stencil {
  /// (f(x+h) - f(x-h)) / 2h.
  kCentral,
  /// Fourth-order five-point stencil:
  /// (8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h.
  kFivePoint,
  /// Sixth-order seven-point stencil:
  /// (45 d1 - 9 d2 + d3) / 60h with dk = f(x+kh) - f(x-kh).
  kSevenPoint,
};

/// Compares reverse-mode gradients against central differences element by
/// element, with relative error |a - n| / max(|a|, |n|, 1e-8). Every input is
/// treated as a leaf requiring a gradient. An element is excluded when any
/// probe changes the relu/hinge kink pattern of the base point.
GradCheckReport check_gradients(const ScalarFunction& f, const std::vector<Tensor>& point,
                                 double h = 1e-5, double tol = 1e-4, Stencil stencil = Stencil::kCentral);

}  // namespace lereg::ad
