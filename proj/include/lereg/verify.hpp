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

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace lereg::diag {

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::size_t instances = 0;
  /// Worst observed error or violation count, depending on the check.
  double worst = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyReport {
  std::uint64_t seed = 0;
  std::vector<VerifyCheck> checks;

  bool passed() const;
};

/// Property suite over seeded random instances: finite differences of the
/// combined loss, energy oracle equivalences, analytic invariants, the
/// gradient-step identity, Cheeger sweep, convergence envelope, subgraph
/// bounds, smoothness identity and the uniform-P ratio.
VerifyReport run_verify(std::uint64_t seed);

VerifyCheck verify_gradients(std::uint64_t seed, std::size_t instances = 20);
VerifyCheck verify_energy_oracles(std::uint64_t seed, std::size_t instances = 100);
VerifyCheck verify_invariants(std::uint64_t seed, std::size_t instances = 100);
VerifyCheck verify_lemma3(std::uint64_t seed, std::size_t instances = 100);
VerifyCheck verify_cheeger(std::uint64_t seed, std::size_t instances = 200);
VerifyCheck verify_envelope(std::uint64_t seed, std::size_t instances = 100, std::size_t steps = 50);
VerifyCheck verify_subgraph_bounds(std::uint64_t seed, std::size_t instances = 50);
VerifyCheck verify_smoothness(std::uint64_t seed, std::size_t instances = 50);
VerifyCheck verify_uniform_ratio(std::uint64_t seed, std::size_t instances = 50);

nlohmann::json to_json(const VerifyReport& report);

}  // namespace lereg::diag
