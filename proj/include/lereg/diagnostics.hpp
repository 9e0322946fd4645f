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
#include <optional>
#include <string>
#include <vector>

#include "lereg/models.hpp"
#include "lereg/regularizers.hpp"
#include "lereg/sparse_matrix.hpp"
#include "lereg/tensor.hpp"

namespace lereg::diag {

inline constexpr std::size_t kMaxDenseEigen = 500;
inline constexpr std::size_t kMaxBruteForce = 14;

struct EigenDecomposition {
  /// Ascending.
  std::vector<double> values;
  /// Column k is the unit eigenvector for values[k].
  Tensor vectors;
};

/// Cyclic Jacobi rotations. Throws StructuralError when M is not symmetric
/// within 1e-10 and SizeError above kMaxDenseEigen.
EigenDecomposition eig_sym_dense(const Tensor& m);

struct ConductanceResult {
  double phi = 0.0;
  /// Indicator of the minimizing set.
  std::vector<bool> subset;
};

/// cut(S) / min(vol(S), vol(S^c)) for a node set; nullopt when a side has no volume.
std::optional<double> set_conductance(const SparseMatrix& a, const std::vector<bool>& subset);

/// Exact minimum over nonempty proper subsets.
ConductanceResult conductance_bruteforce(const SparseMatrix& a, std::size_t max_n = kMaxBruteForce);

struct CheegerReport {
  bool connected = false;
  bool holds = false;
  double phi = 0.0;
  /// Second smallest eigenvalue of L_sym.
  double lambda_star = 0.0;
  double lambda = 0.0;
  double lambda_lower = 0.0;
  double lambda_upper = 0.0;
};

CheegerReport cheeger_check(const SparseMatrix& a, double slack = 1e-9);

struct SubgraphBound {
  int label = 0;
  /// One entry per connected piece of the class-induced subgraph.
  std::vector<double> phi_pieces;
  double phi_min = 0.0;
  double lambda_upper = 0.0;
  double lambda_lower = 0.0;
  bool holds = true;
};

struct SubgraphReport {
  double phi_graph = 0.0;
  double lambda_upper_graph = 0.0;
  double lambda_lower_graph = 0.0;
  std::vector<SubgraphBound> classes;
  bool holds() const;
};

SubgraphReport subgraph_bound_check(const SparseMatrix& a, const std::vector<int>& labels, double slack = 1e-12);

struct SpectralReport {
  /// Eigenvalues of the self-looped symmetric-normalized operator, ascending.
  std::vector<double> eigenvalues;
  /// Largest |eigenvalue| outside the top eigenspace.
  double lambda = 0.0;
  /// N x M, one unit column per connected component.
  Tensor top_basis;
  std::size_t components = 0;
  std::optional<double> phi;
  double lambda_lower = 0.0;
  double lambda_upper = 0.0;
};

SpectralReport spectral_report(const SparseMatrix& a);

/// ||H - E E^T H||_F.
double distance_to_subspace(const Tensor& h, const Tensor& basis);

/// Largest singular value by power iteration on W^T W.
double spectral_norm(const Tensor& w, std::size_t iterations = 500);

struct ConvergenceTrace {
  std::vector<double> distance;
  /// s_l per step (1 for identity weights).
  std::vector<double> singular;
  std::vector<double> envelope;
  double lambda = 0.0;
  bool converges = false;
  bool holds = true;
};

/// H^(l+1) = S H^(l) W^(l) for `steps` steps; empty weights mean identity.
ConvergenceTrace convergence_trace(const SparseMatrix& adjacency, const std::vector<Tensor>& weights, const Tensor& h0,
                                   std::size_t steps, double slack = 1e-9);

struct Lemma3Report {
  /// max |H - g - AH| over entries.
  double max_error = 0.0;
  /// max |(1 - rowsum_i) H_i|; zero when rows are normalized.
  double residual_term = 0.0;
  bool row_normalized = false;
  Tensor aggregated;
  Tensor stepped;
};

/// g_i = sum_j A_ij (H_i - H_j); compares H - g with AH.
Lemma3Report lemma3_check(const SparseMatrix& a, const Tensor& h);

/// Mean squared distance over all ordered pairs (i = j included) per class.
std::vector<double> per_class_smoothness(const Tensor& h, const std::vector<int>& labels, int num_classes);

struct LayerEnergy {
  double e_intra = 0.0;
  double e_inter = 0.0;
  double e_g = 0.0;
  std::optional<double> ratio;
};

/// E_intra / E_G; nullopt when E_G is zero.
std::optional<double> energy_ratio(const Tensor& h, const GraphContext& ctx, const Tensor& probs);

struct EnergyReport {
  /// Entry l is for hidden state H^(l+1).
  std::vector<LayerEnergy> layers;
  /// [layer][class].
  std::vector<std::vector<double>> smoothness;

  const LayerEnergy& final_layer() const { return layers.back(); }
};

EnergyReport energy_report(const ForwardTrace& trace, const GraphContext& ctx, const std::vector<int>& labels,
                           int num_classes, bool zero_merged_diagonal = false);

}  // namespace lereg::diag
