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
#include <memory>
#include <optional>
#include <vector>

#include "lereg/models.hpp"
#include "lereg/sparse_matrix.hpp"
#include "lereg/tape.hpp"

namespace lereg {

enum class MaskMode {
  /// Q stays on the tape; gradients flow through the soft mask into P.
  kFullGradient,
  /// Q is frozen for the step.
  kDetached,
};

/// Regularization factors for the combined loss. alphas[l-1] / betas[l-1]
/// weight the intra / inter terms on hidden layer l (l = 1..L, L = output).
struct RegConfig {
  double margin = 1.0;
  std::vector<double> alphas;
  std::vector<double> betas;
  MaskMode mask_mode = MaskMode::kFullGradient;
  double eps = kDegreeEps;
  /// Drop the diagonal (intra-class mass) of the merged adjacency.
  bool zero_merged_diagonal = false;

  /// Same factor on every layer.
  static RegConfig broadcast(std::size_t layers, double alpha, double beta);
  /// Factors on the output layer only.
  static RegConfig final_layer_only(std::size_t layers, double alpha, double beta);

  /// Throws ConfigError on length mismatch or negative factors.
  void validate(std::size_t layers) const;
  bool any_active() const;
};

/// Per-graph constants shared by every loss evaluation.
struct GraphContext {
  std::shared_ptr<const SparseMatrix> adjacency;
  std::shared_ptr<const ad::EdgeIndex> edges;
  std::shared_ptr<const SparseMatrix> laplacian;
  /// A_ij per ordered edge when A is weighted; null for binary A.
  std::shared_ptr<const Tensor> edge_values;
  std::vector<double> degrees;
  double eps = kDegreeEps;

  static GraphContext build(const SparseMatrix& adjacency, double eps = kDegreeEps);
};

/// Quantities frozen for one optimization step. Finite-difference checks
/// fill this once at the base point so degrees stay identical across probes.
struct DegreeSnapshot {
  std::optional<std::vector<double>> masked_degrees;
  std::optional<std::vector<double>> merged_degrees;
  std::optional<Tensor> frozen_q;
};

/// Soft-masked adjacency on the pattern of A: weights Q_ij * A_ij per ordered
/// edge and the (detached) masked degrees.
struct MaskArtifacts {
  ad::Var edge_weights;
  std::shared_ptr<const std::vector<double>> masked_degrees;
  std::shared_ptr<const ad::EdgeIndex> edges;
  std::size_t num_nodes = 0;

  SparseMatrix masked_adjacency(const SparseMatrix& pattern) const;
};

/// Class-merged graph: adjacency P^T A P, embeddings P^T H, detached degrees.
struct MergedGraph {
  ad::Var adjacency;
  ad::Var embeddings;
  std::shared_ptr<const std::vector<double>> degrees;
};

/// Keeps edge (i,j) of A iff the predicted labels agree.
SparseMatrix discrete_mask(const SparseMatrix& a, const std::vector<int>& predicted);

/// Q_ij = <p_i, p_j> on every edge of A.
MaskArtifacts soft_mask(const GraphContext& ctx, ad::Var probs, MaskMode mode,
                        DegreeSnapshot* snapshot = nullptr);

/// Mask artifacts for a fixed masked adjacency with the same pattern as A
/// (e.g. discrete_mask output); weights are constants.
MaskArtifacts constant_mask(const GraphContext& ctx, const SparseMatrix& masked, ad::Tape& tape);

/// tr(H^T L_sym H).
ad::Var global_energy(ad::Var h, const GraphContext& ctx);

/// 1/2 sum_e Ahat_ij || H_i / sqrt(dhat_i) - H_j / sqrt(dhat_j) ||^2.
ad::Var intra_energy(ad::Var h, const MaskArtifacts& mask, double eps = kDegreeEps);

MergedGraph merge_graph(const GraphContext& ctx, ad::Var probs, ad::Var h,
                        bool zero_diagonal = false, DegreeSnapshot* snapshot = nullptr);

/// 1/2 sum_{k,l} Abar_kl || Hbar_k / sqrt(dbar_k) - Hbar_l / sqrt(dbar_l) ||^2.
ad::Var inter_energy(const MergedGraph& merged, double eps = kDegreeEps);

/// max(0, m - E_inter).
ad::Var inter_reg_loss(ad::Var e_inter, double margin);

/// Terms computed per regularized layer; unset where both factors are zero.
struct LayerwiseTerms {
  std::vector<std::optional<ad::Var>> intra;
  std::vector<std::optional<ad::Var>> inter_energy;
  std::vector<std::optional<ad::Var>> inter_loss;
};

/// Intra and inter terms on every hidden state H^(1..L) of the trace. Masks
/// and merged adjacency always come from the final-layer probabilities.
LayerwiseTerms layerwise_losses(const ForwardTrace& trace, const GraphContext& ctx,
                                const RegConfig& cfg, DegreeSnapshot* snapshot = nullptr);

struct LossBreakdown {
  ad::Var total;
  ad::Var supervised;
  LayerwiseTerms terms;

  /// Per-layer values (0 where a term was skipped).
  std::vector<double> intra_values() const;
  std::vector<double> inter_loss_values() const;
};

/// L_sup + sum_l alpha_l L_intra,l + sum_l beta_l L_inter,l, where L_sup is
/// the mean cross-entropy over train_idx against (possibly soft) targets.
LossBreakdown combined_loss(const ForwardTrace& trace, const GraphContext& ctx,
                            std::shared_ptr<const Tensor> targets,
                            std::shared_ptr<const std::vector<std::size_t>> train_idx,
                            const RegConfig& cfg, DegreeSnapshot* snapshot = nullptr);

/// sum over unordered edges of ||H_i - H_j||^2 (unnormalized).
ad::Var baseline_laplacian_reg(ad::Var h, const GraphContext& ctx);

Tensor one_hot(const std::vector<int>& labels, int num_classes);
/// (1 - alpha) y + alpha / C.
Tensor label_smoothing(const Tensor& one_hot_targets, double alpha);

}  // namespace lereg
