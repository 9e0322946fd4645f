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
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "lereg/rng.hpp"
#include "lereg/sparse_matrix.hpp"
#include "lereg/tape.hpp"
#include "lereg/tensor.hpp"

namespace lereg {

enum class Backbone { kGcn, kSgc };

std::string to_string(Backbone b);
Backbone parse_backbone(const std::string& s);

/// Weights of an L-layer GCN (layer_dims = [F, F_1, ..., C], weight l is
/// layer_dims[l] x layer_dims[l+1]) or of SGC (a single F x C weight applied
/// after sgc_power propagation steps).
struct ModelParams {
  Backbone backbone = Backbone::kGcn;
  std::vector<std::size_t> layer_dims;
  std::vector<Tensor> weights;
  /// Empty unless the model was built with bias terms; one 1 x F_{l+1} row each.
  std::vector<Tensor> biases;
  std::size_t sgc_power = 2;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t num_classes() const { return layer_dims.empty() ? 0 : layer_dims.back(); }
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Entries uniform in +/- sqrt(6 / (rows + cols)).
Tensor glorot_init(std::size_t rows, std::size_t cols, Rng& rng);

/// Input -> hidden (x num_layers-1) -> classes, Glorot-initialized.
ModelParams init_gcn(std::size_t in_dim, std::size_t hidden, std::size_t num_classes,
                     std::size_t num_layers, Rng& rng, bool bias = false);
ModelParams init_sgc(std::size_t in_dim, std::size_t num_classes, std::size_t power, Rng& rng,
                     bool bias = false);

/// Per-layer hidden states and class probabilities recorded on a tape.
struct ForwardTrace {
  ad::Tape* tape = nullptr;
  /// hidden[0] = X, ..., hidden.back() = Z (logits).
  std::vector<ad::Var> hidden;
  ad::Var probs;
  /// Leaves for the weights and biases, in ModelParams order.
  std::vector<ad::Var> weight_leaves;
  std::vector<ad::Var> bias_leaves;

  ad::Var logits() const { return hidden.back(); }
};

struct ForwardOptions {
  /// Record weights as leaves that require gradients.
  bool track_weights = true;
  /// Inverted dropout on every layer input; only applied when > 0.
  double dropout = 0.0;
  std::uint64_t dropout_seed = 0;
  /// Existing tape variables to use instead of fresh leaves: weights, then
  /// biases. Values must match the shapes in ModelParams.
  std::vector<ad::Var> parameter_inputs;
};

/// H^(l+1) = relu(S H^(l) W^(l)) with a linear final layer, P = softmax(Z).
ForwardTrace gcn_forward(const ModelParams& params, std::shared_ptr<const SparseMatrix> propagation,
                         const Tensor& features, ad::Tape& tape, const ForwardOptions& options = {});

/// Propagated features S^k X for k = 0..K, computed once per graph.
class SgcFeatureCache {
 public:
  SgcFeatureCache(const SparseMatrix& propagation, const Tensor& features, std::size_t power);
  std::size_t power() const { return powers_.size() - 1; }
  const Tensor& at(std::size_t k) const { return powers_.at(k); }

 private:
  std::vector<Tensor> powers_;
};

/// Z = S^K X W. hidden = [X, SX, ..., S^K X, Z].
ForwardTrace sgc_forward(const ModelParams& params, const SgcFeatureCache& cache, ad::Tape& tape,
                         const ForwardOptions& options = {});

/// Row-wise argmax; ties go to the lowest class index.
std::vector<int> predict(const Tensor& probs);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace lereg
