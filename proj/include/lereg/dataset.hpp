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
#include <string>
#include <vector>

#include "lereg/sparse_matrix.hpp"
#include "lereg/tensor.hpp"

namespace lereg {

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  friend bool operator==(const Splits&, const Splits&) = default;
};

/// Node-classification dataset: binary symmetric adjacency without self-loops,
/// features (N x F), integer labels in [0, C), and disjoint splits.
struct GraphDataset {
  std::string name;
  SparseMatrix adjacency;
  Tensor features;
  std::vector<int> labels;
  int num_classes = 0;
  Splits splits;

  std::size_t num_nodes() const { return adjacency.rows(); }
  std::size_t num_features() const { return features.cols(); }
  /// Number of undirected edges.
  std::size_t num_edges() const { return adjacency.nnz() / 2; }

  /// Throws InputError naming the first violated invariant.
  void validate() const;
  /// Classes with no node in the train split.
  std::vector<int> classes_missing_from_train() const;

  friend bool operator==(const GraphDataset&, const GraphDataset&) = default;
};

/// Writes the bundle directory (meta.json, edges.tsv, features.tsv,
/// labels.tsv, split.json). Creates the directory if needed.
void save_bundle(const GraphDataset& data, const std::filesystem::path& dir);

/// Reads and validates a bundle. Warns on stderr if a class is absent from
/// the train split.
GraphDataset load_bundle(const std::filesystem::path& dir);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

struct SbmConfig {
  std::vector<std::size_t> nodes_per_class;
  double p_intra = 0.1;
  double p_inter = 0.01;
  std::size_t feature_dim = 16;
  double feature_center_scale = 1.0;
  double feature_noise_std = 1.0;
  std::uint64_t seed = 0;
  std::size_t train_per_class = 20;
  std::size_t val_per_class = 30;

  void validate() const;
};

/// Stochastic block model with Gaussian class-centred features. Edges are
/// sampled with geometric skipping so cost is linear in the edge count.
GraphDataset generate_sbm(const SbmConfig& cfg);

/// Per-class random split: train_per_class / val_per_class nodes of each
/// class, the rest test. Throws SplitError if a class is too small.
Splits per_class_split(const std::vector<int>& labels, int num_classes,
                       std::size_t train_per_class, std::size_t val_per_class,
                       std::uint64_t seed);

}  // namespace lereg
