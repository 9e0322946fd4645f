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
#include <span>
#include <utility>
#include <vector>

#include "lereg/tensor.hpp"

namespace lereg {

inline constexpr double kDegreeEps = 1e-12;

/// 1/sqrt(d) with the zero-degree guard: degrees below eps are clamped to eps.
double guarded_rsqrt(double degree, double eps = kDegreeEps);
/// 1/d with the same clamp.
double guarded_inverse(double degree, double eps = kDegreeEps);

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Compressed sparse row matrix in canonical form: column indices within each
/// row strictly increasing, no duplicate entries.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  /// Validates the canonical-form invariants; throws StructuralError otherwise.
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
               std::vector<std::size_t> col_indices, std::vector<double> values);

  /// Builds a canonical matrix, summing duplicate coordinates.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> triplets);
  static SparseMatrix identity(std::size_t n);
  static SparseMatrix from_dense(const Tensor& dense);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const std::size_t> row_offsets() const { return row_offsets_; }
  std::span<const std::size_t> col_indices() const { return col_indices_; }
  std::span<const double> values() const { return values_; }

  std::span<const std::size_t> row_cols(std::size_t i) const {
    return {col_indices_.data() + row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]};
  }
  std::span<const double> row_values(std::size_t i) const {
    return {values_.data() + row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]};
  }

  /// Stored value at (i, j), or 0 if the entry is not stored.
  double at(std::size_t i, std::size_t j) const;
  bool contains(std::size_t i, std::size_t j) const;

  /// Same sparsity pattern, new values.
  SparseMatrix with_values(std::vector<double> values) const;

  bool is_symmetric(double tol = 0.0) const;
  bool has_diagonal_entries() const;

  Tensor to_dense() const;
  /// this * x
  Tensor multiply(const Tensor& x) const;
  /// this^T * x
  Tensor multiply_transposed(const Tensor& x) const;

  /// Row index of every stored entry, aligned with col_indices().
  std::vector<std::size_t> entry_rows() const;

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

/// Symmetric binary adjacency from an edge list: both directions stored,
/// duplicates merged to weight 1, self-loops dropped.
SparseMatrix symmetrize_dedup(const EdgeList& edges, std::size_t n);

/// Row sums.
std::vector<double> degrees(const SparseMatrix& a);

/// D'^{-1/2} A' D'^{-1/2} with A' = A (+ I when add_self_loops).
SparseMatrix normalize_sym(const SparseMatrix& a, bool add_self_loops, double eps = kDegreeEps);

/// D^{-1} A; zero rows stay zero.
SparseMatrix normalize_row(const SparseMatrix& a, double eps = kDegreeEps);

/// I - D^{-1/2} A D^{-1/2} on the graph as given (no self-loops added).
SparseMatrix laplacian_sym(const SparseMatrix& a, double eps = kDegreeEps);

/// A + I (diagonal entries added to any existing ones).
SparseMatrix add_identity(const SparseMatrix& a);

/// Unordered edges (i < j) of a symmetric matrix.
EdgeList upper_edges(const SparseMatrix& a);

/// Connected-component id per node, ids assigned in order of the lowest node.
std::vector<std::size_t> connected_components(const SparseMatrix& a, std::size_t* count = nullptr);

}  // namespace lereg
