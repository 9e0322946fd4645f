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

#include "lereg/sparse_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lereg/errors.hpp"

namespace lereg {

double guarded_rsqrt(double degree, double eps) { return 1.0 / std::sqrt(std::max(degree, eps)); }

double guarded_inverse(double degree, double eps) { return 1.0 / std::max(degree, eps); }

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols,
                           std::vector<std::size_t> row_offsets,
                           std::vector<std::size_t> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (row_offsets_.size() != rows_ + 1) throw StructuralError("row_offsets must have rows+1 entries");
  if (row_offsets_.front() != 0 || row_offsets_.back() != values_.size())
    throw StructuralError("row_offsets must start at 0 and end at nnz");
  if (col_indices_.size() != values_.size())
    throw StructuralError("col_indices and values differ in length");
  for (std::size_t i = 0; i < rows_; ++i) {
    if (row_offsets_[i] > row_offsets_[i + 1]) throw StructuralError("row_offsets not monotone");
    for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
      if (col_indices_[k] >= cols_) throw StructuralError("column index out of range");
      if (k > row_offsets_[i] && col_indices_[k] <= col_indices_[k - 1])
        throw StructuralError("column indices not strictly increasing in row " + std::to_string(i));
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) {
      throw InputError("triplet (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                       ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<std::size_t> offsets(rows + 1, 0);
  std::vector<std::size_t> cidx;
  std::vector<double> vals;
  cidx.reserve(triplets.size());
  vals.reserve(triplets.size());
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& t = triplets[k];
    if (k > 0 && triplets[k - 1].row == t.row && triplets[k - 1].col == t.col) {
      vals.back() += t.value;
      continue;
    }
    cidx.push_back(t.col);
    vals.push_back(t.value);
    ++offsets[t.row + 1];
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  return SparseMatrix(rows, cols, std::move(offsets), std::move(cidx), std::move(vals));
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<std::size_t> offsets(n + 1);
  std::iota(offsets.begin(), offsets.end(), std::size_t{0});
  std::vector<std::size_t> cidx(n);
  std::iota(cidx.begin(), cidx.end(), std::size_t{0});
  return SparseMatrix(n, n, std::move(offsets), std::move(cidx), std::vector<double>(n, 1.0));
}

SparseMatrix SparseMatrix::from_dense(const Tensor& dense) {
  std::vector<Triplet> trips;
  for (std::size_t i = 0; i < dense.rows(); ++i)
    for (std::size_t j = 0; j < dense.cols(); ++j)
      if (dense(i, j) != 0.0) trips.push_back({i, j, dense(i, j)});
  return from_triplets(dense.rows(), dense.cols(), std::move(trips));
}

double SparseMatrix::at(std::size_t i, std::size_t j) const {
  const auto cols = row_cols(i);
  const auto it = std::lower_bound(cols.begin(), cols.end(), j);
  if (it == cols.end() || *it != j) return 0.0;
  return values_[row_offsets_[i] + static_cast<std::size_t>(it - cols.begin())];
}

bool SparseMatrix::contains(std::size_t i, std::size_t j) const {
  const auto cols = row_cols(i);
  return std::binary_search(cols.begin(), cols.end(), j);
}

SparseMatrix SparseMatrix::with_values(std::vector<double> values) const {
  if (values.size() != values_.size()) throw StructuralError("with_values: length mismatch");
  SparseMatrix out = *this;
  out.values_ = std::move(values);
  return out;
}

bool SparseMatrix::is_symmetric(double tol) const {
  if (rows_ != cols_) return false;
  for (std::size_t i = 0; i < rows_; ++i) {
    const auto cols = row_cols(i);
    const auto vals = row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (!contains(cols[k], i)) return false;
      if (std::abs(at(cols[k], i) - vals[k]) > tol) return false;
    }
  }
  return true;
}

bool SparseMatrix::has_diagonal_entries() const {
  for (std::size_t i = 0; i < std::min(rows_, cols_); ++i)
    if (contains(i, i)) return true;
  return false;
}

Tensor SparseMatrix::to_dense() const {
  Tensor out(rows_, cols_);
  for (std::size_t i = 0; i < rows_; ++i) {
    const auto cols = row_cols(i);
    const auto vals = row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) out(i, cols[k]) = vals[k];
  }
  return out;
}

Tensor SparseMatrix::multiply(const Tensor& x) const {
  if (x.rows() != cols_) {
    throw StructuralError("spmm shape mismatch: " + std::to_string(rows_) + "x" +
                          std::to_string(cols_) + " * " + x.shape_string());
  }
  const std::size_t f = x.cols();
  Tensor out(rows_, f);
  for (std::size_t i = 0; i < rows_; ++i) {
    double* orow = out.row(i).data();
    for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
      const double v = values_[k];
      const double* xrow = x.row(col_indices_[k]).data();
      for (std::size_t j = 0; j < f; ++j) orow[j] += v * xrow[j];
    }
  }
  return out;
}

Tensor SparseMatrix::multiply_transposed(const Tensor& x) const {
  if (x.rows() != rows_) {
    throw StructuralError("spmm^T shape mismatch: (" + std::to_string(rows_) + "x" +
                          std::to_string(cols_) + ")^T * " + x.shape_string());
  }
  const std::size_t f = x.cols();
  Tensor out(cols_, f);
  for (std::size_t i = 0; i < rows_; ++i) {
    const double* xrow = x.row(i).data();
    for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
      const double v = values_[k];
      double* orow = out.row(col_indices_[k]).data();
      for (std::size_t j = 0; j < f; ++j) orow[j] += v * xrow[j];
    }
  }
  return out;
}

std::vector<std::size_t> SparseMatrix::entry_rows() const {
  std::vector<std::size_t> out(values_.size());
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) out[k] = i;
  return out;
}

SparseMatrix symmetrize_dedup(const EdgeList& edges, std::size_t n) {
  std::vector<Triplet> trips;
  trips.reserve(2 * edges.size());
  for (const auto& [u, v] : edges) {
    if (u >= n || v >= n) {
      throw InputError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                       ") references a node >= " + std::to_string(n));
    }
    if (u == v) continue;
    trips.push_back({u, v, 1.0});
    trips.push_back({v, u, 1.0});
  }
  SparseMatrix summed = SparseMatrix::from_triplets(n, n, std::move(trips));
  return summed.with_values(std::vector<double>(summed.nnz(), 1.0));
}

std::vector<double> degrees(const SparseMatrix& a) {
  std::vector<double> d(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (double v : a.row_values(i)) d[i] += v;
  return d;
}

SparseMatrix add_identity(const SparseMatrix& a) {
  std::vector<Triplet> trips;
  trips.reserve(a.nnz() + a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto cols = a.row_cols(i);
    const auto vals = a.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) trips.push_back({i, cols[k], vals[k]});
    trips.push_back({i, i, 1.0});
  }
  return SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(trips));
}

SparseMatrix normalize_sym(const SparseMatrix& a, bool add_self_loops, double eps) {
  const SparseMatrix base = add_self_loops ? add_identity(a) : a;
  const auto d = degrees(base);
  std::vector<double> r(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) r[i] = guarded_rsqrt(d[i], eps);
  std::vector<double> vals(base.values().begin(), base.values().end());
  for (std::size_t i = 0; i < base.rows(); ++i) {
    const auto cols = base.row_cols(i);
    const std::size_t off = base.row_offsets()[i];
    for (std::size_t k = 0; k < cols.size(); ++k) vals[off + k] *= r[i] * r[cols[k]];
  }
  return base.with_values(std::move(vals));
}

SparseMatrix normalize_row(const SparseMatrix& a, double eps) {
  const auto d = degrees(a);
  std::vector<double> vals(a.values().begin(), a.values().end());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double inv = guarded_inverse(d[i], eps);
    for (std::size_t k = a.row_offsets()[i]; k < a.row_offsets()[i + 1]; ++k) vals[k] *= inv;
  }
  return a.with_values(std::move(vals));
}

SparseMatrix laplacian_sym(const SparseMatrix& a, double eps) {
  const SparseMatrix norm = normalize_sym(a, false, eps);
  std::vector<Triplet> trips;
  trips.reserve(norm.nnz() + norm.rows());
  for (std::size_t i = 0; i < norm.rows(); ++i) {
    const auto cols = norm.row_cols(i);
    const auto vals = norm.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) trips.push_back({i, cols[k], -vals[k]});
    trips.push_back({i, i, 1.0});
  }
  return SparseMatrix::from_triplets(norm.rows(), norm.cols(), std::move(trips));
}

EdgeList upper_edges(const SparseMatrix& a) {
  EdgeList out;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j : a.row_cols(i))
      if (i < j) out.emplace_back(i, j);
  return out;
}

std::vector<std::size_t> connected_components(const SparseMatrix& a, std::size_t* count) {
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> comp(a.rows(), kUnset);
  std::vector<std::size_t> stack;
  std::size_t next = 0;
  for (std::size_t s = 0; s < a.rows(); ++s) {
    if (comp[s] != kUnset) continue;
    comp[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v : a.row_cols(u)) {
        if (comp[v] == kUnset) {
          comp[v] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  if (count != nullptr) *count = next;
  return comp;
}

}  // namespace lereg
