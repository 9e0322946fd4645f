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
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lereg/sparse_matrix.hpp"
#include "lereg/tensor.hpp"

namespace lereg::ad {

/// Ordered (both-direction) edge list in CSR entry order of an adjacency.
struct EdgeIndex {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;

  std::size_t size() const { return src.size(); }
  static EdgeIndex from_pattern(const SparseMatrix& a);
};

enum class Op : std::uint8_t {
  kLeaf,
  kMatMul,
  kSpMM,
  kTranspose,
  kAdd,
  kSub,
  kHadamard,
  kScale,
  kScaleRows,
  kRelu,
  kRowSoftmax,
  kRsqrtEps,
  kRowSum,
  kTotalSum,
  kEdgePairDot,
  kEdgeEnergy,
  kMaskedCrossEntropy,
  kHinge,
  kQuadEnergy,
};

const char* op_name(Op op);

class Tape;

/// Constants carried by a recorded primitive.
struct SavedState {
  double scalar = 0.0;
  std::shared_ptr<const SparseMatrix> sparse;
  std::shared_ptr<const EdgeIndex> edges;
  std::shared_ptr<const std::vector<double>> vec;
  std::shared_ptr<const Tensor> targets;
  std::shared_ptr<const std::vector<std::size_t>> index;
};

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  const Tensor& value() const;
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients of a scalar output with respect to requires_grad leaves.
class Gradients {
 public:
  bool contains(Var v) const { return by_id_.count(v.id()) != 0; }
  /// Throws StructuralError if v has no gradient.
  const Tensor& at(Var v) const;
  std::size_t size() const { return by_id_.size(); }

 private:
  friend class Tape;
  std::map<std::size_t, Tensor> by_id_;
};

/// Records primitive applications in topological order and replays them in
/// exact reverse order for the adjoint pass. Single owner; not thread-safe.
class Tape {
 public:
#ifdef NDEBUG
  static constexpr bool kDefaultFiniteChecks = false;
#else
  static constexpr bool kDefaultFiniteChecks = true;
#endif

  explicit Tape(bool check_finite = kDefaultFiniteChecks) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad, std::string name = {});
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_.at(v.id()).op; }

  /// Reverse pass from a 1x1 output.
  Gradients backward(Var output) const;

  /// Sign pattern of every relu/hinge input recorded so far (1 = active
  /// branch). Two evaluations with different patterns straddle a kink.
  const std::vector<std::uint8_t>& kink_pattern() const { return kink_pattern_; }
  /// Number of relu/hinge inputs that sat exactly on the kink.
  std::size_t exact_kinks() const { return exact_kinks_; }

  using Saved = SavedState;

  /// Appends a node; used by the primitive functions below.
  Var record(Op op, std::vector<std::size_t> inputs, Tensor value, Saved saved = {});
  void note_kink(bool active, bool exact);

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    Saved saved;
    std::string name;
  };

  void accumulate_adjoint(const Node& node, const Tensor& g,
                          std::vector<Tensor>& adj, std::vector<char>& has) const;

  std::vector<Node> nodes_;
  std::vector<std::uint8_t> kink_pattern_;
  std::size_t exact_kinks_ = 0;
  bool check_finite_;
};

// Primitives. Shapes are explicit; there is no broadcasting.
Var matmul(Var a, Var b);
/// s * b for a constant sparse matrix s.
Var spmm(std::shared_ptr<const SparseMatrix> s, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double c);
/// Row i multiplied by the constant factors[i].
Var scale_rows(Var a, std::shared_ptr<const std::vector<double>> factors);
Var relu(Var a);
/// Max-subtracted softmax across each row.
Var row_softmax(Var a);
/// Elementwise 1/sqrt(x + eps).
Var rsqrt_eps(Var a, double eps);
/// N x C -> N x 1.
Var row_sum(Var a);
/// Any shape -> 1 x 1.
Var total_sum(Var a);
/// Per ordered edge e=(i,j): <p_i, p_j>. Output |E| x 1.
Var edge_pair_dot(Var p, std::shared_ptr<const EdgeIndex> edges);
/// 1/2 * sum_e w_e ||h_i - h_j||^2 over the ordered edges. w is |E| x 1.
Var edge_energy(Var h, std::shared_ptr<const EdgeIndex> edges, Var w);
/// -(1/|idx|) sum_{i in idx} sum_j T_ij log(max(P_ij, eps)); T is constant.
Var masked_cross_entropy(Var p, std::shared_ptr<const Tensor> targets,
                         std::shared_ptr<const std::vector<std::size_t>> idx, double eps);
/// Elementwise max(0, margin - x).
Var hinge(double margin, Var x);
/// tr(H^T L H) for a constant sparse L.
Var quad_energy(Var h, std::shared_ptr<const SparseMatrix> l);

}  // namespace lereg::ad
