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

#include "lereg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lereg/errors.hpp"

namespace lereg::ad {

namespace {

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw StructuralError("operands recorded on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw StructuralError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                          b.shape_string());
  }
}

void axpy(Tensor& dst, const Tensor& src, double alpha = 1.0) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += alpha * src[k];
}

}  // namespace

EdgeIndex EdgeIndex::from_pattern(const SparseMatrix& a) {
  EdgeIndex e;
  e.num_nodes = a.rows();
  e.src = a.entry_rows();
  e.dst.assign(a.col_indices().begin(), a.col_indices().end());
  return e;
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatMul: return "matmul";
    case Op::kSpMM: return "spmm";
    case Op::kTranspose: return "transpose";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kHadamard: return "hadamard";
    case Op::kScale: return "scale";
    case Op::kScaleRows: return "scale_rows";
    case Op::kRelu: return "relu";
    case Op::kRowSoftmax: return "row_softmax";
    case Op::kRsqrtEps: return "rsqrt_eps";
    case Op::kRowSum: return "row_sum";
    case Op::kTotalSum: return "total_sum";
    case Op::kEdgePairDot: return "edge_pair_dot";
    case Op::kEdgeEnergy: return "edge_energy";
    case Op::kMaskedCrossEntropy: return "masked_cross_entropy";
    case Op::kHinge: return "hinge";
    case Op::kQuadEnergy: return "quad_energy";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

const Tensor& Gradients::at(Var v) const {
  const auto it = by_id_.find(v.id());
  if (it == by_id_.end()) throw StructuralError("no gradient recorded for node " + std::to_string(v.id()));
  return it->second;
}

Var Tape::leaf(Tensor value, bool requires_grad, std::string name) {
  if (check_finite_ && !value.all_finite()) {
    throw NumericError("non-finite value in leaf '" + name + "'");
  }
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Op op, std::vector<std::size_t> inputs, Tensor value, Saved saved) {
  if (check_finite_ && !value.all_finite()) {
    throw NumericError(std::string("non-finite output from ") + op_name(op));
  }
  Node n;
  n.op = op;
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [&](std::size_t id) { return nodes_[id].requires_grad; });
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  n.saved = std::move(saved);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::note_kink(bool active, bool exact) {
  kink_pattern_.push_back(active ? 1 : 0);
  if (exact) ++exact_kinks_;
}

Gradients Tape::backward(Var output) const {
  if (&output.tape() != this) throw StructuralError("backward: output belongs to another tape");
  const Node& out = nodes_.at(output.id());
  if (!out.value.is_scalar()) {
    throw StructuralError("backward requires a 1x1 output, got " + out.value.shape_string());
  }
  std::vector<Tensor> adj(nodes_.size());
  std::vector<char> has(nodes_.size(), 0);
  adj[output.id()] = Tensor(1, 1, 1.0);
  has[output.id()] = 1;
  Gradients grads;
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    if (!has[id]) continue;
    const Node& node = nodes_[id];
    if (!node.requires_grad) continue;
    if (node.op == Op::kLeaf) {
      grads.by_id_.emplace(id, std::move(adj[id]));
      continue;
    }
    accumulate_adjoint(node, adj[id], adj, has);
    adj[id] = Tensor();
  }
  return grads;
}

void Tape::accumulate_adjoint(const Node& node, const Tensor& g, std::vector<Tensor>& adj,
                              std::vector<char>& has) const {
  // Returns the adjoint buffer of input k, allocating it on first touch, or
  // nullptr when that input does not need a gradient.
  auto slot = [&](std::size_t k) -> Tensor* {
    const std::size_t id = node.inputs[k];
    if (!nodes_[id].requires_grad) return nullptr;
    if (!has[id]) {
      adj[id] = Tensor(nodes_[id].value.rows(), nodes_[id].value.cols());
      has[id] = 1;
    }
    return &adj[id];
  };
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[node.inputs[k]].value; };

  switch (node.op) {
    case Op::kLeaf:
      break;
    case Op::kMatMul: {
      if (Tensor* da = slot(0)) axpy(*da, dense_matmul_nt(g, in(1)));
      if (Tensor* db = slot(1)) axpy(*db, dense_matmul_tn(in(0), g));
      break;
    }
    case Op::kSpMM: {
      if (Tensor* db = slot(0)) axpy(*db, node.saved.sparse->multiply_transposed(g));
      break;
    }
    case Op::kTranspose: {
      if (Tensor* da = slot(0)) axpy(*da, dense_transpose(g));
      break;
    }
    case Op::kAdd: {
      if (Tensor* da = slot(0)) axpy(*da, g);
      if (Tensor* db = slot(1)) axpy(*db, g);
      break;
    }
    case Op::kSub: {
      if (Tensor* da = slot(0)) axpy(*da, g);
      if (Tensor* db = slot(1)) axpy(*db, g, -1.0);
      break;
    }
    case Op::kHadamard: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (Tensor* da = slot(0))
        for (std::size_t k = 0; k < g.size(); ++k) (*da)[k] += g[k] * b[k];
      if (Tensor* db = slot(1))
        for (std::size_t k = 0; k < g.size(); ++k) (*db)[k] += g[k] * a[k];
      break;
    }
    case Op::kScale: {
      if (Tensor* da = slot(0)) axpy(*da, g, node.saved.scalar);
      break;
    }
    case Op::kScaleRows: {
      if (Tensor* da = slot(0)) {
        const auto& f = *node.saved.vec;
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const auto grow = g.row(i);
          auto drow = da->row(i);
          for (std::size_t j = 0; j < g.cols(); ++j) drow[j] += f[i] * grow[j];
        }
      }
      break;
    }
    case Op::kRelu: {
      if (Tensor* da = slot(0)) {
        const Tensor& a = in(0);
        // Subgradient 0 at the kink.
        for (std::size_t k = 0; k < g.size(); ++k)
          if (a[k] > 0.0) (*da)[k] += g[k];
      }
      break;
    }
    case Op::kRowSoftmax: {
      if (Tensor* da = slot(0)) {
        const Tensor& y = node.value;
        for (std::size_t i = 0; i < y.rows(); ++i) {
          const auto yr = y.row(i);
          const auto gr = g.row(i);
          double dot = 0.0;
          for (std::size_t j = 0; j < y.cols(); ++j) dot += gr[j] * yr[j];
          auto dr = da->row(i);
          for (std::size_t j = 0; j < y.cols(); ++j) dr[j] += yr[j] * (gr[j] - dot);
        }
      }
      break;
    }
    case Op::kRsqrtEps: {
      if (Tensor* da = slot(0)) {
        const Tensor& y = node.value;
        for (std::size_t k = 0; k < g.size(); ++k) (*da)[k] += -0.5 * y[k] * y[k] * y[k] * g[k];
      }
      break;
    }
    case Op::kRowSum: {
      if (Tensor* da = slot(0)) {
        for (std::size_t i = 0; i < da->rows(); ++i)
          for (double& v : da->row(i)) v += g(i, 0);
      }
      break;
    }
    case Op::kTotalSum: {
      if (Tensor* da = slot(0)) {
        const double s = g[0];
        for (double& v : da->values()) v += s;
      }
      break;
    }
    case Op::kEdgePairDot: {
      if (Tensor* dp = slot(0)) {
        const Tensor& p = in(0);
        const auto& e = *node.saved.edges;
        const std::size_t c = p.cols();
        for (std::size_t k = 0; k < e.size(); ++k) {
          const double ge = g[k];
          if (ge == 0.0) continue;
          const double* pi = p.row(e.src[k]).data();
          const double* pj = p.row(e.dst[k]).data();
          double* di = dp->row(e.src[k]).data();
          double* dj = dp->row(e.dst[k]).data();
          for (std::size_t t = 0; t < c; ++t) {
            di[t] += ge * pj[t];
            dj[t] += ge * pi[t];
          }
        }
      }
      break;
    }
    case Op::kEdgeEnergy: {
      const Tensor& h = in(0);
      const Tensor& w = in(1);
      const auto& e = *node.saved.edges;
      const std::size_t f = h.cols();
      const double s = g[0];
      Tensor* dh = slot(0);
      Tensor* dw = slot(1);
      for (std::size_t k = 0; k < e.size(); ++k) {
        const double* hi = h.row(e.src[k]).data();
        const double* hj = h.row(e.dst[k]).data();
        if (dw != nullptr) {
          double sq = 0.0;
          for (std::size_t t = 0; t < f; ++t) {
            const double d = hi[t] - hj[t];
            sq += d * d;
          }
          (*dw)[k] += 0.5 * s * sq;
        }
        if (dh != nullptr) {
          const double coef = s * w[k];
          if (coef == 0.0) continue;
          double* di = dh->row(e.src[k]).data();
          double* dj = dh->row(e.dst[k]).data();
          for (std::size_t t = 0; t < f; ++t) {
            const double d = coef * (hi[t] - hj[t]);
            di[t] += d;
            dj[t] -= d;
          }
        }
      }
      break;
    }
    case Op::kMaskedCrossEntropy: {
      if (Tensor* dp = slot(0)) {
        const Tensor& p = in(0);
        const Tensor& t = *node.saved.targets;
        const auto& idx = *node.saved.index;
        const double eps = node.saved.scalar;
        const double s = g[0] / static_cast<double>(idx.size());
        for (std::size_t i : idx) {
          for (std::size_t j = 0; j < p.cols(); ++j) {
            // Clamped entries have zero derivative.
            if (t(i, j) != 0.0 && p(i, j) > eps) (*dp)(i, j) -= s * t(i, j) / p(i, j);
          }
        }
      }
      break;
    }
    case Op::kHinge: {
      if (Tensor* dx = slot(0)) {
        const Tensor& x = in(0);
        const double m = node.saved.scalar;
        for (std::size_t k = 0; k < g.size(); ++k)
          if (m - x[k] > 0.0) (*dx)[k] -= g[k];
      }
      break;
    }
    case Op::kQuadEnergy: {
      if (Tensor* dh = slot(0)) {
        const Tensor& h = in(0);
        const auto& l = *node.saved.sparse;
        Tensor lh = l.multiply(h);
        axpy(lh, l.multiply_transposed(h));
        axpy(*dh, lh, g[0]);
      }
      break;
    }
  }
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  return a.tape().record(Op::kMatMul, {a.id(), b.id()}, dense_matmul(a.value(), b.value()));
}

Var spmm(std::shared_ptr<const SparseMatrix> s, Var b) {
  Tensor out = s->multiply(b.value());
  Tape::Saved saved;
  saved.sparse = std::move(s);
  return b.tape().record(Op::kSpMM, {b.id()}, std::move(out), std::move(saved));
}

Var transpose(Var a) { return a.tape().record(Op::kTranspose, {a.id()}, dense_transpose(a.value())); }

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  axpy(out, b.value());
  return a.tape().record(Op::kAdd, {a.id(), b.id()}, std::move(out));
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  axpy(out, b.value(), -1.0);
  return a.tape().record(Op::kSub, {a.id(), b.id()}, std::move(out));
}

Var hadamard(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "hadamard");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= bv[k];
  return a.tape().record(Op::kHadamard, {a.id(), b.id()}, std::move(out));
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= c;
  Tape::Saved saved;
  saved.scalar = c;
  return a.tape().record(Op::kScale, {a.id()}, std::move(out), std::move(saved));
}

Var scale_rows(Var a, std::shared_ptr<const std::vector<double>> factors) {
  const Tensor& av = a.value();
  if (factors->size() != av.rows()) {
    throw StructuralError("scale_rows: " + std::to_string(factors->size()) + " factors for " +
                          av.shape_string());
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& v : out.row(i)) v *= (*factors)[i];
  Tape::Saved saved;
  saved.vec = std::move(factors);
  return a.tape().record(Op::kScaleRows, {a.id()}, std::move(out), std::move(saved));
}

Var relu(Var a) {
  Tape& tape = a.tape();
  Tensor out = a.value();
  for (double& v : out.values()) {
    tape.note_kink(v > 0.0, v == 0.0);
    if (!(v > 0.0)) v = 0.0;
  }
  return tape.record(Op::kRelu, {a.id()}, std::move(out));
}

Var row_softmax(Var a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : r) v /= sum;
  }
  return a.tape().record(Op::kRowSoftmax, {a.id()}, std::move(out));
}

Var rsqrt_eps(Var a, double eps) {
  Tensor out = a.value();
  for (double& v : out.values()) v = 1.0 / std::sqrt(v + eps);
  Tape::Saved saved;
  saved.scalar = eps;
  return a.tape().record(Op::kRsqrtEps, {a.id()}, std::move(out), std::move(saved));
}

Var row_sum(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (double v : av.row(i)) s += v;
    out(i, 0) = s;
  }
  return a.tape().record(Op::kRowSum, {a.id()}, std::move(out));
}

Var total_sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().record(Op::kTotalSum, {a.id()}, Tensor(1, 1, s));
}

Var edge_pair_dot(Var p, std::shared_ptr<const EdgeIndex> edges) {
  const Tensor& pv = p.value();
  if (edges->num_nodes != pv.rows()) {
    throw StructuralError("edge_pair_dot: edge index over " + std::to_string(edges->num_nodes) +
                          " nodes, P is " + pv.shape_string());
  }
  Tensor out(edges->size(), 1);
  const std::size_t c = pv.cols();
  for (std::size_t k = 0; k < edges->size(); ++k) {
    const double* pi = pv.row(edges->src[k]).data();
    const double* pj = pv.row(edges->dst[k]).data();
    double s = 0.0;
    for (std::size_t t = 0; t < c; ++t) s += pi[t] * pj[t];
    out[k] = s;
  }
  Tape::Saved saved;
  saved.edges = std::move(edges);
  return p.tape().record(Op::kEdgePairDot, {p.id()}, std::move(out), std::move(saved));
}

Var edge_energy(Var h, std::shared_ptr<const EdgeIndex> edges, Var w) {
  require_same_tape(h, w);
  const Tensor& hv = h.value();
  const Tensor& wv = w.value();
  if (edges->num_nodes != hv.rows()) {
    throw StructuralError("edge_energy: edge index over " + std::to_string(edges->num_nodes) +
                          " nodes, H is " + hv.shape_string());
  }
  if (wv.rows() != edges->size() || wv.cols() != 1) {
    throw StructuralError("edge_energy: weights " + wv.shape_string() + " for " +
                          std::to_string(edges->size()) + " edges");
  }
  const std::size_t f = hv.cols();
  double total = 0.0;
  for (std::size_t k = 0; k < edges->size(); ++k) {
    const double* hi = hv.row(edges->src[k]).data();
    const double* hj = hv.row(edges->dst[k]).data();
    double sq = 0.0;
    for (std::size_t t = 0; t < f; ++t) {
      const double d = hi[t] - hj[t];
      sq += d * d;
    }
    total += wv[k] * sq;
  }
  Tape::Saved saved;
  saved.edges = std::move(edges);
  return h.tape().record(Op::kEdgeEnergy, {h.id(), w.id()}, Tensor(1, 1, 0.5 * total),
                         std::move(saved));
}

Var masked_cross_entropy(Var p, std::shared_ptr<const Tensor> targets,
                         std::shared_ptr<const std::vector<std::size_t>> idx, double eps) {
  const Tensor& pv = p.value();
  require_same_shape(pv, *targets, "masked_cross_entropy");
  if (idx->empty()) throw ConfigError("masked_cross_entropy: empty index set");
  double total = 0.0;
  for (std::size_t i : *idx) {
    if (i >= pv.rows()) throw StructuralError("masked_cross_entropy: index out of range");
    for (std::size_t j = 0; j < pv.cols(); ++j) {
      const double t = (*targets)(i, j);
      if (t != 0.0) total -= t * std::log(std::max(pv(i, j), eps));
    }
  }
  Tape::Saved saved;
  saved.scalar = eps;
  saved.targets = std::move(targets);
  const double n = static_cast<double>(idx->size());
  saved.index = std::move(idx);
  return p.tape().record(Op::kMaskedCrossEntropy, {p.id()}, Tensor(1, 1, total / n),
                         std::move(saved));
}

Var hinge(double margin, Var x) {
  Tape& tape = x.tape();
  Tensor out = x.value();
  for (double& v : out.values()) {
    const double r = margin - v;
    tape.note_kink(r > 0.0, r == 0.0);
    v = r > 0.0 ? r : 0.0;
  }
  Tape::Saved saved;
  saved.scalar = margin;
  return tape.record(Op::kHinge, {x.id()}, std::move(out), std::move(saved));
}

Var quad_energy(Var h, std::shared_ptr<const SparseMatrix> l) {
  const Tensor& hv = h.value();
  if (l->rows() != hv.rows() || l->cols() != hv.rows()) {
    throw StructuralError("quad_energy: operator " + std::to_string(l->rows()) + "x" +
                          std::to_string(l->cols()) + " vs H " + hv.shape_string());
  }
  const Tensor lh = l->multiply(hv);
  double s = 0.0;
  for (std::size_t k = 0; k < hv.size(); ++k) s += hv[k] * lh[k];
  Tape::Saved saved;
  saved.sparse = std::move(l);
  return h.tape().record(Op::kQuadEnergy, {h.id()}, Tensor(1, 1, s), std::move(saved));
}

}  // namespace lereg::ad
