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

#include "lereg/regularizers.hpp"

#include <algorithm>
#include <string>

#include "lereg/errors.hpp"

namespace lereg {

RegConfig RegConfig::broadcast(std::size_t layers, double alpha, double beta) {
  RegConfig cfg;
  cfg.alphas.assign(layers, alpha);
  cfg.betas.assign(layers, beta);
  return cfg;
}

RegConfig RegConfig::final_layer_only(std::size_t layers, double alpha, double beta) {
  RegConfig cfg;
  cfg.alphas.assign(layers, 0.0);
  cfg.betas.assign(layers, 0.0);
  if (layers > 0) {
    cfg.alphas.back() = alpha;
    cfg.betas.back() = beta;
  }
  return cfg;
}

void RegConfig::validate(std::size_t layers) const {
  if (alphas.size() != layers || betas.size() != layers) {
    throw ConfigError("alphas/betas have " + std::to_string(alphas.size()) + "/" +
                      std::to_string(betas.size()) + " entries, model has " +
                      std::to_string(layers) + " regularizable layers");
  }
  for (double a : alphas)
    if (!(a >= 0.0)) throw ConfigError("alpha factors must be >= 0");
  for (double b : betas)
    if (!(b >= 0.0)) throw ConfigError("beta factors must be >= 0");
  if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
}

bool RegConfig::any_active() const {
  return std::any_of(alphas.begin(), alphas.end(), [](double a) { return a > 0.0; }) ||
         std::any_of(betas.begin(), betas.end(), [](double b) { return b > 0.0; });
}

GraphContext GraphContext::build(const SparseMatrix& adjacency, double eps) {
  if (adjacency.rows() != adjacency.cols()) throw StructuralError("adjacency must be square");
  GraphContext ctx;
  ctx.eps = eps;
  ctx.adjacency = std::make_shared<const SparseMatrix>(adjacency);
  ctx.edges = std::make_shared<const ad::EdgeIndex>(ad::EdgeIndex::from_pattern(adjacency));
  ctx.laplacian = std::make_shared<const SparseMatrix>(laplacian_sym(adjacency, eps));
  ctx.degrees = lereg::degrees(adjacency);
  const auto vals = adjacency.values();
  if (!std::all_of(vals.begin(), vals.end(), [](double v) { return v == 1.0; })) {
    ctx.edge_values = std::make_shared<const Tensor>(
        Tensor(vals.size(), 1, std::vector<double>(vals.begin(), vals.end())));
  }
  return ctx;
}

SparseMatrix MaskArtifacts::masked_adjacency(const SparseMatrix& pattern) const {
  const Tensor& w = edge_weights.value();
  return pattern.with_values(std::vector<double>(w.values().begin(), w.values().end()));
}

SparseMatrix discrete_mask(const SparseMatrix& a, const std::vector<int>& predicted) {
  if (predicted.size() != a.rows()) throw StructuralError("discrete_mask: label count mismatch");
  std::vector<Triplet> trips;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto cols = a.row_cols(i);
    const auto vals = a.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (predicted[i] == predicted[cols[k]]) trips.push_back({i, cols[k], vals[k]});
  }
  return SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(trips));
}

namespace {

std::vector<double> weighted_out_degrees(const ad::EdgeIndex& edges, const Tensor& w) {
  std::vector<double> d(edges.num_nodes, 0.0);
  for (std::size_t k = 0; k < edges.size(); ++k) d[edges.src[k]] += w[k];
  return d;
}

std::shared_ptr<const std::vector<double>> rsqrt_factors(const std::vector<double>& d, double eps) {
  auto r = std::make_shared<std::vector<double>>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) (*r)[i] = guarded_rsqrt(d[i], eps);
  return r;
}

}  // namespace

MaskArtifacts soft_mask(const GraphContext& ctx, ad::Var probs, MaskMode mode,
                        DegreeSnapshot* snapshot) {
  ad::Tape& tape = probs.tape();
  if (probs.value().rows() != ctx.adjacency->rows()) {
    throw StructuralError("soft_mask: P has " + std::to_string(probs.value().rows()) +
                          " rows for a graph of " + std::to_string(ctx.adjacency->rows()));
  }
  ad::Var q;
  if (mode == MaskMode::kFullGradient) {
    q = ad::edge_pair_dot(probs, ctx.edges);
  } else {
    Tensor frozen;
    if (snapshot != nullptr && snapshot->frozen_q) {
      frozen = *snapshot->frozen_q;
    } else {
      ad::Tape scratch(false);
      frozen = ad::edge_pair_dot(scratch.constant(probs.value()), ctx.edges).value();
      if (snapshot != nullptr) snapshot->frozen_q = frozen;
    }
    q = tape.constant(std::move(frozen));
  }
  ad::Var w = ctx.edge_values ? ad::hadamard(q, tape.constant(*ctx.edge_values)) : q;

  MaskArtifacts out;
  out.edge_weights = w;
  out.edges = ctx.edges;
  out.num_nodes = ctx.adjacency->rows();
  if (snapshot != nullptr && snapshot->masked_degrees) {
    out.masked_degrees = std::make_shared<const std::vector<double>>(*snapshot->masked_degrees);
  } else {
    auto d = weighted_out_degrees(*ctx.edges, w.value());
    if (snapshot != nullptr) snapshot->masked_degrees = d;
    out.masked_degrees = std::make_shared<const std::vector<double>>(std::move(d));
  }
  return out;
}

MaskArtifacts constant_mask(const GraphContext& ctx, const SparseMatrix& masked, ad::Tape& tape) {
  const SparseMatrix& a = *ctx.adjacency;
  if (masked.rows() != a.rows()) throw StructuralError("constant_mask: size mismatch");
  Tensor w(a.nnz(), 1);
  for (std::size_t k = 0; k < ctx.edges->size(); ++k) {
    const std::size_t i = ctx.edges->src[k];
    const std::size_t j = ctx.edges->dst[k];
    w[k] = masked.at(i, j);
  }
  for (std::size_t i = 0; i < masked.rows(); ++i)
    for (std::size_t j : masked.row_cols(i))
      if (!a.contains(i, j)) throw StructuralError("constant_mask: masked pattern not within A");
  MaskArtifacts out;
  out.masked_degrees = std::make_shared<const std::vector<double>>(weighted_out_degrees(*ctx.edges, w));
  out.edge_weights = tape.constant(std::move(w));
  out.edges = ctx.edges;
  out.num_nodes = a.rows();
  return out;
}

ad::Var global_energy(ad::Var h, const GraphContext& ctx) { return ad::quad_energy(h, ctx.laplacian); }

ad::Var intra_energy(ad::Var h, const MaskArtifacts& mask, double eps) {
  if (h.value().rows() != mask.num_nodes) throw StructuralError("intra_energy: H row count mismatch");
  const ad::Var normalized = ad::scale_rows(h, rsqrt_factors(*mask.masked_degrees, eps));
  return ad::edge_energy(normalized, mask.edges, mask.edge_weights);
}

MergedGraph merge_graph(const GraphContext& ctx, ad::Var probs, ad::Var h, bool zero_diagonal,
                        DegreeSnapshot* snapshot) {
  ad::Tape& tape = probs.tape();
  const ad::Var pt = ad::transpose(probs);
  ad::Var merged = ad::matmul(pt, ad::spmm(ctx.adjacency, probs));
  if (zero_diagonal) {
    const std::size_t c = merged.value().rows();
    Tensor off(c, c, 1.0);
    for (std::size_t k = 0; k < c; ++k) off(k, k) = 0.0;
    merged = ad::hadamard(merged, tape.constant(std::move(off)));
  }
  MergedGraph out;
  out.adjacency = merged;
  out.embeddings = ad::matmul(pt, h);
  if (snapshot != nullptr && snapshot->merged_degrees) {
    out.degrees = std::make_shared<const std::vector<double>>(*snapshot->merged_degrees);
  } else {
    const Tensor& a = merged.value();
    std::vector<double> d(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (double v : a.row(i)) d[i] += v;
    if (snapshot != nullptr) snapshot->merged_degrees = d;
    out.degrees = std::make_shared<const std::vector<double>>(std::move(d));
  }
  return out;
}

ad::Var inter_energy(const MergedGraph& merged, double eps) {
  // 1/2 sum_kl A_kl ||x_k - x_l||^2
  //   = 1/2 sum_k (rowsum_k + colsum_k) ||x_k||^2 - sum_kl A_kl <x_k, x_l>.
  const ad::Var x = ad::scale_rows(merged.embeddings, rsqrt_factors(*merged.degrees, eps));
  const ad::Var sq_norms = ad::row_sum(ad::hadamard(x, x));
  const ad::Var a = merged.adjacency;
  const ad::Var sym_degree = ad::scale(ad::add(ad::row_sum(a), ad::row_sum(ad::transpose(a))), 0.5);
  const ad::Var diag_part = ad::total_sum(ad::hadamard(sym_degree, sq_norms));
  const ad::Var cross = ad::total_sum(ad::hadamard(a, ad::matmul(x, ad::transpose(x))));
  return ad::sub(diag_part, cross);
}

ad::Var inter_reg_loss(ad::Var e_inter, double margin) {
  if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
  return ad::hinge(margin, e_inter);
}

LayerwiseTerms layerwise_losses(const ForwardTrace& trace, const GraphContext& ctx,
                                const RegConfig& cfg, DegreeSnapshot* snapshot) {
  const std::size_t layers = trace.hidden.size() - 1;
  cfg.validate(layers);
  LayerwiseTerms terms;
  terms.intra.resize(layers);
  terms.inter_energy.resize(layers);
  terms.inter_loss.resize(layers);

  std::optional<MaskArtifacts> mask;
  std::optional<MergedGraph> merged_base;
  for (std::size_t l = 1; l <= layers; ++l) {
    const ad::Var h = trace.hidden[l];
    if (cfg.alphas[l - 1] > 0.0) {
      if (!mask) mask = soft_mask(ctx, trace.probs, cfg.mask_mode, snapshot);
      terms.intra[l - 1] = intra_energy(h, *mask, cfg.eps);
    }
    if (cfg.betas[l - 1] > 0.0) {
      MergedGraph merged;
      if (!merged_base) {
        merged_base = merge_graph(ctx, trace.probs, h, cfg.zero_merged_diagonal, snapshot);
        merged = *merged_base;
      } else {
        merged = *merged_base;
        merged.embeddings = ad::matmul(ad::transpose(trace.probs), h);
      }
      const ad::Var e = inter_energy(merged, cfg.eps);
      terms.inter_energy[l - 1] = e;
      terms.inter_loss[l - 1] = inter_reg_loss(e, cfg.margin);
    }
  }
  return terms;
}

std::vector<double> LossBreakdown::intra_values() const {
  std::vector<double> out;
  for (const auto& t : terms.intra) out.push_back(t ? t->value().scalar() : 0.0);
  return out;
}

std::vector<double> LossBreakdown::inter_loss_values() const {
  std::vector<double> out;
  for (const auto& t : terms.inter_loss) out.push_back(t ? t->value().scalar() : 0.0);
  return out;
}

LossBreakdown combined_loss(const ForwardTrace& trace, const GraphContext& ctx,
                            std::shared_ptr<const Tensor> targets,
                            std::shared_ptr<const std::vector<std::size_t>> train_idx,
                            const RegConfig& cfg, DegreeSnapshot* snapshot) {
  if (!train_idx || train_idx->empty()) throw ConfigError("combined_loss: empty train set");
  LossBreakdown out;
  out.supervised = ad::masked_cross_entropy(trace.probs, std::move(targets), std::move(train_idx), cfg.eps);
  out.terms = layerwise_losses(trace, ctx, cfg, snapshot);
  ad::Var total = out.supervised;
  for (std::size_t l = 0; l < out.terms.intra.size(); ++l)
    if (out.terms.intra[l]) total = ad::add(total, ad::scale(*out.terms.intra[l], cfg.alphas[l]));
  for (std::size_t l = 0; l < out.terms.inter_loss.size(); ++l)
    if (out.terms.inter_loss[l]) total = ad::add(total, ad::scale(*out.terms.inter_loss[l], cfg.betas[l]));
  out.total = total;
  return out;
}

ad::Var baseline_laplacian_reg(ad::Var h, const GraphContext& ctx) {
  ad::Tape& tape = h.tape();
  const ad::Var w = ctx.edge_values ? tape.constant(*ctx.edge_values)
                                    : tape.constant(Tensor(ctx.edges->size(), 1, 1.0));
  return ad::edge_energy(h, ctx.edges, w);
}

Tensor one_hot(const std::vector<int>& labels, int num_classes) {
  Tensor y(labels.size(), static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw InputError("label out of range in one_hot");
    y(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return y;
}

Tensor label_smoothing(const Tensor& one_hot_targets, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("label smoothing factor must lie in [0, 1]");
  Tensor out = one_hot_targets;
  const double uniform = alpha / static_cast<double>(out.cols());
  for (double& v : out.values()) v = (1.0 - alpha) * v + uniform;
  return out;
}

}  // namespace lereg
