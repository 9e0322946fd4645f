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

#include "lereg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lereg/errors.hpp"

namespace lereg::diag {

EigenDecomposition eig_sym_dense(const Tensor& m) {
  const std::size_t n = m.rows();
  if (m.cols() != n) throw StructuralError("eig_sym_dense: matrix is " + m.shape_string() + ", not square");
  if (n > kMaxDenseEigen)
    throw SizeError("eig_sym_dense: n = " + std::to_string(n) + " exceeds " + std::to_string(kMaxDenseEigen));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-10) throw StructuralError("eig_sym_dense: matrix is not symmetric");

  Tensor a = m;
  Tensor v = Tensor::identity(n);
  double total = 0.0;
  for (double x : a.values()) total += x * x;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-32 * total || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
  EigenDecomposition out;
  out.vectors = Tensor(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values.push_back(a(order[k], order[k]));
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

std::optional<double> set_conductance(const SparseMatrix& a, const std::vector<bool>& subset) {
  if (subset.size() != a.rows()) throw StructuralError("set_conductance: indicator length mismatch");
  double cut = 0.0, vol_in = 0.0, vol_out = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto cols = a.row_cols(i);
    const auto vals = a.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      (subset[i] ? vol_in : vol_out) += vals[k];
      if (subset[i] && !subset[cols[k]]) cut += vals[k];
    }
  }
  const double denom = std::min(vol_in, vol_out);
  if (denom <= 0.0) return std::nullopt;
  return cut / denom;
}

ConductanceResult conductance_bruteforce(const SparseMatrix& a, std::size_t max_n) {
  const std::size_t n = a.rows();
  if (n > max_n)
    throw SizeError("conductance_bruteforce: n = " + std::to_string(n) + " exceeds limit " + std::to_string(max_n));
  ConductanceResult best;
  best.subset.assign(n, false);
  if (n < 2) return best;

  const auto deg = degrees(a);
  double total = 0.0;
  for (double d : deg) total += d;
  const auto edges = upper_edges(a);
  std::vector<double> weight;
  for (auto [i, j] : edges) weight.push_back(a.at(i, j));

  bool found = false;
  const std::uint64_t limit = std::uint64_t{1} << (n - 1);
  for (std::uint64_t mask = 1; mask < limit; ++mask) {
    double vol = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1U) vol += deg[i];
    const double denom = std::min(vol, total - vol);
    if (denom <= 0.0) continue;
    double cut = 0.0;
    for (std::size_t e = 0; e < edges.size(); ++e)
      if ((mask >> edges[e].first & 1U) != (mask >> edges[e].second & 1U)) cut += weight[e];
    const double phi = cut / denom;
    if (!found || phi < best.phi) {
      found = true;
      best.phi = phi;
      for (std::size_t i = 0; i < n; ++i) best.subset[i] = (mask >> i & 1U) != 0;
    }
  }
  return best;
}

CheegerReport cheeger_check(const SparseMatrix& a, double slack) {
  CheegerReport r;
  std::size_t count = 0;
  connected_components(a, &count);
  r.connected = count == 1 && a.rows() >= 2;
  if (!r.connected) return r;
  r.phi = conductance_bruteforce(a).phi;
  const auto eig = eig_sym_dense(laplacian_sym(a).to_dense());
  r.lambda_star = eig.values[1];
  r.lambda = 1.0 - r.lambda_star;
  r.lambda_lower = 1.0 - 2.0 * r.phi;
  r.lambda_upper = 1.0 - r.phi * r.phi / 2.0;
  r.holds = 2.0 * r.phi + slack >= r.lambda_star && r.lambda_star + slack >= r.phi * r.phi / 2.0;
  return r;
}

bool SubgraphReport::holds() const {
  return std::all_of(classes.begin(), classes.end(), [](const SubgraphBound& b) { return b.holds; });
}

SubgraphReport subgraph_bound_check(const SparseMatrix& a, const std::vector<int>& labels, double slack) {
  const std::size_t n = a.rows();
  if (labels.size() != n) throw StructuralError("subgraph_bound_check: labels length mismatch");
  SubgraphReport r;
  r.phi_graph = conductance_bruteforce(a).phi;
  r.lambda_upper_graph = 1.0 - r.phi_graph * r.phi_graph / 2.0;
  r.lambda_lower_graph = 1.0 - 2.0 * r.phi_graph;

  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  for (int k : classes) {
    SubgraphBound b;
    b.label = k;
    std::vector<int> piece(n, -1);
    int pieces = 0;
    for (std::size_t s = 0; s < n; ++s) {
      if (labels[s] != k || piece[s] >= 0) continue;
      std::vector<std::size_t> stack = {s};
      piece[s] = pieces;
      while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        for (std::size_t v : a.row_cols(u))
          if (labels[v] == k && piece[v] < 0) {
            piece[v] = pieces;
            stack.push_back(v);
          }
      }
      ++pieces;
    }
    for (int p = 0; p < pieces; ++p) {
      std::vector<bool> subset(n);
      std::size_t size = 0;
      for (std::size_t i = 0; i < n; ++i) {
        subset[i] = piece[i] == p;
        size += subset[i];
      }
      std::optional<double> phi = size == n ? std::optional<double>(r.phi_graph) : set_conductance(a, subset);
      if (!phi) continue;
      b.phi_pieces.push_back(*phi);
      if (*phi + slack < r.phi_graph) b.holds = false;
    }
    b.phi_min = b.phi_pieces.empty() ? r.phi_graph : *std::min_element(b.phi_pieces.begin(), b.phi_pieces.end());
    b.lambda_upper = 1.0 - b.phi_min * b.phi_min / 2.0;
    b.lambda_lower = 1.0 - 2.0 * b.phi_min;
    if (b.lambda_upper > r.lambda_upper_graph + slack || b.lambda_lower > r.lambda_lower_graph + slack)
      b.holds = false;
    r.classes.push_back(std::move(b));
  }
  return r;
}

namespace {

Tensor top_basis(const SparseMatrix& a, std::size_t* count) {
  const std::size_t n = a.rows();
  const auto comp = connected_components(a, count);
  const auto deg = degrees(a);
  Tensor basis(n, *count);
  std::vector<double> norm(*count, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::sqrt(deg[i] + 1.0);
    basis(i, comp[i]) = v;
    norm[comp[i]] += v * v;
  }
  for (std::size_t i = 0; i < n; ++i) basis(i, comp[i]) /= std::sqrt(norm[comp[i]]);
  return basis;
}

double second_magnitude(const std::vector<double>& ascending, std::size_t top) {
  double lambda = 0.0;
  for (std::size_t k = 0; k + top < ascending.size(); ++k) lambda = std::max(lambda, std::abs(ascending[k]));
  return lambda;
}

}  // namespace

SpectralReport spectral_report(const SparseMatrix& a) {
  SpectralReport r;
  r.top_basis = top_basis(a, &r.components);
  r.eigenvalues = eig_sym_dense(normalize_sym(a, true).to_dense()).values;
  r.lambda = second_magnitude(r.eigenvalues, r.components);
  if (a.rows() <= kMaxBruteForce) {
    r.phi = conductance_bruteforce(a).phi;
    r.lambda_lower = 1.0 - 2.0 * *r.phi;
    r.lambda_upper = 1.0 - *r.phi * *r.phi / 2.0;
  }
  return r;
}

double distance_to_subspace(const Tensor& h, const Tensor& basis) {
  const Tensor coeff = dense_matmul_tn(basis, h);
  const Tensor proj = dense_matmul(basis, coeff);
  double s = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) s += (h[k] - proj[k]) * (h[k] - proj[k]);
  return std::sqrt(s);
}

double spectral_norm(const Tensor& w, std::size_t iterations) {
  if (w.size() == 0) return 0.0;
  const Tensor gram = dense_matmul_tn(w, w);
  const std::size_t n = gram.rows();
  Tensor x(n, 1, 1.0);
  for (std::size_t i = 0; i < n; ++i) x(i, 0) += 0.01 * static_cast<double>(i);
  double eig = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    Tensor y = dense_matmul(gram, x);
    const double norm = frobenius_norm(y);
    if (norm == 0.0) return 0.0;
    for (double& v : y.values()) v /= norm;
    const Tensor gy = dense_matmul(gram, y);
    double next = 0.0;
    for (std::size_t i = 0; i < n; ++i) next += y(i, 0) * gy(i, 0);
    x = std::move(y);
    if (it > 0 && std::abs(next - eig) <= 1e-15 * std::abs(next)) {
      eig = next;
      break;
    }
    eig = next;
  }
  return std::sqrt(std::max(eig, 0.0)) * (1.0 + 1e-9);
}

ConvergenceTrace convergence_trace(const SparseMatrix& adjacency, const std::vector<Tensor>& weights, const Tensor& h0,
                                   std::size_t steps, double slack) {
  if (h0.rows() != adjacency.rows()) throw StructuralError("convergence_trace: H0 rows do not match the graph");
  if (!weights.empty() && weights.size() != steps && weights.size() != 1)
    throw ConfigError("convergence_trace: need one weight per step, a single shared weight, or none");
  for (const auto& w : weights)
    if (w.rows() != h0.cols() || w.cols() != h0.cols())
      throw StructuralError("convergence_trace: weights must be " + std::to_string(h0.cols()) + " x " +
                            std::to_string(h0.cols()));

  const SparseMatrix prop = normalize_sym(adjacency, true);
  std::size_t m = 0;
  const Tensor basis = top_basis(adjacency, &m);
  ConvergenceTrace t;
  t.lambda = second_magnitude(eig_sym_dense(prop.to_dense()).values, m);

  std::vector<double> s(steps, 1.0);
  if (weights.size() == 1) {
    std::fill(s.begin(), s.end(), spectral_norm(weights[0]));
  } else {
    for (std::size_t l = 0; l < weights.size(); ++l) s[l] = spectral_norm(weights[l]);
  }
  t.singular = s;
  const double s_max = s.empty() ? 1.0 : *std::max_element(s.begin(), s.end());
  t.converges = s_max * t.lambda < 1.0;

  Tensor h = h0;
  const double d0 = distance_to_subspace(h, basis);
  t.distance.push_back(d0);
  t.envelope.push_back(d0);
  double factor = 1.0;
  for (std::size_t l = 0; l < steps; ++l) {
    h = prop.multiply(h);
    if (!weights.empty()) h = dense_matmul(h, weights.size() == 1 ? weights[0] : weights[l]);
    factor *= s[l] * t.lambda;
    t.distance.push_back(distance_to_subspace(h, basis));
    t.envelope.push_back(factor * d0);
    if (t.distance.back() > t.envelope.back() + slack) t.holds = false;
  }
  return t;
}

Lemma3Report lemma3_check(const SparseMatrix& a, const Tensor& h) {
  if (h.rows() != a.rows()) throw StructuralError("lemma3_check: H rows do not match the graph");
  const std::size_t n = h.rows(), f = h.cols();
  Lemma3Report r;
  r.aggregated = a.multiply(h);
  r.stepped = h;
  r.row_normalized = true;
  for (std::size_t i = 0; i < n; ++i) {
    const auto cols = a.row_cols(i);
    const auto vals = a.row_values(i);
    double row_sum = 0.0;
    for (double v : vals) row_sum += v;
    if (std::abs(row_sum - 1.0) > 1e-12) r.row_normalized = false;
    for (std::size_t c = 0; c < f; ++c) {
      double g = 0.0;
      for (std::size_t k = 0; k < cols.size(); ++k) g += vals[k] * (h(i, c) - h(cols[k], c));
      r.stepped(i, c) = h(i, c) - g;
      r.max_error = std::max(r.max_error, std::abs(r.stepped(i, c) - r.aggregated(i, c)));
      r.residual_term = std::max(r.residual_term, std::abs((1.0 - row_sum) * h(i, c)));
    }
  }
  return r;
}

std::vector<double> per_class_smoothness(const Tensor& h, const std::vector<int>& labels, int num_classes) {
  if (labels.size() != h.rows()) throw StructuralError("per_class_smoothness: labels length mismatch");
  const std::size_t c = static_cast<std::size_t>(num_classes);
  std::vector<double> count(c, 0.0), sq(c, 0.0);
  Tensor sum(c, h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw InputError("per_class_smoothness: label out of range");
    const auto k = static_cast<std::size_t>(labels[i]);
    count[k] += 1.0;
    for (std::size_t f = 0; f < h.cols(); ++f) {
      sq[k] += h(i, f) * h(i, f);
      sum(k, f) += h(i, f);
    }
  }
  std::vector<double> out(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    if (count[k] < 2.0) continue;
    double mean_sq = 0.0;
    for (std::size_t f = 0; f < h.cols(); ++f) mean_sq += (sum(k, f) / count[k]) * (sum(k, f) / count[k]);
    out[k] = std::max(0.0, 2.0 * (sq[k] / count[k] - mean_sq));
  }
  return out;
}

namespace {

LayerEnergy layer_energy(const Tensor& h, const GraphContext& ctx, const Tensor& probs, bool zero_diag) {
  ad::Tape tape(false);
  const ad::Var hv = tape.constant(h);
  const ad::Var pv = tape.constant(probs);
  LayerEnergy e;
  e.e_intra = intra_energy(hv, soft_mask(ctx, pv, MaskMode::kDetached), ctx.eps).value().scalar();
  e.e_inter = inter_energy(merge_graph(ctx, pv, hv, zero_diag), ctx.eps).value().scalar();
  e.e_g = global_energy(hv, ctx).value().scalar();
  const double scale = frobenius_norm(h);
  if (e.e_g > 1e-14 * scale * scale) e.ratio = e.e_intra / e.e_g;
  return e;
}

}  // namespace

std::optional<double> energy_ratio(const Tensor& h, const GraphContext& ctx, const Tensor& probs) {
  return layer_energy(h, ctx, probs, false).ratio;
}

EnergyReport energy_report(const ForwardTrace& trace, const GraphContext& ctx, const std::vector<int>& labels,
                           int num_classes, bool zero_merged_diagonal) {
  EnergyReport r;
  const Tensor& probs = trace.probs.value();
  for (std::size_t l = 1; l < trace.hidden.size(); ++l) {
    const Tensor& h = trace.hidden[l].value();
    r.layers.push_back(layer_energy(h, ctx, probs, zero_merged_diagonal));
    r.smoothness.push_back(per_class_smoothness(h, labels, num_classes));
  }
  return r;
}

}  // namespace lereg::diag
