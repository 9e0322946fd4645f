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

#include "lereg/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lereg/dataset.hpp"
#include "lereg/diagnostics.hpp"
#include "lereg/gradcheck.hpp"
#include "lereg/regularizers.hpp"

namespace lereg::diag {

bool VerifyReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.passed; });
}

namespace {

/// Random tree plus G(n, p) extra edges: connected, no isolated nodes.
SparseMatrix random_connected(Rng& rng, std::size_t n, double p) {
  EdgeList e;
  for (std::size_t i = 1; i < n; ++i) e.emplace_back(rng.below(i), i);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) e.emplace_back(i, j);
  return symmetrize_dedup(e, n);
}

SparseMatrix random_gnp(Rng& rng, std::size_t n, double p) {
  EdgeList e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) e.emplace_back(i, j);
  return symmetrize_dedup(e, n);
}

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor t(r, c);
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

Tensor random_simplex(Rng& rng, std::size_t n, std::size_t c) {
  Tensor p(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += p(i, k) = std::exp(2.0 * rng.normal());
    for (std::size_t k = 0; k < c; ++k) p(i, k) /= s;
  }
  return p;
}

double pairwise_energy(const SparseMatrix& w, const Tensor& h) {
  const auto d = degrees(w);
  double e = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto cols = w.row_cols(i);
    const auto vals = w.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const std::size_t j = cols[k];
      double sq = 0.0;
      for (std::size_t f = 0; f < h.cols(); ++f) {
        const double diff = h(i, f) / std::sqrt(d[i]) - h(j, f) / std::sqrt(d[j]);
        sq += diff * diff;
      }
      e += vals[k] * sq;
    }
  }
  return 0.5 * e;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

VerifyCheck finish(std::string name, std::size_t instances, double worst, double tol, bool pass,
                   const std::string& what) {
  VerifyCheck c;
  c.name = std::move(name);
  c.instances = instances;
  c.worst = worst;
  c.tolerance = tol;
  c.passed = pass;
  c.detail = what + " " + fmt(worst) + " (tolerance " + fmt(tol) + ") over " + std::to_string(instances) +
             " instances";
  return c;
}

}  // namespace

VerifyCheck verify_gradients(std::uint64_t seed, std::size_t instances) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 4 + rng.below(27);
    const std::size_t c = 2 + rng.below(3);
    const std::size_t layers = 1 + rng.below(3);
    const std::size_t f = 2 + rng.below(4);
    const auto a = random_connected(rng, n, 0.15);
    const GraphContext ctx = GraphContext::build(a);
    const auto prop = std::make_shared<const SparseMatrix>(normalize_sym(a, true));
    const Tensor x = random_matrix(rng, n, f);
    const ModelParams params = init_gcn(f, 2 + rng.below(4), c, layers, rng, rng.bernoulli(0.5));
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(rng.below(c));
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (rng.bernoulli(0.4)) idx.push_back(i);
    if (idx.empty()) idx.push_back(0);
    const auto targets = std::make_shared<const Tensor>(one_hot(labels, static_cast<int>(c)));
    const auto train_idx = std::make_shared<const std::vector<std::size_t>>(std::move(idx));
    RegConfig cfg = RegConfig::broadcast(layers, rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0));
    cfg.margin = rng.uniform(0.0, 4.0);
    cfg.mask_mode = MaskMode::kFullGradient;
    DegreeSnapshot snapshot;

    std::vector<Tensor> point = params.weights;
    point.insert(point.end(), params.biases.begin(), params.biases.end());
    const auto report = ad::check_gradients(
        [&](ad::Tape& tape, std::span<const ad::Var> in) {
          ForwardOptions opts;
          opts.parameter_inputs.assign(in.begin(), in.end());
          const auto trace = gcn_forward(params, prop, x, tape, opts);
          return combined_loss(trace, ctx, targets, train_idx, cfg, &snapshot).total;
        },
        point, 2e-3, 1e-4, ad::Stencil::kSevenPoint);
    worst = std::max(worst, report.max_rel_error);
  }
  return finish("gradient finite differences", instances, worst, 1e-4, worst < 1e-4, "max relative error");
}

VerifyCheck verify_energy_oracles(std::uint64_t seed, std::size_t instances) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 2 + rng.below(49);
    const std::size_t c = 1 + rng.below(5);
    const auto a = random_connected(rng, n, rng.uniform(0.02, 0.3));
    const GraphContext ctx = GraphContext::build(a);
    const Tensor h = random_matrix(rng, n, 1 + rng.below(4));
    const Tensor p = random_simplex(rng, n, c);
    ad::Tape tape(false);
    const ad::Var hv = tape.constant(h);
    const ad::Var pv = tape.constant(p);

    worst = std::max(worst, std::abs(global_energy(hv, ctx).value().scalar() - pairwise_energy(a, h)));

    const Tensor merged = merge_graph(ctx, pv, hv).adjacency.value();
    const Tensor dense = dense_matmul_tn(p, dense_matmul(a.to_dense(), p));
    worst = std::max(worst, max_abs_diff(merged, dense));

    const auto mask = soft_mask(ctx, pv, MaskMode::kFullGradient);
    const Tensor& q = mask.edge_weights.value();
    for (std::size_t e = 0; e < ctx.edges->size(); ++e) {
      const std::size_t i = ctx.edges->src[e], j = ctx.edges->dst[e];
      double dot = 0.0;
      for (std::size_t k = 0; k < c; ++k) dot += p(i, k) * p(j, k);
      worst = std::max(worst, std::abs(q(e, 0) - dot));
    }
  }
  return finish("energy oracle equivalence", instances, worst, 1e-10, worst <= 1e-10, "max abs difference");
}

VerifyCheck verify_invariants(std::uint64_t seed, std::size_t instances) {
  Rng rng(seed);
  double worst = 0.0;
  bool exact = true;
  bool in_range = true;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 2 + rng.below(49);
    const std::size_t c = 1 + rng.below(6);
    const auto a = random_connected(rng, n, rng.uniform(0.02, 0.3));
    const GraphContext ctx = GraphContext::build(a);
    const Tensor h = random_matrix(rng, n, 1 + rng.below(4), 5.0);
    ad::Tape tape(false);
    const ad::Var hv = tape.constant(h);
    const auto uniform = soft_mask(ctx, tape.constant(Tensor(n, c, 1.0 / static_cast<double>(c))),
                                   MaskMode::kFullGradient);
    worst = std::max(worst, std::abs(intra_energy(hv, uniform).value().scalar() -
                                     global_energy(hv, ctx).value().scalar()));

    Tensor one(n, c);
    const std::size_t k = rng.below(c);
    for (std::size_t i = 0; i < n; ++i) one(i, k) = 1.0;
    const auto mask = soft_mask(ctx, tape.constant(one), MaskMode::kFullGradient);
    if (!(mask.masked_adjacency(a) == a)) exact = false;

    const double m = rng.uniform(0.0, 3.0);
    const double e = rng.uniform(0.0, 6.0);
    const double loss = inter_reg_loss(tape.constant(Tensor(1, 1, e)), m).value().scalar();
    if (loss < 0.0 || loss > m) in_range = false;
  }
  VerifyCheck c = finish("analytic invariants", instances, worst, 1e-10, worst <= 1e-10 && exact && in_range,
                         "max |E_intra - E_G| under uniform P");
  if (!exact) c.detail += "; one-hot single-class mask differs from A";
  if (!in_range) c.detail += "; margin loss left [0, m]";
  return c;
}

VerifyCheck verify_lemma3(std::uint64_t seed, std::size_t instances) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t c = 1 + rng.below(4);
    const std::size_t n = 2 * c + rng.below(40);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % c);
    EdgeList e = upper_edges(random_gnp(rng, n, rng.uniform(0.05, 0.3)));
    for (std::size_t i = 0; i + c < n; ++i) e.emplace_back(i, i + c);
    const auto masked = discrete_mask(symmetrize_dedup(e, n), labels);
    const auto r = lemma3_check(normalize_row(masked), random_matrix(rng, n, 1 + rng.below(4), 3.0));
    worst = std::max(worst, r.row_normalized ? r.max_error : INFINITY);
  }
  return finish("gradient step equals aggregation", instances, worst, 1e-12, worst <= 1e-12, "max abs difference");
}

VerifyCheck verify_cheeger(std::uint64_t seed, std::size_t instances) {
  Rng rng(seed);
  std::size_t violations = 0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 2 + rng.below(9);
    if (!cheeger_check(random_connected(rng, n, rng.uniform(0.0, 0.6))).holds) ++violations;
  }
  return finish("cheeger inequality", instances, static_cast<double>(violations), 0.0, violations == 0,
                "violations");
}

VerifyCheck verify_envelope(std::uint64_t seed, std::size_t instances, std::size_t steps) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 2 + rng.below(99);
    const auto a = random_gnp(rng, n, rng.uniform(1.0, 6.0) / static_cast<double>(n));
    const std::size_t f = 1 + rng.below(4);
    std::vector<Tensor> weights;
    if (t % 4 == 3) weights.push_back(random_matrix(rng, f, f, 0.5));
    const auto trace = convergence_trace(a, weights, random_matrix(rng, n, f, 2.0), steps);
    for (std::size_t l = 0; l < trace.distance.size(); ++l)
      worst = std::max(worst, trace.distance[l] - trace.envelope[l]);
  }
  return finish("convergence envelope", instances, worst, 1e-9, worst <= 1e-9, "max excess over envelope");
}

VerifyCheck verify_subgraph_bounds(std::uint64_t seed, std::size_t instances) {
  Rng rng(seed);
  std::size_t violations = 0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 2 + rng.below(11);
    const auto a = random_gnp(rng, n, rng.uniform(0.2, 0.7));
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(rng.below(3));
    if (!subgraph_bound_check(a, labels).holds()) ++violations;
  }
  return finish("subgraph conductance bounds", instances, static_cast<double>(violations), 0.0, violations == 0,
                "violations");
}

VerifyCheck verify_smoothness(std::uint64_t seed, std::size_t instances) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 1 + rng.below(40);
    const int c = 1 + static_cast<int>(rng.below(4));
    const Tensor h = random_matrix(rng, n, 1 + rng.below(4), 3.0);
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
    const auto fast = per_class_smoothness(h, labels, c);
    for (int k = 0; k < c; ++k) {
      double sum = 0.0, count = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != k) continue;
        count += 1.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (labels[j] != k) continue;
          for (std::size_t f = 0; f < h.cols(); ++f) sum += (h(i, f) - h(j, f)) * (h(i, f) - h(j, f));
        }
      }
      const double slow = count < 2.0 ? 0.0 : sum / (count * count);
      worst = std::max(worst, std::abs(fast[static_cast<std::size_t>(k)] - slow));
    }
  }
  return finish("per-class smoothness identity", instances, worst, 1e-10, worst <= 1e-10, "max abs difference");
}

VerifyCheck verify_uniform_ratio(std::uint64_t seed, std::size_t instances) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 2 + rng.below(49);
    const std::size_t c = 1 + rng.below(6);
    const GraphContext ctx = GraphContext::build(random_connected(rng, n, rng.uniform(0.02, 0.3)));
    const auto r = energy_ratio(random_matrix(rng, n, 3), ctx, Tensor(n, c, 1.0 / static_cast<double>(c)));
    worst = std::max(worst, r ? std::abs(*r - 1.0) : INFINITY);
  }
  return finish("uniform-P energy ratio", instances, worst, 1e-10, worst <= 1e-10, "max |ratio - 1|");
}

VerifyReport run_verify(std::uint64_t seed) {
  VerifyReport r;
  r.seed = seed;
  auto s = [&](std::uint64_t k) { return Rng::derive(seed, k); };
  r.checks.push_back(verify_gradients(s(1)));
  r.checks.push_back(verify_energy_oracles(s(2)));
  r.checks.push_back(verify_invariants(s(3)));
  r.checks.push_back(verify_lemma3(s(4)));
  r.checks.push_back(verify_cheeger(s(5)));
  r.checks.push_back(verify_envelope(s(6)));
  r.checks.push_back(verify_subgraph_bounds(s(7)));
  r.checks.push_back(verify_smoothness(s(8)));
  r.checks.push_back(verify_uniform_ratio(s(9)));
  return r;
}

nlohmann::json to_json(const VerifyReport& report) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : report.checks)
    checks.push_back({{"name", c.name},
                      {"passed", c.passed},
                      {"instances", c.instances},
                      {"worst", std::isfinite(c.worst) ? nlohmann::json(c.worst) : nlohmann::json("inf")},
                      {"tolerance", c.tolerance},
                      {"detail", c.detail}});
  return nlohmann::json{{"seed", report.seed}, {"passed", report.passed()}, {"checks", std::move(checks)}};
}

}  // namespace lereg::diag
