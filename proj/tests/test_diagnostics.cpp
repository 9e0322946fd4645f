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

#include <doctest.h>

#include <cmath>

#include "lereg/diagnostics.hpp"
#include "lereg/errors.hpp"
#include "lereg/verify.hpp"
#include "oracles.hpp"

using namespace lereg;
using namespace lereg::diag;

namespace {

SparseMatrix graph(const lereg::EdgeList& e, std::size_t n) { return symmetrize_dedup(e, n); }

lereg::EdgeList cycle(std::size_t n) {
  lereg::EdgeList e;
  for (std::size_t i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return e;
}

lereg::EdgeList complete(std::size_t n) {
  lereg::EdgeList e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return e;
}

const lereg::EdgeList kBarbell = {{0, 1}, {1, 2}, {0, 2}, {2, 3}, {3, 4}, {4, 5}, {3, 5}};

}  // namespace

TEST_CASE("eig_sym_dense") {
  SUBCASE("identity") {
    const auto e = eig_sym_dense(Tensor::identity(4));
    for (double v : e.values) CHECK(v == 1.0);
  }
  SUBCASE("2x2 swap") {
    const auto e = eig_sym_dense(Tensor::from_rows({{0, 1}, {1, 0}}));
    CHECK(e.values[0] == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(e.values[1] == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("random symmetric reconstruction and orthonormality") {
    Rng rng(1);
    for (std::size_t n : {5, 12, 40}) {
      Tensor m = oracle::random_tensor(rng, n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i);
      const auto e = eig_sym_dense(m);
      const Eigen::MatrixXd v = oracle::to_eigen(e.vectors);
      const Eigen::VectorXd lam = Eigen::Map<const Eigen::VectorXd>(e.values.data(), static_cast<Eigen::Index>(n));
      CHECK((v * lam.asDiagonal() * v.transpose() - oracle::to_eigen(m)).norm() < 1e-8);
      CHECK((v.transpose() * v - Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)))
                .cwiseAbs()
                .maxCoeff() < 1e-8);
      const auto ref = oracle::eigenvalues_sym(oracle::to_eigen(m));
      for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(e.values[k] - ref[k]) < 1e-9);
      for (std::size_t k = 1; k < n; ++k) CHECK(e.values[k - 1] <= e.values[k]);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(eig_sym_dense(Tensor::from_rows({{0, 1}, {0.5, 0}})), StructuralError);
    CHECK_THROWS_AS(eig_sym_dense(Tensor(501, 501)), SizeError);
  }
  SUBCASE("laplacian spectrum lies in [0, 2]") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 2 + rng.below(30);
      const auto e = eig_sym_dense(laplacian_sym(graph(oracle::random_edges(rng, n, 0.3), n)).to_dense());
      CHECK(e.values.front() >= -1e-9);
      CHECK(e.values.back() <= 2.0 + 1e-9);
    }
  }
}

TEST_CASE("conductance_bruteforce") {
  CHECK(conductance_bruteforce(graph({{0, 1}, {2, 3}}, 4)).phi == 0.0);
  const auto k4 = graph(complete(4), 4);
  CHECK(conductance_bruteforce(k4).phi == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(conductance_bruteforce(k4).phi == doctest::Approx(oracle::conductance_exhaustive(oracle::to_eigen(k4.to_dense()))));
  std::vector<bool> single = {true, false, false, false};
  CHECK(*set_conductance(graph(complete(4), 4), single) == 1.0);
  const auto barbell = conductance_bruteforce(graph(kBarbell, 6));
  CHECK(barbell.phi == doctest::Approx(1.0 / 7.0));
  const std::vector<bool> tri = {true, true, true, false, false, false};
  const std::vector<bool> tri_c = {false, false, false, true, true, true};
  CHECK((barbell.subset == tri || barbell.subset == tri_c));
  CHECK_THROWS_AS(conductance_bruteforce(graph(cycle(15), 15)), SizeError);

  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(9);
    const auto a = graph(oracle::random_edges(rng, n, 0.4), n);
    CHECK(std::abs(conductance_bruteforce(a).phi - oracle::conductance_exhaustive(oracle::to_eigen(a.to_dense()))) <
          1e-12);
  }
}

TEST_CASE("cheeger_check") {
  SUBCASE("K2") {
    const auto r = cheeger_check(graph({{0, 1}}, 2));
    CHECK(r.phi == 1.0);
    CHECK(r.lambda_star == doctest::Approx(2.0));
    CHECK(r.holds);
  }
  SUBCASE("C4") {
    const auto r = cheeger_check(graph(cycle(4), 4));
    CHECK(r.lambda_star == doctest::Approx(1.0));
    CHECK(r.phi == doctest::Approx(0.5));
    CHECK(r.lambda_lower == doctest::Approx(0.0));
    CHECK(r.lambda_upper == doctest::Approx(0.875));
    CHECK(r.holds);
  }
  SUBCASE("disconnected is skipped") {
    const auto r = cheeger_check(graph({{0, 1}, {2, 3}}, 4));
    CHECK_FALSE(r.connected);
    CHECK_FALSE(r.holds);
  }
  SUBCASE("random connected sweep") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 2 + rng.below(9);
      const auto r = cheeger_check(graph(oracle::random_connected_edges(rng, n, 0.3), n));
      CHECK(r.connected);
      CHECK(r.holds);
    }
  }
}

TEST_CASE("subgraph_bound_check") {
  SUBCASE("single class is the whole graph") {
    const auto a = graph(kBarbell, 6);
    const auto r = subgraph_bound_check(a, std::vector<int>(6, 0));
    REQUIRE(r.classes.size() == 1);
    CHECK(r.classes[0].phi_min == r.phi_graph);
    CHECK(r.classes[0].lambda_upper == r.lambda_upper_graph);
    CHECK(r.holds());
  }
  SUBCASE("two cliques with a bridge") {
    lereg::EdgeList e = complete(5);
    for (auto [u, v] : complete(5)) e.emplace_back(u + 5, v + 5);
    e.emplace_back(4, 5);
    const auto a = graph(e, 10);
    const auto r = subgraph_bound_check(a, {0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
    CHECK(r.phi_graph == doctest::Approx(1.0 / 21.0));
    CHECK(r.classes[0].phi_min >= r.phi_graph);
    CHECK(r.holds());
  }
  SUBCASE("random partitions") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 3 + rng.below(10);
      const auto a = graph(oracle::random_edges(rng, n, 0.35), n);
      std::vector<int> labels(n);
      for (auto& y : labels) y = static_cast<int>(rng.below(3));
      CHECK(subgraph_bound_check(a, labels).holds());
    }
  }
}

TEST_CASE("spectral_report") {
  Rng rng(6);
  const std::size_t n = 12;
  auto e = oracle::random_connected_edges(rng, 6, 0.3);
  for (auto [u, v] : oracle::random_connected_edges(rng, 6, 0.3)) e.emplace_back(u + 6, v + 6);
  const auto r = spectral_report(graph(e, n));
  CHECK(r.components == 2);
  CHECK(r.top_basis.cols() == 2);
  const Eigen::MatrixXd b = oracle::to_eigen(r.top_basis);
  CHECK((b.transpose() * b - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(r.eigenvalues.back() == doctest::Approx(1.0));
  CHECK(r.eigenvalues[n - 2] == doctest::Approx(1.0));
  CHECK(r.lambda < 1.0);
  for (double v : r.eigenvalues) {
    CHECK(v >= -1.0 - 1e-9);
    CHECK(v <= 1.0 + 1e-9);
  }
  REQUIRE(r.phi.has_value());
  CHECK(*r.phi == 0.0);
  const Eigen::MatrixXd s = oracle::dense_normalize_sym(oracle::dense_adjacency(e, n), true);
  CHECK((s * b - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("spectral_norm") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor w = oracle::random_tensor(rng, 6, 4);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(oracle::to_eigen(w));
    const double ref = svd.singularValues()(0);
    const double s = spectral_norm(w);
    CHECK(s >= ref);
    CHECK(s <= ref * (1 + 1e-8));
  }
}

TEST_CASE("convergence_trace") {
  Rng rng(8);
  SUBCASE("signal in the top eigenspace stays put") {
    const std::size_t n = 20;
    const auto a = graph(oracle::random_connected_edges(rng, n, 0.1), n);
    const auto r = spectral_report(a);
    Tensor h0(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      h0(i, 0) = 3.0 * r.top_basis(i, 0);
      h0(i, 1) = -r.top_basis(i, 0);
    }
    const auto t = convergence_trace(a, {}, h0, 10);
    for (double d : t.distance) CHECK(d < 1e-12);
    CHECK(t.holds);
  }
  SUBCASE("identity weights respect the envelope") {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 5 + rng.below(60);
      const auto a = graph(oracle::random_edges(rng, n, 0.1), n);
      const auto t = convergence_trace(a, {}, oracle::random_tensor(rng, n, 3), 30);
      CHECK(t.holds);
      CHECK(t.distance.size() == 31);
      CHECK(t.converges);
      for (std::size_t l = 0; l < t.distance.size(); ++l) CHECK(t.distance[l] <= t.envelope[l] + 1e-9);
      const auto e = oracle::eigenvalues_sym(oracle::dense_normalize_sym(oracle::to_eigen(a.to_dense()), true));
      std::size_t m = 0;
      connected_components(a, &m);
      double lam = 0.0;
      for (std::size_t k = 0; k + m < e.size(); ++k) lam = std::max(lam, std::abs(e[k]));
      CHECK(std::abs(t.lambda - lam) < 1e-9);
    }
  }
  SUBCASE("random weights") {
    const std::size_t n = 30;
    const auto a = graph(oracle::random_edges(rng, n, 0.15), n);
    std::vector<Tensor> w;
    for (int l = 0; l < 15; ++l) w.push_back(oracle::random_tensor(rng, 4, 4, -0.6, 0.6));
    const auto t = convergence_trace(a, w, oracle::random_tensor(rng, n, 4), 15);
    CHECK(t.holds);
  }
  SUBCASE("large weights are flagged") {
    const std::size_t n = 15;
    const auto a = graph(oracle::random_connected_edges(rng, n, 0.2), n);
    Tensor w = Tensor::identity(3);
    for (double& v : w.values()) v *= 10.0;
    const auto t = convergence_trace(a, {w}, oracle::random_tensor(rng, n, 3), 5);
    CHECK_FALSE(t.converges);
    CHECK(t.holds);
  }
  SUBCASE("shape errors") {
    const auto a = graph(cycle(5), 5);
    CHECK_THROWS_AS(convergence_trace(a, {}, Tensor(4, 2), 3), StructuralError);
    CHECK_THROWS_AS(convergence_trace(a, {Tensor::identity(2), Tensor::identity(2)}, Tensor(5, 2), 3), ConfigError);
  }
}

TEST_CASE("lemma3_check") {
  SUBCASE("constant H") {
    const auto a = normalize_row(graph(cycle(5), 5));
    const auto r = lemma3_check(a, Tensor(5, 2, 1.5));
    CHECK(r.stepped == Tensor(5, 2, 1.5));
    CHECK(r.max_error <= 1e-15);
  }
  SUBCASE("single edge") {
    const auto a = normalize_row(graph({{0, 1}}, 2));
    const auto r = lemma3_check(a, Tensor::from_rows({{1}, {0}}));
    CHECK(r.stepped == Tensor::from_rows({{0}, {1}}));
    CHECK(r.aggregated == Tensor::from_rows({{0}, {1}}));
    CHECK(r.row_normalized);
  }
  SUBCASE("random masked graphs after normalization") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 6 + rng.below(40);
      auto edges = oracle::random_edges(rng, n, 0.2);
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 3);
      for (std::size_t i = 0; i + 3 < n; ++i) edges.emplace_back(i, i + 3);
      const auto masked = discrete_mask(graph(edges, n), y);
      const Tensor h = oracle::random_tensor(rng, n, 3);
      const auto r = lemma3_check(normalize_row(masked), h);
      CHECK(r.max_error <= 1e-12);
      const auto raw = lemma3_check(masked, h);
      CHECK(std::abs(raw.max_error - raw.residual_term) <= 1e-9 * std::max(1.0, raw.residual_term) + raw.max_error);
    }
  }
  SUBCASE("unnormalized rows report the residual") {
    const auto a = graph({{0, 1}, {0, 2}}, 3);
    const auto r = lemma3_check(a, Tensor::from_rows({{1}, {0}, {0}}));
    CHECK_FALSE(r.row_normalized);
    CHECK(r.residual_term == 1.0);
    CHECK(r.max_error == 1.0);
  }
  SUBCASE("symmetric masks match half the tape gradient") {
    Rng rng(10);
    const std::size_t n = 12;
    const auto a = discrete_mask(graph(oracle::random_edges(rng, n, 0.3), n), std::vector<int>(n, 0));
    const Tensor h = oracle::random_tensor(rng, n, 2);
    ad::Tape tape;
    const auto hv = tape.leaf(h, true);
    const auto edges = std::make_shared<const ad::EdgeIndex>(ad::EdgeIndex::from_pattern(a));
    const auto e = ad::edge_energy(hv, edges, tape.constant(Tensor(edges->size(), 1, 1.0)));
    const auto g = tape.backward(e).at(hv);
    const auto r = lemma3_check(a, h);
    for (std::size_t k = 0; k < h.size(); ++k) CHECK(std::abs((h[k] - r.stepped[k]) - 0.5 * g[k]) < 1e-12);
  }
}

TEST_CASE("per_class_smoothness") {
  CHECK(per_class_smoothness(Tensor(4, 2, 3.0), {0, 0, 1, 1}, 2) == std::vector<double>{0.0, 0.0});
  CHECK(per_class_smoothness(Tensor::from_rows({{0}, {2}}), {0, 0}, 1)[0] == doctest::Approx(2.0));
  CHECK(per_class_smoothness(Tensor::from_rows({{0}, {2}, {5}}), {0, 0, 1}, 3)[1] == 0.0);
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    const Tensor h = oracle::random_tensor(rng, n, 3, -4, 4);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(3));
    const auto s = per_class_smoothness(h, y, 3);
    for (int k = 0; k < 3; ++k) {
      double sum = 0.0, cnt = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (y[i] != k) continue;
        cnt += 1.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (y[j] != k) continue;
          for (std::size_t f = 0; f < 3; ++f) sum += (h(i, f) - h(j, f)) * (h(i, f) - h(j, f));
        }
      }
      const double expect = cnt < 2 ? 0.0 : sum / (cnt * cnt);
      CHECK(std::abs(s[static_cast<std::size_t>(k)] - expect) < 1e-10);
    }
  }
}

TEST_CASE("energy_ratio") {
  Rng rng(12);
  const std::size_t n = 30;
  const auto edges = oracle::random_edges(rng, n, 0.2);
  const auto ctx = GraphContext::build(graph(edges, n));
  const Tensor h = oracle::random_tensor(rng, n, 3);
  SUBCASE("uniform P") {
    const auto r = energy_ratio(h, ctx, Tensor(n, 4, 0.25));
    REQUIRE(r.has_value());
    CHECK(std::abs(*r - 1.0) < 1e-10);
  }
  SUBCASE("partition without inter-class edges") {
    lereg::EdgeList e;
    for (auto [u, v] : edges)
      if (u % 2 == v % 2) e.emplace_back(u, v);
    for (std::size_t i = 0; i + 2 < n; ++i) e.emplace_back(i, i + 2);
    const auto c2 = GraphContext::build(graph(e, n));
    Tensor p(n, 2);
    for (std::size_t i = 0; i < n; ++i) p(i, i % 2) = 1.0;
    const auto r = energy_ratio(h, c2, p);
    REQUIRE(r.has_value());
    CHECK(std::abs(*r - 1.0) < 1e-12);
  }
  SUBCASE("one-hot P with inter-class edges") {
    Tensor p(n, 2);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      p(i, static_cast<std::size_t>(y[i])) = 1.0;
    }
    const auto r = energy_ratio(h, ctx, p);
    const Eigen::MatrixXd a = oracle::dense_adjacency(edges, n);
    Eigen::MatrixXd masked = a;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (y[i] != y[j]) masked(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 0.0;
    // Masked degrees here can be zero; the oracle applies the same guard.
    const Eigen::VectorXd d = oracle::row_sums(masked);
    double intra = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double w = masked(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (w == 0.0) continue;
        for (std::size_t f = 0; f < 3; ++f) {
          const double diff = h(i, f) / std::sqrt(std::max(d(static_cast<Eigen::Index>(i)), kDegreeEps)) -
                              h(j, f) / std::sqrt(std::max(d(static_cast<Eigen::Index>(j)), kDegreeEps));
          intra += 0.5 * w * diff * diff;
        }
      }
    const double global = oracle::pairwise_normalized_energy(a, oracle::to_eigen(h));
    REQUIRE(r.has_value());
    CHECK(std::abs(*r - intra / global) < 1e-10);
    CHECK(*r < 1.0 + 1e-12);
  }
  SUBCASE("zero global energy is undefined") {
    CHECK_FALSE(energy_ratio(Tensor(n, 3), ctx, Tensor(n, 2, 0.5)).has_value());
  }
}

TEST_CASE("energy_report covers every layer") {
  Rng rng(13);
  const std::size_t n = 15;
  const auto a = graph(oracle::random_edges(rng, n, 0.3), n);
  const auto ctx = GraphContext::build(a);
  const auto params = init_gcn(4, 5, 3, 3, rng);
  ad::Tape tape;
  const auto trace =
      gcn_forward(params, std::make_shared<const SparseMatrix>(normalize_sym(a, true)), oracle::random_tensor(rng, n, 4), tape);
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.below(3));
  const auto r = energy_report(trace, ctx, y, 3);
  CHECK(r.layers.size() == 3);
  CHECK(r.smoothness.size() == 3);
  const auto direct = energy_ratio(trace.logits().value(), ctx, trace.probs.value());
  CHECK(r.final_layer().ratio == direct);
}

TEST_CASE("verify suite passes and is deterministic") {
  const auto a = diag::run_verify(7);
  for (const auto& c : a.checks) {
    INFO(c.name << ": " << c.detail);
    CHECK(c.passed);
  }
  CHECK(diag::to_json(a).dump() == diag::to_json(diag::run_verify(7)).dump());
}
