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

#include "lereg/errors.hpp"
#include "lereg/gradcheck.hpp"
#include "lereg/tape.hpp"
#include "oracles.hpp"

using namespace lereg;
using ad::Var;

namespace {

std::shared_ptr<const SparseMatrix> shared(SparseMatrix s) {
  return std::make_shared<const SparseMatrix>(std::move(s));
}

// Random symmetric graph with no isolated nodes.
SparseMatrix random_graph(Rng& rng, std::size_t n) {
  return symmetrize_dedup(oracle::random_edges(rng, n, 0.3, true), n);
}

// Reduces any tensor to a scalar with fixed random weights so every output
// entry influences the checked value.
Var contract(Var x, std::uint64_t seed) {
  Rng rng(seed);
  const Tensor w = oracle::random_tensor(rng, x.value().rows(), x.value().cols());
  return ad::total_sum(ad::hadamard(x, x.tape().constant(w)));
}

void expect_gradcheck(const ad::ScalarFunction& f, const std::vector<Tensor>& point) {
  const auto r = ad::check_gradients(f, point, 1e-5, 1e-4);
  INFO("worst input " << r.worst_input << " index " << r.worst_index << " analytic "
                      << r.worst_analytic << " numeric " << r.worst_numeric);
  CHECK(r.compared > 0);
  CHECK(r.max_rel_error < 1e-4);
}

}  // namespace

TEST_CASE("relu and row_softmax values") {
  ad::Tape tape;
  CHECK(ad::relu(tape.constant(Tensor::from_rows({{-1, 2}}))).value() == Tensor::from_rows({{0, 2}}));
  const auto p = ad::row_softmax(tape.constant(Tensor::from_rows({{0, 0, 0}}))).value();
  for (double v : p.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  // Large logits stay finite thanks to max subtraction.
  const auto big = ad::row_softmax(tape.constant(Tensor::from_rows({{1000, 999}}))).value();
  CHECK(big.all_finite());
  CHECK(big(0, 0) + big(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("quad_energy on a path equals the pairwise-sum form") {
  Rng rng(8);
  const lereg::EdgeList edges = {{0, 1}, {1, 2}};
  const auto a = symmetrize_dedup(edges, 3);
  const Tensor h = oracle::random_tensor(rng, 3, 2);
  ad::Tape tape;
  const double e = ad::quad_energy(tape.constant(h), shared(laplacian_sym(a))).value().scalar();
  const double ref = oracle::pairwise_normalized_energy(oracle::dense_adjacency(edges, 3), oracle::to_eigen(h));
  CHECK(std::abs(e - ref) < 1e-12);
}

TEST_CASE("backward of sum of squares is 2x") {
  ad::Tape tape;
  const Tensor x = Tensor::from_rows({{1, -2}, {0.5, 3}});
  const Var xv = tape.leaf(x, true);
  const auto g = tape.backward(ad::total_sum(ad::hadamard(xv, xv)));
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(g.at(xv)[k] == 2 * x[k]);
}

TEST_CASE("backward requires a scalar output and skips constants") {
  ad::Tape tape;
  const Var a = tape.leaf(Tensor(2, 2, 1.0), true);
  const Var c = tape.constant(Tensor(2, 2, 3.0));
  CHECK_THROWS_AS(tape.backward(ad::add(a, c)), StructuralError);
  const auto g = tape.backward(ad::total_sum(ad::hadamard(a, c)));
  CHECK(g.contains(a));
  CHECK_FALSE(g.contains(c));
  CHECK(g.size() == 1);
}

TEST_CASE("shape mismatches are structural errors") {
  ad::Tape tape;
  const Var a = tape.constant(Tensor(2, 3));
  const Var b = tape.constant(Tensor(2, 3));
  CHECK_THROWS_AS(ad::matmul(a, b), StructuralError);
  CHECK_THROWS_AS(ad::add(a, tape.constant(Tensor(3, 2))), StructuralError);
  CHECK_THROWS_AS(ad::spmm(shared(SparseMatrix::identity(4)), a), StructuralError);
}

TEST_CASE("finite checks raise numeric errors") {
  ad::Tape tape(true);
  const Var x = tape.constant(Tensor::from_rows({{-1.0}}));
  CHECK_THROWS_AS(ad::rsqrt_eps(x, 0.0), NumericError);
}

TEST_CASE("quad_energy gradient is 2 X^T L X W") {
  Rng rng(17);
  const auto l = shared(laplacian_sym(random_graph(rng, 7)));
  const Tensor x = oracle::random_tensor(rng, 7, 3);
  const Tensor w = oracle::random_tensor(rng, 3, 2);
  ad::Tape tape;
  const Var wv = tape.leaf(w, true);
  const auto g = tape.backward(ad::quad_energy(ad::matmul(tape.constant(x), wv), l));
  const Eigen::MatrixXd xe = oracle::to_eigen(x);
  const Eigen::MatrixXd expected = 2.0 * xe.transpose() * oracle::to_eigen(l->to_dense()) * xe * oracle::to_eigen(w);
  CHECK((oracle::to_eigen(g.at(wv)) - expected).cwiseAbs().maxCoeff() < 1e-12);

  expect_gradcheck([&](ad::Tape& t, std::span<const Var> in) {
    return ad::quad_energy(ad::matmul(t.constant(x), in[0]), l);
  }, {w});
}

TEST_CASE("every primitive matches central finite differences") {
  Rng rng(99);
  const std::size_t n = 6;
  const auto graph = random_graph(rng, n);
  const auto edges = std::make_shared<const ad::EdgeIndex>(ad::EdgeIndex::from_pattern(graph));
  const auto sp = shared(normalize_sym(graph, true));
  const auto lap = shared(laplacian_sym(graph));
  const Tensor a = oracle::random_tensor(rng, n, 3);
  const Tensor b = oracle::random_tensor(rng, 3, 4);
  const Tensor c = oracle::random_tensor(rng, n, 3);
  const Tensor pos = oracle::random_tensor(rng, n, 3, 0.5, 2.0);

  SUBCASE("matmul") {
    expect_gradcheck([](ad::Tape&, std::span<const Var> in) { return contract(ad::matmul(in[0], in[1]), 1); }, {a, b});
  }
  SUBCASE("spmm") {
    expect_gradcheck([&](ad::Tape&, std::span<const Var> in) { return contract(ad::spmm(sp, in[0]), 2); }, {a});
  }
  SUBCASE("transpose") {
    expect_gradcheck([](ad::Tape&, std::span<const Var> in) { return contract(ad::transpose(in[0]), 3); }, {a});
  }
  SUBCASE("add sub hadamard scale") {
    expect_gradcheck([](ad::Tape&, std::span<const Var> in) {
      return contract(ad::hadamard(ad::add(in[0], ad::scale(in[1], 0.7)), ad::sub(in[0], in[1])), 4);
    }, {a, c});
  }
  SUBCASE("scale_rows") {
    auto f = std::make_shared<const std::vector<double>>(std::vector<double>{1, 2, 3, 0.5, -1, 4});
    expect_gradcheck([&](ad::Tape&, std::span<const Var> in) { return contract(ad::scale_rows(in[0], f), 5); }, {a});
  }
  SUBCASE("relu") {
    expect_gradcheck([](ad::Tape&, std::span<const Var> in) { return contract(ad::relu(in[0]), 6); }, {a});
  }
  SUBCASE("row_softmax") {
    expect_gradcheck([](ad::Tape&, std::span<const Var> in) { return contract(ad::row_softmax(in[0]), 7); }, {a});
  }
  SUBCASE("rsqrt_eps") {
    expect_gradcheck([](ad::Tape&, std::span<const Var> in) { return contract(ad::rsqrt_eps(in[0], 1e-12), 8); }, {pos});
  }
  SUBCASE("row_sum and total_sum") {
    expect_gradcheck([](ad::Tape&, std::span<const Var> in) {
      return ad::add(contract(ad::row_sum(in[0]), 9), ad::scale(ad::total_sum(in[0]), 0.3));
    }, {a});
  }
  SUBCASE("edge_pair_dot") {
    expect_gradcheck([&](ad::Tape&, std::span<const Var> in) { return contract(ad::edge_pair_dot(in[0], edges), 10); }, {a});
  }
  SUBCASE("edge_energy") {
    Rng wr(4);
    const Tensor w = oracle::random_tensor(wr, edges->size(), 1, 0.1, 1.0);
    expect_gradcheck([&](ad::Tape&, std::span<const Var> in) { return ad::edge_energy(in[0], edges, in[1]); }, {a, w});
  }
  SUBCASE("masked_cross_entropy") {
    Rng tr(5);
    const auto targets = std::make_shared<const Tensor>(oracle::random_probs(tr, n, 3));
    const auto idx = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{0, 2, 5});
    expect_gradcheck([&](ad::Tape&, std::span<const Var> in) {
      return ad::masked_cross_entropy(ad::row_softmax(in[0]), targets, idx, 1e-12);
    }, {a});
  }
  SUBCASE("hinge") {
    const Tensor x = Tensor::from_rows({{0.3, 2.0}, {-1.0, 0.9}});
    expect_gradcheck([](ad::Tape&, std::span<const Var> in) { return contract(ad::hinge(1.0, in[0]), 11); }, {x});
  }
  SUBCASE("quad_energy") {
    expect_gradcheck([&](ad::Tape&, std::span<const Var> in) { return ad::quad_energy(in[0], lap); }, {a});
  }
}

TEST_CASE("edge_pair_dot matches a scalar-loop oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.below(20);
    const auto g = random_graph(rng, n);
    const auto edges = std::make_shared<const ad::EdgeIndex>(ad::EdgeIndex::from_pattern(g));
    const Tensor p = oracle::random_probs(rng, n, 1 + rng.below(5));
    ad::Tape tape;
    const Tensor q = ad::edge_pair_dot(tape.constant(p), edges).value();
    for (std::size_t k = 0; k < edges->size(); ++k) {
      double ref = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) ref += p(edges->src[k], c) * p(edges->dst[k], c);
      CHECK(std::abs(q[k] - ref) < 1e-12);
    }
  }
}

TEST_CASE("edge_energy on symmetric-normalized rows equals quad_energy with L_sym") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.below(25);
    const auto g = random_graph(rng, n);
    const auto edges = std::make_shared<const ad::EdgeIndex>(ad::EdgeIndex::from_pattern(g));
    const auto deg = degrees(g);
    auto inv = std::make_shared<std::vector<double>>(n);
    for (std::size_t i = 0; i < n; ++i) (*inv)[i] = 1.0 / std::sqrt(deg[i]);
    const Tensor h = oracle::random_tensor(rng, n, 3);
    ad::Tape tape;
    const Var hv = tape.constant(h);
    const double e1 = ad::edge_energy(ad::scale_rows(hv, inv), edges, tape.constant(Tensor(edges->size(), 1, 1.0)))
                          .value()
                          .scalar();
    const double e2 = ad::quad_energy(hv, shared(laplacian_sym(g))).value().scalar();
    CHECK(std::abs(e1 - e2) < 1e-10);
  }
}

TEST_CASE("tape replay is bit-for-bit deterministic") {
  Rng rng(2);
  const Tensor x = oracle::random_tensor(rng, 5, 4);
  const Tensor w = oracle::random_tensor(rng, 4, 3);
  auto run = [&] {
    ad::Tape tape;
    const Var wv = tape.leaf(w, true);
    const Var p = ad::row_softmax(ad::relu(ad::matmul(tape.constant(x), wv)));
    return tape.backward(contract(p, 1)).at(wv);
  };
  CHECK(run() == run());
}

TEST_CASE("check_gradients reports") {
  SUBCASE("linear function is essentially exact") {
    Rng rng(3);
    const Tensor w = oracle::random_tensor(rng, 3, 3);
    const auto r = ad::check_gradients([](ad::Tape&, std::span<const Var> in) { return contract(in[0], 42); }, {w});
    CHECK(r.max_rel_error < 1e-10);
    CHECK(r.compared == 9);
  }
  SUBCASE("relu input exactly at zero is excluded as a kink") {
    const Tensor x = Tensor::from_rows({{0.0, 1.0, -1.0}});
    const auto r = ad::check_gradients([](ad::Tape&, std::span<const Var> in) { return ad::total_sum(ad::relu(in[0])); }, {x});
    CHECK(r.kink_excluded == 1);
    CHECK(r.compared == 2);
    CHECK(r.max_rel_error < 1e-10);
  }
  SUBCASE("wider stencils cancel the cubic truncation term") {
    const Tensor x = Tensor::from_rows({{0.5, -1.0, 2.0}});
    const ad::ScalarFunction cube = [](ad::Tape&, std::span<const Var> in) {
      return ad::total_sum(ad::hadamard(in[0], ad::hadamard(in[0], in[0])));
    };
    const double h = 1e-2;
    const auto central = ad::check_gradients(cube, {x}, h, 1e-4);
    // error is exactly h^2 against 3x^2, worst at x = 0.5
    CHECK(central.max_rel_error == doctest::Approx(h * h / 0.75).epsilon(1e-3));
    CHECK(ad::check_gradients(cube, {x}, h, 1e-4, ad::Stencil::kFivePoint).max_rel_error < 1e-10);
    CHECK(ad::check_gradients(cube, {x}, h, 1e-4, ad::Stencil::kSevenPoint).max_rel_error < 1e-10);
  }
  SUBCASE("outer probes also count toward kink exclusion") {
    const Tensor x = Tensor::from_rows({{0.015, 0.025, 1.0}});
    const ad::ScalarFunction f = [](ad::Tape&, std::span<const Var> in) { return ad::total_sum(ad::relu(in[0])); };
    CHECK(ad::check_gradients(f, {x}, 1e-2, 1e-4).kink_excluded == 0);
    CHECK(ad::check_gradients(f, {x}, 1e-2, 1e-4, ad::Stencil::kFivePoint).kink_excluded == 1);
    CHECK(ad::check_gradients(f, {x}, 1e-2, 1e-4, ad::Stencil::kSevenPoint).kink_excluded == 2);
  }
}
