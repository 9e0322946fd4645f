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

#include <filesystem>

#include "lereg/errors.hpp"
#include "lereg/gradcheck.hpp"
#include "lereg/models.hpp"
#include "lereg/regularizers.hpp"
#include "oracles.hpp"

using namespace lereg;

namespace {

std::shared_ptr<const SparseMatrix> shared(SparseMatrix s) {
  return std::make_shared<const SparseMatrix>(std::move(s));
}

const lereg::EdgeList kFiveNodeEdges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 2}};

}  // namespace

TEST_CASE("glorot_init bounds, determinism and mean") {
  Rng a(5), b(5);
  const Tensor w1 = glorot_init(7, 3, a);
  const Tensor w2 = glorot_init(7, 3, b);
  CHECK(w1 == w2);
  const double bound = std::sqrt(6.0 / 10.0);
  for (double v : w1.values()) CHECK(std::abs(v) <= bound);

  Rng big(6);
  const Tensor w = glorot_init(1000, 1000, big);
  const double bnd = std::sqrt(6.0 / 2000.0);
  double mean = 0.0;
  for (double v : w.values()) mean += v;
  mean /= static_cast<double>(w.size());
  const double sigma_mean = bnd / std::sqrt(3.0) / std::sqrt(static_cast<double>(w.size()));
  CHECK(std::abs(mean) < 3 * sigma_mean);
}

TEST_CASE("gcn_forward with zero weights gives uniform probabilities") {
  Rng rng(1);
  auto params = init_gcn(4, 8, 3, 2, rng);
  for (auto& w : params.weights) w = Tensor(w.rows(), w.cols());
  const auto prop = shared(normalize_sym(symmetrize_dedup(kFiveNodeEdges, 5), true));
  ad::Tape tape;
  const auto trace = gcn_forward(params, prop, oracle::random_tensor(rng, 5, 4), tape);
  for (double v : trace.logits().value().values()) CHECK(v == 0.0);
  for (double v : trace.probs.value().values()) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("one-layer gcn with identity propagation is a linear classifier") {
  Rng rng(2);
  const Tensor x = oracle::random_tensor(rng, 5, 3);
  ModelParams p;
  p.layer_dims = {3, 3};
  p.weights = {Tensor::identity(3)};
  ad::Tape tape;
  const auto trace = gcn_forward(p, shared(SparseMatrix::identity(5)), x, tape);
  CHECK(trace.logits().value() == x);

  p.weights = {oracle::random_tensor(rng, 3, 2)};
  p.layer_dims = {3, 2};
  ad::Tape tape2;
  const auto t2 = gcn_forward(p, shared(SparseMatrix::identity(5)), x, tape2);
  CHECK(max_abs_diff(t2.logits().value(), dense_matmul(x, p.weights[0])) < 1e-15);
}

TEST_CASE("two-layer gcn matches the dense oracle") {
  Rng rng(3);
  const auto a = symmetrize_dedup(kFiveNodeEdges, 5);
  const auto prop = normalize_sym(a, true);
  const Tensor x = oracle::random_tensor(rng, 5, 4);
  const auto params = init_gcn(4, 6, 3, 2, rng);
  ad::Tape tape;
  const auto trace = gcn_forward(params, shared(prop), x, tape);

  const Eigen::MatrixXd s = oracle::dense_normalize_sym(oracle::dense_adjacency(kFiveNodeEdges, 5), true);
  const Eigen::MatrixXd h1 = (s * oracle::to_eigen(x) * oracle::to_eigen(params.weights[0])).cwiseMax(0.0);
  const Eigen::MatrixXd z = s * h1 * oracle::to_eigen(params.weights[1]);
  CHECK((oracle::to_eigen(trace.logits().value()) - z).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(trace.hidden.size() == 3);
  for (std::size_t i = 0; i < 5; ++i) {
    double s_row = 0.0;
    for (double v : trace.probs.value().row(i)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      s_row += v;
    }
    CHECK(std::abs(s_row - 1.0) < 1e-9);
  }
}

TEST_CASE("gcn_forward rejects mismatched dimensions") {
  Rng rng(4);
  const auto params = init_gcn(4, 6, 3, 2, rng);
  ad::Tape tape;
  CHECK_THROWS_AS(gcn_forward(params, shared(SparseMatrix::identity(5)), Tensor(5, 3), tape), StructuralError);
  CHECK_THROWS_AS(gcn_forward(params, shared(SparseMatrix::identity(4)), Tensor(5, 4), tape), StructuralError);
}

TEST_CASE("sgc_forward") {
  Rng rng(5);
  const auto prop = normalize_sym(symmetrize_dedup(kFiveNodeEdges, 5), true);
  const Tensor x = oracle::random_tensor(rng, 5, 3);
  SUBCASE("K=1 with W=I gives S X") {
    ModelParams p = init_sgc(3, 3, 1, rng);
    p.weights[0] = Tensor::identity(3);
    ad::Tape tape;
    const auto t = sgc_forward(p, SgcFeatureCache(prop, x, 1), tape);
    CHECK(max_abs_diff(t.logits().value(), prop.multiply(x)) < 1e-15);
    CHECK(t.hidden.size() == 3);
  }
  SUBCASE("K=2 matches dense oracle") {
    const ModelParams p = init_sgc(3, 2, 2, rng);
    ad::Tape tape;
    const auto t = sgc_forward(p, SgcFeatureCache(prop, x, 2), tape);
    const Eigen::MatrixXd s = oracle::to_eigen(prop.to_dense());
    const Eigen::MatrixXd z = s * s * oracle::to_eigen(x) * oracle::to_eigen(p.weights[0]);
    CHECK((oracle::to_eigen(t.logits().value()) - z).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("zero weight gives uniform P") {
    ModelParams p = init_sgc(3, 4, 2, rng);
    p.weights[0] = Tensor(3, 4);
    ad::Tape tape;
    const auto t = sgc_forward(p, SgcFeatureCache(prop, x, 2), tape);
    for (double v : t.probs.value().values()) CHECK(v == doctest::Approx(0.25));
  }
  SUBCASE("K < 1 is a config error") {
    CHECK_THROWS_AS(init_sgc(3, 2, 0, rng), ConfigError);
    CHECK_THROWS_AS(SgcFeatureCache(prop, x, 0), ConfigError);
  }
}

TEST_CASE("sgc equals a linear gcn with the collapsed weight") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 4 + rng.below(10);
    const auto prop = normalize_sym(symmetrize_dedup(oracle::random_edges(rng, n, 0.4), n), true);
    // Nonnegative features keep every relu in the identity regime.
    const Tensor x = oracle::random_tensor(rng, n, 3, 0.0, 1.0);
    const std::size_t k = 1 + rng.below(3);
    const ModelParams sgc = init_sgc(3, 2, k, rng);
    ModelParams gcn;
    gcn.layer_dims.assign(k, 3);
    gcn.layer_dims.push_back(2);
    for (std::size_t l = 0; l + 1 < k; ++l) gcn.weights.push_back(Tensor::identity(3));
    gcn.weights.push_back(sgc.weights[0]);
    ad::Tape t1, t2;
    const auto a = sgc_forward(sgc, SgcFeatureCache(prop, x, k), t1);
    const auto b = gcn_forward(gcn, shared(prop), x, t2);
    CHECK(max_abs_diff(a.logits().value(), b.logits().value()) < 1e-10);
  }
}

TEST_CASE("predict takes the argmax with lowest-index ties") {
  CHECK(predict(Tensor::from_rows({{0.2, 0.8}})) == std::vector<int>{1});
  CHECK(predict(Tensor::from_rows({{0.5, 0.5}})) == std::vector<int>{0});
  Rng rng(7);
  const Tensor p = oracle::random_probs(rng, 50, 4);
  const auto yhat = predict(p);
  for (std::size_t i = 0; i < 50; ++i) {
    int best = 0;
    for (int c = 1; c < 4; ++c)
      if (p(i, static_cast<std::size_t>(c)) > p(i, static_cast<std::size_t>(best))) best = c;
    CHECK(yhat[i] == best);
  }
}

TEST_CASE("cross-entropy gradients through gcn_forward match finite differences") {
  Rng rng(8);
  const std::size_t n = 8;
  const auto prop = shared(normalize_sym(symmetrize_dedup(oracle::random_edges(rng, n, 0.35), n), true));
  const Tensor x = oracle::random_tensor(rng, n, 3);
  auto params = init_gcn(3, 5, 3, 2, rng, true);
  for (auto& b : params.biases) b = oracle::random_tensor(rng, 1, b.cols(), -0.1, 0.1);
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.below(3)));
  const auto targets = std::make_shared<const Tensor>(one_hot(labels, 3));
  const auto idx = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{0, 1, 4, 6});

  auto loss_of = [&](const ModelParams& p, ad::Tape& tape) {
    auto trace = gcn_forward(p, prop, x, tape);
    return std::make_pair(trace, ad::masked_cross_entropy(trace.probs, targets, idx, 1e-12));
  };
  ad::Tape tape;
  auto [trace, loss] = loss_of(params, tape);
  const auto grads = tape.backward(loss);

  const double h = 1e-6;
  double worst = 0.0;
  std::size_t excluded = 0;
  for (std::size_t l = 0; l < 2; ++l) {
    for (int which = 0; which < 2; ++which) {
      Tensor& target = which == 0 ? params.weights[l] : params.biases[l];
      const Tensor& analytic = grads.at(which == 0 ? trace.weight_leaves[l] : trace.bias_leaves[l]);
      for (std::size_t k = 0; k < target.size(); ++k) {
        const double orig = target[k];
        target[k] = orig + h;
        ad::Tape tp;
        const auto plus = loss_of(params, tp);
        target[k] = orig - h;
        ad::Tape tm;
        const auto minus = loss_of(params, tm);
        target[k] = orig;
        if (tp.kink_pattern() != tm.kink_pattern() || tp.kink_pattern() != tape.kink_pattern()) {
          ++excluded;
          continue;
        }
        const double numeric = (plus.second.value().scalar() - minus.second.value().scalar()) / (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[k]), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic[k]) / denom);
      }
    }
  }
  CHECK(worst < 1e-4);
  CHECK(excluded < 5);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(9);
  const auto params = init_gcn(5, 4, 3, 3, rng, true);
  const auto path = std::filesystem::temp_directory_path() / "lereg_ckpt.json";
  save_checkpoint(params, path);
  CHECK(load_checkpoint(path) == params);
  const auto sgc = init_sgc(5, 3, 2, rng);
  save_checkpoint(sgc, path);
  CHECK(load_checkpoint(path) == sgc);
}
