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
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lereg/dataset.hpp"
#include "lereg/models.hpp"
#include "lereg/regularizers.hpp"

namespace lereg {

enum class Baseline { kNone, kLaplacian, kLabelSmoothing };

std::string to_string(Baseline b);
Baseline parse_baseline(const std::string& s);
std::string to_string(MaskMode m);
MaskMode parse_mask_mode(const std::string& s);

struct TrainConfig {
  double lr = 0.01;
  double weight_decay = 5e-4;
  std::size_t max_epochs = 1000;
  std::size_t patience = 100;
  std::uint64_t seed = 0;

  Backbone backbone = Backbone::kGcn;
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t sgc_power = 2;
  bool bias = false;
  double dropout = 0.0;

  /// Scalar factors; broadcast to every layer when `layerwise`, otherwise
  /// applied to the output layer only. Non-empty per-layer lists win.
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<double> alpha_per_layer;
  std::vector<double> beta_per_layer;
  bool layerwise = false;
  double margin = 1.0;
  MaskMode mask_mode = MaskMode::kFullGradient;
  bool zero_merged_diagonal = false;

  Baseline baseline = Baseline::kNone;
  /// Laplacian penalty weight, or the smoothing factor for label smoothing.
  double baseline_weight = 0.1;

  /// Leave the intra/inter terms out of the loss entirely.
  bool skip_regularizers = false;

  void validate() const;
  /// Number of hidden states H^(1..L) the regularizer sees for this backbone.
  std::size_t regularized_layers() const;
  RegConfig reg_config() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;

  static AdamState zeros_like(const std::vector<Tensor>& params);
};

/// In-place Adam with bias correction; weight decay is added to the gradient
/// before the moment update. `names` label tensors in error messages.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
               double weight_decay, const std::vector<std::string>& names = {});

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels,
                const std::vector<std::size_t>& idx);
double accuracy(const Tensor& probs, const std::vector<int>& labels, const std::vector<std::size_t>& idx);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double loss_sup = 0.0;
  std::vector<double> loss_intra;
  std::vector<double> loss_inter;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double e_intra = 0.0;
  double e_inter = 0.0;
  double e_g = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  double test_acc = 0.0;
  bool diverged = false;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

nlohmann::json results_json(const RunRecord& record, const TrainConfig& cfg);

struct TrainResult {
  RunRecord record;
  /// Weights restored to the best validation epoch.
  ModelParams params;
};

TrainResult train(const GraphDataset& data, const TrainConfig& cfg);

struct GridRow {
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t trial = 0;
  double val_acc = 0.0;
  double test_acc = 0.0;

  friend bool operator==(const GridRow&, const GridRow&) = default;
};

struct GridResult {
  /// Ordered by (alpha index, beta index, trial).
  std::vector<GridRow> rows;
  double best_alpha = 0.0;
  double best_beta = 0.0;
  double best_mean_val = 0.0;
};

struct GridOptions {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::size_t trials = 1;
  /// Worker threads; 0 or 1 runs serially.
  std::size_t parallel = 1;
};

/// Ten evenly spaced values 0.1, 0.2, ..., 1.0.
std::vector<double> default_grid();

/// Trial t of every cell uses seed derive(base.seed, t).
GridResult grid_search(const GraphDataset& data, const TrainConfig& base, const GridOptions& options);

std::string grid_csv(const GridResult& result);

}  // namespace lereg
