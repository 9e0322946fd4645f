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

#include "lereg/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "lereg/errors.hpp"

namespace lereg {

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::kNone: return "none";
    case Baseline::kLaplacian: return "laplacian";
    case Baseline::kLabelSmoothing: return "label-smoothing";
  }
  return "none";
}

Baseline parse_baseline(const std::string& s) {
  if (s == "none") return Baseline::kNone;
  if (s == "laplacian") return Baseline::kLaplacian;
  if (s == "label-smoothing" || s == "label_smoothing") return Baseline::kLabelSmoothing;
  throw ConfigError("unknown baseline '" + s + "' (expected none, laplacian or label-smoothing)");
}

std::string to_string(MaskMode m) { return m == MaskMode::kDetached ? "detached" : "full"; }

MaskMode parse_mask_mode(const std::string& s) {
  if (s == "full" || s == "full_gradient") return MaskMode::kFullGradient;
  if (s == "detached") return MaskMode::kDetached;
  throw ConfigError("unknown mask mode '" + s + "' (expected full or detached)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (backbone == Backbone::kGcn && layers < 1) throw ConfigError("layers must be at least 1");
  if (backbone == Backbone::kGcn && layers > 1 && hidden < 1) throw ConfigError("hidden must be at least 1");
  if (backbone == Backbone::kSgc && sgc_power < 1) throw ConfigError("sgc power must be at least 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (margin < 0.0) throw ConfigError("margin must be non-negative");
  if (baseline_weight < 0.0) throw ConfigError("baseline weight must be non-negative");
  if (baseline == Baseline::kLabelSmoothing && baseline_weight > 1.0)
    throw ConfigError("label smoothing factor must lie in [0, 1]");
  reg_config().validate(regularized_layers());
}

std::size_t TrainConfig::regularized_layers() const {
  return backbone == Backbone::kGcn ? layers : sgc_power + 1;
}

RegConfig TrainConfig::reg_config() const {
  const std::size_t n = regularized_layers();
  RegConfig r = (layerwise && backbone == Backbone::kGcn) ? RegConfig::broadcast(n, alpha, beta)
                                                          : RegConfig::final_layer_only(n, alpha, beta);
  if (!alpha_per_layer.empty()) r.alphas = alpha_per_layer;
  if (!beta_per_layer.empty()) r.betas = beta_per_layer;
  r.margin = margin;
  r.mask_mode = mask_mode;
  r.zero_merged_diagonal = zero_merged_diagonal;
  return r;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"max_epochs", c.max_epochs},
                     {"patience", c.patience},
                     {"seed", c.seed},
                     {"backbone", to_string(c.backbone)},
                     {"layers", c.layers},
                     {"hidden", c.hidden},
                     {"sgc_power", c.sgc_power},
                     {"bias", c.bias},
                     {"dropout", c.dropout},
                     {"alpha", c.alpha},
                     {"beta", c.beta},
                     {"alpha_per_layer", c.alpha_per_layer},
                     {"beta_per_layer", c.beta_per_layer},
                     {"layerwise", c.layerwise},
                     {"margin", c.margin},
                     {"mask_mode", to_string(c.mask_mode)},
                     {"zero_merged_diagonal", c.zero_merged_diagonal},
                     {"baseline", to_string(c.baseline)},
                     {"baseline_weight", c.baseline_weight}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("lr", c.lr);
  get("weight_decay", c.weight_decay);
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  get("seed", c.seed);
  if (j.contains("backbone")) c.backbone = parse_backbone(j.at("backbone").get<std::string>());
  get("layers", c.layers);
  get("hidden", c.hidden);
  get("sgc_power", c.sgc_power);
  get("bias", c.bias);
  get("dropout", c.dropout);
  get("alpha", c.alpha);
  get("beta", c.beta);
  get("alpha_per_layer", c.alpha_per_layer);
  get("beta_per_layer", c.beta_per_layer);
  get("layerwise", c.layerwise);
  get("margin", c.margin);
  if (j.contains("mask_mode")) c.mask_mode = parse_mask_mode(j.at("mask_mode").get<std::string>());
  get("zero_merged_diagonal", c.zero_merged_diagonal);
  if (j.contains("baseline")) c.baseline = parse_baseline(j.at("baseline").get<std::string>());
  get("baseline_weight", c.baseline_weight);
}

AdamState AdamState::zeros_like(const std::vector<Tensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.rows(), p.cols());
    s.v.emplace_back(p.rows(), p.cols());
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
               double weight_decay, const std::vector<std::string>& names) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw StructuralError("adam_step: parameter, gradient and state counts differ");
  auto label = [&](std::size_t k) { return k < names.size() ? names[k] : "param[" + std::to_string(k) + "]"; };
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].rows() != params[k].rows() || grads[k].cols() != params[k].cols() ||
        state.m[k].rows() != params[k].rows() || state.m[k].cols() != params[k].cols())
      throw StructuralError("adam_step: shape mismatch for " + label(k));
    if (!grads[k].all_finite()) throw NumericError("non-finite gradient in " + label(k));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double c2 = 1.0 - std::pow(AdamState::kBeta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k].values();
    const auto& g = grads[k].values();
    auto& m = state.m[k].values();
    auto& v = state.v[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + weight_decay * w[i];
      m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * gi;
      v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * gi * gi;
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      w[i] -= lr * mh / (std::sqrt(vh) + AdamState::kEps);
    }
  }
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels,
                const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw ConfigError("accuracy over an empty index set");
  std::size_t correct = 0;
  for (std::size_t i : idx) {
    if (i >= predicted.size() || i >= labels.size()) throw InputError("accuracy index out of range");
    if (predicted[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

double accuracy(const Tensor& probs, const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
  return accuracy(predict(probs), labels, idx);
}

nlohmann::json results_json(const RunRecord& record, const TrainConfig& cfg) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : record.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss", e.loss},
                      {"loss_sup", e.loss_sup},
                      {"loss_intra", e.loss_intra},
                      {"loss_inter", e.loss_inter},
                      {"train_acc", e.train_acc},
                      {"val_acc", e.val_acc},
                      {"E_intra", e.e_intra},
                      {"E_inter", e.e_inter},
                      {"E_G", e.e_g}});
  }
  return nlohmann::json{{"config", cfg},
                        {"epochs", std::move(epochs)},
                        {"best_epoch", record.best_epoch},
                        {"best_val_acc", record.best_val_acc},
                        {"test_acc", record.test_acc},
                        {"diverged", record.diverged}};
}

namespace {

struct Model {
  ModelParams params;
  std::shared_ptr<const SparseMatrix> propagation;
  std::optional<SgcFeatureCache> sgc_cache;

  ForwardTrace forward(ad::Tape& tape, const Tensor& features, const ForwardOptions& opts) const {
    if (params.backbone == Backbone::kSgc) return sgc_forward(params, *sgc_cache, tape, opts);
    return gcn_forward(params, propagation, features, tape, opts);
  }
};

struct Evaluation {
  EpochRecord record;
  double test_acc = 0.0;
  bool finite = true;
};

std::vector<Tensor> flat_params(const ModelParams& p) {
  std::vector<Tensor> out = p.weights;
  out.insert(out.end(), p.biases.begin(), p.biases.end());
  return out;
}

void unflatten(ModelParams& p, std::vector<Tensor>&& flat) {
  const std::size_t nw = p.weights.size();
  for (std::size_t k = 0; k < nw; ++k) p.weights[k] = std::move(flat[k]);
  for (std::size_t k = 0; k < p.biases.size(); ++k) p.biases[k] = std::move(flat[nw + k]);
}

std::vector<std::string> param_names(const ModelParams& p) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < p.weights.size(); ++l) names.push_back("W[" + std::to_string(l) + "]");
  for (std::size_t l = 0; l < p.biases.size(); ++l) names.push_back("b[" + std::to_string(l) + "]");
  return names;
}

double value_or_zero(const std::optional<ad::Var>& v) { return v ? v->value().scalar() : 0.0; }

}  // namespace

TrainResult train(const GraphDataset& data, const TrainConfig& cfg) {
  data.validate();
  cfg.validate();
  if (data.splits.train.empty()) throw ConfigError("train split is empty");
  if (data.splits.val.empty()) throw ConfigError("validation split is empty");

  Model model;
  Rng init_rng(Rng::derive(cfg.seed, 10));
  if (cfg.backbone == Backbone::kGcn) {
    model.params = init_gcn(data.num_features(), cfg.hidden, static_cast<std::size_t>(data.num_classes), cfg.layers,
                            init_rng, cfg.bias);
  } else {
    model.params = init_sgc(data.num_features(), static_cast<std::size_t>(data.num_classes), cfg.sgc_power,
                            init_rng, cfg.bias);
  }
  model.propagation = std::make_shared<const SparseMatrix>(normalize_sym(data.adjacency, true));
  if (cfg.backbone == Backbone::kSgc) model.sgc_cache.emplace(*model.propagation, data.features, cfg.sgc_power);

  const GraphContext ctx = GraphContext::build(data.adjacency);
  const RegConfig reg = cfg.reg_config();
  const std::size_t reg_layers = cfg.regularized_layers();
  Tensor targets_value = one_hot(data.labels, data.num_classes);
  if (cfg.baseline == Baseline::kLabelSmoothing) targets_value = label_smoothing(targets_value, cfg.baseline_weight);
  const auto targets = std::make_shared<const Tensor>(std::move(targets_value));
  const auto train_idx = std::make_shared<const std::vector<std::size_t>>(data.splits.train);
  const bool with_reg = !cfg.skip_regularizers;

  std::vector<Tensor> flat = flat_params(model.params);
  const auto names = param_names(model.params);
  AdamState adam = AdamState::zeros_like(flat);

  TrainResult result;
  RunRecord& rec = result.record;
  ModelParams best_params = model.params;
  bool have_best = false;
  double best_test = 0.0;
  const std::size_t patience = std::min(cfg.patience, cfg.max_epochs);

  for (std::size_t epoch = 0;; ++epoch) {
    unflatten(model.params, std::vector<Tensor>(flat));

    ad::Tape eval_tape(false);
    ForwardOptions eval_opts;
    eval_opts.track_weights = cfg.dropout == 0.0;
    const ForwardTrace eval = model.forward(eval_tape, data.features, eval_opts);

    ad::Tape* train_tape = &eval_tape;
    ForwardTrace train_trace = eval;
    ad::Tape dropout_tape(false);
    if (cfg.dropout > 0.0) {
      ForwardOptions opts;
      opts.dropout = cfg.dropout;
      opts.dropout_seed = Rng::derive(Rng::derive(cfg.seed, 11), epoch);
      train_trace = model.forward(dropout_tape, data.features, opts);
      train_tape = &dropout_tape;
    }

    LossBreakdown loss;
    if (with_reg) {
      DegreeSnapshot snapshot;
      loss = combined_loss(train_trace, ctx, targets, train_idx, reg, &snapshot);
    } else {
      loss.supervised = ad::masked_cross_entropy(train_trace.probs, targets, train_idx, reg.eps);
      loss.total = loss.supervised;
      loss.terms.intra.resize(reg_layers);
      loss.terms.inter_loss.resize(reg_layers);
    }
    ad::Var total = loss.total;
    if (cfg.baseline == Baseline::kLaplacian && cfg.baseline_weight > 0.0)
      total = ad::add(total, ad::scale(baseline_laplacian_reg(train_trace.logits(), ctx), cfg.baseline_weight));

    EpochRecord er;
    er.epoch = epoch;
    er.loss = total.value().scalar();
    er.loss_sup = loss.supervised.value().scalar();
    er.loss_intra.resize(reg_layers);
    er.loss_inter.resize(reg_layers);
    for (std::size_t l = 0; l < reg_layers; ++l) {
      er.loss_intra[l] = value_or_zero(loss.terms.intra[l]);
      er.loss_inter[l] = value_or_zero(loss.terms.inter_loss[l]);
    }
    const Tensor& probs = eval.probs.value();
    const auto yhat = predict(probs);
    er.train_acc = accuracy(yhat, data.labels, data.splits.train);
    er.val_acc = accuracy(yhat, data.labels, data.splits.val);
    const double test_acc = data.splits.test.empty() ? 0.0 : accuracy(yhat, data.labels, data.splits.test);
    {
      ad::Tape energy_tape(false);
      const ad::Var z = energy_tape.constant(eval.logits().value());
      const ad::Var p = energy_tape.constant(probs);
      er.e_intra = intra_energy(z, soft_mask(ctx, p, MaskMode::kDetached), ctx.eps).value().scalar();
      er.e_inter = inter_energy(merge_graph(ctx, p, z, cfg.zero_merged_diagonal), ctx.eps).value().scalar();
      er.e_g = global_energy(z, ctx).value().scalar();
    }
    rec.epochs.push_back(er);

    if (!std::isfinite(er.loss)) {
      rec.diverged = true;
      break;
    }
    if (!have_best || er.val_acc > rec.best_val_acc) {
      have_best = true;
      rec.best_epoch = epoch;
      rec.best_val_acc = er.val_acc;
      best_test = test_acc;
      best_params = model.params;
    }
    if (epoch >= cfg.max_epochs || epoch - rec.best_epoch >= patience) break;

    const auto grads = train_tape->backward(total);
    std::vector<Tensor> g;
    g.reserve(flat.size());
    for (const auto& w : train_trace.weight_leaves) g.push_back(grads.at(w));
    for (const auto& b : train_trace.bias_leaves) g.push_back(grads.at(b));
    adam_step(flat, g, adam, cfg.lr, cfg.weight_decay, names);
  }

  rec.test_acc = best_test;
  result.params = have_best ? best_params : model.params;
  return result;
}

std::vector<double> default_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 10; ++k) g.push_back(k / 10.0);
  return g;
}

GridResult grid_search(const GraphDataset& data, const TrainConfig& base, const GridOptions& options) {
  if (options.alphas.empty() || options.betas.empty()) throw ConfigError("grid values must be nonempty");
  if (options.trials == 0) throw ConfigError("trials must be at least 1");
  const std::size_t nb = options.betas.size();
  const std::size_t cells = options.alphas.size() * nb;
  const std::size_t jobs = cells * options.trials;
  std::vector<GridRow> rows(jobs);

  auto run_job = [&](std::size_t job) {
    const std::size_t cell = job / options.trials;
    const std::size_t trial = job % options.trials;
    TrainConfig cfg = base;
    cfg.alpha = options.alphas[cell / nb];
    cfg.beta = options.betas[cell % nb];
    cfg.alpha_per_layer.clear();
    cfg.beta_per_layer.clear();
    cfg.seed = Rng::derive(base.seed, trial);
    const auto res = train(data, cfg);
    rows[job] = GridRow{cfg.alpha, cfg.beta, trial, res.record.best_val_acc, res.record.test_acc};
  };

  const std::size_t workers = std::min(std::max<std::size_t>(options.parallel, 1), jobs);
  if (workers <= 1) {
    for (std::size_t j = 0; j < jobs; ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < jobs; j = next++) {
          try {
            run_job(j);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  GridResult out;
  out.rows = std::move(rows);
  bool first = true;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    double mean = 0.0;
    for (std::size_t t = 0; t < options.trials; ++t) mean += out.rows[cell * options.trials + t].val_acc;
    mean /= static_cast<double>(options.trials);
    const double a = options.alphas[cell / nb];
    const double b = options.betas[cell % nb];
    const bool lower = a < out.best_alpha || (a == out.best_alpha && b < out.best_beta);
    if (first || mean > out.best_mean_val || (mean == out.best_mean_val && lower)) {
      first = false;
      out.best_alpha = a;
      out.best_beta = b;
      out.best_mean_val = mean;
    }
  }
  return out;
}

std::string grid_csv(const GridResult& result) {
  std::ostringstream os;
  os << "alpha,beta,trial,val_acc,test_acc\n";
  for (const auto& r : result.rows)
    os << format_double(r.alpha) << ',' << format_double(r.beta) << ',' << r.trial << ','
       << format_double(r.val_acc) << ',' << format_double(r.test_acc) << '\n';
  return os.str();
}

}  // namespace lereg
