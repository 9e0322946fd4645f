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

#include "lereg/models.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "lereg/errors.hpp"

namespace lereg {

std::string to_string(Backbone b) { return b == Backbone::kGcn ? "gcn" : "sgc"; }

Backbone parse_backbone(const std::string& s) {
  if (s == "gcn") return Backbone::kGcn;
  if (s == "sgc") return Backbone::kSgc;
  throw ConfigError("unknown backbone '" + s + "' (expected gcn or sgc)");
}

void ModelParams::validate() const {
  if (weights.empty()) throw ConfigError("model needs at least one layer");
  if (backbone == Backbone::kSgc) {
    if (sgc_power < 1) throw ConfigError("sgc power K must be >= 1");
    if (weights.size() != 1) throw ConfigError("sgc uses exactly one weight matrix");
  }
  if (layer_dims.size() != weights.size() + 1) {
    throw ConfigError("layer_dims must have num_layers + 1 entries");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != layer_dims[l] || weights[l].cols() != layer_dims[l + 1]) {
      throw StructuralError("weight " + std::to_string(l) + " has shape " +
                            weights[l].shape_string() + ", expected " +
                            std::to_string(layer_dims[l]) + "x" + std::to_string(layer_dims[l + 1]));
    }
  }
  if (!biases.empty()) {
    if (biases.size() != weights.size()) throw ConfigError("one bias per layer required");
    for (std::size_t l = 0; l < biases.size(); ++l)
      if (biases[l].rows() != 1 || biases[l].cols() != layer_dims[l + 1])
        throw StructuralError("bias " + std::to_string(l) + " has wrong shape");
  }
}

Tensor glorot_init(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor w(rows, cols);
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  return w;
}

ModelParams init_gcn(std::size_t in_dim, std::size_t hidden, std::size_t num_classes,
                     std::size_t num_layers, Rng& rng, bool bias) {
  if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (in_dim == 0 || hidden == 0 || num_classes == 0) throw ConfigError("layer sizes must be > 0");
  ModelParams p;
  p.backbone = Backbone::kGcn;
  p.layer_dims.push_back(in_dim);
  for (std::size_t l = 0; l + 1 < num_layers; ++l) p.layer_dims.push_back(hidden);
  p.layer_dims.push_back(num_classes);
  for (std::size_t l = 0; l < num_layers; ++l) {
    p.weights.push_back(glorot_init(p.layer_dims[l], p.layer_dims[l + 1], rng));
    if (bias) p.biases.emplace_back(1, p.layer_dims[l + 1]);
  }
  return p;
}

ModelParams init_sgc(std::size_t in_dim, std::size_t num_classes, std::size_t power, Rng& rng,
                     bool bias) {
  if (power < 1) throw ConfigError("sgc power K must be >= 1");
  ModelParams p;
  p.backbone = Backbone::kSgc;
  p.sgc_power = power;
  p.layer_dims = {in_dim, num_classes};
  p.weights.push_back(glorot_init(in_dim, num_classes, rng));
  if (bias) p.biases.emplace_back(1, num_classes);
  return p;
}

namespace {

ad::Var add_bias(ad::Var h, ad::Var bias) {
  ad::Tape& tape = h.tape();
  const ad::Var ones = tape.constant(Tensor(h.value().rows(), 1, 1.0));
  return ad::add(h, ad::matmul(ones, bias));
}

ad::Var apply_dropout(ad::Var h, double rate, Rng& rng) {
  const Tensor& v = h.value();
  Tensor mask(v.rows(), v.cols());
  const double keep = 1.0 - rate;
  for (double& m : mask.values()) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return ad::hadamard(h, h.tape().constant(std::move(mask)));
}

void record_weights(const ModelParams& params, ad::Tape& tape, const ForwardOptions& options,
                    ForwardTrace& trace) {
  const auto& in = options.parameter_inputs;
  if (!in.empty()) {
    if (in.size() != params.weights.size() + params.biases.size())
      throw StructuralError("parameter_inputs must hold one variable per weight and bias");
    for (std::size_t k = 0; k < in.size(); ++k) {
      const Tensor& want = k < params.weights.size() ? params.weights[k] : params.biases[k - params.weights.size()];
      if (in[k].value().rows() != want.rows() || in[k].value().cols() != want.cols())
        throw StructuralError("parameter input " + std::to_string(k) + " has shape " + in[k].value().shape_string());
    }
    trace.weight_leaves.assign(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(params.weights.size()));
    trace.bias_leaves.assign(in.begin() + static_cast<std::ptrdiff_t>(params.weights.size()), in.end());
    return;
  }
  const bool track = options.track_weights;
  for (std::size_t l = 0; l < params.weights.size(); ++l)
    trace.weight_leaves.push_back(tape.leaf(params.weights[l], track, "W" + std::to_string(l)));
  for (std::size_t l = 0; l < params.biases.size(); ++l)
    trace.bias_leaves.push_back(tape.leaf(params.biases[l], track, "b" + std::to_string(l)));
}

}  // namespace

ForwardTrace gcn_forward(const ModelParams& params, std::shared_ptr<const SparseMatrix> propagation,
                         const Tensor& features, ad::Tape& tape, const ForwardOptions& options) {
  params.validate();
  if (params.backbone != Backbone::kGcn) throw ConfigError("gcn_forward needs a gcn model");
  const std::size_t n = features.rows();
  if (propagation->rows() != n || propagation->cols() != n) {
    throw StructuralError("propagation operator must be " + std::to_string(n) + "x" +
                          std::to_string(n));
  }
  if (features.cols() != params.layer_dims.front()) {
    throw StructuralError("features have " + std::to_string(features.cols()) +
                          " columns, model expects " + std::to_string(params.layer_dims.front()));
  }
  ForwardTrace trace;
  trace.tape = &tape;
  record_weights(params, tape, options, trace);
  Rng dropout_rng(options.dropout_seed);

  ad::Var h = tape.constant(features);
  trace.hidden.push_back(h);
  const std::size_t layers = params.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    ad::Var in = options.dropout > 0.0 ? apply_dropout(h, options.dropout, dropout_rng) : h;
    ad::Var z = ad::spmm(propagation, ad::matmul(in, trace.weight_leaves[l]));
    if (!trace.bias_leaves.empty()) z = add_bias(z, trace.bias_leaves[l]);
    h = (l + 1 < layers) ? ad::relu(z) : z;
    trace.hidden.push_back(h);
  }
  trace.probs = ad::row_softmax(h);
  return trace;
}

SgcFeatureCache::SgcFeatureCache(const SparseMatrix& propagation, const Tensor& features,
                                 std::size_t power) {
  if (power < 1) throw ConfigError("sgc power K must be >= 1");
  powers_.push_back(features);
  for (std::size_t k = 0; k < power; ++k) powers_.push_back(propagation.multiply(powers_.back()));
}

ForwardTrace sgc_forward(const ModelParams& params, const SgcFeatureCache& cache, ad::Tape& tape,
                         const ForwardOptions& options) {
  params.validate();
  if (params.backbone != Backbone::kSgc) throw ConfigError("sgc_forward needs an sgc model");
  if (cache.power() != params.sgc_power) {
    throw ConfigError("feature cache has K=" + std::to_string(cache.power()) + ", model has K=" +
                      std::to_string(params.sgc_power));
  }
  if (cache.at(0).cols() != params.layer_dims.front()) {
    throw StructuralError("features do not match the sgc weight");
  }
  ForwardTrace trace;
  trace.tape = &tape;
  record_weights(params, tape, options, trace);
  for (std::size_t k = 0; k <= cache.power(); ++k) trace.hidden.push_back(tape.constant(cache.at(k)));
  ad::Var in = trace.hidden.back();
  if (options.dropout > 0.0) {
    Rng dropout_rng(options.dropout_seed);
    in = apply_dropout(in, options.dropout, dropout_rng);
  }
  ad::Var z = ad::matmul(in, trace.weight_leaves[0]);
  if (!trace.bias_leaves.empty()) z = add_bias(z, trace.bias_leaves[0]);
  trace.hidden.push_back(z);
  trace.probs = ad::row_softmax(z);
  return trace;
}

std::vector<int> predict(const Tensor& probs) {
  std::vector<int> out(probs.rows(), 0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto r = probs.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j)
      if (r[j] > r[best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

namespace {

nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const auto r = t.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

Tensor tensor_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                        const std::string& what) {
  if (!j.is_array() || j.size() != rows) throw InputError("checkpoint: " + what + " has wrong row count");
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& r = j[i];
    if (!r.is_array() || r.size() != cols) throw InputError("checkpoint: " + what + " has wrong column count");
    for (std::size_t c = 0; c < cols; ++c) t(i, c) = r[c].get<double>();
  }
  return t;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  nlohmann::json j;
  j["backbone"] = to_string(params.backbone);
  j["layer_dims"] = params.layer_dims;
  if (params.backbone == Backbone::kSgc) j["sgc_power"] = params.sgc_power;
  j["weights"] = nlohmann::json::array();
  for (const auto& w : params.weights) j["weights"].push_back(tensor_to_json(w));
  if (!params.biases.empty()) {
    j["biases"] = nlohmann::json::array();
    for (const auto& b : params.biases) j["biases"].push_back(tensor_to_json(b));
  }
  std::ofstream(path) << j.dump() << "\n";
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    ModelParams p;
    p.backbone = parse_backbone(j.at("backbone").get<std::string>());
    p.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    if (p.backbone == Backbone::kSgc) p.sgc_power = j.at("sgc_power").get<std::size_t>();
    const auto& ws = j.at("weights");
    if (!ws.is_array() || ws.size() + 1 != p.layer_dims.size()) {
      throw InputError("checkpoint: weights do not match layer_dims");
    }
    for (std::size_t l = 0; l < ws.size(); ++l) {
      p.weights.push_back(tensor_from_json(ws[l], p.layer_dims[l], p.layer_dims[l + 1],
                                           "weight " + std::to_string(l)));
    }
    if (j.contains("biases")) {
      const auto& bs = j.at("biases");
      for (std::size_t l = 0; l < bs.size(); ++l)
        p.biases.push_back(tensor_from_json(bs[l], 1, p.layer_dims[l + 1], "bias " + std::to_string(l)));
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace lereg
