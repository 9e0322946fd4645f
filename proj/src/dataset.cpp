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

#include "lereg/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lereg/errors.hpp"
#include "lereg/rng.hpp"

namespace lereg {

namespace {

using nlohmann::json;

void check_indices(const std::vector<std::size_t>& idx, std::size_t n, const char* what) {
  for (std::size_t i : idx) {
    if (i >= n) {
      throw InputError(std::string("split '") + what + "' contains node " + std::to_string(i) +
                       " >= num_nodes " + std::to_string(n));
    }
  }
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

template <typename T>
T json_field(const json& j, const char* key, const std::filesystem::path& path) {
  if (!j.contains(key)) throw InputError(path.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(path.string() + ": field '" + key + "' has the wrong type");
  }
}

double parse_double(std::string_view tok, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw InputError(path.string() + ":" + std::to_string(line) + ": bad number '" +
                     std::string(tok) + "'");
  }
  return v;
}

long long parse_int(std::string_view tok, const std::filesystem::path& path, std::size_t line) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw InputError(path.string() + ":" + std::to_string(line) + ": bad integer '" +
                     std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

// Calls emit(k) for each index k in [0, total) kept independently with
// probability p, in increasing order.
template <typename Emit>
void sample_bernoulli_indices(Rng& rng, double p, std::uint64_t total, Emit&& emit) {
  if (p <= 0.0 || total == 0) return;
  if (p >= 1.0) {
    for (std::uint64_t k = 0; k < total; ++k) emit(k);
    return;
  }
  const double log_q = std::log1p(-p);
  std::uint64_t k = 0;
  bool first = true;
  while (true) {
    const double skip = std::floor(std::log1p(-rng.uniform()) / log_q);
    if (skip >= static_cast<double>(total)) return;
    const auto step = static_cast<std::uint64_t>(skip) + (first ? 0 : 1);
    first = false;
    if (step >= total - k) return;
    k += step;
    emit(k);
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void GraphDataset::validate() const {
  const std::size_t n = adjacency.rows();
  if (adjacency.cols() != n) throw InputError("adjacency must be square");
  if (features.rows() != n) {
    throw InputError("features has " + std::to_string(features.rows()) + " rows, expected " +
                     std::to_string(n));
  }
  if (labels.size() != n) {
    throw InputError("labels has " + std::to_string(labels.size()) + " entries, expected " +
                     std::to_string(n));
  }
  if (num_classes <= 0) throw InputError("num_classes must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw InputError("label of node " + std::to_string(i) + " outside [0, num_classes)");
    }
  }
  if (!adjacency.is_symmetric()) throw InputError("adjacency is not symmetric");
  if (adjacency.has_diagonal_entries()) throw InputError("adjacency has self-loops");
  check_indices(splits.train, n, "train");
  check_indices(splits.val, n, "val");
  check_indices(splits.test, n, "test");
  if (splits.train.empty()) throw InputError("train split is empty");
  std::vector<char> seen(n, 0);
  for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
    for (std::size_t i : *part) {
      if (seen[i]) throw InputError("node " + std::to_string(i) + " appears in two splits");
      seen[i] = 1;
    }
  }
}

std::vector<int> GraphDataset::classes_missing_from_train() const {
  std::vector<char> present(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
  for (std::size_t i : splits.train) present[static_cast<std::size_t>(labels[i])] = 1;
  std::vector<int> missing;
  for (int c = 0; c < num_classes; ++c)
    if (!present[static_cast<std::size_t>(c)]) missing.push_back(c);
  return missing;
}

void save_bundle(const GraphDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    json meta = {{"name", data.name},
                 {"num_nodes", data.num_nodes()},
                 {"num_features", data.num_features()},
                 {"num_classes", data.num_classes}};
    std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "edges.tsv");
    for (const auto& [u, v] : upper_edges(data.adjacency)) out << u << '\t' << v << '\n';
  }
  {
    std::ofstream out(dir / "features.tsv");
    for (std::size_t i = 0; i < data.features.rows(); ++i) {
      const auto row = data.features.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (j > 0) out << '\t';
        out << format_double(row[j]);
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "labels.tsv");
    for (int y : data.labels) out << y << '\n';
  }
  {
    json split = {{"train", data.splits.train}, {"val", data.splits.val}, {"test", data.splits.test}};
    std::ofstream(dir / "split.json") << split.dump() << "\n";
  }
}

GraphDataset load_bundle(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw InputError("dataset directory not found: " + dir.string());
  }
  GraphDataset data;
  const auto meta_path = dir / "meta.json";
  const json meta = read_json(meta_path);
  data.name = json_field<std::string>(meta, "name", meta_path);
  const auto n = json_field<std::size_t>(meta, "num_nodes", meta_path);
  const auto f = json_field<std::size_t>(meta, "num_features", meta_path);
  data.num_classes = json_field<int>(meta, "num_classes", meta_path);

  EdgeList edges;
  {
    const auto path = dir / "edges.tsv";
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto view = trim_cr(line);
      if (view.empty()) continue;
      const auto toks = split_tabs(view);
      if (toks.size() != 2) {
        throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected 'u\\tv'");
      }
      const auto u = parse_int(toks[0], path, lineno);
      const auto v = parse_int(toks[1], path, lineno);
      if (u < 0 || v < 0) throw InputError(path.string() + ":" + std::to_string(lineno) + ": negative node index");
      edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
    }
  }
  data.adjacency = symmetrize_dedup(edges, n);

  {
    const auto path = dir / "features.tsv";
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::vector<double> values;
    values.reserve(n * f);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto view = trim_cr(line);
      if (view.empty()) continue;
      const auto toks = split_tabs(view);
      if (toks.size() != f) {
        throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(f) + " columns (num_features), got " +
                         std::to_string(toks.size()));
      }
      for (auto t : toks) values.push_back(parse_double(t, path, lineno));
    }
    if (values.size() != n * f) {
      throw InputError(path.string() + ": expected " + std::to_string(n) +
                       " rows (num_nodes), got " + std::to_string(values.size() / std::max<std::size_t>(f, 1)));
    }
    data.features = Tensor(n, f, std::move(values));
  }

  {
    const auto path = dir / "labels.tsv";
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto view = trim_cr(line);
      if (view.empty()) continue;
      data.labels.push_back(static_cast<int>(parse_int(view, path, lineno)));
    }
  }

  {
    const auto path = dir / "split.json";
    const json split = read_json(path);
    data.splits.train = json_field<std::vector<std::size_t>>(split, "train", path);
    data.splits.val = json_field<std::vector<std::size_t>>(split, "val", path);
    data.splits.test = json_field<std::vector<std::size_t>>(split, "test", path);
  }

  data.validate();
  const auto missing = data.classes_missing_from_train();
  if (!missing.empty()) {
    std::cerr << "warning: " << missing.size() << " class(es) have no training nodes in "
              << dir.string() << "\n";
  }
  return data;
}

void SbmConfig::validate() const {
  if (nodes_per_class.empty()) throw ConfigError("nodes_per_class must be nonempty");
  for (std::size_t c : nodes_per_class)
    if (c == 0) throw ConfigError("nodes_per_class entries must be > 0");
  if (!(p_inter >= 0.0 && p_inter <= p_intra && p_intra <= 1.0)) {
    throw ConfigError("SBM probabilities must satisfy 0 <= p_inter <= p_intra <= 1");
  }
  if (feature_dim == 0) throw ConfigError("feature_dim must be > 0");
  if (feature_noise_std < 0.0) throw ConfigError("feature_noise_std must be >= 0");
}

Splits per_class_split(const std::vector<int>& labels, int num_classes,
                       std::size_t train_per_class, std::size_t val_per_class,
                       std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i)
    members[static_cast<std::size_t>(labels[i])].push_back(i);
  Splits s;
  for (int c = 0; c < num_classes; ++c) {
    auto& m = members[static_cast<std::size_t>(c)];
    if (m.size() < train_per_class + val_per_class) {
      throw SplitError("class " + std::to_string(c) + " has " + std::to_string(m.size()) +
                       " nodes, needs at least " + std::to_string(train_per_class + val_per_class));
    }
    // Fisher-Yates with the platform-independent generator.
    for (std::size_t i = m.size(); i > 1; --i) std::swap(m[i - 1], m[rng.below(i)]);
    s.train.insert(s.train.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(train_per_class));
    s.val.insert(s.val.end(), m.begin() + static_cast<std::ptrdiff_t>(train_per_class),
                 m.begin() + static_cast<std::ptrdiff_t>(train_per_class + val_per_class));
    s.test.insert(s.test.end(), m.begin() + static_cast<std::ptrdiff_t>(train_per_class + val_per_class), m.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

GraphDataset generate_sbm(const SbmConfig& cfg) {
  cfg.validate();
  const std::size_t num_classes = cfg.nodes_per_class.size();
  std::vector<std::size_t> start(num_classes + 1, 0);
  for (std::size_t c = 0; c < num_classes; ++c) start[c + 1] = start[c] + cfg.nodes_per_class[c];
  const std::size_t n = start.back();

  GraphDataset data;
  data.name = "sbm";
  data.num_classes = static_cast<int>(num_classes);
  data.labels.resize(n);
  for (std::size_t c = 0; c < num_classes; ++c)
    for (std::size_t i = start[c]; i < start[c + 1]; ++i) data.labels[i] = static_cast<int>(c);

  Rng edge_rng(Rng::derive(cfg.seed, 0));
  EdgeList edges;
  for (std::size_t a = 0; a < num_classes; ++a) {
    const std::size_t na = cfg.nodes_per_class[a];
    // Intra block: pairs i < j enumerated row by row.
    const std::uint64_t total = static_cast<std::uint64_t>(na) * (na - 1) / 2;
    std::size_t row = 0;
    std::uint64_t row_start = 0;
    sample_bernoulli_indices(edge_rng, cfg.p_intra, total, [&](std::uint64_t k) {
      while (k >= row_start + (na - 1 - row)) {
        row_start += na - 1 - row;
        ++row;
      }
      const std::size_t col = row + 1 + static_cast<std::size_t>(k - row_start);
      edges.emplace_back(start[a] + row, start[a] + col);
    });
    for (std::size_t b = a + 1; b < num_classes; ++b) {
      const std::size_t nb = cfg.nodes_per_class[b];
      sample_bernoulli_indices(edge_rng, cfg.p_inter, static_cast<std::uint64_t>(na) * nb,
                               [&](std::uint64_t k) {
                                 edges.emplace_back(start[a] + static_cast<std::size_t>(k / nb),
                                                    start[b] + static_cast<std::size_t>(k % nb));
                               });
    }
  }
  data.adjacency = symmetrize_dedup(edges, n);

  Rng feat_rng(Rng::derive(cfg.seed, 1));
  Tensor centers(num_classes, cfg.feature_dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < cfg.feature_dim; ++j) {
      centers(c, j) = feat_rng.normal();
      norm += centers(c, j) * centers(c, j);
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < cfg.feature_dim; ++j)
      centers(c, j) = cfg.feature_center_scale * centers(c, j) / norm;
  }
  data.features = Tensor(n, cfg.feature_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(data.labels[i]);
    for (std::size_t j = 0; j < cfg.feature_dim; ++j)
      data.features(i, j) = centers(c, j) + cfg.feature_noise_std * feat_rng.normal();
  }

  data.splits = per_class_split(data.labels, data.num_classes, cfg.train_per_class,
                                cfg.val_per_class, Rng::derive(cfg.seed, 2));
  data.validate();
  return data;
}

}  // namespace lereg
