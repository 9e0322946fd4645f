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

#include "lereg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lereg/dataset.hpp"
#include "lereg/diagnostics.hpp"
#include "lereg/errors.hpp"
#include "lereg/trainer.hpp"
#include "lereg/verify.hpp"

namespace lereg::cli {

namespace fs = std::filesystem;

namespace {

std::vector<double> parse_csv_doubles(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    const auto* end = item.data() + item.size();
    const auto res = std::from_chars(item.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw ConfigError(flag + ": cannot parse '" + item + "' as a number");
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> parse_csv_counts(const std::string& text, const std::string& flag) {
  std::vector<std::size_t> out;
  for (double v : parse_csv_doubles(text, flag)) {
    if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError(flag + ": expected positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
  if (!f) throw InputError("failed writing " + path.string());
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw ConfigError("--out must not be empty");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw InputError("--out: cannot create " + out + ": " + ec.message());
  return fs::path(out);
}

std::string resolved_config(const CLI::App& sub) {
  return "[" + sub.get_name() + "]\n" + sub.config_to_str(true, false);
}

struct TrainFlags {
  TrainConfig cfg;
  std::string backbone = "gcn";
  std::string mask_mode = "full";
  std::string baseline = "none";
  std::string alpha_per_layer;
  std::string beta_per_layer;
  std::string data;
  std::string out = "out";

  void add_to(CLI::App& app) {
    app.add_option("--data", data, "Dataset bundle directory")->required();
    app.add_option("--backbone", backbone, "gcn | sgc")->check(CLI::IsMember({"gcn", "sgc"}));
    app.add_option("--layers", cfg.layers, "GCN layers");
    app.add_option("--hidden", cfg.hidden, "Hidden width");
    app.add_option("--sgc-power", cfg.sgc_power, "SGC propagation steps K");
    app.add_option("--lr", cfg.lr, "Adam learning rate");
    app.add_option("--weight-decay", cfg.weight_decay, "L2 weight decay");
    app.add_option("--patience", cfg.patience, "Early stopping patience (epochs)");
    app.add_option("--max-epochs", cfg.max_epochs, "Maximum epochs");
    app.add_option("--alpha", cfg.alpha, "Intra-energy factor");
    app.add_option("--beta", cfg.beta, "Inter-energy factor");
    app.add_option("--alpha-per-layer", alpha_per_layer, "Per-layer intra factors (CSV)");
    app.add_option("--beta-per-layer", beta_per_layer, "Per-layer inter factors (CSV)");
    app.add_option("--margin", cfg.margin, "Inter-energy margin m");
    app.add_option("--mask-mode", mask_mode, "full | detached")->check(CLI::IsMember({"full", "detached"}));
    app.add_flag("--layerwise", cfg.layerwise, "Regularize every layer");
    app.add_option("--baseline", baseline, "none | laplacian | label-smoothing")
        ->check(CLI::IsMember({"none", "laplacian", "label-smoothing"}));
    app.add_option("--baseline-weight", cfg.baseline_weight, "Laplacian weight or smoothing factor");
    app.add_flag("--zero-merged-diagonal", cfg.zero_merged_diagonal, "Drop intra-class mass of the merged graph");
    app.add_option("--dropout", cfg.dropout, "Dropout rate on layer inputs");
    app.add_flag("--bias", cfg.bias, "Add bias terms");
    app.add_option("--seed", cfg.seed, "Random seed");
    app.add_option("--out", out, "Output directory");
  }

  TrainConfig resolve() const {
    TrainConfig c = cfg;
    c.backbone = parse_backbone(backbone);
    c.mask_mode = parse_mask_mode(mask_mode);
    c.baseline = parse_baseline(baseline);
    c.alpha_per_layer = parse_csv_doubles(alpha_per_layer, "--alpha-per-layer");
    c.beta_per_layer = parse_csv_doubles(beta_per_layer, "--beta-per-layer");
    c.validate();
    return c;
  }
};

void print_epoch_summary(std::ostream& out, const RunRecord& r) {
  out << "epochs=" << r.epochs.size() << " best_epoch=" << r.best_epoch
      << " val_acc=" << format_double(r.best_val_acc) << " test_acc=" << format_double(r.test_acc)
      << (r.diverged ? " diverged" : "") << "\n";
}

int cmd_generate(const CLI::App& sub, const SbmConfig& sbm_in, const std::string& counts, const std::string& out,
                 std::ostream& os) {
  SbmConfig sbm = sbm_in;
  sbm.nodes_per_class = parse_csv_counts(counts, "--nodes-per-class");
  const auto data = generate_sbm(sbm);
  const fs::path dir = prepare_out(out);
  save_bundle(data, dir);
  write_text(dir / "config.toml", resolved_config(sub));
  os << "nodes=" << data.num_nodes() << " edges=" << data.num_edges() << " classes=" << data.num_classes << "\n";
  return kExitOk;
}

int cmd_train(const CLI::App& sub, const TrainFlags& flags, std::ostream& os) {
  const TrainConfig cfg = flags.resolve();
  const auto data = load_bundle(flags.data);
  const auto result = train(data, cfg);
  const fs::path dir = prepare_out(flags.out);
  write_text(dir / "results.json", results_json(result.record, cfg).dump(2) + "\n");
  save_checkpoint(result.params, dir / "checkpoint.json");
  write_text(dir / "config.toml", resolved_config(sub));
  print_epoch_summary(os, result.record);
  return kExitOk;
}

int cmd_grid(const CLI::App& sub, const TrainFlags& flags, const std::string& alpha_grid,
             const std::string& beta_grid, std::size_t trials, std::size_t parallel, std::ostream& os) {
  const TrainConfig cfg = flags.resolve();
  GridOptions opts;
  opts.alphas = alpha_grid.empty() ? default_grid() : parse_csv_doubles(alpha_grid, "--alpha-grid");
  opts.betas = beta_grid.empty() ? default_grid() : parse_csv_doubles(beta_grid, "--beta-grid");
  opts.trials = trials;
  opts.parallel = parallel;
  const auto data = load_bundle(flags.data);
  const auto g = grid_search(data, cfg, opts);
  const fs::path dir = prepare_out(flags.out);
  write_text(dir / "grid.csv", grid_csv(g));
  TrainConfig best = cfg;
  best.alpha = g.best_alpha;
  best.beta = g.best_beta;
  const nlohmann::json summary{{"best_alpha", g.best_alpha},
                               {"best_beta", g.best_beta},
                               {"best_mean_val_acc", g.best_mean_val},
                               {"trials", trials},
                               {"config", best}};
  write_text(dir / "best.json", summary.dump(2) + "\n");
  write_text(dir / "config.toml", resolved_config(sub));
  os << "best_alpha=" << format_double(g.best_alpha) << " best_beta=" << format_double(g.best_beta)
     << " mean_val_acc=" << format_double(g.best_mean_val) << "\n";
  return kExitOk;
}

std::string optional_cell(const std::optional<double>& v) { return v ? format_double(*v) : "undefined"; }

int cmd_diagnose(const CLI::App& sub, const std::string& data_dir, const std::string& checkpoint,
                 std::size_t layers, std::size_t hidden, std::uint64_t seed, std::size_t steps,
                 const std::string& out, std::ostream& os, std::ostream& err) {
  const auto data = load_bundle(data_dir);
  ModelParams params;
  if (!checkpoint.empty()) {
    params = load_checkpoint(checkpoint);
  } else {
    Rng rng(Rng::derive(seed, 10));
    params = init_gcn(data.num_features(), hidden, static_cast<std::size_t>(data.num_classes), layers, rng);
  }
  const fs::path dir = prepare_out(out);
  const auto prop = std::make_shared<const SparseMatrix>(normalize_sym(data.adjacency, true));
  ad::Tape tape(false);
  ForwardOptions fo;
  fo.track_weights = false;
  const ForwardTrace trace = params.backbone == Backbone::kSgc
                                 ? sgc_forward(params, SgcFeatureCache(*prop, data.features, params.sgc_power), tape, fo)
                                 : gcn_forward(params, prop, data.features, tape, fo);
  const GraphContext ctx = GraphContext::build(data.adjacency);
  const auto energy = diag::energy_report(trace, ctx, data.labels, data.num_classes);

  std::ostringstream e_csv, s_csv;
  e_csv << "layer,E_intra,E_inter,E_G,ratio\n";
  s_csv << "layer,class,smoothness\n";
  for (std::size_t l = 0; l < energy.layers.size(); ++l) {
    const auto& le = energy.layers[l];
    e_csv << l + 1 << ',' << format_double(le.e_intra) << ',' << format_double(le.e_inter) << ','
          << format_double(le.e_g) << ',' << optional_cell(le.ratio) << '\n';
    for (std::size_t k = 0; k < energy.smoothness[l].size(); ++k)
      s_csv << l + 1 << ',' << k << ',' << format_double(energy.smoothness[l][k]) << '\n';
  }
  write_text(dir / "energy.csv", e_csv.str());
  write_text(dir / "smoothness.csv", s_csv.str());
  std::vector<std::string> written = {"energy.csv", "smoothness.csv"};

  const std::size_t n = data.num_nodes();
  if (n <= diag::kMaxDenseEigen) {
    const auto spec = diag::spectral_report(data.adjacency);
    std::ostringstream sp;
    sp << "index,eigenvalue\n";
    for (std::size_t k = 0; k < spec.eigenvalues.size(); ++k) sp << k << ',' << format_double(spec.eigenvalues[k]) << '\n';
    write_text(dir / "spectral.csv", sp.str());
    const auto conv = diag::convergence_trace(data.adjacency, {}, data.features, steps);
    std::ostringstream cv;
    cv << "step,d_M,envelope,s,lambda\n";
    for (std::size_t l = 0; l < conv.distance.size(); ++l)
      cv << l << ',' << format_double(conv.distance[l]) << ',' << format_double(conv.envelope[l]) << ','
         << (l == 0 ? "1" : format_double(conv.singular[l - 1])) << ',' << format_double(conv.lambda) << '\n';
    write_text(dir / "convergence.csv", cv.str());
    written.insert(written.end(), {"spectral.csv", "convergence.csv"});
  } else {
    err << "diagnose: " << n << " nodes exceed the dense eigensolver limit " << diag::kMaxDenseEigen
        << "; spectral.csv and convergence.csv skipped\n";
  }
  if (n <= diag::kMaxBruteForce) {
    const auto ch = diag::cheeger_check(data.adjacency);
    std::ostringstream cc;
    cc << "connected,phi,lambda_star,lambda,lambda_lower,lambda_upper,holds\n"
       << ch.connected << ',' << format_double(ch.phi) << ',' << format_double(ch.lambda_star) << ','
       << format_double(ch.lambda) << ',' << format_double(ch.lambda_lower) << ','
       << format_double(ch.lambda_upper) << ',' << ch.holds << '\n';
    write_text(dir / "cheeger.csv", cc.str());
    const auto sb = diag::subgraph_bound_check(data.adjacency, data.labels);
    std::ostringstream sc;
    sc << "class,phi_min,lambda_upper,lambda_lower,phi_graph,holds\n";
    for (const auto& b : sb.classes)
      sc << b.label << ',' << format_double(b.phi_min) << ',' << format_double(b.lambda_upper) << ','
         << format_double(b.lambda_lower) << ',' << format_double(sb.phi_graph) << ',' << b.holds << '\n';
    write_text(dir / "subgraph.csv", sc.str());
    written.insert(written.end(), {"cheeger.csv", "subgraph.csv"});
  } else {
    err << "diagnose: " << n << " nodes exceed the exhaustive conductance limit " << diag::kMaxBruteForce
        << "; cheeger.csv and subgraph.csv skipped\n";
  }
  write_text(dir / "config.toml", resolved_config(sub));
  os << "wrote";
  for (const auto& w : written) os << ' ' << w;
  os << "\n";
  return kExitOk;
}

int cmd_verify(const CLI::App& sub, std::uint64_t seed, const std::string& out, std::ostream& os) {
  const auto report = diag::run_verify(seed);
  for (const auto& c : report.checks) os << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
  if (!out.empty()) {
    const fs::path dir = prepare_out(out);
    write_text(dir / "verify.json", diag::to_json(report).dump(2) + "\n");
    write_text(dir / "config.toml", resolved_config(sub));
  }
  os << (report.passed() ? "verify passed" : "verify FAILED") << "\n";
  return report.passed() ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"LEReg: local energy regularization for graph neural networks", "lereg"};
  app.set_config("--config", "", "Config file ([subcommand] section, keys mirror flag names)");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  auto* gen = app.add_subcommand("generate", "Write a synthetic SBM dataset bundle")->fallthrough();
  SbmConfig sbm;
  std::string counts = "200,200,200";
  std::string gen_out = "data";
  gen->add_option("--nodes-per-class", counts, "Class sizes (CSV)");
  gen->add_option("--p-intra", sbm.p_intra, "Intra-class edge probability");
  gen->add_option("--p-inter", sbm.p_inter, "Inter-class edge probability");
  gen->add_option("--feature-dim", sbm.feature_dim, "Feature dimension");
  gen->add_option("--feature-scale", sbm.feature_center_scale, "Class centre norm");
  gen->add_option("--feature-noise", sbm.feature_noise_std, "Feature noise std");
  gen->add_option("--train-per-class", sbm.train_per_class, "Train nodes per class");
  gen->add_option("--val-per-class", sbm.val_per_class, "Validation nodes per class");
  gen->add_option("--seed", sbm.seed, "Random seed");
  gen->add_option("--out", gen_out, "Bundle directory");

  auto* tr = app.add_subcommand("train", "Train one model and write results.json")->fallthrough();
  TrainFlags train_flags;
  train_flags.add_to(*tr);

  auto* grid = app.add_subcommand("grid", "Grid search over alpha and beta")->fallthrough();
  TrainFlags grid_flags;
  grid_flags.add_to(*grid);
  std::string alpha_grid, beta_grid;
  std::size_t trials = 1, parallel = 1;
  grid->add_option("--alpha-grid", alpha_grid, "Alpha values (CSV, default 0.1..1.0)");
  grid->add_option("--beta-grid", beta_grid, "Beta values (CSV, default 0.1..1.0)");
  grid->add_option("--trials", trials, "Trials per cell")->check(CLI::PositiveNumber);
  grid->add_option("--parallel", parallel, "Worker threads")->check(CLI::PositiveNumber);

  auto* dg = app.add_subcommand("diagnose", "Write energy, smoothness and spectral reports")->fallthrough();
  std::string dg_data, dg_ckpt, dg_out = "diagnostics";
  std::size_t dg_layers = 2, dg_hidden = 64, dg_steps = 16;
  std::uint64_t dg_seed = 0;
  dg->add_option("--data", dg_data, "Dataset bundle directory")->required();
  dg->add_option("--checkpoint", dg_ckpt, "Model checkpoint (fresh init when absent)");
  dg->add_option("--layers", dg_layers, "Layers for a fresh model");
  dg->add_option("--hidden", dg_hidden, "Hidden width for a fresh model");
  dg->add_option("--steps", dg_steps, "Propagation steps for the convergence trace");
  dg->add_option("--seed", dg_seed, "Random seed");
  dg->add_option("--out", dg_out, "Output directory");

  auto* vf = app.add_subcommand("verify", "Run the property suite")->fallthrough();
  std::uint64_t vf_seed = 0;
  std::string vf_out;
  vf->add_option("--seed", vf_seed, "Random seed");
  vf->add_option("--out", vf_out, "Directory for verify.json");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }

  try {
    if (gen->parsed()) return cmd_generate(*gen, sbm, counts, gen_out, out);
    if (tr->parsed()) return cmd_train(*tr, train_flags, out);
    if (grid->parsed()) return cmd_grid(*grid, grid_flags, alpha_grid, beta_grid, trials, parallel, out);
    if (dg->parsed())
      return cmd_diagnose(*dg, dg_data, dg_ckpt, dg_layers, dg_hidden, dg_seed, dg_steps, dg_out, out, err);
    if (vf->parsed()) return cmd_verify(*vf, vf_seed, vf_out, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace lereg::cli
