// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file Command-line front end: featurize, train, predict, evaluate, gradcheck.
//!
//! Exit codes: 0 success, 1 runtime failure (one-line reason on stderr),
//! 2 usage error. Needs CLI11 on the include path.

#pragma once

#include <CLI11.hpp>

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vidta/chem/features.hpp"
#include "vidta/chem/smiles.hpp"
#include "vidta/gradcheck.hpp"
#include "vidta/graph/molecular_graph.hpp"
#include "vidta/graph/spectral.hpp"
#include "vidta/metrics.hpp"
#include "vidta/model/config.hpp"
#include "vidta/model/protein_encoder.hpp"
#include "vidta/pipeline/checkpoint.hpp"
#include "vidta/pipeline/dataset.hpp"
#include "vidta/pipeline/trainer.hpp"

namespace vidta::cli {

namespace detail {

// Model flags shared by featurize and train.
struct ModelFlags {
  bool toy = false;
  std::size_t d_model = 0, d_head = 0, heads = 0, layers = 0, k_pe = 0;
  std::size_t protein_length = 0, protein_embed = 0, protein_hidden = 0;
  double dropout = -1.0;
  bool no_virtual_node = false;
  bool no_positional_encoding = false;
  std::string fusion;
  std::vector<std::size_t> head_widths;

  model::ModelConfig resolve() const {
    model::ModelConfig c = toy ? model::ModelConfig::toy() : model::ModelConfig{};
    auto set = [](std::size_t& field, std::size_t value) {
      if (value != 0) field = value;
    };
    set(c.d_model, d_model);
    set(c.d_head, d_head);
    set(c.heads, heads);
    set(c.layers, layers);
    set(c.k_pe, k_pe);
    set(c.protein_length, protein_length);
    set(c.protein_embed, protein_embed);
    set(c.protein_hidden, protein_hidden);
    if (dropout >= 0.0) c.dropout = dropout;
    if (no_virtual_node) c.virtual_node = false;
    if (no_positional_encoding) c.positional_encoding = false;
    if (!fusion.empty()) c.fusion = model::parse_fusion_mode(fusion);
    if (!head_widths.empty()) {
      if (head_widths.size() != 3) throw CLI::ValidationError("--head_widths", "expects exactly three widths");
      c.head_widths = {head_widths[0], head_widths[1], head_widths[2]};
    }
    c.validate();
    return c;
  }
};

inline void add_model_flags(CLI::App& app, ModelFlags& f) {
  app.add_flag("--toy", f.toy, "Start from the small test configuration");
  app.add_option("--d_model,--d-model", f.d_model, "Drug/protein embedding width");
  app.add_option("--d_head,--d-head", f.d_head, "Per-head attention width");
  app.add_option("--heads", f.heads, "Attention heads");
  app.add_option("--layers", f.layers, "Graph Transformer layers");
  app.add_option("--k_pe,--k-pe", f.k_pe, "Laplacian eigenvectors used as positional encoding");
  app.add_option("--dropout", f.dropout, "Dropout on node/edge states");
  app.add_option("--protein_length,--protein-length", f.protein_length, "Protein encoding length");
  app.add_option("--protein_embed,--protein-embed", f.protein_embed, "Residue embedding width");
  app.add_option("--protein_hidden,--protein-hidden", f.protein_hidden, "Hidden channels of the protein convolutions");
  app.add_option("--head_widths,--head-widths", f.head_widths, "Three hidden widths of the affinity head")
      ->delimiter(',');
  app.add_flag("--no_virtual_node,--no-virtual-node", f.no_virtual_node, "Mean readout instead of a virtual node");
  app.add_flag("--no_positional_encoding,--no-positional-encoding", f.no_positional_encoding,
               "Disable Laplacian positional encodings");
  app.add_option("--fusion", f.fusion, "Fusion of drug and protein embeddings")
      ->check(CLI::IsMember({"attention", "add", "concat"}));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileUnreadable("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Config-file lines `key = value` become `--key value` ahead of the real
// arguments, so anything given on the command line wins.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
  std::string path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty() || rest.empty()) return rest;
  CLI::App* sub = nullptr;
  for (auto* s : app.get_subcommands({})) {
    if (s->get_name() == rest.front()) sub = s;
  }
  if (sub == nullptr) return rest;
  std::vector<std::string> injected{rest.front()};
  std::istringstream lines(read_file(path));
  std::size_t number = 0;
  for (std::string line; std::getline(lines, line);) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) {
      throw CLI::ConversionError("config line " + std::to_string(number) + " is not key=value");
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw CLI::ConversionError("unknown config key '" + key + "'");
    if (opt->get_expected_max() == 0) {
      if (value == "1" || value == "true" || value == "yes") injected.push_back("--" + key);
    } else {
      injected.push_back("--" + key);
      injected.push_back(value);
    }
  }
  injected.insert(injected.end(), rest.begin() + 1, rest.end());
  return injected;
}

inline void print_quarantine(const pipeline::Dataset& data, std::ostream& err) {
  for (const auto& q : data.quarantine) err << "quarantined row " << q.row << ": " << q.reason << '\n';
}

inline pipeline::Dataset load_checked(const std::string& path, std::ostream& err) {
  pipeline::Dataset data = pipeline::load_dataset(path);
  print_quarantine(data, err);
  return data;
}

inline void write_predictions(const std::string& path, const std::vector<pipeline::DatasetRecord>& records,
                              const std::vector<double>& values) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileUnreadable("cannot write '" + path + "'");
  out << "row,prediction,target\n";
  out.precision(9);
  for (std::size_t i = 0; i < records.size(); ++i) {
    out << records[i].row << ',' << values[i] << ',' << records[i].target() << '\n';
  }
}

// Reads the `prediction` and `target` columns written by predict.
inline metrics::MetricsReport evaluate_predictions_file(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string header;
  std::getline(in, header);
  std::vector<std::string> cols;
  {
    std::istringstream h(header);
    for (std::string c; std::getline(h, c, ',');) cols.push_back(pipeline::detail::trim(c));
  }
  auto index_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return i;
    throw HeaderMismatch("predictions file lacks a '" + name + "' column");
  };
  const std::size_t ip = index_of("prediction"), it = index_of("target");
  std::vector<double> pred, truth;
  for (std::string line; std::getline(in, line);) {
    if (pipeline::detail::trim(line).empty()) continue;
    const auto f = pipeline::detail::split_csv(line);
    if (f.size() != cols.size()) throw Error("malformed predictions line: " + line);
    pred.push_back(std::stod(f[ip]));
    truth.push_back(std::stod(f[it]));
  }
  return metrics::evaluate(pred, truth);
}

}  // namespace detail

//! Runs one CLI invocation; `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Drug-target affinity prediction with a graph transformer and gated fusion", "vidta"};
  app.require_subcommand(1, 1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // featurize
  auto* featurize = app.add_subcommand("featurize", "Print graph or sequence encoding statistics");
  std::string smiles, fasta, sequence;
  detail::ModelFlags feat_model;
  featurize->add_option("--smiles", smiles, "SMILES string");
  featurize->add_option("--fasta", fasta, "FASTA file with one protein record");
  featurize->add_option("--sequence", sequence, "Raw protein sequence");
  detail::add_model_flags(*featurize, feat_model);

  // train
  auto* train = app.add_subcommand("train", "k-fold cross-validated training");
  std::string data_path, out_dir;
  pipeline::TrainConfig tc;
  detail::ModelFlags train_model;
  train->add_option("--data", data_path, "Dataset CSV")->required();
  train->add_option("--out", out_dir, "Output directory for checkpoints and logs")->required();
  train->add_option("--folds", tc.folds, "Cross-validation folds")->capture_default_str();
  train->add_option("--seed", tc.seed, "Random seed")->capture_default_str();
  train->add_option("--lr_initial,--lr-initial", tc.lr_initial, "Learning rate for the first epochs")
      ->capture_default_str();
  train->add_option("--lr_after_100_epochs,--lr-after-100-epochs", tc.lr_after_100_epochs,
                    "Learning rate after the decay epoch")
      ->capture_default_str();
  train->add_option("--lr_decay_epoch,--lr-decay-epoch", tc.lr_decay_epoch, "Epochs run at the initial rate")
      ->capture_default_str();
  train->add_option("--batch_size,--batch-size", tc.batch_size, "Minibatch size")->capture_default_str();
  train->add_option("--max_epochs,--max-epochs", tc.max_epochs, "Epoch budget")->capture_default_str();
  train->add_option("--early_stop_patience,--early-stop-patience", tc.early_stop_patience,
                    "Non-improving epochs tolerated")
      ->capture_default_str();
  train->add_option("--workers", tc.workers, "Threads for featurization and evaluation")->capture_default_str();
  detail::add_model_flags(*train, train_model);

  // predict
  auto* predict = app.add_subcommand("predict", "Predict affinities with a checkpoint");
  std::string ckpt_path, pred_data, pred_out;
  std::size_t pred_workers = 1;
  predict->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  predict->add_option("--data", pred_data, "Dataset CSV")->required();
  predict->add_option("--out", pred_out, "Predictions CSV to write")->required();
  predict->add_option("--workers", pred_workers, "Inference threads");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Print CI, r_m^2, PCC and MSE");
  std::string eval_ckpt, eval_data, eval_preds;
  std::size_t eval_workers = 1;
  evaluate->add_option("--checkpoint", eval_ckpt, "Checkpoint file (with --data)");
  evaluate->add_option("--data", eval_data, "Dataset CSV (with --checkpoint)");
  evaluate->add_option("--predictions", eval_preds, "Predictions CSV written by predict");
  evaluate->add_option("--workers", eval_workers, "Inference threads");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the toy model's gradients");
  std::uint64_t gc_seed = 1;
  double gc_tolerance = 1e-4;
  gradcheck->add_option("--seed", gc_seed, "Initialization seed")->capture_default_str();
  gradcheck->add_option("--tolerance", gc_tolerance, "Maximum accepted relative error")->capture_default_str();

  std::vector<std::string> argv;
  try {
    argv = detail::expand_config(args, app);
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
      return 0;
    }
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (featurize->parsed()) {
      if (smiles.empty() == (fasta.empty() && sequence.empty())) {
        err << "usage error: featurize needs exactly one of --smiles or --fasta/--sequence\n";
        return 2;
      }
      const model::ModelConfig cfg = feat_model.resolve();
      if (!smiles.empty()) {
        const chem::Molecule mol = chem::parse_smiles(smiles);
        graph::MolecularGraph g = graph::build_graph(mol, cfg.virtual_node);
        if (cfg.positional_encoding) graph::attach_positional_encoding(g, cfg.k_pe);
        out << "smiles=" << smiles << '\n';
        out << "atoms=" << mol.atoms.size() << '\n';
        out << "bonds=" << mol.bonds.size() << '\n';
        out << "nodes=" << g.n_nodes() << '\n';
        out << "directed_edges=" << g.n_edges() << '\n';
        out << "virtual_node=" << (g.virtual_node_index ? std::to_string(*g.virtual_node_index) : "none") << '\n';
        out << "node_features=" << shape_str(g.node_features.shape()) << '\n';
        out << "edge_features=" << shape_str(g.edge_features.shape()) << '\n';
        out << "positional_encoding="
            << (cfg.positional_encoding ? shape_str(g.positional_encoding.shape()) : std::string("off")) << '\n';
        out << "feature_layout=" << chem::kFeatureLayoutVersion << '\n';
      } else {
        const std::string text = sequence.empty() ? detail::read_file(fasta) : sequence;
        const auto enc = model::encode_sequence(text, cfg.protein_length);
        std::size_t pad = 0;
        for (auto c : enc.codes) pad += c == 0;
        out << "residues=" << enc.original_length << '\n';
        out << "encoded_length=" << enc.codes.size() << '\n';
        out << "truncated=" << (enc.original_length > enc.codes.size() ? "yes" : "no") << '\n';
        out << "pad_positions=" << pad << '\n';
      }
      return 0;
    }

    if (train->parsed()) {
      const model::ModelConfig cfg = train_model.resolve();
      const pipeline::Dataset data = detail::load_checked(data_path, err);
      std::filesystem::create_directories(out_dir);
      const auto folds = pipeline::cross_validate(data.records, cfg, tc);
      std::ofstream summary(std::filesystem::path(out_dir) / "summary.csv", std::ios::trunc);
      summary << "fold,epochs,best_epoch,best_valid_mse," << metrics::MetricsReport::csv_header() << '\n';
      for (const auto& f : folds) {
        const auto base = std::filesystem::path(out_dir) / ("fold" + std::to_string(f.fold));
        pipeline::save_checkpoint(f.training.best, base.string() + ".ckpt");
        std::ofstream log(base.string() + ".log.csv", std::ios::trunc);
        log << pipeline::epoch_log_header() << '\n';
        for (const auto& e : f.training.log) log << pipeline::to_csv_row(e) << '\n';
        std::ostringstream line;
        line.precision(9);
        line << f.fold << ',' << f.training.log.size() << ',' << f.training.best.epoch << ','
             << f.training.best.best_valid_mse << ','
             << (f.valid_metrics ? f.valid_metrics->to_csv_row() : std::string("nan,nan,nan,nan,nan"));
        summary << line.str() << '\n';
        out << "fold " << f.fold << ": epochs=" << f.training.log.size() << " best_epoch=" << f.training.best.epoch
            << " best_valid_mse=" << f.training.best.best_valid_mse << '\n';
      }
      out << "records=" << data.records.size() << " quarantined=" << data.quarantine.size() << '\n';
      return 0;
    }

    if (predict->parsed()) {
      const auto ckpt = pipeline::load_checkpoint(ckpt_path);
      const pipeline::Dataset data = detail::load_checked(pred_data, err);
      const auto result = pipeline::predict_batch(ckpt, data.records, pred_workers);
      detail::write_predictions(pred_out, data.records, result.values);
      out << "predictions=" << result.values.size() << " quarantined=" << data.quarantine.size() << '\n';
      if (result.metrics) out << result.metrics->to_text();
      return 0;
    }

    if (evaluate->parsed()) {
      if (!eval_preds.empty() == (!eval_ckpt.empty() || !eval_data.empty())) {
        err << "usage error: evaluate needs --predictions, or --checkpoint with --data\n";
        return 2;
      }
      if (!eval_preds.empty()) {
        out << detail::evaluate_predictions_file(eval_preds).to_text();
        return 0;
      }
      if (eval_ckpt.empty() || eval_data.empty()) {
        err << "usage error: --checkpoint and --data go together\n";
        return 2;
      }
      const auto ckpt = pipeline::load_checkpoint(eval_ckpt);
      const pipeline::Dataset data = detail::load_checked(eval_data, err);
      const auto result = pipeline::predict_batch(ckpt, data.records, eval_workers);
      if (!result.metrics) throw DegenerateInput("metrics need at least two records with distinct affinities");
      out << result.metrics->to_text();
      return 0;
    }

    if (gradcheck->parsed()) {
      const GradCheckReport r = gradcheck_model(model::ModelConfig::toy(), gc_seed);
      out << std::setprecision(6);
      out << "checked=" << r.checked << '\n';
      out << "max_relative_error=" << r.max_rel_error << '\n';
      out << "worst=" << r.worst_param << '[' << r.worst_index << "] analytic=" << r.analytic
          << " numeric=" << r.numeric << '\n';
      out << "seconds=" << r.seconds << '\n';
      if (r.max_rel_error > gc_tolerance) {
        err << "error: max relative error " << r.max_rel_error << " exceeds " << gc_tolerance << '\n';
        return 1;
      }
      return 0;
    }
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n') c = ' ';
    err << "error: " << msg << '\n';
    return 1;
  }
  return 2;
}

}  // namespace vidta::cli
