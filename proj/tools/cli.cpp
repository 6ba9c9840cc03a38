// Copyright 2026 The Authors.
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

#include "cli.hpp"

#include <csignal>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <pthread.h>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "worthiness/error.hpp"
#include "worthiness/failnet.hpp"
#include "worthiness/gmad.hpp"
#include "worthiness/ingest.hpp"
#include "worthiness/loop.hpp"
#include "worthiness/metrics.hpp"
#include "worthiness/ranking.hpp"
#include "worthiness/select.hpp"
#include "worthiness/study.hpp"

namespace worthiness::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string out = "out";
  int jobs = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Random seed (falls back to WORTHINESS_SEED)")
      ->envname("WORTHINESS_SEED");
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--jobs", c.jobs, "Cap on internal parallelism; 1 is the reference mode")
      ->check(CLI::PositiveNumber);
}

std::vector<ImageId> partition_ids(const CorpusManifest& manifest, const std::string& name) {
  if (name == "all") return manifest.all_ids();
  return manifest.ids_in(parse_partition(name));
}

std::map<ImageId, double> restrict_to(const std::map<ImageId, double>& values,
                                      const std::vector<ImageId>& ids) {
  std::map<ImageId, double> out;
  for (const auto& id : ids) {
    auto it = values.find(id);
    if (it == values.end()) throw Error(ErrorKind::kUnknownImage, "no score for image " + id);
    out.emplace(id, it->second);
  }
  return out;
}

struct FailnetKnobs {
  failnet::FailureNetConfig config;

  void add(CLI::App* sub) {
    sub->add_option("--channels", config.projection_width, "Projection width C per stage");
    sub->add_option("--lr", config.learning_rate, "Initial Adam learning rate");
    sub->add_option("--decay-factor", config.decay_factor, "Learning-rate divisor per decay step");
    sub->add_option("--decay-every", config.decay_every_epochs, "Epochs between decay steps");
    sub->add_option("--epochs", config.epochs, "Training epochs");
    sub->add_option("--batch", config.batch_size, "Pairs per minibatch");
    sub->add_option("--pairs-per-epoch", config.pairs_per_epoch, "Distinct pairs drawn per epoch");
  }
};

// Serves until SIGINT or SIGTERM.
void serve_until_signal(study::StudyServer& server) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::thread waiter([&server, set] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.listen();
  // listen() can also return on its own (for example a failed accept loop);
  // wake the waiter so it can be joined.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sampling-worthiness toolkit: gMAD falsification, rank aggregation, failure "
               "prediction, budgeted selection, closed-loop simulation and 2AFC studies.",
               "worthiness"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  std::function<void()> run;
  Common common;

  // validate -----------------------------------------------------------------
  std::string manifest_path, scores_path, mos_path, features_path, ensemble_path;
  auto* validate = app.add_subcommand("validate", "Cross-check corpus files and report issues");
  add_common(validate, common);
  validate->add_option("--manifest", manifest_path, "Corpus manifest JSON")->required();
  validate->add_option("--scores", scores_path, "Score table CSV")->required();
  validate->add_option("--mos", mos_path, "MOS table CSV");
  validate->add_option("--features", features_path, "Feature JSONL");
  validate->add_option("--ensemble", ensemble_path, "Ensemble CSV");
  validate->callback([&] {
    run = [&] {
      const auto manifest = load_manifest(manifest_path);
      const auto scores = load_scores(scores_path);
      std::optional<MosTable> mos;
      std::optional<FeatureStore> features;
      std::optional<EnsembleTable> ensemble;
      if (!mos_path.empty()) mos = load_mos(mos_path);
      if (!features_path.empty()) features = load_features(features_path, manifest);
      if (!ensemble_path.empty()) ensemble = load_ensemble(ensemble_path);
      const auto report = validate_corpus(manifest, scores, mos ? &*mos : nullptr,
                                          features ? &*features : nullptr,
                                          ensemble ? &*ensemble : nullptr);
      const auto text = report.to_json();
      write_text_file(fs::path(common.out) / "validation.json", text);
      out << text;
    };
  });

  // gmad ---------------------------------------------------------------------
  gmad::GmadConfig gmad_config;
  auto* gmad_cmd = app.add_subcommand("gmad", "Run the gMAD round robin over all model pairs");
  add_common(gmad_cmd, common);
  gmad_cmd->add_option("--scores", scores_path, "Score table CSV")->required();
  gmad_cmd->add_option("--Q", gmad_config.levels, "Quality levels per defender");
  gmad_cmd->add_option("--K", gmad_config.pairs_per_level, "Pairs per level");
  gmad_cmd->callback([&] {
    run = [&] {
      const auto pairs = gmad::run_round_robin(load_scores(scores_path), gmad_config);
      write_text_file(fs::path(common.out) / "pairs.csv", gmad::format_pairs_csv(pairs));
      out << "pairs: " << pairs.size() << "\n";
    };
  });

  // rank ---------------------------------------------------------------------
  std::string matrix_path;
  double epsilon = ranking::kDefaultEpsilon;
  double tol = ranking::kDefaultTolerance;
  std::size_t max_iter = ranking::kDefaultMaxIterations;
  auto* rank = app.add_subcommand("rank", "Perron ranking of a pairwise comparison matrix");
  add_common(rank, common);
  rank->add_option("--matrix", matrix_path, "Comparison count matrix CSV")->required();
  rank->add_option("--epsilon", epsilon, "Laplace smoothing constant");
  rank->add_option("--tol", tol, "Power-iteration tolerance (max norm)");
  rank->add_option("--max-iter", max_iter, "Power-iteration cap");
  rank->callback([&] {
    run = [&] {
      const auto matrix = ranking::parse_matrix_csv(read_text_file(matrix_path));
      const auto result =
          ranking::perron_rank(ranking::smooth_dominance(matrix, epsilon), tol, max_iter);
      const auto text = ranking::format_ranking_csv(matrix.models, result);
      write_text_file(fs::path(common.out) / "ranking.csv", text);
      out << text;
    };
  });

  // train-failnet ------------------------------------------------------------
  FailnetKnobs knobs;
  std::string model_name, partition_name_arg = "labeled", eval_partition;
  auto* train = app.add_subcommand("train-failnet", "Train the failure predictor");
  add_common(train, common);
  train->add_option("--manifest", manifest_path, "Corpus manifest JSON")->required();
  train->add_option("--features", features_path, "Feature JSONL")->required();
  train->add_option("--scores", scores_path, "Score table CSV")->required();
  train->add_option("--mos", mos_path, "MOS table CSV")->required();
  train->add_option("--model", model_name, "Model whose errors are learned (default: the only one)");
  train->add_option("--partition", partition_name_arg, "Training pool: labeled|unlabeled|holdout|all");
  train->add_option("--eval-partition", eval_partition, "Partition for pairwise ranking accuracy");
  knobs.add(train);
  train->callback([&] {
    run = [&] {
      const auto manifest = load_manifest(manifest_path);
      const auto features = load_features(features_path, manifest);
      const auto scores = load_scores(scores_path);
      const auto mos = load_mos(mos_path);
      const auto model = scores.resolve_model(model_name.empty() ? std::nullopt
                                                                 : std::optional<ModelId>(model_name));
      auto config = knobs.config;
      config.stage_widths = features.stage_widths;
      config.seed = common.seed;
      const auto pool = partition_ids(manifest, partition_name_arg);
      std::vector<ImageId> eval_ids;
      if (!eval_partition.empty()) eval_ids = partition_ids(manifest, eval_partition);
      const auto f_scores = scores.model_scores(model);
      auto result = failnet::train(failnet::init_network(config), features, pool, f_scores, mos,
                                   config, eval_ids);
      const fs::path dir(common.out);
      write_text_file(dir / "failnet.json",
                      failnet::format_checkpoint(result.net, config, config.epochs));
      write_text_file(dir / "loss.csv", failnet::format_loss_history(result.report));
      json summary{{"model", model},
                   {"pool_size", pool.size()},
                   {"final_loss", result.report.epoch_losses.back()}};
      if (!eval_ids.empty() && std::isfinite(result.report.ranking_accuracy)) {
        summary["ranking_accuracy"] = result.report.ranking_accuracy;
      }
      write_text_file(dir / "train_report.json", summary.dump(2) + "\n");
      out << summary.dump(2) << "\n" << "seconds: " << result.report.seconds << "\n";
    };
  });

  // select -------------------------------------------------------------------
  std::string selector = "worthiness", checkpoint_path, head_path, representation = "logits";
  select::SelectionConfig sel_config;
  std::size_t members = 15;
  double dropout_p = 0.5;
  std::string select_partition = "unlabeled";
  auto* select_cmd = app.add_subcommand("select", "Select a labeling batch from a pool");
  add_common(select_cmd, common);
  select_cmd->add_option("--selector", selector, "Selector")
      ->check(CLI::IsMember({"worthiness", "random", "committee", "mc-dropout", "coreset", "rd",
                             "uncertainty"}));
  select_cmd->add_option("--manifest", manifest_path, "Corpus manifest JSON")->required();
  select_cmd->add_option("--features", features_path, "Feature JSONL");
  select_cmd->add_option("--checkpoint", checkpoint_path, "Failure-net checkpoint (worthiness)");
  select_cmd->add_option("--scores", scores_path, "Score table with uncertainty (uncertainty)");
  select_cmd->add_option("--model", model_name, "Model for the uncertainty column");
  select_cmd->add_option("--ensemble", ensemble_path, "Ensemble CSV (committee, mc-dropout)");
  select_cmd->add_option("--dropout-head", head_path, "Linear head JSON (mc-dropout without --ensemble)");
  select_cmd->add_option("--members", members, "Dropout passes per image");
  select_cmd->add_option("--p", dropout_p, "Dropout rate");
  select_cmd->add_option("--budget", sel_config.budget, "Images to select");
  auto* lambda_opt = select_cmd->add_option(
      "--lambda", sel_config.lambda,
      "Diversity weight (worthiness default 1e-6; other selectors default 0)");
  select_cmd->add_option("--partition", select_partition, "Pool partition: labeled|unlabeled|holdout|all");
  select_cmd->add_option("--representation", representation, "Geometry for coreset and rd")
      ->check(CLI::IsMember({"logits", "stages"}));
  select_cmd->callback([&] {
    run = [&] {
      const auto manifest = load_manifest(manifest_path);
      const auto pool = partition_ids(manifest, select_partition);
      sel_config.seed = common.seed;
      if (selector != "worthiness" && lambda_opt->count() == 0) sel_config.lambda = 0.0;
      std::optional<FeatureStore> features;
      if (!features_path.empty()) features = load_features(features_path, manifest);
      auto need_features = [&]() -> const FeatureStore& {
        if (!features) throw Error(ErrorKind::kSchemaError, "selector " + selector + " needs --features");
        return *features;
      };
      const FeatureStore* diversity = sel_config.lambda > 0.0 ? &need_features() : nullptr;
      const auto rep =
          representation == "stages" ? select::Representation::kStages : select::Representation::kLogits;
      select::SelectionResult result;
      if (selector == "worthiness") {
        if (checkpoint_path.empty()) throw Error(ErrorKind::kSchemaError, "worthiness needs --checkpoint");
        const auto cp = failnet::parse_checkpoint(read_text_file(checkpoint_path));
        result = select::greedy_worthiness_select(pool, cp.net, need_features(), sel_config);
      } else if (selector == "random") {
        result = select::random_select(pool, sel_config);
      } else if (selector == "committee") {
        if (ensemble_path.empty()) throw Error(ErrorKind::kSchemaError, "committee needs --ensemble");
        result = select::variance_select(load_ensemble(ensemble_path), pool, sel_config, diversity,
                                         sel_config.lambda, "committee");
      } else if (selector == "mc-dropout") {
        EnsembleTable ensemble;
        if (!ensemble_path.empty()) {
          ensemble = load_ensemble(ensemble_path);
        } else if (!head_path.empty()) {
          ensemble = select::ensemble_from_dropout(need_features(), pool,
                                                   select::parse_dropout_head(read_text_file(head_path)),
                                                   members, dropout_p, common.seed);
        } else {
          throw Error(ErrorKind::kSchemaError, "mc-dropout needs --ensemble or --dropout-head");
        }
        result = select::variance_select(ensemble, pool, sel_config, diversity, sel_config.lambda,
                                         "mc-dropout");
      } else if (selector == "coreset") {
        result = select::coreset_select(pool, need_features(), sel_config, rep);
      } else if (selector == "rd") {
        result = select::rd_select(pool, need_features(), sel_config, rep);
      } else {
        if (scores_path.empty()) throw Error(ErrorKind::kSchemaError, "uncertainty needs --scores");
        const auto scores = load_scores(scores_path);
        const auto model = scores.resolve_model(model_name.empty() ? std::nullopt
                                                                   : std::optional<ModelId>(model_name));
        result = select::uncertainty_select(scores, model, pool, sel_config, diversity,
                                            sel_config.lambda);
      }
      write_text_file(fs::path(common.out) / "selection.csv", select::format_selection_csv(result));
      out << "selected: " << result.steps.size() << " of " << pool.size() << "\n";
    };
  });

  // loop ---------------------------------------------------------------------
  loop::LoopConfig loop_config;
  FailnetKnobs loop_knobs;
  std::string loop_selector = "worthiness";
  auto* loop_cmd = app.add_subcommand("loop", "Simulate iterated selection, labeling and refitting");
  add_common(loop_cmd, common);
  loop_cmd->add_option("--manifest", manifest_path, "Corpus manifest JSON with partitions")->required();
  loop_cmd->add_option("--features", features_path, "Feature JSONL")->required();
  loop_cmd->add_option("--mos", mos_path, "Oracle MOS table CSV")->required();
  loop_cmd->add_option("--T", loop_config.iterations, "Iterations")->check(CLI::PositiveNumber);
  loop_cmd->add_option("--budget", loop_config.budget, "Images selected per iteration");
  loop_cmd->add_option("--selector", loop_selector, "Selector")
      ->check(CLI::IsMember({"worthiness", "random", "coreset", "rd"}));
  loop_cmd->add_option("--lambda", loop_config.lambda, "Diversity weight for worthiness");
  loop_cmd->add_option("--ridge", loop_config.ridge, "Ridge strength of the quality head");
  loop_cmd->add_option("--label-noise", loop_config.label_noise, "Gaussian noise on revealed MOS");
  loop_knobs.add(loop_cmd);
  loop_cmd->callback([&] {
    run = [&] {
      const auto manifest = load_manifest(manifest_path);
      const auto features = load_features(features_path, manifest);
      loop_config.selector = loop::parse_loop_selector(loop_selector);
      loop_config.seed = common.seed;
      loop_config.failnet = loop_knobs.config;
      loop::MosOracle oracle(load_mos(mos_path), loop_config.label_noise, common.seed);
      const auto report =
          loop::run_loop(features, loop::LoopPartition::from_manifest(manifest), oracle, loop_config);
      const auto dir = loop::write_run_directory(report, common.out);
      out << "run directory: " << dir.string() << "\n";
      for (const auto& it : report.iterations) {
        out << "iteration " << it.index << ": holdout srcc " << it.holdout_srcc << "\n";
      }
    };
  });

  // eval ---------------------------------------------------------------------
  std::string selection_path, eval_pool = "unlabeled";
  auto* eval = app.add_subcommand("eval", "SRCC on a selected set versus the rest of the pool");
  add_common(eval, common);
  eval->add_option("--selection", selection_path, "Selection CSV")->required();
  eval->add_option("--manifest", manifest_path, "Corpus manifest JSON")->required();
  eval->add_option("--scores", scores_path, "Score table CSV")->required();
  eval->add_option("--mos", mos_path, "MOS table CSV")->required();
  eval->add_option("--model", model_name, "Model to evaluate (default: the only one)");
  eval->add_option("--partition", eval_pool, "Pool partition the selection was drawn from");
  eval->callback([&] {
    run = [&] {
      const auto manifest = load_manifest(manifest_path);
      const auto scores = load_scores(scores_path);
      const auto model = scores.resolve_model(model_name.empty() ? std::nullopt
                                                                 : std::optional<ModelId>(model_name));
      const auto pool = partition_ids(manifest, eval_pool);
      const auto selection = select::parse_selection_csv(read_text_file(selection_path));
      const auto report = select::evaluate_selection(
          selection.ids(), pool, restrict_to(scores.model_scores(model), pool), load_mos(mos_path));
      const json doc{{"model", model},
                     {"srcc_selected", report.srcc_selected},
                     {"srcc_rest", report.srcc_rest},
                     {"selected_size", report.selected_size},
                     {"pool_size", report.pool_size}};
      write_text_file(fs::path(common.out) / "evaluation.json", doc.dump(2) + "\n");
      out << doc.dump(2) << "\n";
    };
  });

  // top-difficult ------------------------------------------------------------
  std::size_t top_n = 100;
  auto* top = app.add_subcommand("top-difficult", "Images with the largest squared prediction error");
  add_common(top, common);
  top->add_option("--scores", scores_path, "Score table CSV")->required();
  top->add_option("--mos", mos_path, "MOS table CSV")->required();
  top->add_option("--model", model_name, "Model (default: the only one)");
  top->add_option("--n", top_n, "Number of images");
  top->callback([&] {
    run = [&] {
      const auto scores = load_scores(scores_path);
      const auto mos = load_mos(mos_path);
      const auto model = scores.resolve_model(model_name.empty() ? std::nullopt
                                                                 : std::optional<ModelId>(model_name));
      const auto f = scores.model_scores(model);
      const auto errors = squared_error_table(f, mos);
      const auto ids = select::top_difficult(f, mos, top_n);
      std::string text = "rank,image_id,squared_error\n";
      for (std::size_t i = 0; i < ids.size(); ++i) {
        text += std::to_string(i + 1) + ',' + ids[i] + ',' + format_real(errors.at(ids[i])) + '\n';
      }
      write_text_file(fs::path(common.out) / "top_difficult.csv", text);
      out << text;
    };
  });

  // dropout-ensemble ---------------------------------------------------------
  std::string dropout_partition = "unlabeled";
  auto* dropout = app.add_subcommand("dropout-ensemble", "Ensemble scores from dropout passes of a linear head");
  add_common(dropout, common);
  dropout->add_option("--manifest", manifest_path, "Corpus manifest JSON")->required();
  dropout->add_option("--features", features_path, "Feature JSONL")->required();
  dropout->add_option("--head", head_path, "Linear head JSON {weights, bias}")->required();
  dropout->add_option("--members", members, "Dropout passes per image");
  dropout->add_option("--p", dropout_p, "Dropout rate");
  dropout->add_option("--partition", dropout_partition, "Images to score: labeled|unlabeled|holdout|all");
  dropout->callback([&] {
    run = [&] {
      const auto manifest = load_manifest(manifest_path);
      const auto features = load_features(features_path, manifest);
      const auto table = select::ensemble_from_dropout(
          features, partition_ids(manifest, dropout_partition),
          select::parse_dropout_head(read_text_file(head_path)), members, dropout_p, common.seed);
      write_text_file(fs::path(common.out) / "ensemble.csv", format_ensemble(table));
      out << "rows: " << table.size() << "\n";
    };
  });

  // serve --------------------------------------------------------------------
  std::string pairs_path, pairset_id = "main", state_dir;
  study::ServerOptions server_options;
  std::size_t snapshot_every = 100;
  auto* serve = app.add_subcommand("serve", "Run the 2AFC study service over a gMAD pair set");
  add_common(serve, common);
  serve->add_option("--pairs", pairs_path, "gMAD pairs CSV")->required();
  serve->add_option("--manifest", manifest_path, "Manifest with image paths")->required();
  serve->add_option("--pairset-id", pairset_id, "Pair set id on the wire");
  serve->add_option("--host", server_options.host, "Bind address");
  serve->add_option("--port", server_options.port, "TCP port (0 picks a free one)");
  serve->add_option("--state-dir", state_dir, "Event log and snapshot directory (default <out>/study)");
  serve->add_option("--snapshot-every", snapshot_every, "Events between snapshots")
      ->check(CLI::PositiveNumber);
  serve->callback([&] {
    run = [&] {
      const auto manifest = load_manifest(manifest_path);
      auto pairs = gmad::parse_pairs_csv(read_text_file(pairs_path));
      const auto base = fs::path(manifest_path).parent_path();
      study::StudyState state;
      state.add_pair_set(study::make_pair_set(pairset_id, std::move(pairs), manifest, base));
      const fs::path dir = state_dir.empty() ? fs::path(common.out) / "study" : fs::path(state_dir);
      const auto log_path = dir / "events.jsonl";
      const auto snapshot_path = dir / "snapshot.json";
      state.restore(log_path, snapshot_path);
      state.attach_log(std::make_shared<study::EventLog>(log_path), snapshot_path, snapshot_every);
      study::StudyServer server(state);
      const int port = server.bind(server_options);
      out << "listening on " << server_options.host << ":" << port << "\n" << std::flush;
      serve_until_signal(server);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;  // --help
    const auto parsed = app.get_subcommands();
    err << "\n" << (parsed.empty() ? app.help() : parsed.back()->help());
    return kExitUsage;
  }

  try {
    run();
  } catch (const Error& e) {
    err << e.name() << ": " << e.what() << "\n";
    return kExitDomainError;
  } catch (const fs::filesystem_error& e) {
    err << "IoError: " << e.what() << "\n";
    return kExitDomainError;
  }
  return kExitOk;
}

}  // namespace worthiness::cli
